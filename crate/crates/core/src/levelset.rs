//! Signed distance maps and the level-set geometry built on them: smoothed
//! Heaviside/Dirac kernels, curvature, narrow bands, and redistancing.
//!
//! Sign convention: φ > 0 inside the contour, φ < 0 outside. For locating the
//! zero level set a pixel counts as inside when φ ≥ 0, matching
//! `threshold(φ, 0)`.

use std::f64::consts::PI;
use std::ops::Deref;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{BinaryMask, ScalarField};

/// Regularizer added to |∇φ|² in the curvature denominator.
pub const CURVATURE_ETA: f64 = 1e-8;
/// Curvature is clamped to ±1/Δ with Δ = 1 px.
pub const CURVATURE_CLAMP: f64 = 1.0;

/// Smoothing width ε of the Heaviside/Dirac pair, validated once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothing {
    epsilon: f64,
}

impl Smoothing {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be > 0")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// H(z) = ½(1 + (2/π)·atan(z/ε)).
    #[inline]
    pub fn heaviside(&self, z: f64) -> f64 {
        0.5 * (1.0 + (2.0 / PI) * (z / self.epsilon).atan())
    }

    /// δ(z) = (1/π)·ε/(ε² + z²), the derivative of [`Smoothing::heaviside`].
    #[inline]
    pub fn dirac(&self, z: f64) -> f64 {
        self.epsilon / (PI * (self.epsilon * self.epsilon + z * z))
    }
}

pub fn smoothed_heaviside(z: f64, epsilon: f64) -> Result<f64> {
    Ok(Smoothing::new(epsilon)?.heaviside(z))
}

pub fn smoothed_dirac(z: f64, epsilon: f64) -> Result<f64> {
    Ok(Smoothing::new(epsilon)?.dirac(z))
}

/// A level-set function whose zero set is nonempty: it has pixels on both
/// sides of the contour.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceMap {
    field: ScalarField,
}

impl SignedDistanceMap {
    /// Wraps a field as a level-set function. Only the two-sided condition is
    /// checked; use [`reinitialize`] to restore the distance property.
    pub fn from_field(field: ScalarField) -> Result<Self> {
        let inside = field.data().iter().any(|&v| v >= 0.0);
        let outside = field.data().iter().any(|&v| v < 0.0);
        if !(inside && outside) {
            return Err(Error::DegenerateMask);
        }
        Ok(Self { field })
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }
}

impl Deref for SignedDistanceMap {
    type Target = ScalarField;

    fn deref(&self) -> &ScalarField {
        &self.field
    }
}

// Felzenszwalb-Huttenlocher lower envelope of parabolas rooted at (q, f[q]):
// out[p] = min_q (p - q)² + f[q]. Infinite entries are skipped.
fn lower_envelope(f: &[f64], out: &mut [f64], roots: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    roots.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            let Some(&p) = roots.last() else {
                roots.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let (qf, pf) = (q as f64, p as f64);
            let s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= *bounds.last().unwrap() {
                roots.pop();
                bounds.pop();
            } else {
                roots.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if roots.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while k + 1 < roots.len() && bounds[k + 1] < pf {
            k += 1;
        }
        let d = pf - roots[k] as f64;
        *o = d * d + f[roots[k]];
    }
}

fn envelope_rows(data: &mut [f64], width: usize) {
    data.par_chunks_mut(width).for_each_init(
        || (vec![0.0; width], Vec::new(), Vec::new()),
        |(out, roots, bounds), row| {
            lower_envelope(row, out, roots, bounds);
            row.copy_from_slice(out);
        },
    );
}

fn transpose(data: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut t = vec![0.0; data.len()];
    for r in 0..height {
        for c in 0..width {
            t[c * height + r] = data[r * width + c];
        }
    }
    t
}

fn envelope_cols(data: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut t = transpose(data, height, width);
    envelope_rows(&mut t, height);
    transpose(&t, width, height)
}

/// Squared Euclidean distance from every pixel centre to the nearest set
/// pixel of `seeds` (infinite when `seeds` is empty). Exact, two separable
/// passes.
pub fn squared_distance_transform(seeds: &BinaryMask) -> Vec<f64> {
    let (h, w) = seeds.shape();
    let mut g: Vec<f64> = seeds
        .data()
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    envelope_rows(&mut g, w);
    envelope_cols(&g, h, w)
}

/// Exact signed distance map of a mask: each pixel gets the distance to the
/// nearest pixel of the opposite label minus half a pixel, positive on the
/// foreground. The zero level then falls midway between labels.
pub fn signed_distance_from_mask(mask: &BinaryMask) -> Result<SignedDistanceMap> {
    if mask.is_all_zero() || mask.is_all_one() {
        return Err(Error::DegenerateMask);
    }
    let (h, w) = mask.shape();
    let background = BinaryMask::new(h, w, mask.data().iter().map(|&v| !v).collect())?;
    let (to_bg, to_fg) = rayon::join(
        || squared_distance_transform(&background),
        || squared_distance_transform(mask),
    );
    let data = mask
        .data()
        .iter()
        .enumerate()
        .map(|(i, &inside)| {
            if inside {
                to_bg[i].sqrt() - 0.5
            } else {
                0.5 - to_fg[i].sqrt()
            }
        })
        .collect();
    Ok(SignedDistanceMap {
        field: ScalarField::from_raw(h, w, data),
    })
}

/// Central-difference gradient magnitude with replicate borders.
#[inline]
pub fn gradient_norm(phi: &ScalarField, row: usize, col: usize) -> f64 {
    let (r, c) = (row as isize, col as isize);
    let gx = 0.5 * (phi.get_clamped(r, c + 1) - phi.get_clamped(r, c - 1));
    let gy = 0.5 * (phi.get_clamped(r + 1, c) - phi.get_clamped(r - 1, c));
    (gx * gx + gy * gy).sqrt()
}

/// κ = div(∇φ/|∇φ|) by central differences, clamped to ±1 px⁻¹.
///
/// Unit normals are taken at the four neighbours (each from its own central
/// differences) and differenced across the pixel, so isolated extrema, where
/// the gradient itself vanishes, still get their full curvature. With φ
/// positive inside, a convex region has negative curvature, so `μκ` in the
/// descent force shrinks it.
pub fn curvature(phi: &ScalarField, row: usize, col: usize) -> f64 {
    let (r, c) = (row as isize, col as isize);
    let at = |dr: isize, dc: isize| phi.get_clamped(r + dr, c + dc);
    let normal = |dr: isize, dc: isize| {
        let gx = 0.5 * (at(dr, dc + 1) - at(dr, dc - 1));
        let gy = 0.5 * (at(dr + 1, dc) - at(dr - 1, dc));
        let n = (gx * gx + gy * gy + CURVATURE_ETA).sqrt();
        (gx / n, gy / n)
    };
    let div = 0.5 * (normal(0, 1).0 - normal(0, -1).0) + 0.5 * (normal(1, 0).1 - normal(-1, 0).1);
    div.clamp(-CURVATURE_CLAMP, CURVATURE_CLAMP)
}

/// Pixels with |φ| ≤ half_width, in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct NarrowBand {
    width: usize,
    indices: Vec<usize>,
    half_width: f64,
}

impl NarrowBand {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Flat row-major indices, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.iter().map(|&i| (i / self.width, i % self.width))
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.indices.binary_search(&(row * self.width + col)).is_ok()
    }
}

pub fn extract_band(phi: &ScalarField, half_width: f64) -> Result<NarrowBand> {
    if !(half_width >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "band half width {half_width} must be >= 2 px"
        )));
    }
    let indices: Vec<usize> = phi
        .data()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= half_width)
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyBand);
    }
    Ok(NarrowBand {
        width: phi.width(),
        indices,
        half_width,
    })
}

/// Which grid edge a zero crossing lies on. `Horizontal` joins (row, col) and
/// (row, col + 1); `Vertical` joins (row, col) and (row + 1, col).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeAxis {
    Horizontal,
    Vertical,
}

/// A linearly interpolated zero crossing at fraction `t` ∈ [0, 1) along an edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroCrossing {
    pub row: usize,
    pub col: usize,
    pub axis: EdgeAxis,
    pub t: f64,
}

impl ZeroCrossing {
    /// Position as (y, x) in pixel units.
    pub fn position(&self) -> (f64, f64) {
        match self.axis {
            EdgeAxis::Horizontal => (self.row as f64, self.col as f64 + self.t),
            EdgeAxis::Vertical => (self.row as f64 + self.t, self.col as f64),
        }
    }
}

#[inline]
fn crossing_fraction(a: f64, b: f64) -> Option<f64> {
    if (a >= 0.0) == (b >= 0.0) {
        return None;
    }
    Some(a / (a - b))
}

/// All zero crossings of φ along grid edges, ordered by edge.
pub fn zero_crossings(phi: &ScalarField) -> Vec<ZeroCrossing> {
    let (h, w) = phi.shape();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let a = phi.get(r, c);
            if c + 1 < w {
                if let Some(t) = crossing_fraction(a, phi.get(r, c + 1)) {
                    out.push(ZeroCrossing {
                        row: r,
                        col: c,
                        axis: EdgeAxis::Horizontal,
                        t,
                    });
                }
            }
            if r + 1 < h {
                if let Some(t) = crossing_fraction(a, phi.get(r + 1, c)) {
                    out.push(ZeroCrossing {
                        row: r,
                        col: c,
                        axis: EdgeAxis::Vertical,
                        t,
                    });
                }
            }
        }
    }
    out
}

// Crossing fraction per edge, two slots per pixel: [horizontal, vertical].
fn edge_crossings(phi: &ScalarField) -> Vec<Option<f64>> {
    let (h, w) = phi.shape();
    let mut out = vec![None; 2 * h * w];
    out.par_chunks_mut(2 * w).enumerate().for_each(|(r, slots)| {
        for c in 0..w {
            let a = phi.get(r, c);
            if c + 1 < w {
                slots[2 * c] = crossing_fraction(a, phi.get(r, c + 1));
            }
            if r + 1 < h {
                slots[2 * c + 1] = crossing_fraction(a, phi.get(r + 1, c));
            }
        }
    });
    out
}

fn edge_point(row: usize, col: usize, vertical: bool, t: f64) -> (f64, f64) {
    if vertical {
        (row as f64 + t, col as f64)
    } else {
        (row as f64, col as f64 + t)
    }
}

/// Largest movement of the interpolated zero crossings between two level-set
/// functions on the same grid.
///
/// A crossing present on the same edge in both is compared along that edge.
/// A crossing whose edge lost (or gained) it is matched to the closest
/// crossing of the other function on the edges of the surrounding 3x3 pixels;
/// with no such neighbour it counts as 2 px.
pub fn zero_crossing_displacement(before: &ScalarField, after: &ScalarField) -> f64 {
    let (h, w) = before.shape();
    debug_assert_eq!(before.shape(), after.shape());
    let (e0, e1) = rayon::join(|| edge_crossings(before), || edge_crossings(after));
    let nearest_in = |edges: &[Option<f64>], p: (f64, f64), row: usize, col: usize| -> f64 {
        let mut best = 2.0f64;
        for r in row.saturating_sub(1)..(row + 2).min(h) {
            for c in col.saturating_sub(1)..(col + 2).min(w) {
                for (slot, vertical) in [(0, false), (1, true)] {
                    if let Some(t) = edges[2 * (r * w + c) + slot] {
                        let q = edge_point(r, c, vertical, t);
                        best = best.min(((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt());
                    }
                }
            }
        }
        best
    };
    (0..h)
        .into_par_iter()
        .map(|r| {
            let mut worst: f64 = 0.0;
            for c in 0..w {
                for (slot, vertical) in [(0, false), (1, true)] {
                    let k = 2 * (r * w + c) + slot;
                    let d = match (e0[k], e1[k]) {
                        (Some(t0), Some(t1)) => (t1 - t0).abs(),
                        (None, None) => 0.0,
                        (Some(t0), None) => nearest_in(&e1, edge_point(r, c, vertical, t0), r, c),
                        (None, Some(t1)) => nearest_in(&e0, edge_point(r, c, vertical, t1), r, c),
                    };
                    worst = worst.max(d);
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

// For each pixel along a line, squared distance to the nearest of the sorted
// subpixel positions on that same line.
fn nearest_on_line(sorted: &[f64], out: &mut [f64]) {
    if sorted.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        let k = sorted.partition_point(|&x| x < pf);
        let mut best = f64::INFINITY;
        if k < sorted.len() {
            best = best.min((sorted[k] - pf).powi(2));
        }
        if k > 0 {
            best = best.min((sorted[k - 1] - pf).powi(2));
        }
        *o = best;
    }
}

/// Pixels closer than this to the contour get their distance measured to the
/// interpolated polyline; beyond it the crossing points alone are used, whose
/// error there is below 0.03 px.
pub const REINIT_POLYLINE_RADIUS: f64 = 10.0;

type Segment = [(f64, f64); 2];

// Marching-squares segments per cell (cell (r, c) spans pixels r..=r+1,
// c..=c+1). Saddles are split by the sign of the cell mean.
fn cell_segments(phi: &ScalarField, edges: &[Option<f64>]) -> Vec<Vec<Segment>> {
    let (h, w) = phi.shape();
    let (ch, cw) = (h.saturating_sub(1), w.saturating_sub(1));
    let mut cells = vec![Vec::new(); ch * cw];
    cells.par_chunks_mut(cw.max(1)).enumerate().for_each(|(r, row)| {
        for (c, out) in row.iter_mut().enumerate() {
            let top = edges[2 * (r * w + c)].map(|t| edge_point(r, c, false, t));
            let bottom = edges[2 * ((r + 1) * w + c)].map(|t| edge_point(r + 1, c, false, t));
            let left = edges[2 * (r * w + c) + 1].map(|t| edge_point(r, c, true, t));
            let right = edges[2 * (r * w + c + 1) + 1].map(|t| edge_point(r, c + 1, true, t));
            match (top, right, bottom, left) {
                (Some(t), Some(rt), Some(b), Some(l)) => {
                    let corners = [
                        phi.get(r, c),
                        phi.get(r, c + 1),
                        phi.get(r + 1, c),
                        phi.get(r + 1, c + 1),
                    ];
                    let mean = corners.iter().sum::<f64>() / 4.0;
                    if (mean >= 0.0) == (corners[0] >= 0.0) {
                        out.extend([[t, rt], [l, b]]);
                    } else {
                        out.extend([[t, l], [rt, b]]);
                    }
                }
                _ => {
                    let pts: Vec<(f64, f64)> = [top, right, bottom, left].into_iter().flatten().collect();
                    if pts.len() == 2 {
                        out.push([pts[0], pts[1]]);
                    }
                }
            }
        }
    });
    cells
}

fn segment_distance_sq(p: (f64, f64), [a, b]: &Segment) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dy * dy + dx * dx;
    let t = if len_sq > 0.0 {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ey, ex) = (a.0 + t * dy - p.0, a.1 + t * dx - p.1);
    ey * ey + ex * ex
}

/// Rebuilds φ as the Euclidean distance to its interpolated zero set,
/// keeping the sign of every pixel.
///
/// The zero set is the polyline through the linearly interpolated edge
/// crossings. Distances to the crossing points come from exact separable
/// passes (crossings on horizontal edges sit on integer rows, those on
/// vertical edges on integer columns); pixels within
/// [`REINIT_POLYLINE_RADIUS`] are then refined against the polyline segments
/// of nearby cells, which is exact because the nearest segment can be no
/// farther than the nearest crossing point.
pub fn reinitialize(phi: &ScalarField) -> Result<SignedDistanceMap> {
    let (h, w) = phi.shape();
    let crossings = zero_crossings(phi);
    if crossings.is_empty() {
        return Err(Error::DegenerateMask);
    }
    let mut on_rows: Vec<Vec<f64>> = vec![Vec::new(); h];
    let mut on_cols: Vec<Vec<f64>> = vec![Vec::new(); w];
    for z in &crossings {
        let (y, x) = z.position();
        match z.axis {
            EdgeAxis::Horizontal => on_rows[z.row].push(x),
            EdgeAxis::Vertical => on_cols[z.col].push(y),
        }
    }
    on_rows
        .iter_mut()
        .chain(on_cols.iter_mut())
        .for_each(|v| v.sort_by(f64::total_cmp));

    // Family on rows: scan along each row, then envelope down the columns.
    let mut g_rows = vec![0.0; h * w];
    g_rows
        .par_chunks_mut(w)
        .zip(on_rows.par_iter())
        .for_each(|(row, xs)| nearest_on_line(xs, row));
    let d_rows = envelope_cols(&g_rows, h, w);

    // Family on columns: scan along each column (transposed), then envelope
    // across the rows.
    let mut g_cols_t = vec![0.0; h * w];
    g_cols_t
        .par_chunks_mut(h)
        .zip(on_cols.par_iter())
        .for_each(|(col, ys)| nearest_on_line(ys, col));
    let mut d_cols = transpose(&g_cols_t, w, h);
    envelope_rows(&mut d_cols, w);

    let cells = cell_segments(phi, &edge_crossings(phi));
    let (ch, cw) = (h - 1, w - 1);
    let mut data = vec![0.0; h * w];
    data.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        for (c, out) in row.iter_mut().enumerate() {
            let i = r * w + c;
            let mut d_sq = d_rows[i].min(d_cols[i]);
            let d = d_sq.sqrt();
            if d <= REINIT_POLYLINE_RADIUS && ch > 0 && cw > 0 {
                let reach = d.ceil() as usize + 1;
                let p = (r as f64, c as f64);
                for cr in r.saturating_sub(reach)..(r + reach).min(ch) {
                    for cc in c.saturating_sub(reach)..(c + reach).min(cw) {
                        for seg in &cells[cr * cw + cc] {
                            d_sq = d_sq.min(segment_distance_sq(p, seg));
                        }
                    }
                }
            }
            let v = phi.data()[i];
            let d = d_sq.sqrt();
            *out = if v > 0.0 {
                d
            } else if v < 0.0 {
                -d
            } else {
                0.0
            };
        }
    });
    Ok(SignedDistanceMap {
        field: ScalarField::from_raw(h, w, data),
    })
}
