//! The localized region energy with per-pixel parameter maps.
//!
//! For a contour pixel x the square window W_s(x) is split by the smoothed
//! Heaviside of φ into an interior and an exterior part with mean intensities
//! m1(x), m2(x). Each window pixel u then pays
//! `λ1(u)(I(u) − m1(x))²H(φ(u)) + λ2(u)(I(u) − m2(x))²(1 − H(φ(u)))`.
//! Windows are truncated at the image border.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::levelset::{curvature, gradient_norm, NarrowBand, Smoothing};

/// Heaviside mass below which a window side is considered empty.
pub const MIN_REGION_MASS: f64 = 1e-6;

/// Per-pixel weights of the interior and exterior fitting terms.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterMaps {
    lambda1: ScalarField,
    lambda2: ScalarField,
}

impl ParameterMaps {
    /// Both maps must share a shape and be non-negative.
    pub fn new(lambda1: ScalarField, lambda2: ScalarField) -> Result<Self> {
        lambda1.ensure_same_shape(lambda2.shape())?;
        for map in [&lambda1, &lambda2] {
            if let Some(i) = map.data().iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "negative lambda {} at index {i}",
                    map.data()[i]
                )));
            }
        }
        Ok(Self { lambda1, lambda2 })
    }

    /// Spatially constant weights, the scalar-parameter special case.
    pub fn constant(height: usize, width: usize, lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(
            ScalarField::filled(height, width, lambda1)?,
            ScalarField::filled(height, width, lambda2)?,
        )
    }

    pub fn lambda1(&self) -> &ScalarField {
        &self.lambda1
    }

    pub fn lambda2(&self) -> &ScalarField {
        &self.lambda2
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lambda1.shape()
    }

    /// Both maps multiplied by `k`.
    pub fn scaled(&self, k: f64) -> ParameterMaps {
        ParameterMaps {
            lambda1: self.lambda1.map(|v| v * k),
            lambda2: self.lambda2.map(|v| v * k),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.lambda1.max().max(self.lambda2.max())
    }
}

/// Heaviside-weighted window statistics around one centre pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalStats {
    pub m1: f64,
    pub m2: f64,
    pub w_in: f64,
    pub w_out: f64,
}

pub(crate) fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "window size {window} must be odd and >= 3"
        )));
    }
    Ok(())
}

/// Inclusive window bounds (r0, r1, c0, c1) clamped to the grid.
#[inline]
fn window_bounds(h: usize, w: usize, row: usize, col: usize, window: usize) -> (usize, usize, usize, usize) {
    let half = window / 2;
    (
        row.saturating_sub(half),
        (row + half).min(h - 1),
        col.saturating_sub(half),
        (col + half).min(w - 1),
    )
}

#[inline]
fn exterior_weight(smoothing: &Smoothing, z: f64) -> f64 {
    // 1 − H(z) without the cancellation of subtracting from one.
    smoothing.heaviside(-z)
}

/// Interior/exterior means of `image` inside the window centred at
/// (row, col). Fails with `DegenerateWindow` when either side carries less
/// than [`MIN_REGION_MASS`] of Heaviside weight.
pub fn local_means(
    image: &ScalarField,
    phi: &ScalarField,
    row: usize,
    col: usize,
    window: usize,
    smoothing: &Smoothing,
) -> Result<LocalStats> {
    check_window(window)?;
    image.ensure_same_shape(phi.shape())?;
    let (h, w) = image.shape();
    let (r0, r1, c0, c1) = window_bounds(h, w, row, col, window);
    let (mut w_in, mut w_out, mut s_in, mut s_out) = (0.0, 0.0, 0.0, 0.0);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let z = phi.get(r, c);
            let i = image.get(r, c);
            let hin = smoothing.heaviside(z);
            let hout = exterior_weight(smoothing, z);
            w_in += hin;
            w_out += hout;
            s_in += hin * i;
            s_out += hout * i;
        }
    }
    if w_in < MIN_REGION_MASS || w_out < MIN_REGION_MASS {
        return Err(Error::DegenerateWindow { row, col });
    }
    Ok(LocalStats {
        m1: s_in / w_in,
        m2: s_out / w_out,
        w_in,
        w_out,
    })
}

/// Heaviside-weighted means over the whole image, used in place of a window
/// side that is empty.
pub fn global_means(image: &ScalarField, phi: &ScalarField, smoothing: &Smoothing) -> (f64, f64) {
    let (mut w_in, mut w_out, mut s_in, mut s_out) = (0.0, 0.0, 0.0, 0.0);
    for (&z, &i) in phi.data().iter().zip(image.data()) {
        let hin = smoothing.heaviside(z);
        let hout = exterior_weight(smoothing, z);
        w_in += hin;
        w_out += hout;
        s_in += hin * i;
        s_out += hout * i;
    }
    (s_in / w_in.max(f64::MIN_POSITIVE), s_out / w_out.max(f64::MIN_POSITIVE))
}

fn means_with_fallback(
    image: &ScalarField,
    phi: &ScalarField,
    row: usize,
    col: usize,
    window: usize,
    smoothing: &Smoothing,
) -> Result<(f64, f64)> {
    match local_means(image, phi, row, col, window, smoothing) {
        Ok(s) => Ok((s.m1, s.m2)),
        Err(Error::DegenerateWindow { .. }) => {
            // Only the starved side is replaced.
            let (h, w) = image.shape();
            let (r0, r1, c0, c1) = window_bounds(h, w, row, col, window);
            let (g1, g2) = global_means(image, phi, smoothing);
            let (mut w_in, mut w_out, mut s_in, mut s_out) = (0.0, 0.0, 0.0, 0.0);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let z = phi.get(r, c);
                    let hin = smoothing.heaviside(z);
                    let hout = exterior_weight(smoothing, z);
                    w_in += hin;
                    w_out += hout;
                    s_in += hin * image.get(r, c);
                    s_out += hout * image.get(r, c);
                }
            }
            let m1 = if w_in < MIN_REGION_MASS { g1 } else { s_in / w_in };
            let m2 = if w_out < MIN_REGION_MASS { g2 } else { s_out / w_out };
            Ok((m1, m2))
        }
        Err(e) => Err(e),
    }
}

/// Energy density F at one window pixel.
pub fn energy_density(
    intensity: f64,
    m1: f64,
    m2: f64,
    lambda1: f64,
    lambda2: f64,
    phi: f64,
    smoothing: &Smoothing,
) -> f64 {
    lambda1 * (intensity - m1).powi(2) * smoothing.heaviside(phi)
        + lambda2 * (intensity - m2).powi(2) * exterior_weight(smoothing, phi)
}

// Summed-area table slots.
const W_IN: usize = 0;
const S_IN: usize = 1;
const W_OUT: usize = 2;
const S_OUT: usize = 3;
const L1_W: usize = 4;
const L1_S: usize = 5;
const L1_SQ: usize = 6;
const L2_W: usize = 7;
const L2_S: usize = 8;
const L2_SQ: usize = 9;
const TABLES: usize = 10;

fn summed_area(h: usize, w: usize, value: impl Fn(usize) -> f64) -> Vec<f64> {
    let stride = w + 1;
    let mut t = vec![0.0; (h + 1) * stride];
    for r in 0..h {
        let mut run = 0.0;
        for c in 0..w {
            run += value(r * w + c);
            t[(r + 1) * stride + c + 1] = t[r * stride + c + 1] + run;
        }
    }
    t
}

/// Window sums of every quantity the means, energy and force need, read in
/// O(1) per pixel from summed-area tables. Tables are rebuilt from scratch
/// for each φ, so results depend only on the inputs.
pub(crate) struct LocalModel {
    height: usize,
    width: usize,
    window: usize,
    tables: Vec<Vec<f64>>,
    global: (f64, f64),
}

impl LocalModel {
    pub(crate) fn new(
        image: &ScalarField,
        phi: &ScalarField,
        params: &ParameterMaps,
        window: usize,
        smoothing: &Smoothing,
    ) -> Self {
        use rayon::prelude::*;

        let (h, w) = image.shape();
        let img = image.data();
        let l1 = params.lambda1().data();
        let l2 = params.lambda2().data();
        let hin: Vec<f64> = phi.data().iter().map(|&z| smoothing.heaviside(z)).collect();
        let hout: Vec<f64> = phi.data().iter().map(|&z| exterior_weight(smoothing, z)).collect();
        let tables: Vec<Vec<f64>> = (0..TABLES)
            .into_par_iter()
            .map(|slot| match slot {
                W_IN => summed_area(h, w, |i| hin[i]),
                S_IN => summed_area(h, w, |i| hin[i] * img[i]),
                W_OUT => summed_area(h, w, |i| hout[i]),
                S_OUT => summed_area(h, w, |i| hout[i] * img[i]),
                L1_W => summed_area(h, w, |i| l1[i] * hin[i]),
                L1_S => summed_area(h, w, |i| l1[i] * hin[i] * img[i]),
                L1_SQ => summed_area(h, w, |i| l1[i] * hin[i] * img[i] * img[i]),
                L2_W => summed_area(h, w, |i| l2[i] * hout[i]),
                L2_S => summed_area(h, w, |i| l2[i] * hout[i] * img[i]),
                _ => summed_area(h, w, |i| l2[i] * hout[i] * img[i] * img[i]),
            })
            .collect();
        let total = |slot: usize| tables[slot][h * (w + 1) + w];
        let global = (
            total(S_IN) / total(W_IN).max(f64::MIN_POSITIVE),
            total(S_OUT) / total(W_OUT).max(f64::MIN_POSITIVE),
        );
        Self {
            height: h,
            width: w,
            window,
            tables,
            global,
        }
    }

    #[inline]
    fn sum(&self, slot: usize, bounds: (usize, usize, usize, usize)) -> f64 {
        let (r0, r1, c0, c1) = bounds;
        let t = &self.tables[slot];
        let stride = self.width + 1;
        t[(r1 + 1) * stride + c1 + 1] - t[r0 * stride + c1 + 1] - t[(r1 + 1) * stride + c0] + t[r0 * stride + c0]
    }

    #[inline]
    fn bounds(&self, row: usize, col: usize) -> (usize, usize, usize, usize) {
        window_bounds(self.height, self.width, row, col, self.window)
    }

    /// (m1, m2), substituting the global mean for a starved side.
    pub(crate) fn means(&self, row: usize, col: usize) -> (f64, f64) {
        let b = self.bounds(row, col);
        let w_in = self.sum(W_IN, b);
        let w_out = self.sum(W_OUT, b);
        let m1 = if w_in < MIN_REGION_MASS {
            self.global.0
        } else {
            self.sum(S_IN, b) / w_in
        };
        let m2 = if w_out < MIN_REGION_MASS {
            self.global.1
        } else {
            self.sum(S_OUT, b) / w_out
        };
        (m1, m2)
    }

    /// Σ_{u∈W(x)} F(φ(u); m1, m2, λ(u)) expanded into window sums.
    pub(crate) fn window_energy(&self, row: usize, col: usize, m1: f64, m2: f64) -> f64 {
        let b = self.bounds(row, col);
        let interior = self.sum(L1_SQ, b) - 2.0 * m1 * self.sum(L1_S, b) + m1 * m1 * self.sum(L1_W, b);
        let exterior = self.sum(L2_SQ, b) - 2.0 * m2 * self.sum(L2_S, b) + m2 * m2 * self.sum(L2_W, b);
        // Both parts are sums of non-negative terms; clip rounding residue.
        interior.max(0.0) + exterior.max(0.0)
    }
}

/// Discrete energy: Σ over band pixels x of
/// δ(φ(x))·[μ|∇φ(x)| + Σ_{u∈W(x)} F(φ(u); m1(x), m2(x), λ(u))].
#[allow(clippy::too_many_arguments)]
pub fn total_energy(
    image: &ScalarField,
    phi: &ScalarField,
    params: &ParameterMaps,
    mu: f64,
    window: usize,
    smoothing: &Smoothing,
    band: &NarrowBand,
) -> Result<f64> {
    check_window(window)?;
    image.ensure_same_shape(phi.shape())?;
    image.ensure_same_shape(params.shape())?;
    let model = LocalModel::new(image, phi, params, window, smoothing);
    Ok(band_energy(&model, phi, mu, smoothing, band))
}

pub(crate) fn band_energy(
    model: &LocalModel,
    phi: &ScalarField,
    mu: f64,
    smoothing: &Smoothing,
    band: &NarrowBand,
) -> f64 {
    // Fixed row-major summation order.
    band.pixels()
        .map(|(r, c)| {
            let (m1, m2) = model.means(r, c);
            smoothing.dirac(phi.get(r, c)) * (mu * gradient_norm(phi, r, c) + model.window_energy(r, c, m1, m2))
        })
        .sum()
}

/// Pointwise data residual r = λ1(I − m1)² − λ2(I − m2)² at one pixel.
#[inline]
pub(crate) fn data_residual(intensity: f64, m1: f64, m2: f64, lambda1: f64, lambda2: f64) -> f64 {
    lambda1 * (intensity - m1).powi(2) - lambda2 * (intensity - m2).powi(2)
}

/// Below this Dirac weight the force is exactly zero.
pub const FORCE_DIRAC_CUTOFF: f64 = 1e-9;

/// Descent force ∂φ/∂t = δ(φ)·[μκ − r] at one pixel, where r is the data
/// residual against the local means of the window centred there. Positive
/// values grow the interior.
#[allow(clippy::too_many_arguments)]
pub fn evolution_force(
    image: &ScalarField,
    phi: &ScalarField,
    params: &ParameterMaps,
    mu: f64,
    window: usize,
    smoothing: &Smoothing,
    row: usize,
    col: usize,
) -> Result<f64> {
    check_window(window)?;
    image.ensure_same_shape(phi.shape())?;
    image.ensure_same_shape(params.shape())?;
    let delta = smoothing.dirac(phi.get(row, col));
    if delta < FORCE_DIRAC_CUTOFF {
        return Ok(0.0);
    }
    let (m1, m2) = means_with_fallback(image, phi, row, col, window, smoothing)?;
    let r = data_residual(
        image.get(row, col),
        m1,
        m2,
        params.lambda1().get(row, col),
        params.lambda2().get(row, col),
    );
    Ok(delta * (mu * curvature(phi, row, col) - r))
}
