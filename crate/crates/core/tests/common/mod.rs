//! Brute-force reference implementations shared by the integration tests.
//! Written directly from the definitions, with no code shared with the
//! library beyond its data types.

#![allow(dead_code)]

use dals::{BinaryMask, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| rng.random_bool(density)).unwrap()
}

/// A random blob mask: union of a few discs, guaranteed to have both labels.
pub fn random_blobs(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
    loop {
        let discs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
            .map(|_| {
                (
                    rng.random_range(0.0..h as f64),
                    rng.random_range(0.0..w as f64),
                    rng.random_range(1.0..(h.min(w) as f64 / 3.0).max(1.5)),
                )
            })
            .collect();
        let m = BinaryMask::from_fn(h, w, |r, c| {
            discs
                .iter()
                .any(|&(y, x, rad)| (r as f64 - y).hypot(c as f64 - x) <= rad)
        })
        .unwrap();
        if !m.is_all_zero() && !m.is_all_one() {
            return m;
        }
    }
}

pub fn sdm_oracle(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = mask.shape();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let inside = mask.get(r, c);
            let mut best = i64::MAX;
            for r2 in 0..h {
                for c2 in 0..w {
                    if mask.get(r2, c2) != inside {
                        let (dr, dc) = (r as i64 - r2 as i64, c as i64 - c2 as i64);
                        best = best.min(dr * dr + dc * dc);
                    }
                }
            }
            let d = (best as f64).sqrt();
            out[r * w + c] = if inside { d - 0.5 } else { 0.5 - d };
        }
    }
    out
}

pub fn dice_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut sa, mut sb) = (0, 0, 0);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(r, c), b.get(r, c));
            sa += x as usize;
            sb += y as usize;
            inter += (x && y) as usize;
        }
    }
    if sa + sb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (sa + sb) as f64
    }
}

pub fn boundary_oracle(m: &BinaryMask) -> Vec<(i64, i64)> {
    let (h, w) = (m.height() as i64, m.width() as i64);
    let fg = |r: i64, c: i64| r >= 0 && c >= 0 && r < h && c < w && m.get(r as usize, c as usize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if fg(r, c) && (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1)) {
                out.push((r, c));
            }
        }
    }
    out
}

fn directed(a: &[(i64, i64)], b: &[(i64, i64)]) -> i64 {
    a.iter()
        .map(|&(r, c)| {
            b.iter()
                .map(|&(r2, c2)| (r - r2).pow(2) + (c - c2).pow(2))
                .min()
                .unwrap()
        })
        .max()
        .unwrap()
}

pub fn hausdorff_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (ba, bb) = (boundary_oracle(a), boundary_oracle(b));
    (directed(&ba, &bb).max(directed(&bb, &ba)) as f64).sqrt()
}

pub fn heaviside(z: f64, eps: f64) -> f64 {
    0.5 * (1.0 + 2.0 / std::f64::consts::PI * (z / eps).atan())
}

pub fn dirac(z: f64, eps: f64) -> f64 {
    eps / (std::f64::consts::PI * (eps * eps + z * z))
}

/// Window-clamped, Heaviside-weighted means with the global mean standing in
/// for a side whose mass is below 1e-6.
pub fn means_oracle(img: &ScalarField, phi: &ScalarField, r: usize, c: usize, s: usize, eps: f64) -> (f64, f64) {
    let (h, w) = img.shape();
    let half = s / 2;
    let (mut wi, mut wo, mut si, mut so) = (0.0, 0.0, 0.0, 0.0);
    for u in r.saturating_sub(half)..=(r + half).min(h - 1) {
        for v in c.saturating_sub(half)..=(c + half).min(w - 1) {
            let hh = heaviside(phi.get(u, v), eps);
            wi += hh;
            wo += 1.0 - hh;
            si += hh * img.get(u, v);
            so += (1.0 - hh) * img.get(u, v);
        }
    }
    let (gi, go) = global_means_oracle(img, phi, eps);
    (
        if wi < 1e-6 { gi } else { si / wi },
        if wo < 1e-6 { go } else { so / wo },
    )
}

pub fn global_means_oracle(img: &ScalarField, phi: &ScalarField, eps: f64) -> (f64, f64) {
    let (mut wi, mut wo, mut si, mut so) = (0.0, 0.0, 0.0, 0.0);
    for (&z, &i) in phi.data().iter().zip(img.data()) {
        let hh = heaviside(z, eps);
        wi += hh;
        wo += 1.0 - hh;
        si += hh * i;
        so += (1.0 - hh) * i;
    }
    (si / wi, so / wo)
}

fn grad_norm_oracle(phi: &ScalarField, r: usize, c: usize) -> f64 {
    let (h, w) = phi.shape();
    let g = |r: usize, c: usize| phi.get(r.min(h - 1), c.min(w - 1));
    let gx = (g(r, c + 1) - g(r, c.saturating_sub(1))) / 2.0;
    let gy = (g(r + 1, c) - g(r.saturating_sub(1), c)) / 2.0;
    gx.hypot(gy)
}

/// Triple loop over band pixels, window pixels and the two regions.
#[allow(clippy::too_many_arguments)]
pub fn energy_oracle(
    img: &ScalarField,
    phi: &ScalarField,
    l1: &ScalarField,
    l2: &ScalarField,
    mu: f64,
    s: usize,
    eps: f64,
    half_width: f64,
) -> f64 {
    let (h, w) = img.shape();
    let half = s / 2;
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            if phi.get(r, c).abs() > half_width {
                continue;
            }
            let (m1, m2) = means_oracle(img, phi, r, c, s, eps);
            let mut fit = 0.0;
            for u in r.saturating_sub(half)..=(r + half).min(h - 1) {
                for v in c.saturating_sub(half)..=(c + half).min(w - 1) {
                    let hh = heaviside(phi.get(u, v), eps);
                    let i = img.get(u, v);
                    fit += l1.get(u, v) * (i - m1).powi(2) * hh + l2.get(u, v) * (i - m2).powi(2) * (1.0 - hh);
                }
            }
            total += dirac(phi.get(r, c), eps) * (mu * grad_norm_oracle(phi, r, c) + fit);
        }
    }
    total
}

/// Classical two-phase Chan-Vese on the full grid: global region means,
/// expanded-form curvature, explicit steps normalized by the largest data
/// term, run until the mask is stable for `patience` steps.
pub fn chan_vese_reference(img: &ScalarField, phi0: &ScalarField, mu: f64, eps: f64, max_steps: usize) -> BinaryMask {
    let (h, w) = img.shape();
    let mut phi: Vec<f64> = phi0.data().to_vec();
    let at = |p: &[f64], r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        p[r * w + c]
    };
    let range = img.max() - img.min();
    let mut stable = 0;
    let mut prev: Vec<bool> = phi.iter().map(|&v| v >= 0.0).collect();
    for _ in 0..max_steps {
        let field = ScalarField::new(h, w, phi.clone()).unwrap();
        let (c1, c2) = global_means_oracle(img, &field, eps);
        let mut next = phi.clone();
        for r in 0..h as isize {
            for c in 0..w as isize {
                let p = |dr, dc| at(&phi, r + dr, c + dc);
                let (px, py) = ((p(0, 1) - p(0, -1)) / 2.0, (p(1, 0) - p(-1, 0)) / 2.0);
                let pxx = p(0, 1) - 2.0 * p(0, 0) + p(0, -1);
                let pyy = p(1, 0) - 2.0 * p(0, 0) + p(-1, 0);
                let pxy = (p(1, 1) - p(1, -1) - p(-1, 1) + p(-1, -1)) / 4.0;
                let g2 = px * px + py * py;
                let kappa =
                    ((pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 + 1e-8).powf(1.5)).clamp(-1.0, 1.0);
                let i = img.get(r as usize, c as usize);
                let data = ((i - c1).powi(2) - (i - c2).powi(2)) / (range * range);
                let k = r as usize * w + c as usize;
                next[k] += 0.2 * std::f64::consts::PI * eps * dirac(phi[k], eps) * (mu * kappa - data);
            }
        }
        phi = next;
        let cur: Vec<bool> = phi.iter().map(|&v| v >= 0.0).collect();
        if cur == prev {
            stable += 1;
            if stable >= 50 {
                break;
            }
        } else {
            stable = 0;
        }
        prev = cur;
    }
    BinaryMask::new(h, w, prev).unwrap()
}
