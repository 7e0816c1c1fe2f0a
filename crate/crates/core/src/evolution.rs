//! Narrow-band time integration of the level set and the end-to-end
//! `segment` entry point.
//!
//! Each iteration reads only the previous iterate (Jacobi), so results do not
//! depend on thread count. The data residual is divided by a scale fixed for
//! the whole run (a high quantile of its magnitude near the initial contour) and
//! clipped to ±1, and time is measured in units where the Dirac peak is one.
//! Under that scaling a pixel moves at most `dt · (μ + 1)` per step, which
//! the configuration keeps at or below half a pixel. Clipping keeps the sign
//! of every pixel's force, so each step is still a descent direction.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::energy::{band_energy, check_window, data_residual, LocalModel, ParameterMaps, FORCE_DIRAC_CUTOFF};
use crate::error::{Error, Result};
use crate::field::{threshold, BinaryMask, ScalarField};
use crate::levelset::{
    curvature, extract_band, reinitialize, zero_crossing_displacement, SignedDistanceMap, Smoothing, CURVATURE_CLAMP,
};
use crate::transformer::{lambda_maps, prob_to_sdm, ProbabilityMap, PROBABILITY_CUT};

/// Bound on the normalized data residual.
pub const DATA_FORCE_BOUND: f64 = 1.0;
/// Quantile of the initial |residual| used as the run's residual scale.
pub const RESIDUAL_SCALE_QUANTILE: f64 = 0.95;
/// The scale is taken over pixels with |φ0| at most this far from the
/// contour, independent of the band width.
pub const RESIDUAL_SCALE_RADIUS: f64 = 3.0;
/// Temperature of the output sigmoid, in pixels.
pub const SIGMOID_TEMPERATURE: f64 = 1.0;

/// Largest time step allowed for a given length weight.
pub fn max_stable_dt(mu: f64) -> f64 {
    0.5 / (mu * CURVATURE_CLAMP + DATA_FORCE_BOUND)
}

/// Solver constants. Build through [`EvolutionConfig::builder`] to change
/// them; the defaults are always valid.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    mu: f64,
    epsilon: f64,
    window: usize,
    dt: f64,
    band_half_width: f64,
    reinit_every: usize,
    max_iters: usize,
    converge_tol: f64,
    converge_patience: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            epsilon: 1.5,
            window: 21,
            dt: 0.45,
            band_half_width: 6.0,
            reinit_every: 20,
            max_iters: 300,
            converge_tol: 0.05,
            converge_patience: 5,
        }
    }
}

impl EvolutionConfig {
    pub fn builder() -> EvolutionConfigBuilder {
        EvolutionConfigBuilder { cfg: Self::default() }
    }

    /// A builder seeded with this configuration.
    pub fn to_builder(&self) -> EvolutionConfigBuilder {
        EvolutionConfigBuilder { cfg: self.clone() }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn window(&self) -> usize {
        self.window
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn band_half_width(&self) -> f64 {
        self.band_half_width
    }
    pub fn reinit_every(&self) -> usize {
        self.reinit_every
    }
    pub fn max_iters(&self) -> usize {
        self.max_iters
    }
    pub fn converge_tol(&self) -> f64 {
        self.converge_tol
    }
    pub fn converge_patience(&self) -> usize {
        self.converge_patience
    }

    pub fn smoothing(&self) -> Smoothing {
        Smoothing::new(self.epsilon).expect("validated at construction")
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad(format!("mu {} must be >= 0", self.mu));
        }
        Smoothing::new(self.epsilon)?;
        check_window(self.window)?;
        if !(self.dt >= 0.0) {
            return bad(format!("dt {} must be >= 0", self.dt));
        }
        let limit = max_stable_dt(self.mu);
        if self.dt > limit {
            return bad(format!(
                "dt {} exceeds the stability limit {limit:.6} for mu {}",
                self.dt, self.mu
            ));
        }
        if !(self.band_half_width >= 2.0) {
            return bad(format!("band half width {} must be >= 2", self.band_half_width));
        }
        if self.reinit_every == 0 {
            return bad("reinit_every must be >= 1".into());
        }
        if !(self.converge_tol >= 0.0) {
            return bad(format!("converge_tol {} must be >= 0", self.converge_tol));
        }
        if self.converge_patience == 0 {
            return bad("converge_patience must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionConfigBuilder {
    cfg: EvolutionConfig,
}

impl EvolutionConfigBuilder {
    pub fn mu(mut self, v: f64) -> Self {
        self.cfg.mu = v;
        self
    }
    pub fn epsilon(mut self, v: f64) -> Self {
        self.cfg.epsilon = v;
        self
    }
    pub fn window(mut self, v: usize) -> Self {
        self.cfg.window = v;
        self
    }
    pub fn dt(mut self, v: f64) -> Self {
        self.cfg.dt = v;
        self
    }
    /// `f64::INFINITY` evolves every pixel (dense mode).
    pub fn band_half_width(mut self, v: f64) -> Self {
        self.cfg.band_half_width = v;
        self
    }
    pub fn reinit_every(mut self, v: usize) -> Self {
        self.cfg.reinit_every = v;
        self
    }
    pub fn max_iters(mut self, v: usize) -> Self {
        self.cfg.max_iters = v;
        self
    }
    pub fn converge_tol(mut self, v: f64) -> Self {
        self.cfg.converge_tol = v;
        self
    }
    pub fn converge_patience(mut self, v: usize) -> Self {
        self.cfg.converge_patience = v;
        self
    }

    pub fn build(self) -> Result<EvolutionConfig> {
        self.cfg.validate()?;
        Ok(self.cfg)
    }
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    /// Final level-set function (φ > 0 inside).
    pub phi_final: ScalarField,
    pub y_out: ProbabilityMap,
    pub mask: BinaryMask,
    /// Energy of the iterate entering each iteration.
    pub energy_trace: Vec<f64>,
    /// Iterations after whose update φ was redistanced.
    pub reinit_iterations: Vec<usize>,
    pub iterations_run: usize,
    pub converged: bool,
    /// The contour vanished; `mask` is empty.
    pub collapsed: bool,
}

/// Output probability map, a sigmoid of φ/τ. Values above one half occur
/// exactly where φ > 0.
pub fn sdm_to_probability(phi: &ScalarField) -> ProbabilityMap {
    ProbabilityMap::new(phi.map(|v| {
        let y = 1.0 / (1.0 + (-v / SIGMOID_TEMPERATURE).exp());
        // Keep the sign cut exact for |φ| below rounding resolution.
        if v < 0.0 && y >= PROBABILITY_CUT {
            PROBABILITY_CUT - f64::EPSILON
        } else if v > 0.0 && y <= PROBABILITY_CUT {
            PROBABILITY_CUT + f64::EPSILON
        } else {
            y
        }
    }))
}

fn has_contour(phi: &ScalarField) -> bool {
    SignedDistanceMap::from_field(phi.clone()).is_ok()
}

/// Gradient descent of φ within the narrow band.
///
/// Per iteration: extract the band; record the energy; move every band pixel
/// by `dt` times its normalized force, all read from the previous iterate;
/// redistance every `reinit_every` iterations; stop once the zero crossings
/// move less than `converge_tol` for `converge_patience` iterations in a row.
pub fn evolve(
    image: &ScalarField,
    phi0: &SignedDistanceMap,
    params: &ParameterMaps,
    cfg: &EvolutionConfig,
) -> Result<SegmentationResult> {
    image.ensure_same_shape(phi0.shape())?;
    image.ensure_same_shape(params.shape())?;
    let (h, w) = image.shape();
    let smoothing = cfg.smoothing();
    let step = cfg.dt * PI * cfg.epsilon;

    let mut phi = phi0.field().clone();
    let mut energy_trace = Vec::new();
    let mut reinit_iterations = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    let mut collapsed = false;
    let mut inv_scale = None;
    let img = image.data();
    let (l1, l2) = (params.lambda1().data(), params.lambda2().data());

    for it in 0..cfg.max_iters {
        let band = match extract_band(&phi, cfg.band_half_width) {
            Ok(b) => b,
            Err(Error::EmptyBand) => {
                collapsed = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let model = LocalModel::new(image, &phi, params, cfg.window, &smoothing);
        energy_trace.push(band_energy(&model, &phi, cfg.mu, &smoothing, &band));
        let inv_scale = *inv_scale.get_or_insert_with(|| {
            let mut mags: Vec<f64> = band
                .indices()
                .par_iter()
                .filter(|&&i| phi.data()[i].abs() <= RESIDUAL_SCALE_RADIUS)
                .map(|&i| {
                    let (m1, m2) = model.means(i / w, i % w);
                    data_residual(img[i], m1, m2, l1[i], l2[i]).abs()
                })
                .collect();
            if mags.is_empty() {
                return 0.0;
            }
            let k = ((mags.len() - 1) as f64 * RESIDUAL_SCALE_QUANTILE).round() as usize;
            let (_, q, _) = mags.select_nth_unstable_by(k, f64::total_cmp);
            if *q > 0.0 {
                1.0 / *q
            } else {
                0.0
            }
        });
        let updates: Vec<f64> = band
            .indices()
            .par_iter()
            .map(|&i| {
                let (r, c) = (i / w, i % w);
                let delta = smoothing.dirac(phi.data()[i]);
                if delta < FORCE_DIRAC_CUTOFF {
                    return 0.0;
                }
                let (m1, m2) = model.means(r, c);
                let residual = (data_residual(img[i], m1, m2, l1[i], l2[i]) * inv_scale)
                    .clamp(-DATA_FORCE_BOUND, DATA_FORCE_BOUND);
                step * delta * (cfg.mu * curvature(&phi, r, c) - residual)
            })
            .collect();
        let mut next = phi.data().to_vec();
        for (&i, du) in band.indices().iter().zip(updates) {
            next[i] += du;
        }
        let mut next = ScalarField::from_raw(h, w, next);

        if !has_contour(&next) {
            phi = next;
            collapsed = true;
            break;
        }
        if (it + 1) % cfg.reinit_every == 0 {
            next = reinitialize(&next)?.into_field();
            reinit_iterations.push(it);
        }

        let moved = zero_crossing_displacement(&phi, &next);
        phi = next;
        if moved < cfg.converge_tol {
            streak += 1;
            if streak >= cfg.converge_patience {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }

    let iterations_run = energy_trace.len();
    let (y_out, mask) = if collapsed {
        (
            ProbabilityMap::new(ScalarField::from_raw(h, w, vec![0.0; h * w])),
            BinaryMask::empty(h, w)?,
        )
    } else {
        let y = sdm_to_probability(&phi);
        let m = threshold(&y, PROBABILITY_CUT);
        (y, m)
    };
    Ok(SegmentationResult {
        phi_final: phi,
        y_out,
        mask,
        energy_trace,
        reinit_iterations,
        iterations_run,
        converged,
        collapsed,
    })
}

/// Probability map in, refined segmentation out: initial level set and
/// parameter maps from `p`, then [`evolve`].
pub fn segment(image: &ScalarField, p: &ProbabilityMap, cfg: &EvolutionConfig) -> Result<SegmentationResult> {
    image.ensure_same_shape(p.shape())?;
    let phi0 = prob_to_sdm(p)?;
    let params = lambda_maps(p);
    evolve(image, &phi0, &params, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::signed_distance_from_mask;

    fn disk_mask(size: usize, cy: f64, cx: f64, radius: f64) -> BinaryMask {
        BinaryMask::from_fn(size, size, |r, c| {
            (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2) <= radius * radius
        })
        .unwrap()
    }

    #[test]
    fn defaults_are_valid_and_stable() {
        let cfg = EvolutionConfig::default();
        assert!(cfg.validate().is_ok());
        assert!(cfg.dt() <= max_stable_dt(cfg.mu()));
        assert!(EvolutionConfig::builder().dt(0.46).build().is_err());
        assert!(EvolutionConfig::builder().window(20).build().is_err());
        assert!(EvolutionConfig::builder().band_half_width(1.0).build().is_err());
        assert!(EvolutionConfig::builder().epsilon(0.0).build().is_err());
        assert!(EvolutionConfig::builder().reinit_every(0).build().is_err());
        assert!(EvolutionConfig::builder()
            .band_half_width(f64::INFINITY)
            .build()
            .is_ok());
    }

    #[test]
    fn sigmoid_examples() {
        let phi = ScalarField::new(1, 4, vec![0.0, 6.0, -1e-300, 1e-300]).unwrap();
        let y = sdm_to_probability(&phi);
        assert_eq!(y.get(0, 0), 0.5);
        assert!((y.get(0, 1) - 0.99753).abs() < 1e-5);
        assert!(y.get(0, 2) < 0.5);
        assert!(y.get(0, 3) > 0.5);
    }

    #[test]
    fn zero_step_is_a_fixed_point() {
        let gt = disk_mask(48, 24.0, 24.0, 9.0);
        let img = gt.to_field();
        let phi0 = signed_distance_from_mask(&gt).unwrap();
        let params = ParameterMaps::constant(48, 48, 1.0, 1.0).unwrap();
        let cfg = EvolutionConfig::builder().dt(0.0).build().unwrap();
        let res = evolve(&img, &phi0, &params, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations_run, cfg.converge_patience());
        assert_eq!(&res.phi_final, phi0.field());
        assert!(res.energy_trace.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(res.energy_trace.len(), res.iterations_run);
    }

    #[test]
    fn dilated_init_contracts_onto_bright_disk() {
        let gt = disk_mask(64, 31.5, 31.5, 12.0);
        let img = gt.to_field();
        let dilated = disk_mask(64, 31.5, 31.5, 15.0);
        let phi0 = signed_distance_from_mask(&dilated).unwrap();
        let p = ProbabilityMap::new(gt.to_field());
        let res = evolve(&img, &phi0, &lambda_maps(&p), &EvolutionConfig::default()).unwrap();
        assert!(!res.collapsed);
        let dice = crate::metrics::dice(&res.mask, &gt).unwrap();
        assert!(dice >= 0.99, "dice {dice}");
        assert_eq!(res.mask, threshold(&res.y_out, 0.5));
    }

    #[test]
    fn segment_rejects_empty_probability() {
        let img = ScalarField::filled(16, 16, 0.2).unwrap();
        let p = ProbabilityMap::new(ScalarField::filled(16, 16, 0.0).unwrap());
        assert!(matches!(
            segment(&img, &p, &EvolutionConfig::default()),
            Err(Error::DegenerateMask)
        ));
    }

    #[test]
    fn tiny_contour_on_flat_image_collapses() {
        let mut m = BinaryMask::empty(24, 24).unwrap();
        m.set(12, 12, true);
        let img = ScalarField::filled(24, 24, 0.5).unwrap();
        let phi0 = signed_distance_from_mask(&m).unwrap();
        let params = ParameterMaps::constant(24, 24, 1.0, 1.0).unwrap();
        let cfg = EvolutionConfig::builder()
            .mu(0.2)
            .dt(0.4)
            .converge_tol(0.0)
            .build()
            .unwrap();
        let res = evolve(&img, &phi0, &params, &cfg).unwrap();
        assert!(res.collapsed);
        assert!(res.mask.is_all_zero());
        assert!(!res.converged);
    }
}
