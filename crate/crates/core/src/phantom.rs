//! Seeded synthetic lesions with analytic ground truth, and an emulator for
//! the blurred, misregistered probability maps a localizer network emits.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) keyed by the 64-bit seed
//! through `seed_from_u64`. Each concern draws from its own ChaCha stream
//! (`set_stream`): 0 for lesion geometry, 1 for image noise, 2 for the
//! default corruption of a generated sample. `corrupt` seeds its own
//! generator on stream 0. Samples therefore depend only on the spec.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{gaussian_blur, threshold, BinaryMask, ScalarField};
use crate::transformer::{ProbabilityMap, PROBABILITY_CUT};

const STREAM_GEOMETRY: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_CORRUPTION: u64 = 2;

/// Radii below this are redrawn.
pub const MIN_RADIUS: f64 = 3.0;
/// Clearance kept between the lesion and the grid edge.
pub const GRID_MARGIN: f64 = 4.0;
const MAX_DRAWS: usize = 10_000;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How a generated sample's probability map is degraded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corruption {
    pub blur_sd: f64,
    /// Integer shifts are drawn uniformly from the disk of this radius.
    pub max_shift: f64,
    pub flip_rate: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            blur_sd: 2.0,
            max_shift: 3.0,
            flip_rate: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    BrainMr,
    LungCt,
    LiverCt,
    LiverMr,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::BrainMr, Preset::LungCt, Preset::LiverCt, Preset::LiverMr];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BrainMr => "brain-mr",
            Preset::LungCt => "lung-ct",
            Preset::LiverCt => "liver-ct",
            Preset::LiverMr => "liver-mr",
        }
    }

    /// Lesion radius mean and standard deviation in pixels.
    pub fn radius(self) -> (f64, f64) {
        match self {
            Preset::BrainMr => (17.42, 9.516),
            Preset::LungCt => (15.15, 5.777),
            Preset::LiverCt => (20.483, 10.37),
            Preset::LiverMr => (5.459, 2.027),
        }
    }

    pub fn spec(self, seed: u64) -> PhantomSpec {
        let (radius_mean, radius_sd) = self.radius();
        PhantomSpec {
            radius_mean,
            radius_sd,
            seed,
            ..PhantomSpec::default()
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub radius_mean: f64,
    pub radius_sd: f64,
    pub boundary_harmonics: usize,
    /// Bound on the summed harmonic amplitudes, as a fraction of the radius.
    pub boundary_amplitude: f64,
    pub fg_level: f64,
    pub bg_level: f64,
    pub noise_sd: f64,
    /// Intensity change across the lesion along a random direction.
    pub inhomogeneity_slope: f64,
    pub seed: u64,
    pub corruption: Corruption,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 128,
            radius_mean: 17.42,
            radius_sd: 9.516,
            boundary_harmonics: 5,
            boundary_amplitude: 0.25,
            fg_level: 0.6,
            bg_level: 0.4,
            noise_sd: 0.08,
            inhomogeneity_slope: 0.2,
            seed: 0,
            corruption: Corruption::default(),
        }
    }
}

impl PhantomSpec {
    fn max_extent(&self) -> f64 {
        (self.size as f64 - 1.0) / 2.0 - GRID_MARGIN
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let unit = 0.0..=1.0;
        if !unit.contains(&self.fg_level) || !unit.contains(&self.bg_level) {
            return bad(format!(
                "levels {} / {} must lie in [0, 1]",
                self.fg_level, self.bg_level
            ));
        }
        if self.fg_level == self.bg_level {
            return bad("fg_level and bg_level must differ".into());
        }
        if !(0.0..1.0).contains(&self.boundary_amplitude) {
            return bad(format!(
                "boundary_amplitude {} must lie in [0, 1)",
                self.boundary_amplitude
            ));
        }
        if !(self.radius_mean > 0.0) || !(self.radius_sd >= 0.0) {
            return bad(format!("radius {} ± {} is invalid", self.radius_mean, self.radius_sd));
        }
        if !(self.noise_sd >= 0.0) || !self.inhomogeneity_slope.is_finite() {
            return bad("noise_sd must be >= 0 and slope finite".into());
        }
        if MIN_RADIUS * (1.0 + self.boundary_amplitude) > self.max_extent() {
            return bad(format!("size {} cannot hold a lesion", self.size));
        }
        let c = &self.corruption;
        if !(c.blur_sd >= 0.0) || !(c.max_shift >= 0.0) || !(0.0..0.5).contains(&c.flip_rate) {
            return bad(format!("corruption {c:?} is invalid"));
        }
        Ok(())
    }
}

/// Lesion geometry chosen for a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Lesion {
    pub center: (f64, f64),
    pub radius: f64,
    /// `(frequency, amplitude, phase)` per harmonic.
    pub harmonics: Vec<(u32, f64, f64)>,
    /// Direction of the intensity ramp, radians.
    pub ramp_angle: f64,
    /// Shift `(dx, dy)` applied when corrupting the probability map.
    pub shift: (i64, i64),
}

impl Lesion {
    /// Boundary radius in direction `theta`.
    pub fn rho(&self, theta: f64) -> f64 {
        let s: f64 = self
            .harmonics
            .iter()
            .map(|&(k, a, psi)| a * (k as f64 * theta + psi).cos())
            .sum();
        self.radius * (1.0 + s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSample {
    pub image: ScalarField,
    pub gt: BinaryMask,
    pub prob: ProbabilityMap,
    pub lesion: Lesion,
}

fn draw_radius(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<f64> {
    let hi = spec.max_extent() / (1.0 + spec.boundary_amplitude);
    let dist = if spec.radius_sd > 0.0 {
        let var = (1.0 + (spec.radius_sd / spec.radius_mean).powi(2)).ln();
        Some(LogNormal::new(spec.radius_mean.ln() - var / 2.0, var.sqrt()).expect("finite lognormal"))
    } else {
        None
    };
    for _ in 0..MAX_DRAWS {
        let r = dist.map_or(spec.radius_mean, |d| d.sample(rng));
        if (MIN_RADIUS..=hi).contains(&r) {
            return Ok(r);
        }
        if dist.is_none() {
            break;
        }
    }
    Err(Error::InvalidParameter(format!(
        "no radius in [{MIN_RADIUS}, {hi:.2}] for {} ± {}",
        spec.radius_mean, spec.radius_sd
    )))
}

fn draw_shift(max_shift: f64, rng: &mut ChaCha8Rng) -> (i64, i64) {
    let m = max_shift.floor() as i64;
    loop {
        let dx = rng.random_range(-m..=m);
        let dy = rng.random_range(-m..=m);
        if ((dx * dx + dy * dy) as f64) <= max_shift * max_shift {
            return (dx, dy);
        }
    }
}

fn draw_lesion(spec: &PhantomSpec) -> Result<Lesion> {
    let mut rng = rng_for(spec.seed, STREAM_GEOMETRY);
    let radius = draw_radius(spec, &mut rng)?;
    let extent = radius * (1.0 + spec.boundary_amplitude);
    let (lo, hi) = (GRID_MARGIN + extent, spec.size as f64 - 1.0 - GRID_MARGIN - extent);
    let pick = |rng: &mut ChaCha8Rng| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let center = (pick(&mut rng), pick(&mut rng));

    let raw: Vec<(u32, f64, f64)> = (0..spec.boundary_harmonics)
        .map(|k| {
            let w = rng.random_range(-1.0..=1.0) / (k + 1) as f64;
            (k as u32 + 2, w, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let total: f64 = raw.iter().map(|h| h.1.abs()).sum();
    let scale = if total > 0.0 {
        spec.boundary_amplitude * rng.random_range(0.5..=1.0) / total
    } else {
        0.0
    };
    let harmonics = raw.into_iter().map(|(k, w, psi)| (k, w * scale, psi)).collect();
    Ok(Lesion {
        center,
        radius,
        harmonics,
        ramp_angle: rng.random_range(0.0..2.0 * PI),
        shift: (0, 0),
    })
}

fn rasterize(size: usize, lesion: &Lesion) -> BinaryMask {
    let (cr, cc) = lesion.center;
    BinaryMask::from_fn(size, size, |r, c| {
        let (dy, dx) = (r as f64 - cr, c as f64 - cc);
        (dx * dx + dy * dy).sqrt() <= lesion.rho(dy.atan2(dx))
    })
    .expect("size validated")
}

/// Draws one sample. Errors only on an invalid spec.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomSample> {
    spec.validate()?;
    let mut lesion = draw_lesion(spec)?;
    let gt = rasterize(spec.size, &lesion);

    let (dir_y, dir_x) = lesion.ramp_angle.sin_cos();
    let extent = lesion.radius * (1.0 + spec.boundary_amplitude);
    let mut noise_rng = rng_for(spec.seed, STREAM_NOISE);
    let noise = if spec.noise_sd > 0.0 {
        Some(Normal::new(0.0, spec.noise_sd).expect("noise_sd validated"))
    } else {
        None
    };
    let (cr, cc) = lesion.center;
    let image = ScalarField::from_fn(spec.size, spec.size, |r, c| {
        let mut v = spec.bg_level;
        if gt.get(r, c) {
            let along = ((c as f64 - cc) * dir_x + (r as f64 - cr) * dir_y) / extent;
            v = spec.fg_level + 0.5 * spec.inhomogeneity_slope * along;
        }
        if let Some(n) = noise {
            v += n.sample(&mut noise_rng);
        }
        v.clamp(0.0, 1.0)
    })?;

    let mut rng = rng_for(spec.seed, STREAM_CORRUPTION);
    let c = spec.corruption;
    let mut last = Error::DegenerateMask;
    for _ in 0..16 {
        let shift = draw_shift(c.max_shift, &mut rng);
        let sub_seed = rng.random::<u64>();
        match corrupt(&gt, c.blur_sd, shift, c.flip_rate, sub_seed) {
            Ok(prob) => {
                lesion.shift = shift;
                return Ok(PhantomSample {
                    image,
                    gt,
                    prob,
                    lesion,
                });
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Samples for `seeds` generated in parallel, returned in seed order.
pub fn generate_batch(base: &PhantomSpec, seeds: &[u64]) -> Result<Vec<PhantomSample>> {
    seeds
        .par_iter()
        .map(|&seed| generate(&PhantomSpec { seed, ..base.clone() }))
        .collect()
}

/// Emulated localizer output: `gt` translated by `shift = (dx, dy)` (columns,
/// rows; zero fill), blurred, then mixed as `(1 − f)·p + f·u` with seeded
/// uniform noise `u`.
pub fn corrupt(gt: &BinaryMask, blur_sd: f64, shift: (i64, i64), flip_rate: f64, seed: u64) -> Result<ProbabilityMap> {
    if gt.is_all_zero() {
        return Err(Error::DegenerateMask);
    }
    if !(blur_sd >= 0.0) || !(0.0..0.5).contains(&flip_rate) {
        return Err(Error::InvalidParameter(format!(
            "blur_sd {blur_sd} must be >= 0 and flip_rate {flip_rate} in [0, 0.5)"
        )));
    }
    let moved = gt.translate(shift.1, shift.0).to_field();
    let blurred = gaussian_blur(&moved, blur_sd)?;
    let prob = if flip_rate > 0.0 {
        let mut rng = rng_for(seed, 0);
        let data = blurred
            .data()
            .iter()
            .map(|&p| (1.0 - flip_rate) * p + flip_rate * rng.random::<f64>())
            .collect();
        ScalarField::new(gt.height(), gt.width(), data)?
    } else {
        blurred
    };
    let prob = ProbabilityMap::new(prob);
    if threshold(&prob, PROBABILITY_CUT).is_all_zero() {
        return Err(Error::DegenerateMask);
    }
    Ok(prob)
}
