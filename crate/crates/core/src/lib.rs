//! Lesion segmentation by level-set evolution whose region weights vary per
//! pixel, derived from a localizer's probability map.
//!
//! The usual path is [`segment`]: a probability map gives both the initial
//! contour (its signed distance map) and the weight maps
//! ([`transformer::lambda_maps`]), and the contour is then evolved against a
//! localized two-region energy on a narrow band.
//!
//! ```
//! use dals::{phantom, segment, EvolutionConfig, Preset};
//!
//! let sample = phantom::generate(&Preset::LungCt.spec(7)).unwrap();
//! let out = segment(&sample.image, &sample.prob, &EvolutionConfig::default()).unwrap();
//! let d = dals::metrics::dice(&out.mask, &sample.gt).unwrap();
//! assert!(d > 0.8);
//! ```

// `!(x >= lo)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod evolution;
pub mod field;
pub mod io;
pub mod levelset;
pub mod metrics;
pub mod phantom;
pub mod transformer;

pub use energy::{global_means, local_means, total_energy, ParameterMaps};
pub use error::{Error, Result};
pub use evolution::{evolve, segment, EvolutionConfig, SegmentationResult};
pub use field::{threshold, BinaryMask, ScalarField};
pub use levelset::{reinitialize, signed_distance_from_mask, SignedDistanceMap, Smoothing};
pub use phantom::{PhantomSample, PhantomSpec, Preset};
pub use transformer::{lambda_maps, prob_to_sdm, ProbabilityMap};
