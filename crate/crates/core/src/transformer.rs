//! Turns a localizer's probability map into the contour initialization and
//! the per-pixel parameter maps.

use std::ops::Deref;

use crate::energy::ParameterMaps;
use crate::error::Result;
use crate::field::{threshold, ScalarField};
use crate::levelset::{signed_distance_from_mask, SignedDistanceMap};

/// Cut used to binarize a probability map.
pub const PROBABILITY_CUT: f64 = 0.5;

/// Per-pixel interior probability, every value in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    field: ScalarField,
}

impl ProbabilityMap {
    /// Values outside [0, 1] are clamped.
    pub fn new(field: ScalarField) -> Self {
        Self {
            field: field.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }
}

impl Deref for ProbabilityMap {
    type Target = ScalarField;

    fn deref(&self) -> &ScalarField {
        &self.field
    }
}

/// Initial level set: the signed distance map of `p ≥ 0.5`.
pub fn prob_to_sdm(p: &ProbabilityMap) -> Result<SignedDistanceMap> {
    signed_distance_from_mask(&threshold(p, PROBABILITY_CUT))
}

/// λ1 = exp((2 − Y)/(1 + Y)).
#[inline]
pub fn lambda1_of(y: f64) -> f64 {
    ((2.0 - y) / (1.0 + y)).exp()
}

/// λ2 = exp((1 + Y)/(2 − Y)).
#[inline]
pub fn lambda2_of(y: f64) -> f64 {
    ((1.0 + y) / (2.0 - y)).exp()
}

/// Parameter maps from a probability map; both lie in [e^½, e²].
pub fn lambda_maps(p: &ProbabilityMap) -> ParameterMaps {
    ParameterMaps::new(p.map(lambda1_of), p.map(lambda2_of)).expect("lambda maps are positive and co-shaped")
}
