//! Overlap and boundary metrics for binary segmentations, and the interval
//! statistic used to summarize them over a corpus.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::BinaryMask;
use crate::levelset::squared_distance_transform;

/// Default BoundF matching tolerance in pixels.
pub const DEFAULT_BOUNDF_TOLERANCE: f64 = 2.0;

fn same_shape(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// 2|A∩B| / (|A| + |B|); two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_shape(a, b)?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

// Distance from each boundary pixel of `from` to the nearest boundary pixel
// of `to`.
fn boundary_distances(from: &BinaryMask, to: &BinaryMask) -> Vec<f64> {
    let to_boundary = to.boundary();
    let sq = squared_distance_transform(&to_boundary);
    let w = from.width();
    from.boundary()
        .foreground_pixels()
        .map(|(r, c)| sq[r * w + c].sqrt())
        .collect()
}

/// Symmetric Hausdorff distance between the two boundary pixel sets
/// (4-connected boundaries; pixels outside the grid count as background).
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_shape(a, b)?;
    if a.is_all_zero() || b.is_all_zero() {
        return Err(Error::EmptyMask);
    }
    let ab = boundary_distances(a, b).into_iter().fold(0.0, f64::max);
    let ba = boundary_distances(b, a).into_iter().fold(0.0, f64::max);
    Ok(ab.max(ba))
}

/// Boundary F-measure: precision is the share of `pred` boundary pixels
/// within `tolerance` of the `truth` boundary, recall the reverse.
pub fn boundf(pred: &BinaryMask, truth: &BinaryMask, tolerance: f64) -> Result<f64> {
    same_shape(pred, truth)?;
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance} must be > 0")));
    }
    if pred.is_all_zero() || truth.is_all_zero() {
        return Err(Error::EmptyMask);
    }
    let share = |d: Vec<f64>| d.iter().filter(|&&x| x <= tolerance).count() as f64 / d.len() as f64;
    let precision = share(boundary_distances(pred, truth));
    let recall = share(boundary_distances(truth, pred));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub hausdorff: f64,
    pub boundf: f64,
}

impl MetricsReport {
    pub fn compute(pred: &BinaryMask, truth: &BinaryMask, tolerance: f64) -> Result<Self> {
        Ok(Self {
            dice: dice(pred, truth)?,
            hausdorff: hausdorff(pred, truth)?,
            boundf: boundf(pred, truth, tolerance)?,
        })
    }

    fn pairs(&self) -> [(&'static str, f64); 3] {
        [("dice", self.dice), ("hausdorff", self.hausdorff), ("boundf", self.boundf)]
    }

    /// One `metric=value` per line, for key-value files.
    pub fn to_lines(&self) -> String {
        self.pairs().map(|(k, v)| format!("{k}={v:.6}\n")).concat()
    }
}

/// `dice=… hausdorff=… boundf=…` on a single line.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts = self.pairs().map(|(k, v)| format!("{k}={v:.6}"));
        f.write_str(&parts.join(" "))
    }
}

/// Mean and 95% normal-approximation half-width 1.96·s/√n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
}

pub fn confidence_interval(samples: &[f64]) -> Result<ConfidenceInterval> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(ConfidenceInterval {
        mean,
        half_width: 1.96 * var.sqrt() / (n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(h: usize, w: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| (r0..r1).contains(&r) && (c0..c1).contains(&c)).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = rect(8, 8, 1, 4, 1, 4);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = rect(8, 8, 5, 7, 5, 7);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let a = rect(4, 4, 0, 2, 0, 2);
        let b = rect(4, 4, 0, 2, 1, 3);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        let e = BinaryMask::empty(4, 4).unwrap();
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert!(dice(&e, &BinaryMask::empty(4, 5).unwrap()).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = rect(10, 10, 2, 7, 2, 6);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let mut p = BinaryMask::empty(8, 8).unwrap();
        p.set(0, 0, true);
        let mut q = BinaryMask::empty(8, 8).unwrap();
        q.set(3, 4, true);
        assert_eq!(hausdorff(&p, &q).unwrap(), 5.0);
        assert!(matches!(
            hausdorff(&p, &BinaryMask::empty(8, 8).unwrap()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn boundf_examples() {
        let a = rect(40, 40, 10, 20, 10, 20);
        assert_eq!(boundf(&a, &a, 2.0).unwrap(), 1.0);
        let shifted = rect(40, 40, 10, 20, 11, 21);
        assert_eq!(boundf(&shifted, &a, 2.0).unwrap(), 1.0);
        let far = BinaryMask::from_fn(60, 60, |r, c| (5..10).contains(&r) && (5..10).contains(&c)).unwrap();
        let other = BinaryMask::from_fn(60, 60, |r, c| (5..10).contains(&r) && (30..35).contains(&c)).unwrap();
        assert_eq!(boundf(&far, &other, 2.0).unwrap(), 0.0);
        assert!(boundf(&a, &a, 0.0).is_err());
    }

    #[test]
    fn perfect_dice_implies_perfect_boundary_scores() {
        let a = rect(16, 16, 3, 11, 4, 9);
        let r = MetricsReport::compute(&a, &a, 2.0).unwrap();
        assert_eq!(
            r,
            MetricsReport {
                dice: 1.0,
                hausdorff: 0.0,
                boundf: 1.0
            }
        );
        assert_eq!(r.to_string(), "dice=1.000000 hausdorff=0.000000 boundf=1.000000");
        assert_eq!(r.to_lines(), "dice=1.000000\nhausdorff=0.000000\nboundf=1.000000\n");
    }

    #[test]
    fn confidence_interval_examples() {
        let ci = confidence_interval(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ci.mean, 2.0);
        assert!((ci.half_width - 1.96 / 3f64.sqrt()).abs() < 1e-15);
        assert!((ci.half_width - 1.13161).abs() < 1e-5);
        assert_eq!(confidence_interval(&[4.0; 5]).unwrap().half_width, 0.0);
        assert!(matches!(
            confidence_interval(&[1.0]),
            Err(Error::InsufficientSamples(1))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!((confidence_interval(&xs).unwrap().mean - 0.5).abs() < 0.01);
    }
}
