//! Dense 2D grids and the raster operations shared by the rest of the crate.
//!
//! Everything is row-major and indexed `(row, col)`, i.e. `(y, x)`, with unit
//! pixel spacing. Stencils that step outside the grid read the nearest edge
//! pixel (replicate extension).

use crate::error::{Error, Result};

fn check_shape(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidShape { height, width });
    }
    Ok(())
}

/// A real-valued image on the pixel grid. All values are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds a field by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_shape(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    /// Crate-internal constructor for data already known to be finite and sized.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Reads with replicate extension outside the grid.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    /// Applies `f` pointwise. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced a non-finite value");
        Self::from_raw(self.height, self.width, data)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn ensure_same_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other,
            });
        }
        Ok(())
    }
}

/// A {0,1} label image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        check_shape(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_shape(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_all_zero(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn is_all_one(&self) -> bool {
        self.data.iter().all(|&v| v)
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_raw(
            self.height,
            self.width,
            self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Shifts the mask by `(d_row, d_col)`; pixels shifted in from outside are 0.
    pub fn translate(&self, d_row: i64, d_col: i64) -> BinaryMask {
        let (h, w) = (self.height as i64, self.width as i64);
        let mut out = vec![false; self.data.len()];
        for r in 0..h {
            for c in 0..w {
                let (sr, sc) = (r - d_row, c - d_col);
                if sr >= 0 && sr < h && sc >= 0 && sc < w {
                    out[(r * w + c) as usize] = self.data[(sr * w + sc) as usize];
                }
            }
        }
        BinaryMask {
            height: self.height,
            width: self.width,
            data: out,
        }
    }

    /// Foreground pixels with at least one background 4-neighbour. Pixels
    /// outside the grid count as background.
    pub fn boundary(&self) -> BinaryMask {
        let (h, w) = (self.height, self.width);
        let data = (0..h * w)
            .map(|i| {
                if !self.data[i] {
                    return false;
                }
                let (r, c) = (i / w, i % w);
                r == 0
                    || c == 0
                    || r + 1 == h
                    || c + 1 == w
                    || !self.data[i - w]
                    || !self.data[i + w]
                    || !self.data[i - 1]
                    || !self.data[i + 1]
            })
            .collect();
        BinaryMask {
            height: h,
            width: w,
            data,
        }
    }

    pub fn foreground_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / w, i % w))
    }
}

/// Pixel is 1 iff `f >= t`.
pub fn threshold(f: &ScalarField, t: f64) -> BinaryMask {
    BinaryMask {
        height: f.height,
        width: f.width,
        data: f.data.iter().map(|&v| v >= t).collect(),
    }
}

/// Min-max rescale to [0, 1]. A constant field maps to zeros.
pub fn normalize(f: &ScalarField) -> ScalarField {
    let (lo, hi) = (f.min(), f.max());
    let range = hi - lo;
    if range <= 0.0 {
        return ScalarField::from_raw(f.height, f.width, vec![0.0; f.len()]);
    }
    f.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
}

/// Bilinear resampling with corner-aligned sample positions.
pub fn resize_bilinear(f: &ScalarField, height: usize, width: usize) -> Result<ScalarField> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidParameter(format!(
            "resize target {height}x{width} must be at least 2x2"
        )));
    }
    let scale = |n_out: usize, n_in: usize| (n_in as f64 - 1.0) / (n_out as f64 - 1.0);
    let (sy, sx) = (scale(height, f.height), scale(width, f.width));
    let mut data = Vec::with_capacity(height * width);
    for r in 0..height {
        let y = r as f64 * sy;
        let y0 = (y.floor() as usize).min(f.height - 1);
        let y1 = (y0 + 1).min(f.height - 1);
        let ty = y - y0 as f64;
        for c in 0..width {
            let x = c as f64 * sx;
            let x0 = (x.floor() as usize).min(f.width - 1);
            let x1 = (x0 + 1).min(f.width - 1);
            let tx = x - x0 as f64;
            let top = f.get(y0, x0) * (1.0 - tx) + f.get(y0, x1) * tx;
            let bottom = f.get(y1, x0) * (1.0 - tx) + f.get(y1, x1) * tx;
            data.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Ok(ScalarField::from_raw(height, width, data))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur, kernel truncated at 3σ, replicate borders.
/// `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(f: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("blur sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let (h, w) = f.shape();
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * f.get_clamped(r as isize, c as isize + i as isize - radius))
                .sum();
        }
    }
    let tmp = ScalarField::from_raw(h, w, tmp);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp.get_clamped(r as isize + i as isize - radius, c as isize))
                .sum();
        }
    }
    Ok(ScalarField::from_raw(h, w, out))
}
