//! On-disk formats: the binary field file, 8-bit grayscale PNG, contour
//! overlays and the corpus manifest.
//!
//! Field file layout (all integers little-endian):
//!
//! | offset | size | content                                        |
//! |--------|------|------------------------------------------------|
//! | 0      | 4    | magic `DALS`                                   |
//! | 4      | 4    | version, `u32` = 1                             |
//! | 8      | 1    | kind: 0 scalar, 1 probability, 2 SDM, 3 mask   |
//! | 9      | 4    | height, `u32`                                  |
//! | 13     | 4    | width, `u32`                                   |
//! | 17     | 4·h·w | row-major `f32` payload                       |
//!
//! Readers reject anything that deviates; nothing is repaired.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BinaryMask, ScalarField};
use crate::levelset::SignedDistanceMap;
use crate::transformer::ProbabilityMap;

pub const MAGIC: [u8; 4] = *b"DALS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 17;
/// Pixels with `|φ|` below this are painted by [`export_overlay`].
pub const OVERLAY_BAND: f64 = 0.7;
pub const OVERLAY_COLOR: [u8; 3] = [255, 48, 48];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FieldKind {
    Scalar = 0,
    Probability = 1,
    Sdm = 2,
    Mask = 3,
}

impl TryFrom<u8> for FieldKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(FieldKind::Scalar),
            1 => Ok(FieldKind::Probability),
            2 => Ok(FieldKind::Sdm),
            3 => Ok(FieldKind::Mask),
            other => Err(Error::UnknownKind(other)),
        }
    }
}

impl FieldKind {
    fn admits(self, v: f32) -> bool {
        match self {
            FieldKind::Scalar | FieldKind::Sdm => v.is_finite(),
            FieldKind::Probability => (0.0..=1.0).contains(&v),
            FieldKind::Mask => v == 0.0 || v == 1.0,
        }
    }
}

/// A decoded field file. Values are kept as stored so that a read followed
/// by a write reproduces the file byte for byte.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    kind: FieldKind,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FieldFile {
    pub fn new(kind: FieldKind, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || height > u32::MAX as usize || width > u32::MAX as usize {
            return Err(Error::InvalidShape { height, width });
        }
        if data.len() != height * width {
            return Err(Error::TruncatedPayload {
                expected: 4 * height * width,
                found: 4 * data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| !kind.admits(v)) {
            return Err(Error::KindConstraintViolation {
                kind: kind as u8,
                index,
                value,
            });
        }
        Ok(Self {
            kind,
            height,
            width,
            data,
        })
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn from_scalar(kind: FieldKind, f: &ScalarField) -> Result<Self> {
        Self::new(
            kind,
            f.height(),
            f.width(),
            f.data().iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn scalar(f: &ScalarField) -> Result<Self> {
        Self::from_scalar(FieldKind::Scalar, f)
    }

    pub fn probability(p: &ProbabilityMap) -> Result<Self> {
        Self::from_scalar(FieldKind::Probability, p)
    }

    pub fn sdm(phi: &ScalarField) -> Result<Self> {
        Self::from_scalar(FieldKind::Sdm, phi)
    }

    pub fn mask(m: &BinaryMask) -> Result<Self> {
        Self::from_scalar(FieldKind::Mask, &m.to_field())
    }

    /// Values widened to `f64`; any kind is accepted.
    pub fn to_scalar(&self) -> ScalarField {
        ScalarField::new(self.height, self.width, self.data.iter().map(|&v| v as f64).collect())
            .expect("validated on construction")
    }

    fn expect_kind(&self, kind: FieldKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind as u8,
                found: self.kind as u8,
            });
        }
        Ok(())
    }

    pub fn to_probability(&self) -> Result<ProbabilityMap> {
        self.expect_kind(FieldKind::Probability)?;
        Ok(ProbabilityMap::new(self.to_scalar()))
    }

    pub fn to_sdm(&self) -> Result<SignedDistanceMap> {
        self.expect_kind(FieldKind::Sdm)?;
        SignedDistanceMap::from_field(self.to_scalar())
    }

    pub fn to_mask(&self) -> Result<BinaryMask> {
        self.expect_kind(FieldKind::Mask)?;
        BinaryMask::new(self.height, self.width, self.data.iter().map(|&v| v == 1.0).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        if bytes.len() < 4 {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            return Err(Error::BadMagic(m));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let kind = FieldKind::try_from(bytes[8])?;
        let (height, width) = (u32_at(9) as usize, u32_at(13) as usize);
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape { height, width });
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(4))
            .ok_or(Error::InvalidShape { height, width })?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::TrailingBytes(payload.len() - expected));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Self::new(kind, height, width, data)
    }
}

pub fn write_field(path: impl AsRef<Path>, field: &FieldFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&field.encode())?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<FieldFile> {
    FieldFile::decode(&fs::read(path)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Grayscale import; values are `level / 255`. Colour images are converted
/// to luma first.
pub fn import_png8(path: impl AsRef<Path>) -> Result<ScalarField> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    ScalarField::new(
        h as usize,
        w as usize,
        img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
    )
}

/// Values are clamped to [0, 1] and rounded to the nearest of 256 levels,
/// so a round trip is accurate to 1/510.
pub fn export_png8(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let img = GrayImage::from_fn(f.width() as u32, f.height() as u32, |x, y| {
        Luma([to_u8(f.get(y as usize, x as usize))])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// RGB rendering of `image` with every pixel where `|φ| < 0.7` painted in
/// [`OVERLAY_COLOR`].
pub fn overlay(image: &ScalarField, phi: &ScalarField) -> Result<RgbImage> {
    image.ensure_same_shape(phi.shape())?;
    Ok(RgbImage::from_fn(
        image.width() as u32,
        image.height() as u32,
        |x, y| {
            let (r, c) = (y as usize, x as usize);
            if phi.get(r, c).abs() < OVERLAY_BAND {
                Rgb(OVERLAY_COLOR)
            } else {
                let g = to_u8(image.get(r, c));
                Rgb([g, g, g])
            }
        },
    ))
}

pub fn export_overlay(path: impl AsRef<Path>, image: &ScalarField, phi: &ScalarField) -> Result<()> {
    overlay(image, phi)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// One corpus sample. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub seed: u64,
    pub preset: String,
    pub image: PathBuf,
    pub gt: PathBuf,
    pub prob: PathBuf,
}

/// CSV with header `id,seed,preset,image,gt,prob`.
pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let reader = BufReader::new(File::open(path)?);
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::InvalidParameter(format!("manifest: {e}"))
    }
}
