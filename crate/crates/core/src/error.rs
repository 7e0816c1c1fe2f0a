use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid shape {height}x{width}")]
    InvalidShape { height: usize, width: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask has a single label; no contour to work with")]
    DegenerateMask,

    #[error("no pixel lies inside the narrow band")]
    EmptyBand,

    #[error("window at ({row}, {col}) is one-sided")]
    DegenerateWindow { row: usize, col: usize },

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),

    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unsupported field file version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown field kind {0}")]
    UnknownKind(u8),

    #[error("expected a kind {expected} field, found kind {found}")]
    KindMismatch { expected: u8, found: u8 },

    #[error("value {value} at index {index} violates the constraints of kind {kind}")]
    KindConstraintViolation { kind: u8, index: usize, value: f32 },

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidShape { .. } => "invalid_shape",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DegenerateMask => "degenerate_mask",
            Error::EmptyBand => "empty_band",
            Error::DegenerateWindow { .. } => "degenerate_window",
            Error::EmptyMask => "empty_mask",
            Error::InsufficientSamples(_) => "insufficient_samples",
            Error::BadMagic(_) => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::UnknownKind(_) => "unknown_kind",
            Error::KindMismatch { .. } => "kind_mismatch",
            Error::KindConstraintViolation { .. } => "kind_constraint_violation",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::TrailingBytes(_) => "trailing_bytes",
            Error::Io(_) => "io",
            Error::Image(_) => "image",
        }
    }

    /// Process exit status for the CLI. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateMask => 3,
            Error::EmptyBand | Error::DegenerateWindow { .. } => 4,
            Error::EmptyMask | Error::InsufficientSamples(_) => 5,
            Error::BadMagic(_)
            | Error::UnsupportedVersion(_)
            | Error::UnknownKind(_)
            | Error::KindMismatch { .. }
            | Error::KindConstraintViolation { .. }
            | Error::TruncatedPayload { .. }
            | Error::TrailingBytes(_) => 6,
            Error::Io(_) | Error::Image(_) => 7,
            Error::InvalidShape { .. }
            | Error::ShapeMismatch { .. }
            | Error::NonFinite(_)
            | Error::InvalidParameter(_) => 8,
        }
    }
}
