use thiserror::Error;

use crate::lattice::Site;

/// Errors raised by the laboratory.
///
/// Variants are grouped by how a caller (typically the CLI) should react:
/// precondition failures, computational guards, and numerical flags.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid staircase: {0}")]
    InvalidStaircase(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("site ({}, {}) is outside the region", .0.x1, .0.x2)]
    OutsideRegion(Site),
    #[error("region is not a rectangle")]
    NotRectangle,
    #[error("unbounded level set at height {level}: boundary heights straddle the level")]
    UnboundedLevelSet { level: i32 },
    #[error("malformed contour: {0}")]
    MalformedContour(String),
    #[error("guard exceeded for {what}: {requested:.3e} > {limit:.3e}")]
    Guard {
        what: &'static str,
        requested: f64,
        limit: f64,
    },
    #[error("numerical flag: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error: 2 precondition, 3 guard, 4 numerical flag.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Guard { .. } => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        }
    }

    /// A short machine-readable reason tag.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidRegion(_) => "invalid_region",
            Error::InvalidStaircase(_) => "invalid_staircase",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::OutsideRegion(_) => "outside_region",
            Error::NotRectangle => "not_rectangle",
            Error::UnboundedLevelSet { .. } => "unbounded_level_set",
            Error::MalformedContour(_) => "malformed_contour",
            Error::Guard { .. } => "guard",
            Error::Numerical(_) => "numerical",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
