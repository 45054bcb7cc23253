use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Coarse classification used by callers to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters supplied by the caller.
    Config,
    /// Input data violates a precondition.
    Data,
    /// The numerical procedure cannot produce a result.
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DegenerateGeometry(&'static str),
    SelfIntersecting { edge_a: usize, edge_b: usize },
    NonConvex,
    ProjectionDistortion { offset_deg: f64 },
    InvalidParameter { name: &'static str, reason: &'static str },
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    OutOfExtent,
    InvalidArea(f64),
    InvalidEnergy(f64),
    NonFinite { what: &'static str },
    ZeroVariance { column: String },
    RankDeficient { columns: Vec<String> },
    OverPruned { remaining: Vec<String> },
    EmptyOverlap,
    DimensionMismatch { expected: usize, found: usize },
    ColumnMismatch { expected: Vec<String>, found: Vec<String> },
    ComponentCollapse { component: usize },
    MissingFeature(String),
    InsufficientData { needed: usize, found: usize },
    UnknownName(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. } | Error::UnknownName(_) => ErrorClass::Config,
            Error::ZeroVariance { .. }
            | Error::RankDeficient { .. }
            | Error::OverPruned { .. }
            | Error::ComponentCollapse { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateGeometry(what) => write!(f, "degenerate geometry: {what}"),
            Error::SelfIntersecting { edge_a, edge_b } => {
                write!(f, "polygon is self-intersecting (edges {edge_a} and {edge_b})")
            }
            Error::NonConvex => f.write_str("polygon is not convex"),
            Error::ProjectionDistortion { offset_deg } => {
                write!(f, "polygon extends {offset_deg:.4} degrees from the projection origin (limit 1)")
            }
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "grid alignment error: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::OutOfExtent => f.write_str("region lies entirely outside the grid extent"),
            Error::InvalidArea(a) => write!(f, "invalid area {a}: must be positive"),
            Error::InvalidEnergy(e) => write!(f, "invalid energy {e}: must be non-negative"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::ZeroVariance { column } => write!(f, "column `{column}` has zero variance"),
            Error::RankDeficient { columns } => {
                write!(f, "design matrix is rank deficient; dependent columns: ")?;
                write_list(f, columns)
            }
            Error::OverPruned { remaining } => {
                write!(f, "VIF pruning would leave fewer than 2 columns (remaining: ")?;
                write_list(f, remaining)?;
                f.write_str(")")
            }
            Error::EmptyOverlap => f.write_str("series share no comparable months"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::ColumnMismatch { expected, found } => {
                write!(f, "column mismatch: expected [")?;
                write_list(f, expected)?;
                write!(f, "], found [")?;
                write_list(f, found)?;
                f.write_str("]")
            }
            Error::ComponentCollapse { component } => {
                write!(f, "mixture component {component} collapsed")
            }
            Error::MissingFeature(name) => write!(f, "missing feature `{name}`"),
            Error::InsufficientData { needed, found } => {
                write!(f, "insufficient data: need more than {needed} rows, found {found}")
            }
            Error::UnknownName(name) => write!(f, "unknown name `{name}`"),
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[String]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        f.write_str(item)?;
    }
    Ok(())
}

impl core::error::Error for Error {}
