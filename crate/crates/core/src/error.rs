use thiserror::Error;

/// Failures raised by the numerical routines.
///
/// Variant names are stable: the command-line front end reports them verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("points {i} and {j} are coincident or antipodal (|cos d| = {cos_abs:.17e})")]
    AntipodalOrCoincident { i: usize, j: usize, cos_abs: f64 },

    #[error(
        "configuration lies in the singular set: bodies {i} and {j} (|cos d| = {cos_abs:.17e})"
    )]
    SingularConfiguration { i: usize, j: usize, cos_abs: f64 },

    #[error("regular polygon requires odd n >= 3, got n = {n}")]
    EvenN { n: usize },

    #[error("body {index} is within the pole margin (theta = {theta})")]
    PoleSingularity { index: usize, theta: f64 },

    #[error("latitude theta = {theta} is within the pole margin")]
    PoleLatitude { theta: f64 },

    #[error(
        "numerical kernel dimension is not one (singular value gap {gap:e} below {required:e})"
    )]
    KernelDimensionError { gap: f64, required: f64 },

    #[error("solved masses are not all positive: {masses:?}")]
    NonPositiveMasses { masses: Vec<f64> },

    #[error("configuration is not an equilibrium (residual {residual:e} above {tolerance:e})")]
    NotAnEquilibrium { residual: f64, tolerance: f64 },

    #[error(
        "integration approached the singular set at t = {time} (min separation {min_separation:e})"
    )]
    SingularityApproach { time: f64, min_separation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// The variant name, used as a machine-readable error code.
    pub fn name(&self) -> &'static str {
        match self {
            Error::AntipodalOrCoincident { .. } => "AntipodalOrCoincident",
            Error::SingularConfiguration { .. } => "SingularConfiguration",
            Error::EvenN { .. } => "EvenN",
            Error::PoleSingularity { .. } => "PoleSingularity",
            Error::PoleLatitude { .. } => "PoleLatitude",
            Error::KernelDimensionError { .. } => "KernelDimensionError",
            Error::NonPositiveMasses { .. } => "NonPositiveMasses",
            Error::NotAnEquilibrium { .. } => "NotAnEquilibrium",
            Error::SingularityApproach { .. } => "SingularityApproach",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
