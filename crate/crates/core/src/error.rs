use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Grid construction parameters out of range.
    InvalidGrid(String),
    /// Frame wider than half the grid.
    FrameTooWide { frame_width: usize, nx: usize, ny: usize },
    /// Time step above the stability bound of the explicit scheme.
    CflViolation { dt: f64, limit: f64 },
    /// A solve produced NaN or infinity.
    NonFinite { step: usize },
    /// Inputs live on different grids.
    GridMismatch(&'static str),
    EmptySideSet,
    /// Two traces, or a trace and a grid, disagree in sides or time levels.
    TraceMismatch(&'static str),
    ZeroDenominator(&'static str),
    /// A finite-difference probe left the admissible set.
    InadmissibleProbe { node: usize, value: f64, lo: f64, hi: f64 },
    /// The fine grid is not the factor-2 refinement of the coarse one.
    NotNested,
    InvalidParameter(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::FrameTooWide { frame_width, nx, ny } => write!(
                f,
                "frame width {frame_width} leaves no interior on a {nx}x{ny} grid"
            ),
            Error::CflViolation { dt, limit } => {
                write!(f, "time step {dt:e} exceeds the CFL limit {limit:e}")
            }
            Error::NonFinite { step } => write!(f, "non-finite value at time step {step}"),
            Error::GridMismatch(what) => write!(f, "grid mismatch: {what}"),
            Error::EmptySideSet => write!(f, "empty observation side set"),
            Error::TraceMismatch(what) => write!(f, "trace mismatch: {what}"),
            Error::ZeroDenominator(what) => write!(f, "zero denominator in {what}"),
            Error::InadmissibleProbe { node, value, lo, hi } => write!(
                f,
                "probe value {value} at node {node} outside [{lo}, {hi}]; use a smaller h_fd"
            ),
            Error::NotNested => write!(f, "grids are not nested by factor-2 refinement"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
