use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::follower::CaseRejection;

/// A constructor or precondition rejected its input.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    /// A field that must be strictly positive (and finite) was not.
    NotPositive { field: &'static str, value: f64 },
    /// `beta` must be at least 1.
    BetaBelowOne(f64),
    /// `c_h > R·N/H`: the hash-server price interval is empty.
    HashCostAboveCap { cost: f64, cap: f64 },
    /// `c_t > α·β`: the task-server price interval is empty.
    TaskCostAboveCap { cost: f64, cap: f64 },
    /// A price lies outside `[lo, hi]`.
    PriceOutOfBounds {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// A resource amount was negative or not finite.
    NegativeAmount { field: &'static str, value: f64 },
    /// The step attenuation coefficient must lie in `(0, 1)`.
    DecayOutOfRange(f64),
    /// An iteration cap of zero.
    ZeroIterations,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotPositive { field, value } => {
                write!(f, "{field} must be finite and > 0, got {value}")
            }
            Self::BetaBelowOne(b) => write!(f, "beta must be >= 1, got {b}"),
            Self::HashCostAboveCap { cost, cap } => {
                write!(
                    f,
                    "c_h = {cost} exceeds R*N/H = {cap}; hash price interval is empty"
                )
            }
            Self::TaskCostAboveCap { cost, cap } => {
                write!(
                    f,
                    "c_t = {cost} exceeds alpha*beta = {cap}; task price interval is empty"
                )
            }
            Self::PriceOutOfBounds {
                field,
                value,
                lo,
                hi,
            } => {
                write!(f, "{field} = {value} outside [{lo}, {hi}]")
            }
            Self::NegativeAmount { field, value } => {
                write!(f, "{field} must be finite and >= 0, got {value}")
            }
            Self::DecayOutOfRange(d) => write!(f, "decay must lie in (0, 1), got {d}"),
            Self::ZeroIterations => f.write_str("max_iters must be > 0"),
        }
    }
}

/// Failures of the follower and leader solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// Neither the case ladder nor the bisection fallback produced a
    /// certified optimum. Carries the per-case rejection reasons.
    NoCaseAccepted {
        device: String,
        rejections: Vec<CaseRejection>,
    },
    /// The iteration cap was hit before the prices settled.
    NotConverged { iterations: usize, delta: f64 },
    /// The leader stage needs at least one device.
    NoDevices,
    /// An input failed validation.
    Param(ParamError),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoCaseAccepted { device, rejections } => {
                write!(f, "no KKT case accepted for device {device}")?;
                for r in rejections {
                    write!(f, "; {r}")?;
                }
                Ok(())
            }
            Self::NotConverged { iterations, delta } => write!(
                f,
                "price iteration did not converge within {iterations} iterations (step {delta:e})"
            ),
            Self::NoDevices => f.write_str("at least one device is required"),
            Self::Param(e) => write!(f, "invalid input: {e}"),
        }
    }
}

impl From<ParamError> for SolveError {
    fn from(e: ParamError) -> Self {
        Self::Param(e)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ParamError {}

#[cfg(feature = "std")]
impl std::error::Error for SolveError {}
