use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CfError {
    /// A constructor argument violated a documented range (for example `N < 2`).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A digit would exceed the configured cap, i.e. the point is too close to
    /// the `x = 1` singularity for the digit to be meaningful in floats.
    #[error("digit overflow: floor(N/(1-x)) exceeds the cap {cap} (x = {x})")]
    DigitOverflow { x: f64, cap: u64 },

    /// A certified truncation error exceeds the tolerance requested by the caller.
    #[error(
        "truncation too coarse: certified error {certified:e} exceeds tolerance {tolerance:e}"
    )]
    TruncationTooCoarse { certified: f64, tolerance: f64 },

    /// An exact enumeration would visit more words than the configured budget.
    #[error("complexity guard: {words} words exceed the budget of {budget}")]
    ComplexityGuard { words: u128, budget: u128 },

    /// Not enough data points for a requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, CfError>;
