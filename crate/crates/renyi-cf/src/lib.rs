//! Rényi-type continued fractions for an integer parameter `N >= 2`.
//!
//! The crate implements the interval map `R_N(x) = N/(1-x) - floor(N/(1-x))`
//! together with the machinery needed to study its statistics at desk scale:
//!
//! - [`cf`]: digit expansions, exact convergents, and cylinder intervals;
//! - [`measures`]: the invariant measure, its two-dimensional extension, and
//!   the one-parameter family of conditional measures;
//! - [`extension`]: the invertible two-dimensional natural extension and the
//!   associated Markov chain of "past" states;
//! - [`transfer`]: the Perron-Frobenius operator on piecewise-linear
//!   bounded-variation functions, with certified truncation accounting;
//! - [`gauss_kuzmin`]: the two-dimensional distribution error term, its
//!   enumeration/Monte-Carlo estimators, and the closed-form sandwich bounds
//!   on the convergence rate;
//! - [`cli`] and [`report`]: a reproducible command-line front end emitting
//!   CSV/JSON artifacts.

pub mod cf;
pub mod cli;
pub mod error;
pub mod extension;
pub mod gauss_kuzmin;
pub mod measures;
pub mod report;
pub mod transfer;

pub use cf::{CfParams, ConvergentPair, CylinderInterval, DigitSequence, Expansion};
pub use error::CfError;
pub use extension::{ExtendedPoint, MarkovState};
pub use gauss_kuzmin::{ErrorReport, JointCdf};
pub use measures::{ConditionalParam, MeasureParams};
pub use transfer::GridFunction;
