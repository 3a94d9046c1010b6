//! Causal-diagram analysis and an estimator laboratory for difference-in-differences.
//!
//! The crate covers diagram validation and adjustment-set queries ([`graph`]),
//! the projection to the outcome-change representation ([`transform`]),
//! covariance algebra for linear models ([`scm`], [`poly`]), panel simulation
//! ([`datagen`]), fitting kernels ([`regression`]), the estimators themselves
//! ([`estimators`]), covariate alignment ([`align`]) and the Monte Carlo
//! benchmark ([`bench`]).

pub mod align;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod poly;
pub mod regression;
pub mod scm;
pub mod transform;

pub use error::{Error, Result};

/// Version of the JSON schemas read and written by the crate.
pub const SCHEMA_VERSION: &str = "1";
