//! Numerical toolkit for multiple chordal SLE in the upper half-plane.
//!
//! The crate is organised around a discrete Loewner evolution built from
//! exact vertical-slit maps:
//!
//! * [`special`] — the boundary exponent/central charge pair for a given
//!   kappa, and the Gauss hypergeometric factor entering two-link
//!   partition functions.
//! * [`loewner`] — driving functions, composed slit charts, boundary
//!   flow with swallowing detection, trace extraction and welding.
//! * [`zipper`] — conformal uniformization of polygonal Jordan domains
//!   (pockets cut off by a curve) onto the half-plane.
//! * [`sampling`] — seeded chordal and two-point driving samplers.
//! * [`domain`] — link patterns, domain splitting along a sampled curve,
//!   and component charts.
//! * [`partition`] — closed-form and Monte-Carlo partition-function
//!   estimators, martingale/PDE/merging diagnostics.
//! * [`ensemble`] — weighted cascade ensembles, importance resampling,
//!   and the Gibbs (single-curve resampling) chain.
//! * [`verify`] — self-contained verification suites shared by the CLI
//!   and the integration tests.

pub mod config;
pub mod domain;
pub mod ensemble;
pub mod error;
pub mod jsonfmt;
pub mod loewner;
pub mod maps;
pub mod partition;
pub mod sampling;
pub mod special;
pub mod verify;
pub mod zipper;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
