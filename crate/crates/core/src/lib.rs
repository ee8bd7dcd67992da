//! Finite-horizon linear-quadratic problems solved through differential
//! Riccati equations, with covariance-based primal certificates.
//!
//! ```
//! use lqconic_core::analyzers::{solve_lqr, verify_solution, AnalyzerOptions};
//! use lqconic_core::model::{CostData, ProblemSpec, StateSpace, TimeGrid, Variant};
//! use nalgebra::dvector;
//!
//! // ẋ = u, cost ∫ x² + u² dt on [0, 1] from x(0) = 1
//! let spec = ProblemSpec::new(
//!     StateSpace::scalar(0.0, 1.0, 0.0, 0.0),
//!     TimeGrid::new(1.0, 512)?,
//!     Variant::Lqr {
//!         cost: CostData::scalar(1.0, 0.0, 1.0),
//!         x_i: dvector![1.0],
//!     },
//! );
//! let opts = AnalyzerOptions::default();
//! let cert = solve_lqr(&spec, &opts)?;
//! let value = cert.optimal_value.finite().unwrap();
//! assert!((value - 1f64.tanh()).abs() < 1e-8);
//! assert!(cert.duality_gap.unwrap().abs() < 1e-6);
//! assert!(verify_solution(&spec, &cert, &opts)?.passed);
//! # Ok::<(), lqconic_core::Error>(())
//! ```

pub mod analyzers;
pub mod covariance;
pub mod dlmi;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod riccati;
pub mod symmat;

pub use error::{Error, Result};
