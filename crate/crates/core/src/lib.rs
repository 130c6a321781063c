//! Numerical laboratory for the quaternionic Monge-Ampère equation.
//!
//! The crate is split along the lines of the computation:
//!
//! - [`hypalg`]: pointwise hyperhermitian linear algebra (quaternionic
//!   triples, metric/form conversions, Pfaffians, trace inequalities).
//! - [`jets`]: order-4 Taylor jets, Kähler potential charts and geodesic
//!   normal charts.
//! - [`curvature`]: Christoffel symbols, curvature and the curvature
//!   identities of hyperkähler metrics.
//! - [`fields`]: spectral grid calculus on the flat hyperkähler torus.
//! - [`solver`]: damped Newton–Krylov continuity solver for
//!   `(Ω + ∂∂_J φ)^n = e^{F+b} Ω^n`.
//! - [`monitor`]: instrumentation of the second-order estimate.
//! - [`suites`]: named verification suites shared by the CLI and the
//!   acceptance tests.

pub mod curvature;
pub mod error;
pub mod fields;
pub mod hypalg;
pub mod jets;
pub mod monitor;
pub mod par;
pub mod solver;
pub mod suites;
pub mod thresholds;

pub use error::{QmaError, Result};
pub use num_complex::Complex64 as C64;
