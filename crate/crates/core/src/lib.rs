//! Diagonally implicit Runge-Kutta (DIRK) methods with high weak stage order.
//!
//! Weak stage order (WSO) is an algebraic property of a Runge-Kutta scheme that
//! alleviates order reduction on stiff linear problems while remaining compatible
//! with the lower-triangular DIRK structure. This crate provides:
//!
//! * [`tableau`] — Butcher tableau data model, validation, a catalog of built-in
//!   schemes (including three high-WSO DIRK schemes of orders 4 and 5), the
//!   confluent-stage reduction, and a plain-text file format.
//! * [`conditions`] — classical order conditions through order 6, the
//!   `phi_{l,k}` residual family, simplifying assumptions B/C/S/T, stage order,
//!   and the error-constant objective `F(A,b)`.
//! * [`wso`] — stage order residuals, the Krylov space they generate, weak stage
//!   order detection, minimal-polynomial structure checks, and the resolvent
//!   transfer function.
//! * [`stability`] — stability function evaluation, A-/L-stability scans, and
//!   stability-region boundary tracing.
//! * [`integrator`] — fixed-step DIRK time stepping with Newton stage solves and
//!   a factorization-caching fast path for affine problems.
//! * [`problems`] — a portfolio of stiff ODE/PDE test problems (method-of-lines
//!   finite differences in 1D, Chebyshev spectral in 2D) with manufactured
//!   solutions.
//! * [`convergence`] — time-step sweeps, error tables, and least-squares slope
//!   fits.
//! * [`search`] — construction of new feasible DIRK schemes with prescribed
//!   (stages, order, WSO) and local optimization of their error constant.

pub mod conditions;
pub mod convergence;
pub mod integrator;
pub mod linalg;
pub mod problems;
pub mod report;
pub mod scalar;
pub mod search;
pub mod stability;
pub mod tableau;
pub mod wso;

pub use report::{verify_scheme, SchemeReport};
pub use scalar::Scalar;
pub use tableau::Tableau;
