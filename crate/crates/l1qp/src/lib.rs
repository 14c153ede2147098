//! Sparse solver for l1-regularized convex quadratic programs
//!
//! ```text
//!     minimize    c'x + (1/2) x'Qx + ||Dx||_1
//!     subject to  Ax = b,   l <= x <= u,
//! ```
//!
//! with Q >= 0 sparse symmetric and D >= 0 diagonal. Three layers do the
//! work: an outer proximal method of multipliers, an inner semismooth
//! Newton method on each sub-problem, and preconditioned MINRES on the
//! reduced Newton saddle-point systems. A proximal ADMM pass supplies a
//! warm start, and built-in generators produce finite-difference
//! PDE-control test instances (Poisson and convection-diffusion).

pub mod generators;
pub mod pmm;
pub mod precond;
pub mod problem;
pub mod prox;
pub mod sparse;
pub mod ssn;
pub mod warmstart;

pub use pmm::{solve, SolverConfig};
pub use problem::{
    kkt_residuals, load_problem, load_solution, save_problem, save_solution, Problem,
    ProblemError, Solution, SolveReport, Status,
};
