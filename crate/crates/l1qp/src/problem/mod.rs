//! Problem data model, validation, KKT residuals, and instance /
//! solution file I/O.
//!
//! An instance is
//!
//! ```text
//!     minimize    c'x + (1/2) x'Qx + ||Dx||_1
//!     subject to  Ax = b,   l <= x <= u,
//! ```
//!
//! with Q symmetric positive semidefinite and D diagonal nonnegative
//! (stored as the vector `d`).

mod io;

pub use io::{load_problem, load_solution, save_problem, save_solution, MANIFEST_NAME};

use crate::prox::{project_box, soft_threshold, BoxSet};
use crate::sparse::{norm2, CscMatrix};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ProblemError {
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable instance data; safe to share read-only across solver runs.
#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    m: usize,
    q: CscMatrix,
    a: CscMatrix,
    c: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    bounds: BoxSet,
    name: String,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: CscMatrix,
        a: CscMatrix,
        c: Vec<f64>,
        b: Vec<f64>,
        d: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        name: String,
    ) -> Result<Problem, ProblemError> {
        let n = c.len();
        let m = b.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "Q is {}x{}, expected {n}x{n}",
                q.nrows(),
                q.ncols()
            )));
        }
        if a.nrows() != m || a.ncols() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "A is {}x{}, expected {m}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        if d.len() != n || lower.len() != n || upper.len() != n {
            return Err(ProblemError::DimensionMismatch(
                "c, d, l, u must all have length n".into(),
            ));
        }
        if m > n {
            return Err(ProblemError::Validation(format!(
                "m = {m} exceeds n = {n}"
            )));
        }
        if !q.is_symmetric() {
            return Err(ProblemError::Validation("Q is not symmetric".into()));
        }
        if !q.has_finite_values() || !a.has_finite_values() {
            return Err(ProblemError::Validation(
                "matrix entries must be finite".into(),
            ));
        }
        for (label, v) in [("c", &c), ("b", &b), ("d", &d)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ProblemError::Validation(format!(
                    "{label} contains a non-finite entry"
                )));
            }
        }
        if lower.iter().chain(upper.iter()).any(|x| x.is_nan()) {
            return Err(ProblemError::Validation("bounds contain NaN".into()));
        }
        if d.iter().any(|&x| x < 0.0) {
            return Err(ProblemError::Validation(
                "d must be componentwise nonnegative".into(),
            ));
        }
        for i in 0..n {
            if lower[i] > upper[i] {
                return Err(ProblemError::Validation(format!(
                    "empty box at index {i}: l = {} > u = {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Problem {
            n,
            m,
            q,
            a,
            c,
            b,
            d,
            bounds: BoxSet::new(lower, upper),
            name,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> &CscMatrix {
        &self.q
    }

    pub fn a(&self) -> &CscMatrix {
        &self.a
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// c'x + (1/2) x'Qx + ||Dx||_1
    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        let mut val = 0.0;
        for i in 0..self.n {
            val += self.c[i] * x[i] + 0.5 * x[i] * qx[i] + self.d[i] * x[i].abs();
        }
        val
    }
}

/// The three scaled optimality residuals used for termination:
///
/// ```text
///   ||x - prox_g(x - c - Qx + A'y - z)|| / (1 + ||c||)
///   ||Ax - b|| / (1 + ||b||)
///   ||x - Pi_K(x + z)|| / (1 + ||x|| + ||z||)
/// ```
pub fn kkt_residuals(p: &Problem, x: &[f64], y: &[f64], z: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), p.n);
    assert_eq!(y.len(), p.m);
    assert_eq!(z.len(), p.n);

    let qx = p.q.mul_vec(x);
    let aty = p.a.tr_mul_vec(y);
    let arg: Vec<f64> = (0..p.n)
        .map(|i| x[i] - p.c[i] - qx[i] + aty[i] - z[i])
        .collect();
    let prox = soft_threshold(&arg, 1.0, &p.d);
    let dual_gap: Vec<f64> = (0..p.n).map(|i| x[i] - prox[i]).collect();
    let r_dual = norm2(&dual_gap) / (1.0 + norm2(&p.c));

    let ax = p.a.mul_vec(x);
    let eq_gap: Vec<f64> = (0..p.m).map(|i| ax[i] - p.b[i]).collect();
    let r_primal = norm2(&eq_gap) / (1.0 + norm2(&p.b));

    let xz: Vec<f64> = (0..p.n).map(|i| x[i] + z[i]).collect();
    let proj = project_box(&xz, &p.bounds);
    let comp_gap: Vec<f64> = (0..p.n).map(|i| x[i] - proj[i]).collect();
    let r_comp = norm2(&comp_gap) / (1.0 + norm2(x) + norm2(z));

    (r_dual, r_primal, r_comp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    MaxIterations,
    LinearSolverFailure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxIterations => "max_iterations",
            Status::LinearSolverFailure => "linear_solver_failure",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        match s {
            "optimal" => Some(Status::Optimal),
            "max_iterations" => Some(Status::MaxIterations),
            "linear_solver_failure" => Some(Status::LinearSolverFailure),
            _ => None,
        }
    }
}

/// Per-run counters and residuals, mirroring the usual reporting columns
/// (outer iterations, inner iterations, Krylov iterations with per-call
/// average, factorization count, wall time).
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub pmm_iters: usize,
    pub ssn_iters: usize,
    pub minres_iters_total: usize,
    pub minres_calls: usize,
    pub factorizations: usize,
    pub linesearch_failures: usize,
    pub minres_nonconverged: usize,
    pub wall_time_seconds: f64,
    pub final_residuals: (f64, f64, f64),
    pub warmstart_used: bool,
    pub warmstart_iters: usize,
    pub seed: u64,
}

impl SolveReport {
    /// Average MINRES iterations per call (0 when no call was made).
    pub fn minres_avg(&self) -> f64 {
        if self.minres_calls == 0 {
            0.0
        } else {
            self.minres_iters_total as f64 / self.minres_calls as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub status: Status,
    pub report: SolveReport,
}
