//! Warm start by a proximal ADMM on the split reformulation
//!
//! ```text
//!     minimize   c'x + (1/2) x'Qx + ||Dw||_1 + indicator_K(w)
//!     subject to Ax = b,  w - x = 0.
//! ```
//!
//! The w-step is a soft-threshold followed by a box projection. The
//! x-step is merged with both dual updates into one linear system
//!
//! ```text
//!   [ -gamma (Q + R_x)   A'              -I_n            ] [x ]
//!   [  A                 1/(gamma s) I    0              ] [y1] = rhs,
//!   [ -I_n               0                1/(gamma s) I  ] [y2]
//! ```
//!
//! whose coefficient matrix is symmetric quasi-definite and constant
//! across iterations, so a single LDL^T factorization serves the whole
//! run. The proximal weight R_x = sigma_hat I - Off(Q) makes the (1,1)
//! block diagonal, which keeps that factorization cheap.

use crate::problem::Problem;
use crate::prox::{project_box, project_subdiff_g, soft_threshold};
use crate::sparse::{factorize_quasidef, norm2, op_norm_est, CscMatrix, Factorization, SparseError};

pub const DEFAULT_SIGMA: f64 = 1.0;
/// Just under the admissible limit (1 + sqrt(5)) / 2.
pub const DEFAULT_GAMMA: f64 = 1.618;

/// Penalty used by the warm start: sigma = max(1, sigma_max(A)). The two
/// augmented terms sigma||Ax - b||^2 and sigma||w - x||^2 share one
/// penalty, and on stiff constraint matrices (the PDE instances have
/// ||A|| ~ 8) the equality block needs the boost or the method cannot
/// reach 3-digit accuracy within its iteration budget.
pub fn choose_sigma(p: &Problem) -> f64 {
    op_norm_est(p.a(), 25).max(1.0)
}

/// Smallest sigma_hat with sigma_hat I - Off(Q) positive definite by
/// diagonal dominance: the largest off-diagonal absolute row sum, plus
/// a margin.
pub fn choose_sigma_hat(q: &CscMatrix) -> f64 {
    let mut row_sums = vec![0.0; q.nrows()];
    for (r, c, v) in q.iter() {
        if r != c {
            row_sums[r] += v.abs();
        }
    }
    row_sums.iter().cloned().fold(0.0, f64::max) + 1e-8
}

/// pADMM iterate plus the factorization held for all iterations.
pub struct AdmmState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub sigma: f64,
    pub gamma: f64,
    pub sigma_hat: f64,
    pub kkt_factor: Factorization,
}

impl AdmmState {
    pub fn new(p: &Problem, sigma: f64, gamma: f64) -> Result<AdmmState, SparseError> {
        assert!(sigma > 0.0);
        assert!(gamma > 0.0 && gamma < (1.0 + 5.0f64.sqrt()) / 2.0);
        let (n, m) = (p.n(), p.m());
        let sigma_hat = choose_sigma_hat(p.q());
        let qdiag = p.q().diagonal();
        let gs_inv = 1.0 / (gamma * sigma);

        let mut triplets = Vec::with_capacity(2 * p.a().nnz() + 4 * n + m);
        for i in 0..n {
            // Q + R_x = Diag(Q) + sigma_hat I
            triplets.push((i, i, -gamma * (qdiag[i] + sigma_hat)));
            triplets.push((i, n + m + i, -1.0));
            triplets.push((n + m + i, i, -1.0));
            triplets.push((n + m + i, n + m + i, gs_inv));
        }
        for (r, c, v) in p.a().iter() {
            triplets.push((n + r, c, v));
            triplets.push((c, n + r, v));
        }
        for r in 0..m {
            triplets.push((n + r, n + r, gs_inv));
        }
        let kkt = CscMatrix::from_triplets(n + m + n, n + m + n, &triplets);
        let kkt_factor = factorize_quasidef(&kkt)?;

        Ok(AdmmState {
            x: vec![0.0; n],
            w: vec![0.0; n],
            y1: vec![0.0; m],
            y2: vec![0.0; n],
            sigma,
            gamma,
            sigma_hat,
            kkt_factor,
        })
    }
}

/// w-step: Pi_K(prox_{g / sigma}(x + y2 / sigma)).
pub fn admm_w_update(x: &[f64], y2: &[f64], sigma: f64, p: &Problem) -> Vec<f64> {
    let arg: Vec<f64> = x.iter().zip(y2).map(|(xi, y)| xi + y / sigma).collect();
    let shrunk = soft_threshold(&arg, 1.0 / sigma, p.d());
    project_box(&shrunk, p.bounds())
}

/// Merged x-step and dual updates: one solve of the quasi-definite
/// system. The returned (y1, y2) satisfy the explicit dual-update
/// identities y1 = y1_k - gamma sigma (Ax - b) and
/// y2 = y2_k - gamma sigma (w - x) up to the solve accuracy.
pub fn admm_xy_update(
    st: &AdmmState,
    w_next: &[f64],
    p: &Problem,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, m) = (p.n(), p.m());
    let (gamma, sigma) = (st.gamma, st.sigma);
    let qdiag = p.q().diagonal();
    let qx = p.q().mul_vec(&st.x);
    let aty1 = p.a().tr_mul_vec(&st.y1);
    let gs_inv = 1.0 / (gamma * sigma);

    let mut rhs = vec![0.0; 2 * n + m];
    for i in 0..n {
        // R_x x_k = sigma_hat x_k - Off(Q) x_k
        let rx = st.sigma_hat * st.x[i] - (qx[i] - qdiag[i] * st.x[i]);
        rhs[i] = gamma * (p.c()[i] - rx) + (1.0 - gamma) * (aty1[i] - st.y2[i]);
        rhs[n + m + i] = gs_inv * st.y2[i] - w_next[i];
    }
    for r in 0..m {
        rhs[n + r] = p.b()[r] + gs_inv * st.y1[r];
    }
    st.kkt_factor.solve_in_place(&mut rhs);
    let x = rhs[..n].to_vec();
    let y1 = rhs[n..n + m].to_vec();
    let y2 = rhs[n + m..].to_vec();

    #[cfg(debug_assertions)]
    {
        let ax = p.a().mul_vec(&x);
        for r in 0..m {
            let want = st.y1[r] - gamma * sigma * (ax[r] - p.b()[r]);
            debug_assert!(
                (y1[r] - want).abs() <= 1e-6 * (1.0 + want.abs()),
                "merged solve violates the y1 update identity"
            );
        }
        for i in 0..n {
            let want = st.y2[i] - gamma * sigma * (w_next[i] - x[i]);
            debug_assert!(
                (y2[i] - want).abs() <= 1e-6 * (1.0 + want.abs()),
                "merged solve violates the y2 update identity"
            );
        }
    }

    (x, y1, y2)
}

/// Scaled optimality residuals of the split formulation.
pub fn padmm_residuals(
    p: &Problem,
    x: &[f64],
    w: &[f64],
    y1: &[f64],
    y2: &[f64],
) -> (f64, f64, f64) {
    let qx = p.q().mul_vec(x);
    let aty1 = p.a().tr_mul_vec(y1);
    let dual: Vec<f64> = (0..p.n())
        .map(|i| p.c()[i] + qx[i] - aty1[i] + y2[i])
        .collect();
    let r1 = norm2(&dual) / (1.0 + norm2(p.c()));

    let ax = p.a().mul_vec(x);
    let mut acc = 0.0;
    for r in 0..p.m() {
        let t = ax[r] - p.b()[r];
        acc += t * t;
    }
    for i in 0..p.n() {
        let t = w[i] - x[i];
        acc += t * t;
    }
    let r2 = acc.sqrt() / (1.0 + norm2(p.b()));

    let arg: Vec<f64> = w.iter().zip(y2).map(|(a, b)| a + b).collect();
    let prox = project_box(&soft_threshold(&arg, 1.0, p.d()), p.bounds());
    let gap: Vec<f64> = (0..p.n()).map(|i| w[i] - prox[i]).collect();
    let r3 = norm2(&gap) / (1.0 + norm2(w) + norm2(y2));

    (r1, r2, r3)
}

#[derive(Debug, Clone)]
pub struct WarmstartResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub y2: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub factorizations: usize,
    pub residuals: (f64, f64, f64),
}

/// Runs pADMM from the origin until the three residuals drop below
/// `tol_ws` or `max_iters` passes, then recovers the multiplier
/// z = y2 - Pi_{subdiff g(w)}(y2) for the outer method's starting triple.
pub fn warmstart_run(
    p: &Problem,
    tol_ws: f64,
    max_iters: usize,
) -> Result<WarmstartResult, SparseError> {
    let sigma = std::env::var("L1QP_WS_SIGMA")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| choose_sigma(p));
    let mut st = AdmmState::new(p, sigma, DEFAULT_GAMMA)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut residuals = padmm_residuals(p, &st.x, &st.w, &st.y1, &st.y2);
    loop {
        if residuals.0 <= tol_ws && residuals.1 <= tol_ws && residuals.2 <= tol_ws {
            converged = true;
            break;
        }
        if iterations >= max_iters {
            break;
        }
        let w_next = admm_w_update(&st.x, &st.y2, st.sigma, p);
        let (x, y1, y2) = admm_xy_update(&st, &w_next, p);
        st.w = w_next;
        st.x = x;
        st.y1 = y1;
        st.y2 = y2;
        iterations += 1;
        residuals = padmm_residuals(p, &st.x, &st.w, &st.y1, &st.y2);
    }

    if std::env::var_os("L1QP_TRACE").is_some() {
        eprintln!(
            "warmstart: sigma={sigma:.2e} iters={iterations} converged={converged} res=({:.1e},{:.1e},{:.1e})",
            residuals.0, residuals.1, residuals.2
        );
    }
    let proj = project_subdiff_g(&st.y2, &st.w, p.d());
    let z: Vec<f64> = st.y2.iter().zip(&proj).map(|(a, b)| a - b).collect();
    Ok(WarmstartResult {
        x: st.x,
        y: st.y1,
        z,
        w: st.w,
        y2: st.y2,
        iterations,
        converged,
        factorizations: 1,
        residuals,
    })
}
