//! Inner solver: a semismooth Newton method on the natural map of the
//! outer sub-problem.
//!
//! The sub-problem optimality system is recast as the root-finding
//! problem F(x, y) = 0 with
//!
//! ```text
//!   F(x, y) = [ x - prox_{zeta g}(x - zeta r(x, y))        ]
//!             [ zeta (Ax + (y - y_k)/beta - b)             ]
//! ```
//!
//! A Clarke-derivative selection turns each Newton step into the
//! saddle-point system
//!
//! ```text
//!   [ -G          zeta Bh A' ] [d_x]     = -F,   G = (I - Bh) + zeta Bh H,
//!   [ zeta A   zeta/beta I_m ] [d_y]            H = Q + (beta + 1/rho) I - beta B,
//! ```
//!
//! where the diagonal masks B (box-interior) and Bh (prox-smooth) come
//! from the projection and soft-threshold subdifferentials. Rows outside
//! Bh decouple and are eliminated in closed form; what remains is the
//! reduced symmetric quasi-definite system
//!
//! ```text
//!   [ -H_(Bh,Bh)   A_Bh'    ] [d_x,Bh]   [ rhs1 ]
//!   [  A_Bh        1/beta I ] [d_y   ] = [ rhs2 ],
//! ```
//!
//! solved by preconditioned MINRES to the inexactness bound
//! ||M d + F|| <= min{eta1, ||F||^(1+eta2)}. A backtracking line search
//! on Theta = ||F||^2 globalizes the step, except that the first Newton
//! step of each sub-problem is accepted in full: the outer anchors and
//! penalties have just moved, so Theta is expected to rise there and a
//! line search would only cut the step for no benefit.

use crate::pmm::{dist_f_with_residual, residual_r, PmmState};
use crate::precond::{diag_h_bhat, ensure_preconditioner, Preconditioner};
use crate::problem::Problem;
use crate::prox::soft_threshold;
use crate::sparse::{minres_with_true_target, norm2, op_norm_est, SparseError};

#[derive(Debug, Clone)]
pub struct SsnConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub mu: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub max_linesearch: usize,
}

impl Default for SsnConfig {
    fn default() -> Self {
        SsnConfig {
            eta1: 0.1,
            eta2: 0.5,
            mu: 1e-4,
            delta: 0.5,
            max_iters: 8,
            max_linesearch: 30,
        }
    }
}

/// Largest tolerated growth of ||F|| over the unguarded first step.
const FIRST_STEP_GUARD: f64 = 1e4;

/// Rounds of piece re-prediction per Newton step.
const PIECE_ROUNDS: usize = 8;

/// Index masks defining the reduced Newton system. `b_mask` marks
/// box-interior coordinates of z_k/beta + x, `bhat_mask` marks
/// prox-smooth coordinates (|u_hat_i| > zeta d_i, or d_i = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSets {
    pub b_mask: Vec<bool>,
    pub bhat_mask: Vec<bool>,
    pub bhat_indices: Vec<usize>,
}

/// The natural map F(x, y) (length n + m) together with the
/// soft-threshold argument u_hat = x - zeta r(x, y).
pub fn natural_map(x: &[f64], y: &[f64], s: &PmmState, p: &Problem) -> (Vec<f64>, Vec<f64>) {
    let r = residual_r(x, y, s, p);
    natural_map_with_residual(&r, x, y, s, p)
}

pub fn natural_map_with_residual(
    r: &[f64],
    x: &[f64],
    y: &[f64],
    s: &PmmState,
    p: &Problem,
) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (p.n(), p.m());
    let pen = &s.penalties;
    let u_hat: Vec<f64> = (0..n).map(|i| x[i] - pen.zeta * r[i]).collect();
    let prox = soft_threshold(&u_hat, pen.zeta, p.d());
    let mut fhat = vec![0.0; n + m];
    for i in 0..n {
        fhat[i] = x[i] - prox[i];
    }
    let ax = p.a().mul_vec(x);
    for j in 0..m {
        fhat[n + j] = pen.zeta * (ax[j] + (y[j] - s.y_anchor[j]) / pen.beta - p.b()[j]);
    }
    (fhat, u_hat)
}

/// Clarke-derivative selections as strict-inequality masks; boundary
/// cases take the zero branch, which stays inside the subdifferential.
pub fn build_active_sets(x: &[f64], u_hat: &[f64], s: &PmmState, p: &Problem) -> ActiveSets {
    let n = p.n();
    let pen = &s.penalties;
    let mut b_mask = vec![false; n];
    let mut bhat_mask = vec![false; n];
    let mut bhat_indices = Vec::new();
    for i in 0..n {
        let w = s.z_anchor[i] / pen.beta + x[i];
        b_mask[i] = p.bounds().strictly_inside(i, w);
        bhat_mask[i] = p.d()[i] == 0.0 || u_hat[i].abs() > pen.zeta * p.d()[i];
        if bhat_mask[i] {
            bhat_indices.push(i);
        }
    }
    ActiveSets {
        b_mask,
        bhat_mask,
        bhat_indices,
    }
}

/// Reduced Newton system, realized as a matvec over Q and A plus the
/// diagonal shift of H; nothing is copied out of the problem data.
pub struct NewtonSystem<'a> {
    p: &'a Problem,
    bhat: Vec<usize>,
    /// (beta + 1/rho) - beta * b_mask_i, for each index in bhat.
    hdiag_shift: Vec<f64>,
    beta: f64,
    zeta: f64,
    /// Reduced right-hand side, length |bhat| + m.
    pub rhs: Vec<f64>,
    /// Eliminated step, full length n, zero on bhat.
    pub d_x_nhat: Vec<f64>,
}

impl<'a> NewtonSystem<'a> {
    pub fn bhat_len(&self) -> usize {
        self.bhat.len()
    }

    pub fn dim(&self) -> usize {
        self.bhat.len() + self.p.m()
    }

    /// out = M_hat v for the reduced quasi-definite matrix.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let nb = self.bhat.len();
        let (n, m) = (self.p.n(), self.p.m());
        debug_assert_eq!(v.len(), nb + m);
        let mut xfull = vec![0.0; n];
        for (i, &b) in self.bhat.iter().enumerate() {
            xfull[b] = v[i];
        }
        let qx = self.p.q().mul_vec(&xfull);
        let atv = self.p.a().tr_mul_vec(&v[nb..]);
        for (i, &b) in self.bhat.iter().enumerate() {
            out[i] = -(qx[b] + self.hdiag_shift[i] * v[i]) + atv[b];
        }
        let av = self.p.a().mul_vec(&xfull);
        for j in 0..m {
            out[nb + j] = av[j] + v[nb + j] / self.beta;
        }
    }

    /// Norm of the residual of the full (n+m) Newton system for the
    /// direction encoded by `v`; equals zeta times the reduced residual
    /// because the eliminated rows are satisfied exactly.
    pub fn full_residual_norm(&self, v: &[f64]) -> f64 {
        let mut mv = vec![0.0; v.len()];
        self.apply(v, &mut mv);
        let mut acc = 0.0;
        for i in 0..v.len() {
            let t = mv[i] - self.rhs[i];
            acc += t * t;
        }
        self.zeta * acc.sqrt()
    }

    /// Expands a reduced solution into the full step (d_x, d_y).
    pub fn expand(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nb = self.bhat.len();
        let mut d_x = self.d_x_nhat.clone();
        for (i, &b) in self.bhat.iter().enumerate() {
            d_x[b] = v[i];
        }
        (d_x, v[nb..].to_vec())
    }
}

/// Builds the reduced system at (x, y) given the natural map and masks.
/// The eliminated rows contribute the corrections Q_(Bh,Nh) d_Nh and
/// A_Nh d_Nh to the right-hand side.
pub fn assemble_newton<'a>(
    x: &[f64],
    y: &[f64],
    sets: &ActiveSets,
    fhat: &[f64],
    s: &PmmState,
    p: &'a Problem,
) -> NewtonSystem<'a> {
    let (n, m) = (p.n(), p.m());
    let pen = &s.penalties;
    let nb = sets.bhat_indices.len();

    let mut d_x_nhat = vec![0.0; n];
    for i in 0..n {
        if !sets.bhat_mask[i] {
            d_x_nhat[i] = -fhat[i];
        }
    }

    let hdiag_shift: Vec<f64> = sets
        .bhat_indices
        .iter()
        .map(|&i| pen.beta + 1.0 / pen.rho - if sets.b_mask[i] { pen.beta } else { 0.0 })
        .collect();

    let qd = p.q().mul_vec(&d_x_nhat);
    let ad = p.a().mul_vec(&d_x_nhat);
    let ax = p.a().mul_vec(x);
    let mut rhs = vec![0.0; nb + m];
    for (i, &b) in sets.bhat_indices.iter().enumerate() {
        rhs[i] = fhat[b] / pen.zeta + qd[b];
    }
    for j in 0..m {
        // -F_2 / zeta - A_Nh d_Nh
        rhs[nb + j] = p.b()[j] - ax[j] - (y[j] - s.y_anchor[j]) / pen.beta - ad[j];
    }

    NewtonSystem {
        p,
        bhat: sets.bhat_indices.clone(),
        hdiag_shift,
        beta: pen.beta,
        zeta: pen.zeta,
        rhs,
        d_x_nhat,
    }
}

#[derive(Debug, Clone, Default)]
pub struct SsnStats {
    pub iterations: usize,
    pub minres_iters: usize,
    pub minres_calls: usize,
    pub minres_nonconverged: usize,
    pub factorizations: usize,
    pub linesearch_failures: usize,
    pub converged: bool,
    /// Merit value ||F||^2 at each visited iterate, for diagnostics.
    pub theta_trace: Vec<f64>,
}

pub struct SsnOutcome {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stats: SsnStats,
}

/// Runs the semismooth Newton iteration from the outer anchors until
/// dist(0, F) <= eps_k, the iteration cap, or a linear-solver failure.
/// On cap exhaustion the best iterate seen (smallest dist) is returned.
pub fn ssn_solve(
    s: &PmmState,
    p: &Problem,
    eps_k: f64,
    cfg: &SsnConfig,
    minres_maxit: usize,
    cache: &mut Option<Preconditioner>,
) -> Result<SsnOutcome, SparseError> {
    let mut x = s.x_anchor.clone();
    let mut y = s.y_anchor.clone();
    let mut stats = SsnStats::default();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    // the fallback's gradient stepsize persists across iterations
    let mut prox_step = {
        let a_norm = op_norm_est(p.a(), 20);
        let q_norm = op_norm_est(p.q(), 20);
        let lip = q_norm
            + s.penalties.beta * (a_norm * a_norm + 1.0)
            + 1.0 / s.penalties.rho;
        1.0 / lip
    };
    for j in 0.. {
        let r = residual_r(&x, &y, s, p);
        let dist = dist_f_with_residual(&r, &x, &y, s, p);
        if dist <= eps_k {
            stats.converged = true;
            return Ok(SsnOutcome { x, y, stats });
        }
        if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
            best = Some((dist, x.clone(), y.clone()));
        }
        if j >= cfg.max_iters {
            break;
        }

        let (fhat, u_hat) = natural_map_with_residual(&r, &x, &y, s, p);
        let fhat_norm = norm2(&fhat);
        stats.theta_trace.push(fhat_norm * fhat_norm);
        if fhat_norm == 0.0 {
            // exact root of the natural map; dist is zero as well
            stats.converged = true;
            return Ok(SsnOutcome { x, y, stats });
        }

        let sets = build_active_sets(&x, &u_hat, s, p);
        if std::env::var_os("L1QP_TRACE_SSN").is_some() {
            eprintln!(
                "  ssn j={} |F|={:.3e} dist={:.3e} |Bh|={} B1={}",
                j,
                fhat_norm,
                dist,
                sets.bhat_indices.len(),
                sets.b_mask.iter().filter(|&&b| b).count(),
            );
        }
        let sys = assemble_newton(&x, &y, &sets, &fhat, s, p);
        let target = fhat_norm.powf(1.0 + cfg.eta2).min(cfg.eta1);

        let reduced = if sys.bhat_len() == 0 && p.m() == 0 {
            Vec::new()
        } else if sys.bhat_len() == 0 {
            // only the (2,2) block remains: d_y = beta * rhs2
            sys.rhs.iter().map(|v| v * s.penalties.beta).collect()
        } else {
            let fresh = ensure_preconditioner(p, &sets, &s.penalties, cache)?;
            if fresh {
                stats.factorizations += 1;
            }
            let pc = cache.as_ref().expect("preconditioner just ensured");
            solve_reduced(&sys, pc, target, fhat_norm, minres_maxit, &mut stats)?
        };
        let (mut d_x, mut d_y) = sys.expand(&reduced);

        // Piece-iteration corrector. The natural map is piecewise affine;
        // the step above was Newton on the piece containing the current
        // point. When the full step lands on a different piece, the
        // honest move is Newton on THAT piece: same block structure, but
        // both the Jacobian masks and the affine value must come from
        // the predicted piece (switching masks alone keeps the old
        // intercepts, which are off by 2 zeta d across a dead zone and
        // by beta times the gap across a box wall, and the iteration
        // then stalls or cycles around the breakpoints). Iterating the
        // prediction until the step lands on the piece whose model
        // produced it makes the corrected step the exact local root of
        // the piecewise map. The cached preconditioner is reused with a
        // swapped-in diagonal, so the rounds cost no factorizations.
        if sys.bhat_len() > 0 {
            let mut branch = classify_branch(&x, &u_hat, s, p);
            for _ in 0..PIECE_ROUNDS {
                let (xt, yt) = step(&x, &y, 1.0, &d_x, &d_y);
                let (_, u_hat_trial) = natural_map(&xt, &yt, s, p);
                let predicted = classify_branch(&xt, &u_hat_trial, s, p);
                if predicted == branch {
                    break;
                }
                branch = predicted;
                let (_, f_pred) = branch_values(&x, &y, &branch, s, p);
                let pred_sets = branch.active_sets();
                let sys2 = assemble_newton(&x, &y, &pred_sets, &f_pred, s, p);
                if sys2.bhat_len() == 0 {
                    let red: Vec<f64> =
                        sys2.rhs.iter().map(|v| v * s.penalties.beta).collect();
                    (d_x, d_y) = sys2.expand(&red);
                } else {
                    let pc = cache.as_ref().expect("preconditioner present");
                    let diag_inv: Vec<f64> = diag_h_bhat(p, &pred_sets, &s.penalties)
                        .iter()
                        .map(|h| 1.0 / h)
                        .collect();
                    let (reduced2, st) = minres_with_true_target(
                        |v, out| sys2.apply(v, out),
                        |v, out| pc.apply_inv_with_diag(&diag_inv, v, out),
                        &sys2.rhs,
                        (target / (2.0 * fhat_norm)).clamp(1e-14, 0.5),
                        Some(target / s.penalties.zeta),
                        minres_maxit,
                    )?;
                    stats.minres_calls += 1;
                    stats.minres_iters += st.iterations;
                    if !st.converged {
                        stats.minres_nonconverged += 1;
                    }
                    (d_x, d_y) = sys2.expand(&reduced2);
                }
            }
        }

        // Line search on Theta = ||F||^2; the first step goes in full.
        // A fresh penalty bump makes some merit increase expected there,
        // but a runaway step (iterates thrown far outside the box, merit
        // up by orders of magnitude) only burns the iteration budget, so
        // the full step falls back to the line search beyond a generous
        // ratio.
        let theta0 = fhat_norm * fhat_norm;
        let mut first_full = None;
        if j == 0 {
            let (xt, yt) = step(&x, &y, 1.0, &d_x, &d_y);
            let (ft, _) = natural_map(&xt, &yt, s, p);
            if norm2(&ft) <= FIRST_STEP_GUARD * fhat_norm {
                first_full = Some((xt, yt));
            }
        }
        let (x_next, y_next) = match first_full {
            Some(pair) => pair,
            None => {
                let mut accepted = None;
                for ls in 0..cfg.max_linesearch {
                    let alpha = cfg.delta.powi(ls as i32);
                    let (xt, yt) = step(&x, &y, alpha, &d_x, &d_y);
                    let (ft, _) = natural_map(&xt, &yt, s, p);
                    let theta = norm2(&ft).powi(2);
                    if theta <= (1.0 - 2.0 * cfg.mu * alpha) * theta0 {
                        accepted = Some((xt, yt, theta));
                        break;
                    }
                }
                match accepted {
                    // a step that barely dents the merit is a stall in the
                    // making (degenerate active sets make the Newton
                    // iteration cycle); treat it like a failure
                    Some((xt, yt, theta)) if theta <= 0.9 * theta0 => (xt, yt),
                    other => {
                        if other.is_none() {
                            stats.linesearch_failures += 1;
                        }
                        // descent safeguard: one backtracked proximal
                        // gradient step on the convex sub-problem
                        // objective, which cannot cycle, then re-base the
                        // multiplier block consistently
                        let (xt, t_used) = prox_grad_step(&x, s, p, prox_step);
                        prox_step = t_used * 1.5;
                        let ax = p.a().mul_vec(&xt);
                        let yt: Vec<f64> = (0..p.m())
                            .map(|r| {
                                s.y_anchor[r] - s.penalties.beta * (ax[r] - p.b()[r])
                            })
                            .collect();
                        (xt, yt)
                    }
                }
            }
        };
        x = x_next;
        y = y_next;
        stats.iterations += 1;
    }

    stats.converged = false;
    let (_, bx, by) = best.expect("loop ran at least once");
    Ok(SsnOutcome {
        x: bx,
        y: by,
        stats,
    })
}

fn step(x: &[f64], y: &[f64], alpha: f64, d_x: &[f64], d_y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let xt = x.iter().zip(d_x).map(|(a, d)| a + alpha * d).collect();
    let yt = y.iter().zip(d_y).map(|(a, d)| a + alpha * d).collect();
    (xt, yt)
}

/// One backtracked proximal-gradient step on psi = phi + g from `x`,
/// using the majorization test phi(x+) <= phi(x) + <grad, dx> +
/// ||dx||^2 / (2t). Returns the new point and the accepted step size.
fn prox_grad_step(x: &[f64], s: &PmmState, p: &Problem, step0: f64) -> (Vec<f64>, f64) {
    let ax = p.a().mul_vec(x);
    let y_consistent: Vec<f64> = (0..p.m())
        .map(|r| s.y_anchor[r] - s.penalties.beta * (ax[r] - p.b()[r]))
        .collect();
    // at the dual-consistent y, r(x, y) is exactly grad phi(x)
    let grad = residual_r(x, &y_consistent, s, p);
    let phi0 = crate::pmm::eval_phi(x, s, p);
    let mut t = step0.max(f64::MIN_POSITIVE);
    for _ in 0..60 {
        let target: Vec<f64> = (0..p.n()).map(|i| x[i] - t * grad[i]).collect();
        let xt = soft_threshold(&target, t, p.d());
        let dx: Vec<f64> = (0..p.n()).map(|i| xt[i] - x[i]).collect();
        let lin: f64 = grad.iter().zip(&dx).map(|(g, d)| g * d).sum();
        let quad = norm2(&dx).powi(2) / (2.0 * t);
        let phi_t = crate::pmm::eval_phi(&xt, s, p);
        if phi_t <= phi0 + lin + quad + 1e-14 * (1.0 + phi0.abs()) {
            return (xt, t);
        }
        t *= 0.5;
    }
    // stepsize underflow; return the last (tiny, still feasible) step
    let target: Vec<f64> = (0..p.n()).map(|i| x[i] - t * grad[i]).collect();
    (soft_threshold(&target, t, p.d()), t)
}

/// One affine piece of the natural map. The map is piecewise affine in
/// (x, y); a piece is selected by, per coordinate, which side of the box
/// the projection argument sits on and which branch of the prox applies
/// (the two smooth branches differ by the 2 zeta d intercept, so the
/// sign matters, not just smooth-versus-flat).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    /// 0 interior, 1 at/below lower bound, 2 at/above upper bound
    box_state: Vec<u8>,
    /// 0 dead zone, +1 positive shrink branch, -1 negative shrink branch
    prox_state: Vec<i8>,
}

impl Branch {
    pub fn active_sets(&self) -> ActiveSets {
        let n = self.box_state.len();
        let mut b_mask = vec![false; n];
        let mut bhat_mask = vec![false; n];
        let mut bhat_indices = Vec::new();
        for i in 0..n {
            b_mask[i] = self.box_state[i] == 0;
            bhat_mask[i] = self.prox_state[i] != 0;
            if bhat_mask[i] {
                bhat_indices.push(i);
            }
        }
        ActiveSets {
            b_mask,
            bhat_mask,
            bhat_indices,
        }
    }
}

/// The piece containing (x, u_hat); ties go to the flat branches, same
/// as the strict inequalities in the mask definitions.
pub fn classify_branch(x: &[f64], u_hat: &[f64], s: &PmmState, p: &Problem) -> Branch {
    let n = p.n();
    let pen = &s.penalties;
    let mut box_state = vec![0u8; n];
    let mut prox_state = vec![0i8; n];
    for i in 0..n {
        let w = s.z_anchor[i] / pen.beta + x[i];
        if !p.bounds().strictly_inside(i, w) {
            box_state[i] = if w <= p.bounds().lower[i] { 1 } else { 2 };
        }
        let threshold = pen.zeta * p.d()[i];
        if p.d()[i] == 0.0 {
            prox_state[i] = 1;
        } else if u_hat[i] > threshold {
            prox_state[i] = 1;
        } else if u_hat[i] < -threshold {
            prox_state[i] = -1;
        }
    }
    Branch {
        box_state,
        prox_state,
    }
}

/// Evaluates the affine extension of the piece `branch` at (x, y):
/// returns (r on the branch, natural map on the branch). On the piece
/// that actually contains (x, y) this coincides with the plain
/// evaluation; on a neighboring piece it is the model Newton must use
/// to land there.
pub fn branch_values(
    x: &[f64],
    y: &[f64],
    branch: &Branch,
    s: &PmmState,
    p: &Problem,
) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (p.n(), p.m());
    let pen = &s.penalties;
    let qx = p.q().mul_vec(x);
    let aty = p.a().tr_mul_vec(y);
    let mut r = vec![0.0; n];
    for i in 0..n {
        let proj = match branch.box_state[i] {
            0 => s.z_anchor[i] / pen.beta + x[i],
            1 => p.bounds().lower[i],
            _ => p.bounds().upper[i],
        };
        r[i] = p.c()[i] + qx[i] - aty[i] + (s.z_anchor[i] + pen.beta * x[i]) - pen.beta * proj
            + (x[i] - s.x_anchor[i]) / pen.rho;
    }
    let mut fhat = vec![0.0; n + m];
    for i in 0..n {
        let u = x[i] - pen.zeta * r[i];
        fhat[i] = match branch.prox_state[i] {
            0 => x[i],
            sign => x[i] - (u - pen.zeta * p.d()[i] * sign as f64),
        };
    }
    let ax = p.a().mul_vec(x);
    for j in 0..m {
        fhat[n + j] = pen.zeta * (ax[j] + (y[j] - s.y_anchor[j]) / pen.beta - p.b()[j]);
    }
    (r, fhat)
}

/// One MINRES solve of the reduced system. The relative tolerance
/// target / (2 ||F||) drives the preconditioned residual; the absolute
/// inexactness bound is enforced on the true residual inside the solve
/// (the preconditioned norm can understate it badly once the penalty
/// spread grows), with MINRES continuing on a tightened tolerance until
/// the bound holds or the iteration budget runs out.
fn solve_reduced(
    sys: &NewtonSystem,
    pc: &Preconditioner,
    target: f64,
    fhat_norm: f64,
    minres_maxit: usize,
    stats: &mut SsnStats,
) -> Result<Vec<f64>, SparseError> {
    let rel_tol = (target / (2.0 * fhat_norm)).clamp(1e-14, 0.5);
    // full residual = zeta * reduced residual
    let reduced_target = target / sys.zeta;
    let (sol, st) = minres_with_true_target(
        |v, out| sys.apply(v, out),
        |v, out| pc.apply_inv(v, out),
        &sys.rhs,
        rel_tol,
        Some(reduced_target),
        minres_maxit,
    )?;
    stats.minres_calls += 1;
    stats.minres_iters += st.iterations;
    if !st.converged {
        stats.minres_nonconverged += 1;
    }
    Ok(sol)
}
