//! Outer loop: a primal-dual proximal method of multipliers.
//!
//! Each outer iteration k holds anchors (x_k, y_k, z_k) and penalties
//! (beta_k, rho_k) and asks the inner semismooth Newton solver for a pair
//! (x, y) that brings the sub-problem optimality measure dist(0, F) below
//! a tolerance eps_k. The driving residual operator is
//!
//! ```text
//!   r(x, y) = c + Qx - A'y + (z_k + beta x) - beta Pi_K(z_k/beta + x)
//!             + (x - x_k) / rho,
//! ```
//!
//! and F stacks `r + subgradient of ||Dx||_1` with the scaled equality
//! residual `Ax + (y - y_k)/beta - b`. After each accepted sub-problem
//! solution the multiplier estimate z is refreshed in closed form and the
//! penalties are pushed along a monotone schedule: beta non-decreasing up
//! to `beta_max`, tau = beta/rho non-increasing down to `tau_min`.

use crate::problem::{kkt_residuals, Problem, Solution, SolveReport, Status};
use crate::prox::{project_box, project_subdiff_g, prox_conjugate_box};
use crate::sparse::norm2;
use crate::ssn::{ssn_solve, SsnConfig, SsnOutcome};
use crate::warmstart::warmstart_run;
use std::time::Instant;

/// Solver options; the CLI exposes these one-to-one as flags.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_pmm: usize,
    pub max_ssn_per_subproblem: usize,
    pub minres_maxit: usize,
    pub warmstart: bool,
    pub warmstart_tol: f64,
    pub warmstart_maxit: usize,
    pub beta0: f64,
    pub rho0: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-5,
            max_pmm: 200,
            max_ssn_per_subproblem: 8,
            minres_maxit: 200,
            warmstart: true,
            warmstart_tol: 1e-3,
            warmstart_maxit: 400,
            beta0: 1e2,
            rho0: 5e2,
            seed: 0,
        }
    }
}

/// Penalty parameters of one outer iteration.
#[derive(Debug, Clone)]
pub struct PenaltyState {
    pub beta: f64,
    pub rho: f64,
    pub tau: f64,
    pub zeta: f64,
    pub beta_max: f64,
    pub tau_min: f64,
    pub eps_k: f64,
}

impl PenaltyState {
    pub fn new(beta0: f64, rho0: f64) -> PenaltyState {
        assert!(beta0 > 0.0 && rho0 > 0.0);
        PenaltyState {
            beta: beta0,
            rho: rho0,
            tau: beta0 / rho0,
            zeta: 1.0,
            beta_max: 1e10,
            tau_min: 1e-6,
            eps_k: 1.0,
        }
    }
}

/// Anchors and current iterate of the outer loop.
#[derive(Debug, Clone)]
pub struct PmmState {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x_anchor: Vec<f64>,
    pub y_anchor: Vec<f64>,
    pub z_anchor: Vec<f64>,
    pub penalties: PenaltyState,
}

impl PmmState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, penalties: PenaltyState) -> PmmState {
        PmmState {
            k: 0,
            x_anchor: x.clone(),
            y_anchor: y.clone(),
            z_anchor: z.clone(),
            x,
            y,
            z,
            penalties,
        }
    }

    /// Installs a new iterate and re-anchors the proximal terms on it.
    pub fn advance(&mut self, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) {
        self.x_anchor.copy_from_slice(&x);
        self.y_anchor.copy_from_slice(&y);
        self.z_anchor.copy_from_slice(&z);
        self.x = x;
        self.y = y;
        self.z = z;
        self.k += 1;
    }
}

/// The smooth residual r(x, y) of the proximal augmented Lagrangian.
pub fn residual_r(x: &[f64], y: &[f64], s: &PmmState, p: &Problem) -> Vec<f64> {
    let pen = &s.penalties;
    let qx = p.q().mul_vec(x);
    let aty = p.a().tr_mul_vec(y);
    let shifted: Vec<f64> = (0..p.n())
        .map(|i| s.z_anchor[i] / pen.beta + x[i])
        .collect();
    let proj = project_box(&shifted, p.bounds());
    (0..p.n())
        .map(|i| {
            p.c()[i] + qx[i] - aty[i] + (s.z_anchor[i] + pen.beta * x[i]) - pen.beta * proj[i]
                + (x[i] - s.x_anchor[i]) / pen.rho
        })
        .collect()
}

/// dist(0, F(x, y)): norm of the stacked pair
/// (r + Pi_{subdiff g(x)}(-r), Ax + (y - y_k)/beta - b).
pub fn dist_f(x: &[f64], y: &[f64], s: &PmmState, p: &Problem) -> f64 {
    let r = residual_r(x, y, s, p);
    dist_f_with_residual(&r, x, y, s, p)
}

/// Same as [`dist_f`] but reuses an already-computed r(x, y).
pub fn dist_f_with_residual(r: &[f64], x: &[f64], y: &[f64], s: &PmmState, p: &Problem) -> f64 {
    let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
    let proj = project_subdiff_g(&neg_r, x, p.d());
    let mut acc = 0.0;
    for i in 0..p.n() {
        let t = r[i] + proj[i];
        acc += t * t;
    }
    let ax = p.a().mul_vec(x);
    for i in 0..p.m() {
        let t = ax[i] + (y[i] - s.y_anchor[i]) / s.penalties.beta - p.b()[i];
        acc += t * t;
    }
    acc.sqrt()
}

/// Multiplier refresh z_{k+1} = (z_k + beta x) - beta Pi_K(z_k/beta + x),
/// equal to prox of the scaled conjugate indicator by the Moreau identity.
pub fn update_z(x_next: &[f64], s: &PmmState, p: &Problem) -> Vec<f64> {
    let beta = s.penalties.beta;
    let arg: Vec<f64> = (0..p.n())
        .map(|i| s.z_anchor[i] + beta * x_next[i])
        .collect();
    prox_conjugate_box(&arg, beta, p.bounds())
}

/// Sufficient-decrease ratio that triggers the fast penalty factor.
const DECREASE_RATIO: f64 = 5.0;
const FAST_FACTOR: f64 = 10.0;
const SLOW_FACTOR: f64 = 2.0;

/// Pushes the penalties one step: beta grows by the fast factor when the
/// dual residual decreased enough, by the slow factor otherwise, and rho
/// follows so that tau = beta/rho stays constant (clipped at `tau_min`).
/// Racing rho ahead of beta shrinks the proximal curvature 1/rho, which
/// is the only regularization the flat directions of the sub-problem
/// have; without it the inner solver cycles on degenerate active sets.
pub fn update_penalties(
    s: &PenaltyState,
    res_now: (f64, f64, f64),
    res_prev: (f64, f64, f64),
) -> PenaltyState {
    let (dual_now, primal_now, _) = res_now;
    let (dual_prev, primal_prev, _) = res_prev;
    let both_fast = dual_now <= dual_prev / DECREASE_RATIO
        && primal_now <= primal_prev / DECREASE_RATIO;
    let beta_factor = if both_fast { FAST_FACTOR } else { SLOW_FACTOR };
    let beta = (s.beta * beta_factor).min(s.beta_max);
    let tau = s.tau.max(s.tau_min);
    let rho = beta / tau;
    PenaltyState {
        beta,
        rho,
        tau,
        zeta: s.zeta,
        beta_max: s.beta_max,
        tau_min: s.tau_min,
        eps_k: s.eps_k,
    }
}

/// Smooth part of the sub-problem objective at the anchors in `s`:
/// the proximal augmented Lagrangian with g split off.
pub fn eval_phi(x: &[f64], s: &PmmState, p: &Problem) -> f64 {
    let pen = &s.penalties;
    let beta = pen.beta;
    let qx = p.q().mul_vec(x);
    let ax = p.a().mul_vec(x);
    let mut val = 0.0;
    for i in 0..p.n() {
        val += p.c()[i] * x[i] + 0.5 * x[i] * qx[i];
        let diff = x[i] - s.x_anchor[i];
        val += diff * diff / (2.0 * pen.rho);
        let w = s.z_anchor[i] + beta * x[i];
        let proj = (w / beta).max(p.bounds().lower[i]).min(p.bounds().upper[i]);
        let conj = w - beta * proj;
        val += (conj * conj - s.z_anchor[i] * s.z_anchor[i]) / (2.0 * beta);
    }
    for j in 0..p.m() {
        let gap = ax[j] - p.b()[j];
        val += -s.y_anchor[j] * gap + 0.5 * beta * gap * gap;
    }
    val
}

/// Full sub-problem objective phi + ||Dx||_1.
pub fn eval_psi(x: &[f64], s: &PmmState, p: &Problem) -> f64 {
    let l1: f64 = x.iter().zip(p.d()).map(|(xi, di)| di * xi.abs()).sum();
    eval_phi(x, s, p) + l1
}

const DELTA0: f64 = 1.0;

/// Inexactness tolerance for the k-th sub-problem:
/// eps_k = max( (min{sqrt(tau),1}/beta) * min(delta_k, delta_k' * step), 0.1 tol )
/// with delta_k = 0.5^k and delta_k' = 0.5^{k+1}. Both schedules are
/// summable; the floor keeps sub-problems from being over-solved far
/// below the outer tolerance.
pub fn epsilon_schedule(pen: &PenaltyState, k: usize, tol: f64, x_step: f64) -> f64 {
    let delta_k = DELTA0 * 0.5f64.powi(k as i32);
    let delta_k_prime = 0.5f64.powi(k as i32 + 1);
    let lead = pen.tau.sqrt().min(1.0) / pen.beta;
    let inner = delta_k.min(delta_k_prime * x_step);
    (lead * inner).max(EPS_FLOOR_FRACTION * tol)
}

/// Floor of the sub-problem tolerance relative to the outer tolerance.
/// The termination residuals are the sub-problem measure divided by
/// 1 + norm scalings, so solving much below the outer tolerance buys
/// nothing; and demanding more than the Krylov-limited accuracy of the
/// inner solver only triggers its failure path.
const EPS_FLOOR_FRACTION: f64 = 0.5;

/// Norm weighted by R_k = tau I (+) I (+) I over the (x, y, z) blocks.
fn step_norm_rk(tau: f64, dx: &[f64], dy: &[f64], dz: &[f64]) -> f64 {
    (tau * norm2(dx).powi(2) + norm2(dy).powi(2) + norm2(dz).powi(2)).sqrt()
}

/// Prox penalty zeta = 1 / median positive l1 weight (1 when there is
/// none), clamped to [1, 1e9]. Any bounded positive value is admissible;
/// this one makes the soft-threshold dead zone O(1) wide in the
/// natural-map argument u = x - zeta r, so the active-set prediction can
/// actually land inside it. With zeta = 1 and small weights the zone is
/// O(d) wide, a Newton step crossing it almost never lands inside, and
/// coordinates that belong at exactly zero oscillate between the two
/// shrink branches instead of settling.
pub fn choose_zeta(p: &Problem) -> f64 {
    let mut weights: Vec<f64> = p.d().iter().copied().filter(|&v| v > 0.0).collect();
    if weights.is_empty() {
        return 1.0;
    }
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (1.0 / weights[weights.len() / 2]).clamp(1.0, 1e9)
}

/// Full solve: optional warm start, then outer iterations until the three
/// termination residuals drop below `cfg.tol` or the iteration cap hits.
pub fn solve(p: &Problem, cfg: &SolverConfig) -> Solution {
    let start = Instant::now();
    let mut report = SolveReport {
        seed: cfg.seed,
        ..SolveReport::default()
    };

    let (x0, y0, z0) = if cfg.warmstart {
        match warmstart_run(p, cfg.warmstart_tol, cfg.warmstart_maxit) {
            Ok(ws) => {
                report.warmstart_used = true;
                report.warmstart_iters = ws.iterations;
                report.factorizations += ws.factorizations;
                (ws.x, ws.y, ws.z)
            }
            Err(_) => {
                // a breakdown here only costs the warm start
                (vec![0.0; p.n()], vec![0.0; p.m()], vec![0.0; p.n()])
            }
        }
    } else {
        (vec![0.0; p.n()], vec![0.0; p.m()], vec![0.0; p.n()])
    };

    let mut state = PmmState::new(x0, y0, z0, PenaltyState::new(cfg.beta0, cfg.rho0));
    state.penalties.zeta = choose_zeta(p);
    let ssn_cfg = SsnConfig {
        max_iters: cfg.max_ssn_per_subproblem,
        ..SsnConfig::default()
    };

    let mut res = kkt_residuals(p, &state.x, &state.y, &state.z);
    let mut last_step = f64::INFINITY;
    let mut precond_cache = None;

    let status = loop {
        if res.0 <= cfg.tol && res.1 <= cfg.tol && res.2 <= cfg.tol {
            break Status::Optimal;
        }
        if state.k >= cfg.max_pmm {
            break Status::MaxIterations;
        }

        let eps_k = epsilon_schedule(&state.penalties, state.k, cfg.tol, last_step);
        state.penalties.eps_k = eps_k;

        let outcome = match ssn_solve(
            &state,
            p,
            eps_k,
            &ssn_cfg,
            cfg.minres_maxit,
            &mut precond_cache,
        ) {
            Ok(o) => o,
            Err(_) => break Status::LinearSolverFailure,
        };
        let SsnOutcome {
            x: x_next,
            y: y_next,
            stats,
        } = outcome;
        report.ssn_iters += stats.iterations;
        report.minres_iters_total += stats.minres_iters;
        report.minres_calls += stats.minres_calls;
        report.factorizations += stats.factorizations;
        report.linesearch_failures += stats.linesearch_failures;
        report.minres_nonconverged += stats.minres_nonconverged;
        debug_assert!(
            !stats.converged || dist_f(&x_next, &y_next, &state, p) <= eps_k * (1.0 + 1e-9),
            "accepted sub-problem solution violates its inexactness bound"
        );

        if std::env::var_os("L1QP_TRACE").is_some() {
            let d = dist_f(&x_next, &y_next, &state, p);
            eprintln!(
                "k={} beta={:.1e} tau={:.1e} eps={:.1e} dist={:.2e} ssn={} conv={} ls_fail={} minres={} res=({:.1e},{:.1e},{:.1e})",
                state.k, state.penalties.beta, state.penalties.tau, eps_k, d,
                stats.iterations, stats.converged, stats.linesearch_failures,
                stats.minres_iters, res.0, res.1, res.2
            );
        }
        if let Some(path) = std::env::var_os("L1QP_DUMP_STALL") {
            if !stats.converged {
                let mut out = String::new();
                out.push_str(&format!("beta = {:e}\n", state.penalties.beta));
                out.push_str(&format!("rho = {:e}\n", state.penalties.rho));
                out.push_str(&format!("eps = {eps_k:e}\n"));
                let fmt = |v: &[f64]| {
                    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
                };
                out.push_str(&format!("x = {}\n", fmt(&state.x)));
                out.push_str(&format!("y = {}\n", fmt(&state.y)));
                out.push_str(&format!("z = {}\n", fmt(&state.z)));
                let _ = std::fs::write(path, out);
            }
        }

        let z_next = update_z(&x_next, &state, p);
        let dx: Vec<f64> = x_next.iter().zip(&state.x).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y_next.iter().zip(&state.y).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = z_next.iter().zip(&state.z).map(|(a, b)| a - b).collect();
        last_step = step_norm_rk(state.penalties.tau, &dx, &dy, &dz);

        let res_new = kkt_residuals(p, &x_next, &y_next, &z_next);
        let achieved = dist_f(&x_next, &y_next, &state, p);
        if stats.converged || achieved <= (10.0 * eps_k).max(10.0 * cfg.tol) {
            // grow on success; a near-miss still supports growth, the
            // outer loop tolerates that much inexactness while it is
            // transporting mass across the active-set boundaries
            state.penalties = update_penalties(&state.penalties, res_new, res);
        } else {
            // retreat: growing beta would only stiffen a sub-problem the
            // inner solver failed on outright. The method converges for
            // any fixed beta, so hover below the workable level and let
            // the outer contraction work from better anchors.
            let pen = &mut state.penalties;
            pen.beta = (pen.beta * 0.5).max(cfg.beta0);
            pen.rho = pen.beta / pen.tau;
        }
        res = res_new;
        state.advance(x_next, y_next, z_next);
        report.pmm_iters = state.k;
    };

    report.final_residuals = res;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Solution {
        x: state.x,
        y: state.y,
        z: state.z,
        status,
        report,
    }
}
