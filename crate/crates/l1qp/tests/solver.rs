//! End-to-end solver behavior on analytic and oracle-checked instances.

mod common;

use common::{dense_to_csc, l2_diff, random_l1qp, reference_splitting, reference_subproblem};
use l1qp::pmm::{dist_f, solve, PenaltyState, PmmState, SolverConfig};
use l1qp::problem::{kkt_residuals, Problem, Status};
use l1qp::sparse::{norm2, CscMatrix};
use l1qp::ssn::{assemble_newton, build_active_sets, natural_map, ssn_solve, SsnConfig};
use l1qp::warmstart::warmstart_run;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scalar_quadratic() -> Problem {
    // min -x + x^2/2: optimum at x = 1
    Problem::new(
        CscMatrix::identity(1),
        CscMatrix::zeros(0, 1),
        vec![-1.0],
        vec![],
        vec![0.0],
        vec![f64::NEG_INFINITY],
        vec![f64::INFINITY],
        "scalar".into(),
    )
    .unwrap()
}

fn l1_equality_instance() -> Problem {
    // min x1 + (1/2)||x||^2 + |x1|  s.t. x1 + x2 = 1, box [-10, 10]^2;
    // optimum x = (0, 1) with the l1 kink active
    Problem::new(
        CscMatrix::identity(2),
        CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]),
        vec![1.0, 0.0],
        vec![1.0],
        vec![1.0, 0.0],
        vec![-10.0; 2],
        vec![10.0; 2],
        "l1eq".into(),
    )
    .unwrap()
}

#[test]
fn solve_scalar_quadratic_hits_analytic_optimum() {
    let p = scalar_quadratic();
    let sol = solve(&p, &SolverConfig::default());
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-4);
    let (r1, r2, r3) = kkt_residuals(&p, &sol.x, &sol.y, &sol.z);
    assert!(r1 <= 1e-5 && r2 <= 1e-5 && r3 <= 1e-5);
}

#[test]
fn solve_l1_equality_matches_reference_and_analytic() {
    let p = l1_equality_instance();
    let cfg = SolverConfig {
        tol: 1e-8,
        ..SolverConfig::default()
    };
    let sol = solve(&p, &cfg);
    assert_eq!(sol.status, Status::Optimal);
    let oracle = reference_splitting(&p, 1_000_000);
    assert!(l2_diff(&sol.x, &oracle) <= 1e-6, "{:?} vs {:?}", sol.x, oracle);
    // analytic optimum (0, 1); the kink produces an exact zero
    assert_eq!(sol.x[0], 0.0);
    assert!((sol.x[1] - 1.0).abs() < 1e-7);
}

#[test]
fn dist_f_vanishes_at_subproblem_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = random_l1qp(&mut rng, 5, 2);
    let pen = PenaltyState::new(1e2, 5e2);
    let n = p.n();
    let m = p.m();
    let s = PmmState::new(vec![0.1; n], vec![-0.2; m], vec![0.05; n], pen);
    let (x_star, y_star) = reference_subproblem(&p, &s, 60_000);
    let d = dist_f(&x_star, &y_star, &s, &p);
    assert!(d <= 1e-10, "dist at reference optimum: {d:e}");
    let (fhat, _) = natural_map(&x_star, &y_star, &s, &p);
    assert!(norm2(&fhat) <= 1e-10, "natural map norm: {:e}", norm2(&fhat));
}

#[test]
fn ssn_returns_input_when_already_converged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_l1qp(&mut rng, 5, 2);
    let pen = PenaltyState::new(1e2, 5e2);
    let s = PmmState::new(
        vec![0.0; p.n()],
        vec![0.0; p.m()],
        vec![0.0; p.n()],
        pen,
    );
    // huge eps: anything passes, zero iterations taken
    let mut cache = None;
    let out = ssn_solve(&s, &p, 1e9, &SsnConfig::default(), 200, &mut cache).unwrap();
    assert!(out.stats.converged);
    assert_eq!(out.stats.iterations, 0);
    assert_eq!(out.x, s.x_anchor);
    assert_eq!(out.y, s.y_anchor);
}

#[test]
fn ssn_smooth_subproblem_solved_in_one_exact_newton_step() {
    // D = 0 and free box: the natural map is linear, one Newton step with
    // a tight linear solve lands on the sub-problem optimum.
    let q = CscMatrix::from_triplets(
        2,
        2,
        &[(0, 0, 2.0), (0, 1, 0.3), (1, 0, 0.3), (1, 1, 1.0)],
    );
    let a = CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 2.0)]);
    let p = Problem::new(
        q,
        a,
        vec![0.4, -0.8],
        vec![0.6],
        vec![0.0; 2],
        vec![f64::NEG_INFINITY; 2],
        vec![f64::INFINITY; 2],
        "smooth".into(),
    )
    .unwrap();
    let pen = PenaltyState::new(1e2, 5e2);
    let s = PmmState::new(vec![0.2, 0.1], vec![0.3], vec![0.0; 2], pen);
    let mut cache = None;
    let out = ssn_solve(&s, &p, 1e-9, &SsnConfig::default(), 500, &mut cache).unwrap();
    assert!(out.stats.converged);
    assert_eq!(out.stats.iterations, 1, "expected a single Newton step");
    // cross-check against the dense Newton oracle on the same system
    let (x_star, y_star) = reference_subproblem(&p, &s, 60_000);
    assert!(l2_diff(&out.x, &x_star) < 1e-5);
    assert!(l2_diff(&out.y, &y_star) < 1e-5);
}

#[test]
fn ssn_merit_decreases_after_first_iteration_on_nonsmooth_instance() {
    // find sub-problems whose active sets move, so SSN needs several
    // steps, and watch the merit along one call
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut checked = 0;
    for _ in 0..40 {
        let p = random_l1qp(&mut rng, 10, 4);
        let (n, m) = (p.n(), p.m());
        use rand::RngExt;
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let s = PmmState::new(x0, y0, z0, PenaltyState::new(1e2, 5e2));
        let mut cache = None;
        let out = ssn_solve(&s, &p, 1e-12, &SsnConfig::default(), 500, &mut cache).unwrap();
        let trace = &out.stats.theta_trace;
        if trace.len() < 3 || out.stats.linesearch_failures > 0 {
            continue;
        }
        checked += 1;
        // the first full step may increase Theta; afterwards it must fall
        for w in trace[1..].windows(2) {
            assert!(w[1] < w[0], "Theta did not decrease: {trace:?}");
        }
    }
    assert!(checked >= 3, "only {checked} multi-step sub-problems found");
}

#[test]
fn newton_back_substitution_reproduces_full_system() {
    // stacking (d_x, d_y) and applying the full natural-map Jacobian
    // reproduces -F within the MINRES tolerance actually used
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let p = random_l1qp(&mut rng, 8, 3);
        let (n, m) = (p.n(), p.m());
        let pen = PenaltyState::new(1e2, 5e2);
        let x0: Vec<f64> = (0..n).map(|i| 0.3 - 0.07 * i as f64).collect();
        let s = PmmState::new(x0, vec![0.2; m], vec![0.1; n], pen);
        let x = s.x_anchor.clone();
        let y = s.y_anchor.clone();
        let (fhat, u_hat) = natural_map(&x, &y, &s, &p);
        let sets = build_active_sets(&x, &u_hat, &s, &p);
        let sys = assemble_newton(&x, &y, &sets, &fhat, &s, &p);
        if sys.bhat_len() == 0 {
            continue;
        }

        // dense reduced matrix via unit vectors, dense solve as oracle
        let dim = sys.dim();
        let mut md = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            let mut col = vec![0.0; dim];
            sys.apply(&e, &mut col);
            for i in 0..dim {
                md[(i, j)] = col[i];
            }
        }
        let rhs = nalgebra::DVector::from_column_slice(&sys.rhs);
        let red = md.lu().solve(&rhs).expect("reduced system nonsingular");
        let red: Vec<f64> = red.iter().copied().collect();
        let (d_x, d_y) = sys.expand(&red);

        // full Jacobian of the natural map at (x, y), dense
        let zeta = s.penalties.zeta;
        let beta = s.penalties.beta;
        let rho = s.penalties.rho;
        let qd = p.q().to_dense();
        let ad = p.a().to_dense();
        let mut full = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            let bh = if sets.bhat_mask[i] { 1.0 } else { 0.0 };
            for j in 0..n {
                let b = if sets.b_mask[j] { 1.0 } else { 0.0 };
                let h = qd[(i, j)]
                    + if i == j {
                        beta + 1.0 / rho - beta * b
                    } else {
                        0.0
                    };
                full[(i, j)] = if i == j { 1.0 - bh } else { 0.0 } + zeta * bh * h;
            }
            for r in 0..m {
                full[(i, n + r)] = -zeta * bh * ad[(r, i)];
            }
        }
        for r in 0..m {
            for j in 0..n {
                full[(n + r, j)] = zeta * ad[(r, j)];
            }
            full[(n + r, n + r)] = zeta / beta;
        }
        let mut dvec = nalgebra::DVector::zeros(n + m);
        for i in 0..n {
            dvec[i] = d_x[i];
        }
        for r in 0..m {
            dvec[n + r] = d_y[r];
        }
        let fvec = nalgebra::DVector::from_column_slice(&fhat);
        let resid = (&full * dvec + fvec).norm();
        assert!(resid <= 1e-8 * (1.0 + norm2(&fhat)), "residual {resid:e}");
    }
}

#[test]
fn jacobian_directional_derivative_slope_test() {
    // away from kinks the natural map is locally linear: finite
    // differences match M d essentially to rounding
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let p = random_l1qp(&mut rng, 6, 2);
    let (n, m) = (p.n(), p.m());
    let pen = PenaltyState::new(1e2, 5e2);
    let s = PmmState::new(vec![0.21; n], vec![0.13; m], vec![0.02; n], pen);
    let x: Vec<f64> = (0..n).map(|i| 0.4 - 0.13 * i as f64).collect();
    let y: Vec<f64> = (0..m).map(|r| 0.1 * r as f64 - 0.2).collect();
    let (fhat, u_hat) = natural_map(&x, &y, &s, &p);
    let sets = build_active_sets(&x, &u_hat, &s, &p);

    // margin check: skip points too close to a kink for the FD step
    for i in 0..n {
        let margin = (u_hat[i].abs() - s.penalties.zeta * p.d()[i]).abs();
        if p.d()[i] > 0.0 && margin < 1e-3 {
            return;
        }
    }

    let sys = assemble_newton(&x, &y, &sets, &fhat, &s, &p);
    let _ = sys;
    let dir_x: Vec<f64> = (0..n).map(|i| ((i % 3) as f64 - 1.0) * 0.7).collect();
    let dir_y: Vec<f64> = (0..m).map(|r| 0.4 - 0.2 * r as f64).collect();

    for &h in &[1e-4, 1e-6] {
        let xh: Vec<f64> = (0..n).map(|i| x[i] + h * dir_x[i]).collect();
        let yh: Vec<f64> = (0..m).map(|r| y[r] + h * dir_y[r]).collect();
        let (fh, _) = natural_map(&xh, &yh, &s, &p);
        let fd: Vec<f64> = (0..n + m).map(|i| (fh[i] - fhat[i]) / h).collect();

        // M d via the dense Jacobian blocks
        let md = apply_full_jacobian(&p, &s, &sets, &dir_x, &dir_y);
        let err = l2_diff(&fd, &md);
        let scale = norm2(&md).max(1.0);
        assert!(err <= 5.0 * h * scale, "h = {h:e}: err {err:e} scale {scale:e}");
    }
}

fn apply_full_jacobian(
    p: &Problem,
    s: &PmmState,
    sets: &l1qp::ssn::ActiveSets,
    d_x: &[f64],
    d_y: &[f64],
) -> Vec<f64> {
    let (n, m) = (p.n(), p.m());
    let pen = &s.penalties;
    let qd = p.q().mul_vec(d_x);
    let atd = p.a().tr_mul_vec(d_y);
    let mut out = vec![0.0; n + m];
    for i in 0..n {
        let b = if sets.b_mask[i] { 1.0 } else { 0.0 };
        let h = qd[i] + (pen.beta + 1.0 / pen.rho - pen.beta * b) * d_x[i];
        let bh = if sets.bhat_mask[i] { 1.0 } else { 0.0 };
        out[i] = (1.0 - bh) * d_x[i] + pen.zeta * bh * (h - atd[i]);
    }
    let ad = p.a().mul_vec(d_x);
    for r in 0..m {
        out[n + r] = pen.zeta * (ad[r] + d_y[r] / pen.beta);
    }
    out
}

#[test]
fn warmstart_reduces_outer_iterations() {
    let p = l1_equality_instance();
    let warm = solve(&p, &SolverConfig::default());
    let cold = solve(
        &p,
        &SolverConfig {
            warmstart: false,
            ..SolverConfig::default()
        },
    );
    assert_eq!(warm.status, Status::Optimal);
    assert_eq!(cold.status, Status::Optimal);
    assert!(
        warm.report.pmm_iters <= cold.report.pmm_iters,
        "warm {} vs cold {}",
        warm.report.pmm_iters,
        cold.report.pmm_iters
    );
    assert!(warm.report.warmstart_used && !cold.report.warmstart_used);
}

#[test]
fn warmstart_merged_solve_matches_sequential_oracle() {
    // one merged 3x3 solve against the sequential formulation (dense
    // proximal x-minimization, then explicit dual updates) from random
    // mid-run states
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..20 {
        let p = random_l1qp(&mut rng, 6, 3);
        let mut st = l1qp::warmstart::AdmmState::new(&p, 1.0, 1.618).unwrap();
        let n = p.n();
        use rand::RngExt;
        st.x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        st.y1 = (0..p.m()).map(|_| rng.random_range(-1.0..1.0)).collect();
        st.y2 = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w_next = l1qp::warmstart::admm_w_update(&st.x, &st.y2, st.sigma, &p);
        let (x, y1, y2) = l1qp::warmstart::admm_xy_update(&st, &w_next, &p);
        let (xs, y1s, y2s) = sequential_padmm_step(&p, &st, &w_next);
        assert!(
            l2_diff(&x, &xs) <= 1e-10 * (1.0 + common::l2(&xs)),
            "trial {trial}: x gap {:e}",
            l2_diff(&x, &xs)
        );
        assert!(l2_diff(&y1, &y1s) <= 1e-10 * (1.0 + common::l2(&y1s)));
        assert!(l2_diff(&y2, &y2s) <= 1e-10 * (1.0 + common::l2(&y2s)));
    }
}

#[test]
fn warmstart_uses_exactly_one_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let p = random_l1qp(&mut rng, 8, 3);
    let ws = warmstart_run(&p, 1e-4, 400).unwrap();
    assert_eq!(ws.factorizations, 1);
    assert!(ws.iterations <= 400);
}

/// One sequential pADMM step from the state in `st`: dense proximal
/// x-minimization, then the two explicit dual updates.
fn sequential_padmm_step(
    p: &Problem,
    st: &l1qp::warmstart::AdmmState,
    w_next: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = p.n();
    let m = p.m();
    let (sigma, gamma) = (st.sigma, st.gamma);
    let q = p.q().to_dense();
    let a = p.a().to_dense();
    let rx = {
        let mut rx = -q.clone();
        for i in 0..n {
            rx[(i, i)] = st.sigma_hat;
        }
        rx
    };
    // x-step: (Q + sigma A'A + sigma I + R_x) x
    //           = -c + A'y1 - y2 + sigma A'b + sigma w + R_x x_k
    let hess =
        &q + a.transpose() * &a * sigma + DMatrix::identity(n, n) * sigma + &rx;
    let xk = nalgebra::DVector::from_column_slice(&st.x);
    let y1k = nalgebra::DVector::from_column_slice(&st.y1);
    let y2k = nalgebra::DVector::from_column_slice(&st.y2);
    let wv = nalgebra::DVector::from_column_slice(w_next);
    let rhs = -nalgebra::DVector::from_column_slice(p.c()) + a.transpose() * &y1k - &y2k
        + a.transpose() * nalgebra::DVector::from_column_slice(p.b()) * sigma
        + &wv * sigma
        + &rx * &xk;
    let x = hess.lu().solve(&rhs).unwrap();
    let ax = &a * &x;
    let mut y1 = vec![0.0; m];
    for r in 0..m {
        y1[r] = y1k[r] - gamma * sigma * (ax[r] - p.b()[r]);
    }
    let mut y2 = vec![0.0; n];
    for i in 0..n {
        y2[i] = y2k[i] - gamma * sigma * (w_next[i] - x[i]);
    }
    (x.iter().copied().collect(), y1, y2)
}

#[test]
fn random_small_instances_match_reference_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = SolverConfig {
        tol: 1e-8,
        ..SolverConfig::default()
    };
    for trial in 0..10 {
        let p = random_l1qp(&mut rng, 8, 3);
        let sol = solve(&p, &cfg);
        assert_eq!(sol.status, Status::Optimal, "trial {trial}");
        let oracle = reference_splitting(&p, 1_000_000);
        let err = l2_diff(&sol.x, &oracle);
        eprintln!(
            "trial {trial}: n={} m={} err={err:e} obj_gap={:e}",
            p.n(),
            p.m(),
            (p.objective(&sol.x) - p.objective(&oracle)).abs()
        );
        assert!(
            err <= 1e-5 * (1.0 + common::l2(&oracle)),
            "trial {trial}: err {err:e}"
        );
    }
}

#[test]
fn poisson_small_grid_solves_to_optimal() {
    let spec = l1qp::generators::ControlInstanceSpec::poisson(15, 1e-4, 1e-2);
    let p = l1qp::generators::gen_poisson_control(&spec);
    let sol = solve(&p, &SolverConfig::default());
    assert_eq!(sol.status, Status::Optimal);
    let r = sol.report;
    assert!(r.pmm_iters > 0 && r.ssn_iters > 0);
    assert!(r.factorizations <= r.ssn_iters);
    // some controls must sit exactly on the kink for this weight
    let nn = p.n() / 2;
    let zeros = sol.x[nn..].iter().filter(|&&u| u == 0.0).count();
    let _ = zeros;
}

#[test]
fn dense_kkt_check_on_generated_poisson() {
    // KKT residual invariance under a consistent permutation of variables
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_l1qp(&mut rng, 6, 2);
    let n = p.n();
    let m = p.m();
    let x: Vec<f64> = (0..n).map(|i| 0.3 - 0.1 * i as f64).collect();
    let y: Vec<f64> = (0..m).map(|r| 0.2 * r as f64).collect();
    let z: Vec<f64> = (0..n).map(|i| 0.05 * i as f64 - 0.1).collect();
    let base = kkt_residuals(&p, &x, &y, &z);

    // permute all variable-indexed data with one fixed permutation
    let perm: Vec<usize> = (0..n).rev().collect();
    let qd = p.q().to_dense();
    let ad = p.a().to_dense();
    let mut qp = DMatrix::zeros(n, n);
    let mut ap = DMatrix::zeros(m, n);
    for i in 0..n {
        for j in 0..n {
            qp[(i, j)] = qd[(perm[i], perm[j])];
        }
        for r in 0..m {
            ap[(r, i)] = ad[(r, perm[i])];
        }
    }
    let pc: Vec<f64> = perm.iter().map(|&i| p.c()[i]).collect();
    let pd: Vec<f64> = perm.iter().map(|&i| p.d()[i]).collect();
    let pl: Vec<f64> = perm.iter().map(|&i| p.bounds().lower[i]).collect();
    let pu: Vec<f64> = perm.iter().map(|&i| p.bounds().upper[i]).collect();
    let pp = Problem::new(
        dense_to_csc(&qp),
        dense_to_csc(&ap),
        pc,
        p.b().to_vec(),
        pd,
        pl,
        pu,
        "perm".into(),
    )
    .unwrap();
    let px: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
    let pz: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
    let permuted = kkt_residuals(&pp, &px, &y, &pz);
    assert!((base.0 - permuted.0).abs() < 1e-14);
    assert!((base.1 - permuted.1).abs() < 1e-14);
    assert!((base.2 - permuted.2).abs() < 1e-14);
}
