//! Shared helpers for the integration and acceptance tests: random
//! feasible instances and two independent reference solvers (a dense
//! splitting method for whole problems, an accelerated proximal-gradient
//! method for outer-iteration sub-problems). Neither touches the
//! semismooth-Newton / MINRES path they are used to check.

#![allow(dead_code)]

use l1qp::pmm::PmmState;
use l1qp::problem::Problem;
use l1qp::sparse::CscMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

pub fn dense_to_csc(d: &DMatrix<f64>) -> CscMatrix {
    let mut triplets = Vec::new();
    for r in 0..d.nrows() {
        for c in 0..d.ncols() {
            if d[(r, c)] != 0.0 {
                triplets.push((r, c, d[(r, c)]));
            }
        }
    }
    CscMatrix::from_triplets(d.nrows(), d.ncols(), &triplets)
}

/// Random feasible l1-QP: Q = G'G/n + 0.1 I (so the objective is
/// coercive for any bound pattern), mixed finite/infinite bounds, and
/// b = A x_feas for a box-interior x_feas.
pub fn random_l1qp(rng: &mut impl Rng, n_max: usize, m_max: usize) -> Problem {
    let n = rng.random_range(2..=n_max);
    let m = rng.random_range(0..=m_max.min(n));
    let g = DMatrix::from_fn(n + 2, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.transpose() * &g / n as f64 + DMatrix::identity(n, n) * 0.1;
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(0.0..0.8)
            }
        })
        .collect();

    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut x_feas = vec![0.0; n];
    for i in 0..n {
        match rng.random_range(0..4) {
            0 => {
                let a = rng.random_range(-2.0..0.0);
                let b = rng.random_range(0.0..2.0);
                lower[i] = a;
                upper[i] = b;
            }
            1 => {
                lower[i] = rng.random_range(-2.0..0.5);
                upper[i] = f64::INFINITY;
            }
            2 => {
                lower[i] = f64::NEG_INFINITY;
                upper[i] = rng.random_range(-0.5..2.0);
            }
            _ => {
                lower[i] = f64::NEG_INFINITY;
                upper[i] = f64::INFINITY;
            }
        }
        let lo = lower[i].max(-1.0);
        let hi = upper[i].min(1.0);
        x_feas[i] = if lo < hi { rng.random_range(lo..hi) } else { lo };
    }
    let b: Vec<f64> = (&a * DVector::from_column_slice(&x_feas))
        .iter()
        .copied()
        .collect();

    Problem::new(
        dense_to_csc(&q),
        dense_to_csc(&a),
        c,
        b,
        d,
        lower,
        upper,
        "random".into(),
    )
    .unwrap()
}

/// Long-run splitting reference for the whole problem: alternate an
/// equality-constrained proximal QP step (dense KKT solve, factored
/// once) with the l1+box prox, plus a scaled dual update. Returns the
/// box-feasible iterate.
pub fn reference_splitting(p: &Problem, max_iters: usize) -> Vec<f64> {
    let n = p.n();
    let m = p.m();
    let sigma = 1.0;
    let q = p.q().to_dense();
    let a = p.a().to_dense();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n))
        .copy_from(&(q + DMatrix::identity(n, n) * sigma));
    kkt.view_mut((n, 0), (m, n)).copy_from(&a);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    let lu = kkt.lu();

    let mut w = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut rhs = DVector::zeros(n + m);
    for it in 0..max_iters {
        for i in 0..n {
            rhs[i] = sigma * (w[i] - u[i]) - p.c()[i];
        }
        for r in 0..m {
            rhs[n + r] = p.b()[r];
        }
        let sol = lu.solve(&rhs).expect("reference KKT is nonsingular");
        for i in 0..n {
            x[i] = sol[i];
        }
        let mut moved = 0.0f64;
        for i in 0..n {
            let t = x[i] + u[i];
            let shrunk = (t.abs() - p.d()[i] / sigma).max(0.0) * t.signum();
            let shrunk = if t == 0.0 { 0.0 } else { shrunk };
            let wi = shrunk.max(p.bounds().lower[i]).min(p.bounds().upper[i]);
            moved = moved.max((wi - w[i]).abs());
            w[i] = wi;
            u[i] += x[i] - w[i];
        }
        // numerically stationary long before the iteration budget
        if it > 100 && moved < 1e-15 {
            break;
        }
    }
    w
}

/// Accelerated proximal-gradient reference for one outer sub-problem
/// min phi(x) + ||Dx||_1, with phi the smooth proximal augmented
/// Lagrangian at the anchors in `s`. Returns (x*, y*) with
/// y* = y_k - beta (A x* - b).
pub fn reference_subproblem(p: &Problem, s: &PmmState, iters: usize) -> (Vec<f64>, Vec<f64>) {
    let n = p.n();
    let q = p.q().to_dense();
    let a = p.a().to_dense();
    let pen = &s.penalties;
    let beta = pen.beta;

    // grad phi(x) = c + Qx - A'y_k + beta A'(Ax - b)
    //              + (z_k + beta x) - beta Pi_K(z_k/beta + x) + (x - x_k)/rho
    let grad = |x: &DVector<f64>| -> DVector<f64> {
        let eq_gap = &a * x - DVector::from_column_slice(p.b());
        let mut g = &q * x + DVector::from_column_slice(p.c())
            - a.transpose() * DVector::from_column_slice(&s.y_anchor)
            + a.transpose() * eq_gap * beta;
        for i in 0..n {
            let w = s.z_anchor[i] / beta + x[i];
            let proj = w.max(p.bounds().lower[i]).min(p.bounds().upper[i]);
            g[i] +=
                (s.z_anchor[i] + beta * x[i]) - beta * proj + (x[i] - s.x_anchor[i]) / pen.rho;
        }
        g
    };

    let lip = {
        let qn = q.norm();
        let an = if p.m() > 0 { a.norm() } else { 0.0 };
        qn + beta * (an * an + 1.0) + 1.0 / pen.rho
    };
    let step = 1.0 / lip;

    let mut x = DVector::from_column_slice(&s.x_anchor);
    let mut x_prev = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let v = &x + (&x - &x_prev) * momentum;
        let g = grad(&v);
        let mut x_next = DVector::zeros(n);
        for i in 0..n {
            let target = v[i] - step * g[i];
            let thresh = step * p.d()[i];
            let shrunk = (target.abs() - thresh).max(0.0) * target.signum();
            x_next[i] = if target == 0.0 { 0.0 } else { shrunk };
        }
        x_prev = x;
        x = x_next;
        t = t_next;
    }
    let ax = &a * &x;
    let y: Vec<f64> = (0..p.m())
        .map(|r| s.y_anchor[r] - beta * (ax[r] - p.b()[r]))
        .collect();
    (x.iter().copied().collect(), y)
}

pub fn linf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
