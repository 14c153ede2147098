//! Finite-difference PDE-control test instances on the unit square.
//!
//! Both families discretize
//!
//! ```text
//!     minimize    (1/2)||y - y_bar||^2 + alpha1 ||u||_L1 + (alpha2/2)||u||^2
//!     subject to  (state equation)  and  u_a <= u <= u_b,
//! ```
//!
//! on an N x N interior grid with homogeneous Dirichlet boundary,
//! h = 1/(N+1), using lumped (diagonal) quadrature for every norm. The
//! decision vector stacks the state then the control, x = (y, u), so
//!
//! ```text
//!   n = 2 N^2,  m = N^2,
//!   Q = blkdiag(h^2 I, alpha2 h^2 I),  c = (-h^2 y_bar, 0),
//!   A = [K, h^2 I],  b = 0,  D = diag(0, alpha1 h^2 I),
//!   bounds: y free, u in [u_a, u_b].
//! ```
//!
//! K is the 5-point Laplacian for the Poisson family; the
//! convection-diffusion family adds first-order upwind convection for
//! the recirculating wind w = (2 x2 (1 - x1)^2, -2 x1 (1 - x2^2)),
//! which makes K nonsymmetric but keeps A full row rank.

use crate::problem::Problem;
use crate::sparse::CscMatrix;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlFamily {
    Poisson,
    ConvectionDiffusion,
}

#[derive(Debug, Clone)]
pub struct ControlInstanceSpec {
    pub family: ControlFamily,
    /// Interior grid points per dimension.
    pub grid: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Diffusion coefficient; only the convection-diffusion family uses it.
    pub epsilon: f64,
    pub bounds: (f64, f64),
}

impl ControlInstanceSpec {
    pub fn poisson(grid: usize, alpha1: f64, alpha2: f64) -> Self {
        ControlInstanceSpec {
            family: ControlFamily::Poisson,
            grid,
            alpha1,
            alpha2,
            epsilon: 0.02,
            bounds: (-2.0, 1.5),
        }
    }

    pub fn convdiff(grid: usize, alpha1: f64, alpha2: f64, epsilon: f64) -> Self {
        ControlInstanceSpec {
            family: ControlFamily::ConvectionDiffusion,
            grid,
            alpha1,
            alpha2,
            epsilon,
            bounds: (-2.0, 1.5),
        }
    }

    fn validate(&self) {
        assert!(self.grid >= 2, "grid must have at least 2 interior points");
        assert!(self.alpha1 >= 0.0 && self.alpha2 >= 0.0);
        assert!(self.bounds.0 <= self.bounds.1);
        if self.family == ControlFamily::ConvectionDiffusion {
            assert!(self.epsilon > 0.0, "diffusion coefficient must be positive");
        }
    }
}

pub fn generate(spec: &ControlInstanceSpec) -> Problem {
    match spec.family {
        ControlFamily::Poisson => gen_poisson_control(spec),
        ControlFamily::ConvectionDiffusion => gen_convdiff_control(spec),
    }
}

/// Poisson control: desired state y_bar = sin(pi x1) sin(pi x2).
pub fn gen_poisson_control(spec: &ControlInstanceSpec) -> Problem {
    spec.validate();
    let k = poisson_stiffness(spec.grid);
    assemble(spec, k, |x1, x2| (PI * x1).sin() * (PI * x2).sin(), "poisson")
}

/// Convection-diffusion control with first-order upwinding; desired
/// state is the Gaussian bump exp(-64 ((x1 - 1/2)^2 + (x2 - 1/2)^2)).
pub fn gen_convdiff_control(spec: &ControlInstanceSpec) -> Problem {
    spec.validate();
    let k = convdiff_stiffness(spec.grid, spec.epsilon);
    assemble(
        spec,
        k,
        |x1, x2| (-64.0 * ((x1 - 0.5).powi(2) + (x2 - 0.5).powi(2))).exp(),
        "convdiff",
    )
}

/// Wind field of the convection-diffusion family.
pub fn wind(x1: f64, x2: f64) -> (f64, f64) {
    (2.0 * x2 * (1.0 - x1).powi(2), -2.0 * x1 * (1.0 - x2 * x2))
}

fn grid_index(n: usize, i: usize, j: usize) -> usize {
    j * n + i
}

/// h^2-scaled negative Laplacian on the interior grid: (4, -1) stencil.
fn poisson_stiffness(n: usize) -> CscMatrix {
    let mut triplets = Vec::with_capacity(5 * n * n);
    for j in 0..n {
        for i in 0..n {
            let row = grid_index(n, i, j);
            triplets.push((row, row, 4.0));
            if i > 0 {
                triplets.push((row, grid_index(n, i - 1, j), -1.0));
            }
            if i + 1 < n {
                triplets.push((row, grid_index(n, i + 1, j), -1.0));
            }
            if j > 0 {
                triplets.push((row, grid_index(n, i, j - 1), -1.0));
            }
            if j + 1 < n {
                triplets.push((row, grid_index(n, i, j + 1), -1.0));
            }
        }
    }
    CscMatrix::from_triplets(n * n, n * n, &triplets)
}

/// h^2-scaled discretization of -(eps Laplacian y + w . grad y), with the
/// convection part upwinded so the matrix keeps positive diagonals.
fn convdiff_stiffness(n: usize, eps: f64) -> CscMatrix {
    let h = 1.0 / (n as f64 + 1.0);
    let mut triplets = Vec::with_capacity(5 * n * n);
    for j in 0..n {
        for i in 0..n {
            let row = grid_index(n, i, j);
            let (w1, w2) = wind((i as f64 + 1.0) * h, (j as f64 + 1.0) * h);
            // operator inside K is -eps Lap + v . grad with v = -w
            let (v1, v2) = (-w1, -w2);
            let diag = 4.0 * eps + h * (v1.abs() + v2.abs());
            let mut push = |ii: isize, jj: isize, val: f64| {
                // off-grid neighbors are Dirichlet-zero and drop out
                if (0..n as isize).contains(&ii) && (0..n as isize).contains(&jj) {
                    triplets.push((row, grid_index(n, ii as usize, jj as usize), val));
                }
            };
            push(i as isize - 1, j as isize, -eps - h * v1.max(0.0));
            push(i as isize + 1, j as isize, -eps - h * (-v1).max(0.0));
            push(i as isize, j as isize - 1, -eps - h * v2.max(0.0));
            push(i as isize, j as isize + 1, -eps - h * (-v2).max(0.0));
            triplets.push((row, row, diag));
        }
    }
    CscMatrix::from_triplets(n * n, n * n, &triplets)
}

fn assemble(
    spec: &ControlInstanceSpec,
    k: CscMatrix,
    desired: impl Fn(f64, f64) -> f64,
    family_tag: &str,
) -> Problem {
    let n_grid = spec.grid;
    let nn = n_grid * n_grid;
    let n = 2 * nn;
    let h = 1.0 / (n_grid as f64 + 1.0);
    let h2 = h * h;

    // Q = blkdiag(h^2 I, alpha2 h^2 I)
    let mut qdiag = vec![h2; nn];
    qdiag.extend(std::iter::repeat(spec.alpha2 * h2).take(nn));
    let q = CscMatrix::from_diagonal(&qdiag);

    // c = (-h^2 y_bar, 0)
    let mut c = vec![0.0; n];
    for j in 0..n_grid {
        for i in 0..n_grid {
            let x1 = (i as f64 + 1.0) * h;
            let x2 = (j as f64 + 1.0) * h;
            c[grid_index(n_grid, i, j)] = -h2 * desired(x1, x2);
        }
    }

    // A = [K, h^2 I]
    let mut triplets: Vec<(usize, usize, f64)> = k.iter().collect();
    for i in 0..nn {
        triplets.push((i, nn + i, h2));
    }
    let a = CscMatrix::from_triplets(nn, n, &triplets);

    let mut d = vec![0.0; nn];
    d.extend(std::iter::repeat(spec.alpha1 * h2).take(nn));

    let mut lower = vec![f64::NEG_INFINITY; nn];
    lower.extend(std::iter::repeat(spec.bounds.0).take(nn));
    let mut upper = vec![f64::INFINITY; nn];
    upper.extend(std::iter::repeat(spec.bounds.1).take(nn));

    let name = format!(
        "{family_tag}_N{}_a1_{:e}_a2_{:e}",
        n_grid, spec.alpha1, spec.alpha2
    );
    Problem::new(q, a, c, vec![0.0; nn], d, lower, upper, name)
        .expect("generated instance is always valid")
}
