//! Block-diagonal preconditioner for the reduced Newton system, with
//! factorization reuse and dense spectral diagnostics.
//!
//! The reduced saddle-point matrix is preconditioned by
//!
//! ```text
//!   M_tilde = [ Diag(H)_(Bh,Bh)                0              ]
//!             [ 0                A_Bh E A_Bh' + 1/beta I_m    ]
//! ```
//!
//! where the dropping matrix E keeps 1/Diag(H)_ii exactly on the Bh
//! indices that are also box-interior and zeroes the rest, yielding a
//! sparse approximation of the Schur complement whose Cholesky factor
//! is reused as long as neither the masks nor beta change. Both blocks
//! are positive definite for any beta > 0, so MINRES applies.

use crate::pmm::PenaltyState;
use crate::problem::Problem;
use crate::sparse::{factorize_spd, Factorization, SparseError};
use crate::ssn::ActiveSets;
use std::fmt;
use thiserror::Error;

/// Reusable preconditioner; `apply_inv` maps a reduced-space vector
/// through the inverse of both diagonal blocks.
#[derive(Debug)]
pub struct Preconditioner {
    diag_h_inv: Vec<f64>,
    schur_factor: Option<Factorization>,
    // fingerprint for reuse
    b_mask: Vec<bool>,
    bhat_mask: Vec<bool>,
    beta: f64,
}

impl Preconditioner {
    /// Exact mask and beta equality; no "small change" tolerance.
    pub fn matches(&self, sets: &ActiveSets, beta: f64) -> bool {
        self.beta == beta && self.b_mask == sets.b_mask && self.bhat_mask == sets.bhat_mask
    }

    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        self.apply_inv_with_diag(&self.diag_h_inv, v, out);
    }

    /// Applies the inverse with a replacement diagonal block. The Schur
    /// block is m x m for any mask selection, so a refined reduced system
    /// of a different dimension can reuse the cached factorization and
    /// only swap in its own (free to compute) diagonal.
    pub fn apply_inv_with_diag(&self, diag_h_inv: &[f64], v: &[f64], out: &mut [f64]) {
        let nb = diag_h_inv.len();
        debug_assert_eq!(v.len(), out.len());
        for i in 0..nb {
            out[i] = v[i] * diag_h_inv[i];
        }
        if let Some(f) = &self.schur_factor {
            let mut rhs = v[nb..].to_vec();
            f.solve_in_place(&mut rhs);
            out[nb..].copy_from_slice(&rhs);
        }
    }
}

/// Diagonal of H restricted to the Bh indices:
/// Q_ii + beta + 1/rho - beta * [i box-interior].
pub fn diag_h_bhat(p: &Problem, sets: &ActiveSets, pen: &PenaltyState) -> Vec<f64> {
    let qdiag = p.q().diagonal();
    sets.bhat_indices
        .iter()
        .map(|&i| qdiag[i] + pen.beta + 1.0 / pen.rho - if sets.b_mask[i] { pen.beta } else { 0.0 })
        .collect()
}

/// Dropping matrix E (diagonal over the Bh indices): 1/Diag(H)_ii where
/// the index is also box-interior, zero otherwise.
pub fn build_e(sets: &ActiveSets, diag_h: &[f64]) -> Vec<f64> {
    debug_assert_eq!(diag_h.len(), sets.bhat_indices.len());
    sets.bhat_indices
        .iter()
        .zip(diag_h)
        .map(|(&i, &h)| {
            debug_assert!(h > 0.0);
            if sets.b_mask[i] {
                1.0 / h
            } else {
                0.0
            }
        })
        .collect()
}

/// Makes sure `cache` holds a preconditioner for (sets, beta); returns
/// true when a fresh factorization was computed, false on a cache hit.
pub fn ensure_preconditioner(
    p: &Problem,
    sets: &ActiveSets,
    pen: &PenaltyState,
    cache: &mut Option<Preconditioner>,
) -> Result<bool, SparseError> {
    if let Some(pc) = cache.as_ref() {
        if pc.matches(sets, pen.beta) {
            return Ok(false);
        }
    }

    let diag_h = diag_h_bhat(p, sets, pen);
    let e = build_e(sets, &diag_h);
    let schur_factor = if p.m() > 0 {
        let mut weights = vec![0.0; p.n()];
        for (i, &b) in sets.bhat_indices.iter().enumerate() {
            weights[b] = e[i];
        }
        let schur = p.a().weighted_aat_plus_diag(&weights, 1.0 / pen.beta);
        Some(factorize_spd(&schur)?)
    } else {
        None
    };

    *cache = Some(Preconditioner {
        diag_h_inv: diag_h.iter().map(|h| 1.0 / h).collect(),
        schur_factor,
        b_mask: sets.b_mask.clone(),
        bhat_mask: sets.bhat_mask.clone(),
        beta: pen.beta,
    });
    Ok(true)
}

#[derive(Error, Debug)]
pub enum DiagnosticError {
    #[error("instance too large for dense spectral diagnostics: |Bh| + m = {0} > {1}")]
    TooLarge(usize, usize),
    #[error("diagnostic factorization failed: block not positive definite")]
    Singular,
}

/// Dense-eigendecomposition guard for the diagnostics.
pub const SPECTRAL_DIM_LIMIT: usize = 400;

/// Spectral diagnostics of one preconditioned reduced system: the
/// preconditioned Schur complement spectrum against its guaranteed
/// enclosure [1, 1 + sigma_max(A)^2 / (1 + tau / beta^2)], and the
/// preconditioned saddle-point spectrum against the interval union
///
/// ```text
///   I- = [-beta_H - sqrt(beta_NE), -alpha_H]
///   I+ = [1 / (1 + beta_H), 1 + sqrt(beta_NE - 1)]
/// ```
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub bhat_len: usize,
    pub m: usize,
    pub schur_eig_min: f64,
    pub schur_eig_max: f64,
    pub schur_upper_bound: f64,
    pub schur_in_bounds: bool,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub alpha_ne: f64,
    pub beta_ne: f64,
    pub interval_neg: (f64, f64),
    pub interval_pos: (f64, f64),
    pub kkt_eig_min: f64,
    pub kkt_eig_max: f64,
    pub kkt_in_intervals: bool,
}

impl fmt::Display for SpectralReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reduced_dim = {}", self.bhat_len + self.m)?;
        writeln!(f, "bhat = {}", self.bhat_len)?;
        writeln!(f, "m = {}", self.m)?;
        writeln!(
            f,
            "schur_spectrum = [{:.6e}, {:.6e}]",
            self.schur_eig_min, self.schur_eig_max
        )?;
        writeln!(
            f,
            "schur_bound = [1, {:.6e}]  contained = {}",
            self.schur_upper_bound, self.schur_in_bounds
        )?;
        writeln!(
            f,
            "alpha_H = {:.6e}  beta_H = {:.6e}  alpha_NE = {:.6e}  beta_NE = {:.6e}",
            self.alpha_h, self.beta_h, self.alpha_ne, self.beta_ne
        )?;
        writeln!(
            f,
            "interval_neg = [{:.6e}, {:.6e}]",
            self.interval_neg.0, self.interval_neg.1
        )?;
        writeln!(
            f,
            "interval_pos = [{:.6e}, {:.6e}]",
            self.interval_pos.0, self.interval_pos.1
        )?;
        writeln!(
            f,
            "kkt_spectrum = [{:.6e}, {:.6e}]  contained = {}",
            self.kkt_eig_min, self.kkt_eig_max, self.kkt_in_intervals
        )
    }
}

const LEMMA_SLACK: f64 = 1e-10;
const INTERVAL_SLACK: f64 = 1e-8;

pub fn spectral_diagnostic(
    p: &Problem,
    sets: &ActiveSets,
    pen: &PenaltyState,
) -> Result<SpectralReport, DiagnosticError> {
    let nb = sets.bhat_indices.len();
    let m = p.m();
    if nb + m > SPECTRAL_DIM_LIMIT {
        return Err(DiagnosticError::TooLarge(nb + m, SPECTRAL_DIM_LIMIT));
    }

    // Dense pieces of the reduced system.
    let qd = p.q().to_dense();
    let ad = p.a().to_dense();
    let mut h = nalgebra::DMatrix::zeros(nb, nb);
    for (ri, &i) in sets.bhat_indices.iter().enumerate() {
        for (ci, &j) in sets.bhat_indices.iter().enumerate() {
            h[(ri, ci)] = qd[(i, j)];
        }
        h[(ri, ri)] += pen.beta + 1.0 / pen.rho - if sets.b_mask[i] { pen.beta } else { 0.0 };
    }
    let mut a_bhat = nalgebra::DMatrix::zeros(m, nb);
    for (ci, &j) in sets.bhat_indices.iter().enumerate() {
        for r in 0..m {
            a_bhat[(r, ci)] = ad[(r, j)];
        }
    }
    let diag_h: Vec<f64> = (0..nb).map(|i| h[(i, i)]).collect();
    let e = build_e(sets, &diag_h);

    let mut s_hat = nalgebra::DMatrix::identity(m, m) / pen.beta;
    let mut s_til = s_hat.clone();
    for c in 0..nb {
        let col = a_bhat.column(c);
        for r1 in 0..m {
            for r2 in 0..m {
                s_hat[(r1, r2)] += col[r1] * col[r2] / diag_h[c];
                s_til[(r1, r2)] += col[r1] * col[r2] * e[c];
            }
        }
    }

    // Spectrum of S_til^-1 S_hat via the symmetric congruence.
    let schur_eigs = generalized_sym_eigs(&s_hat, &s_til)?;
    let (schur_eig_min, schur_eig_max) = minmax(&schur_eigs, 1.0);
    let sigma_max = if m == 0 || p.n() == 0 {
        0.0
    } else {
        ad.singular_values().max()
    };
    let schur_upper_bound = 1.0 + sigma_max * sigma_max / (1.0 + pen.tau / (pen.beta * pen.beta));
    let schur_in_bounds = schur_eigs
        .iter()
        .all(|&l| l >= 1.0 - LEMMA_SLACK && l <= schur_upper_bound + LEMMA_SLACK);

    // H_bar = Diag(H)^-1/2 H Diag(H)^-1/2 and its extreme eigenvalues.
    let (alpha_h, beta_h) = if nb == 0 {
        (1.0, 1.0)
    } else {
        let mut hbar = h.clone();
        for r in 0..nb {
            for c in 0..nb {
                hbar[(r, c)] /= (diag_h[r] * diag_h[c]).sqrt();
            }
        }
        let eigs = sym_eigs(&hbar);
        minmax(&eigs, 1.0)
    };
    let (alpha_ne, beta_ne) = (schur_eig_min, schur_eig_max);

    let interval_neg = (-beta_h - beta_ne.sqrt(), -alpha_h);
    let interval_pos = (1.0 / (1.0 + beta_h), 1.0 + (beta_ne - 1.0).max(0.0).sqrt());

    // Preconditioned saddle-point spectrum.
    let dim = nb + m;
    let mut m_hat = nalgebra::DMatrix::zeros(dim, dim);
    let mut m_til = nalgebra::DMatrix::zeros(dim, dim);
    for r in 0..nb {
        for c in 0..nb {
            m_hat[(r, c)] = -h[(r, c)];
        }
        m_til[(r, r)] = diag_h[r];
    }
    for r in 0..m {
        for c in 0..nb {
            m_hat[(nb + r, c)] = a_bhat[(r, c)];
            m_hat[(c, nb + r)] = a_bhat[(r, c)];
        }
        for c in 0..m {
            m_til[(nb + r, nb + c)] = s_til[(r, c)];
        }
        m_hat[(nb + r, nb + r)] += 1.0 / pen.beta;
    }
    let kkt_eigs = generalized_sym_eigs(&m_hat, &m_til)?;
    let (kkt_eig_min, kkt_eig_max) = minmax(&kkt_eigs, 1.0);
    let kkt_in_intervals = kkt_eigs.iter().all(|&l| {
        (l >= interval_neg.0 - INTERVAL_SLACK && l <= interval_neg.1 + INTERVAL_SLACK)
            || (l >= interval_pos.0 - INTERVAL_SLACK && l <= interval_pos.1 + INTERVAL_SLACK)
    });

    Ok(SpectralReport {
        bhat_len: nb,
        m,
        schur_eig_min,
        schur_eig_max,
        schur_upper_bound,
        schur_in_bounds,
        alpha_h,
        beta_h,
        alpha_ne,
        beta_ne,
        interval_neg,
        interval_pos,
        kkt_eig_min,
        kkt_eig_max,
        kkt_in_intervals,
    })
}

/// Eigenvalues of B^-1 A for symmetric A and SPD B, via L^-1 A L^-T.
fn generalized_sym_eigs(
    a: &nalgebra::DMatrix<f64>,
    b: &nalgebra::DMatrix<f64>,
) -> Result<Vec<f64>, DiagnosticError> {
    let dim = a.nrows();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let chol = nalgebra::Cholesky::new(b.clone()).ok_or(DiagnosticError::Singular)?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or(DiagnosticError::Singular)?;
    let w = &linv * a * linv.transpose();
    Ok(sym_eigs(&w))
}

fn sym_eigs(a: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().copied().collect()
}

fn minmax(v: &[f64], empty: f64) -> (f64, f64) {
    if v.is_empty() {
        return (empty, empty);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmm::PenaltyState;
    use crate::sparse::CscMatrix;
    use crate::ssn::ActiveSets;

    fn sets(b: Vec<bool>, bh: Vec<bool>) -> ActiveSets {
        let bhat_indices = bh
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| t.then_some(i))
            .collect();
        ActiveSets {
            b_mask: b,
            bhat_mask: bh,
            bhat_indices,
        }
    }

    fn toy_problem() -> Problem {
        let q = CscMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 1.0),
                (1, 1, 0.5),
                (2, 2, 2.0),
                (0, 1, 0.2),
                (1, 0, 0.2),
            ],
        );
        let a = CscMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 1.0), (1, 1, 1.0)]);
        Problem::new(
            q,
            a,
            vec![0.0; 3],
            vec![0.0; 2],
            vec![0.1, 0.0, 0.2],
            vec![-1.0; 3],
            vec![1.0; 3],
            "toy".into(),
        )
        .unwrap()
    }

    #[test]
    fn build_e_no_dropping_when_all_interior() {
        let s = sets(vec![true; 3], vec![true; 3]);
        let diag_h = vec![2.0, 4.0, 8.0];
        assert_eq!(build_e(&s, &diag_h), vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn build_e_full_dropping_when_none_interior() {
        let s = sets(vec![false; 3], vec![true; 3]);
        let diag_h = vec![2.0, 4.0, 8.0];
        assert_eq!(build_e(&s, &diag_h), vec![0.0; 3]);
    }

    #[test]
    fn build_e_mixed_masks_per_entry_table() {
        // duplicate of the per-entry case split
        let b = vec![true, false, true];
        let bh = vec![true, true, false];
        let s = sets(b.clone(), bh);
        let diag_h = vec![2.0, 4.0];
        let e = build_e(&s, &diag_h);
        for (i, &bi) in s.bhat_indices.iter().enumerate() {
            let want = if b[bi] { 1.0 / diag_h[i] } else { 0.0 };
            assert_eq!(e[i], want);
        }
    }

    #[test]
    fn cache_hit_on_identical_masks_and_beta() {
        let p = toy_problem();
        let pen = PenaltyState::new(1e2, 5e2);
        let s = sets(vec![true, true, false], vec![true, true, true]);
        let mut cache = None;
        assert!(ensure_preconditioner(&p, &s, &pen, &mut cache).unwrap());
        assert!(!ensure_preconditioner(&p, &s, &pen, &mut cache).unwrap());
    }

    #[test]
    fn cache_miss_on_single_mask_change() {
        let p = toy_problem();
        let pen = PenaltyState::new(1e2, 5e2);
        let s1 = sets(vec![true, true, false], vec![true, true, true]);
        let s2 = sets(vec![true, false, false], vec![true, true, true]);
        let mut cache = None;
        assert!(ensure_preconditioner(&p, &s1, &pen, &mut cache).unwrap());
        assert!(ensure_preconditioner(&p, &s2, &pen, &mut cache).unwrap());
    }

    #[test]
    fn cache_miss_on_beta_change() {
        let p = toy_problem();
        let mut pen = PenaltyState::new(1e2, 5e2);
        let s = sets(vec![true; 3], vec![true; 3]);
        let mut cache = None;
        assert!(ensure_preconditioner(&p, &s, &pen, &mut cache).unwrap());
        pen.beta *= 2.0;
        pen.rho *= 2.0;
        assert!(ensure_preconditioner(&p, &s, &pen, &mut cache).unwrap());
    }

    #[test]
    fn apply_inv_is_symmetric_and_positive() {
        let p = toy_problem();
        let pen = PenaltyState::new(1e2, 5e2);
        let s = sets(vec![true, false, true], vec![true, true, true]);
        let mut cache = None;
        ensure_preconditioner(&p, &s, &pen, &mut cache).unwrap();
        let pc = cache.as_ref().unwrap();
        let dim = 3 + 2;
        let va = [0.3, -0.5, 0.9, 0.1, -0.7];
        let vb = [1.0, 0.2, -0.4, 0.8, 0.6];
        let mut pa = vec![0.0; dim];
        let mut pb = vec![0.0; dim];
        pc.apply_inv(&va, &mut pa);
        pc.apply_inv(&vb, &mut pb);
        let left: f64 = pa.iter().zip(&vb).map(|(a, b)| a * b).sum();
        let right: f64 = va.iter().zip(&pb).map(|(a, b)| a * b).sum();
        assert!((left - right).abs() < 1e-12 * (1.0 + left.abs()));
        let quad: f64 = pa.iter().zip(&va).map(|(a, b)| a * b).sum();
        assert!(quad > 0.0);
    }

    #[test]
    fn identity_case_gives_unit_schur_spectrum() {
        // Q = 0, A with orthonormal rows, everything active: S_hat = S_til
        let q = CscMatrix::zeros(2, 2);
        let a = CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0)]);
        let p = Problem::new(
            q,
            a,
            vec![0.0; 2],
            vec![0.0],
            vec![0.0; 2],
            vec![-1.0; 2],
            vec![1.0; 2],
            "orth".into(),
        )
        .unwrap();
        let pen = PenaltyState::new(1e2, 5e2);
        let s = sets(vec![true; 2], vec![true; 2]);
        let rep = spectral_diagnostic(&p, &s, &pen).unwrap();
        assert!((rep.schur_eig_min - 1.0).abs() < 1e-12);
        assert!((rep.schur_eig_max - 1.0).abs() < 1e-12);
        assert!(rep.schur_in_bounds);
        assert!(rep.kkt_in_intervals);
    }

    #[test]
    fn too_large_guard_fires() {
        let n = 500;
        let q = CscMatrix::zeros(n, n);
        let a = CscMatrix::zeros(0, n);
        let p = Problem::new(
            q,
            a,
            vec![0.0; n],
            vec![],
            vec![0.0; n],
            vec![-1.0; n],
            vec![1.0; n],
            "big".into(),
        )
        .unwrap();
        let pen = PenaltyState::new(1e2, 5e2);
        let s = sets(vec![true; n], vec![true; n]);
        match spectral_diagnostic(&p, &s, &pen) {
            Err(DiagnosticError::TooLarge(_, _)) => {}
            other => panic!("expected TooLarge, got {other:?}"),
        }
    }
}
