//! Closed-form proximal operators, projections, and subdifferential
//! projections shared by every layer of the solver.
//!
//! The regularizer throughout is g(x) = ||Dx||_1 with D diagonal and
//! nonnegative, represented by its diagonal `d`.

/// Box K = {x : l <= x <= u}; entries may be -inf / +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> BoxSet {
        assert_eq!(lower.len(), upper.len());
        debug_assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
        BoxSet { lower, upper }
    }

    /// Unbounded box of dimension n.
    pub fn free(n: usize) -> BoxSet {
        BoxSet {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Component i lies strictly inside (l_i, u_i).
    pub fn strictly_inside(&self, i: usize, v: f64) -> bool {
        self.lower[i] < v && v < self.upper[i]
    }
}

/// sign with sign(0) = 0, so the dead-zone branch is deterministic.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// prox_{zeta g}(w), componentwise max{|w_i| - zeta d_i, 0} sign(w_i).
pub fn soft_threshold(w: &[f64], zeta: f64, d: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), d.len());
    debug_assert!(zeta > 0.0);
    w.iter()
        .zip(d)
        .map(|(&wi, &di)| (wi.abs() - zeta * di).max(0.0) * sign(wi))
        .collect()
}

/// Euclidean projection onto the box.
pub fn project_box(w: &[f64], k: &BoxSet) -> Vec<f64> {
    debug_assert_eq!(w.len(), k.len());
    w.iter()
        .enumerate()
        .map(|(i, &wi)| wi.max(k.lower[i]).min(k.upper[i]))
        .collect()
}

/// prox of the scaled conjugate indicator, via the Moreau identity:
/// prox_{beta delta_K^*}(v) = v - beta Pi_K(v / beta).
pub fn prox_conjugate_box(v: &[f64], beta: f64, k: &BoxSet) -> Vec<f64> {
    debug_assert!(beta > 0.0);
    debug_assert_eq!(v.len(), k.len());
    v.iter()
        .enumerate()
        .map(|(i, &vi)| {
            let scaled = vi / beta;
            vi - beta * scaled.max(k.lower[i]).min(k.upper[i])
        })
        .collect()
}

/// Projection of v onto the subdifferential of g at x, componentwise:
/// onto [-d_i, d_i] where x_i = 0, onto {d_i sign(x_i)} otherwise.
/// x_i counts as zero only when bit-equal to 0; the soft-thresholding
/// updates produce exact zeros, so kink detection is exact.
pub fn project_subdiff_g(v: &[f64], x: &[f64], d: &[f64]) -> Vec<f64> {
    debug_assert_eq!(v.len(), x.len());
    debug_assert_eq!(v.len(), d.len());
    v.iter()
        .zip(x)
        .zip(d)
        .map(|((&vi, &xi), &di)| {
            if xi == 0.0 {
                vi.max(-di).min(di)
            } else {
                di * sign(xi)
            }
        })
        .collect()
}
