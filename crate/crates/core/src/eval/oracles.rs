//! Closed-form marginals and bounds for the Gaussian toy models.

use nalgebra::{DMatrix, DVector};

use crate::dists::LN_2PI;

/// p(c) = N(m0, τ0²), p(x|c) = N(c, σ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateHyper {
    pub m0: f64,
    pub tau0: f64,
    pub sigma: f64,
}

impl ConjugateHyper {
    pub const STANDARD: ConjugateHyper = ConjugateHyper {
        m0: 0.0,
        tau0: 1.0,
        sigma: 1.0,
    };
}

/// ln p(X) = ln N(X; m0·1, σ²I + τ0²11ᵀ), evaluated with the
/// matrix-determinant lemma and Sherman–Morrison.
pub fn exact_conjugate_log_marginal(h: ConjugateHyper, xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (s2, t2) = (h.sigma * h.sigma, h.tau0 * h.tau0);
    let r: Vec<f64> = xs.iter().map(|x| x - h.m0).collect();
    let sum: f64 = r.iter().sum();
    let sq: f64 = r.iter().map(|v| v * v).sum();
    let log_det = n * s2.ln() + (1.0 + n * t2 / s2).ln();
    let quad = sq / s2 - t2 * sum * sum / (s2 * (s2 + n * t2));
    -0.5 * (n * LN_2PI + log_det + quad)
}

/// Posterior p(c | X) as (mean, variance).
pub fn conjugate_posterior(h: ConjugateHyper, xs: &[f64]) -> (f64, f64) {
    let precision = 1.0 / (h.tau0 * h.tau0) + xs.len() as f64 / (h.sigma * h.sigma);
    let mean =
        (h.m0 / (h.tau0 * h.tau0) + xs.iter().sum::<f64>() / (h.sigma * h.sigma)) / precision;
    (mean, 1.0 / precision)
}

/// KL[N(m1, v1) ∥ N(m2, v2)].
pub fn kl_normal(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0)
}

/// E_{q(c)}[ln p(X|c)] − KL[q ∥ p(c)] for a Gaussian q = N(m, v), in closed
/// form.
pub fn analytic_set_bound(h: ConjugateHyper, xs: &[f64], m: f64, v: f64) -> f64 {
    let s2 = h.sigma * h.sigma;
    let expected: f64 = xs
        .iter()
        .map(|x| -0.5 * (LN_2PI + s2.ln() + ((x - m).powi(2) + v) / s2))
        .sum();
    expected - kl_normal(m, v, h.m0, h.tau0 * h.tau0)
}

/// Gaussian two-level hierarchy: a ~ N(0, τ²), c ~ N(a, σc²), x ~ N(c, σx²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyHyper {
    pub tau: f64,
    pub sigma_c: f64,
    pub sigma_x: f64,
}

/// ln p of one group's elements (classes listed separately), from the dense
/// covariance of the stacked elements and its Cholesky factor.
pub fn exact_hierarchical_log_marginal(h: HierarchyHyper, classes: &[Vec<f64>]) -> f64 {
    let labels: Vec<usize> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat_n(i, c.len()))
        .collect();
    let xs: Vec<f64> = classes.iter().flatten().copied().collect();
    let n = xs.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let mut v = h.tau * h.tau;
        if labels[i] == labels[j] {
            v += h.sigma_c * h.sigma_c;
        }
        if i == j {
            v += h.sigma_x * h.sigma_x;
        }
        v
    });
    let chol = cov.cholesky().expect("covariance is positive definite");
    let x = DVector::from_column_slice(&xs);
    let alpha = chol.solve(&x);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * LN_2PI + log_det + x.dot(&alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_examples() {
        let h = ConjugateHyper::STANDARD;
        assert!((exact_conjugate_log_marginal(h, &[0.0]) + 1.265_512_123_484_645_3).abs() < 1e-12);
        assert!((exact_conjugate_log_marginal(h, &[1.0, -1.0]) + 3.387_183_21).abs() < 1e-8);
        assert!(
            (exact_conjugate_log_marginal(h, &[1.0, -1.0]) + LN_2PI + 0.5 * 3.0_f64.ln() + 1.0)
                .abs()
                < 1e-13
        );
    }

    #[test]
    fn exact_posterior_closes_the_gap() {
        let h = ConjugateHyper {
            m0: 0.5,
            tau0: 2.0,
            sigma: 0.7,
        };
        let xs = [0.3, 1.9, -0.4];
        let (m, v) = conjugate_posterior(h, &xs);
        assert!(
            (analytic_set_bound(h, &xs, m, v) - exact_conjugate_log_marginal(h, &xs)).abs() < 1e-12
        );
    }

    #[test]
    fn hierarchy_with_one_class_is_conjugate() {
        let h = HierarchyHyper {
            tau: 1.5,
            sigma_c: 0.8,
            sigma_x: 0.4,
        };
        let xs = vec![0.2, -0.7, 1.1];
        let tau0 = (h.tau * h.tau + h.sigma_c * h.sigma_c).sqrt();
        let c = ConjugateHyper {
            m0: 0.0,
            tau0,
            sigma: h.sigma_x,
        };
        let a = exact_hierarchical_log_marginal(h, std::slice::from_ref(&xs));
        assert!((a - exact_conjugate_log_marginal(c, &xs)).abs() < 1e-12);
    }
}
