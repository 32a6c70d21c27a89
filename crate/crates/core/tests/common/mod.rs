//! Reference values computed without the library: special-function series,
//! dense Gaussian marginals and brute-force integrals.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// ln Γ(x) for x > 0: shift past 40 by Γ(x+1) = xΓ(x), then Stirling's
/// series.
pub fn lgamma(x: f64) -> f64 {
    let mut y = x;
    let mut shift = 0.0;
    while y < 40.0 {
        shift -= y.ln();
        y += 1.0;
    }
    let r = 1.0 / (y * y);
    let series = (1.0 / 12.0 - r * (1.0 / 360.0 - r * (1.0 / 1260.0 - r * (1.0 / 1680.0)))) / y;
    shift + (y - 0.5) * y.ln() - y + 0.5 * LN_2PI + series
}

/// ψ(x) for x > 0: shift past 1000, then four asymptotic terms.
pub fn digamma(x: f64) -> f64 {
    let mut y = x;
    let mut shift = 0.0;
    while y < 1000.0 {
        shift -= 1.0 / y;
        y += 1.0;
    }
    let r = 1.0 / (y * y);
    shift + y.ln() - 0.5 / y - r / 12.0 + r * r / 120.0
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// ln Iν(x) for ν ∈ {0, 1} from the power series, summed in log space.
pub fn log_bessel_i(nu: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let h = (0.5 * x).ln();
    let terms: Vec<f64> = (0..400)
        .map(|k| {
            let k = k as f64;
            (2.0 * k + nu as f64) * h - lgamma(k + 1.0) - lgamma(k + nu as f64 + 1.0)
        })
        .collect();
    log_sum_exp(&terms)
}

pub fn bessel_ratio(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (log_bessel_i(1, x) - log_bessel_i(0, x)).exp()
}

/// ln N(x; mean, cov) through a Cholesky factor.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let chol = cov
        .clone()
        .cholesky()
        .expect("covariance is positive definite");
    let r = DVector::from_iterator(n, x.iter().zip(mean).map(|(a, b)| a - b));
    let sol = chol
        .l()
        .solve_lower_triangular(&r)
        .expect("nonsingular factor");
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * LN_2PI + log_det + sol.norm_squared())
}

/// ln p(X) for c ~ N(m0, τ²), x ~ N(c, σ²), as one dense Gaussian.
pub fn conjugate_log_marginal(xs: &[f64], m0: f64, tau: f64, sigma: f64) -> f64 {
    let n = xs.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        tau * tau + if i == j { sigma * sigma } else { 0.0 }
    });
    mvn_logpdf(xs, &vec![m0; n], &cov)
}

/// Posterior (mean, variance) of c given X in the same model.
pub fn conjugate_posterior(xs: &[f64], m0: f64, tau: f64, sigma: f64) -> (f64, f64) {
    let prec = 1.0 / (tau * tau) + xs.len() as f64 / (sigma * sigma);
    let mean = (m0 / (tau * tau) + xs.iter().sum::<f64>() / (sigma * sigma)) / prec;
    (mean, 1.0 / prec)
}

/// ln p of all classes of one group: a ~ N(0, τ²), c_i ~ N(a, σc²),
/// x ~ N(c_i, σx²).
pub fn hierarchy_log_marginal(classes: &[Vec<f64>], tau: f64, sc: f64, sx: f64) -> f64 {
    let labels: Vec<usize> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat_n(i, c.len()))
        .collect();
    let xs: Vec<f64> = classes.iter().flatten().copied().collect();
    let n = xs.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let mut v = tau * tau;
        if labels[i] == labels[j] {
            v += sc * sc;
        }
        if i == j {
            v += sx * sx;
        }
        v
    });
    mvn_logpdf(&xs, &vec![0.0; n], &cov)
}

/// KL[N(m1, v1) ∥ N(m2, v2)].
pub fn kl_normal(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0)
}

/// ln ∫ exp(g(c)) dc over [lo, hi] by the trapezoid rule on `n` points.
pub fn log_integral_1d(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let w: f64 = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            g(lo + h * i as f64) + w.ln()
        })
        .collect();
    log_sum_exp(&vals) + h.ln()
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
