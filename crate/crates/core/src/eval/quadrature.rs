//! Gauss–Hermite quadrature of the class marginal ∫ p(c) ∏ p(x|c) dc for
//! one- and two-dimensional latents.

use super::{marginal_log_likelihood, EvalError};
use crate::adiff::log_sum_exp;
use crate::model::ModelParams;

const PIM4: f64 = 0.751_125_544_464_942_5;

/// Nodes and log-weights of the n-point rule for ∫ e^{−u²} f(u) du.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut lw = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let l = std::f64::consts::LN_2 - 2.0 * pp.abs().ln();
        lw[i] = l;
        lw[n - 1 - i] = l;
    }
    (x, lw)
}

/// Integrates exp(g) over ℝᵈ (d ≤ 2) after centring on `center` with the
/// lower-triangular scale `chol` (row-major d×d).
pub fn log_integral(g: &dyn Fn(&[f64]) -> f64, center: &[f64], chol: &[f64], nodes: usize) -> f64 {
    let d = center.len();
    let (u, lw) = gauss_hermite(nodes);
    let s2 = std::f64::consts::SQRT_2;
    let log_det: f64 = (0..d).map(|i| chol[i * d + i].abs().ln()).sum::<f64>() + d as f64 * s2.ln();
    let mut terms = Vec::with_capacity(nodes.pow(d as u32));
    let mut c = vec![0.0; d];
    let mut idx = vec![0usize; d];
    loop {
        for r in 0..d {
            c[r] = center[r] + s2 * (0..=r).map(|k| chol[r * d + k] * u[idx[k]]).sum::<f64>();
        }
        let mut t = g(&c);
        for k in 0..d {
            t += lw[idx[k]] + u[idx[k]] * u[idx[k]];
        }
        if t.is_finite() {
            terms.push(t);
        }
        let mut k = 0;
        loop {
            if k == d {
                return log_sum_exp(&terms) + log_det;
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Mode and Cholesky factor of the inverse negative Hessian of `g` by damped
/// Newton steps with finite differences, starting from `start`.
pub fn laplace(
    g: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    fallback_sd: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = start.len();
    let mut c = start.to_vec();
    let mut val = g(&c);
    let h = 1e-4;
    let derivs = |c: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let f0 = g(c);
        for i in 0..d {
            let mut p = c.to_vec();
            p[i] += h;
            let fp = g(&p);
            p[i] -= 2.0 * h;
            let fm = g(&p);
            grad[i] = (fp - fm) / (2.0 * h);
            hess[i * d + i] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut q = c.to_vec();
                let mut e = |si: f64, sj: f64| {
                    q.copy_from_slice(c);
                    q[i] += si * h;
                    q[j] += sj * h;
                    g(&q)
                };
                let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h);
                hess[i * d + j] = v;
                hess[j * d + i] = v;
            }
        }
        (grad, hess)
    };
    for _ in 0..50 {
        let (grad, hess) = derivs(&c);
        let neg: Vec<f64> = hess.iter().map(|v| -v).collect();
        let step = match solve_spd(&neg, &grad) {
            Some(s) => s,
            None => grad
                .iter()
                .zip(fallback_sd)
                .map(|(g, s)| g * s * s)
                .collect(),
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-8 {
            let cand: Vec<f64> = c.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let v = g(&cand);
            if v.is_finite() && v >= val {
                moved = (v - val).abs() > 1e-13 * val.abs().max(1.0);
                c = cand;
                val = v;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (_, hess) = derivs(&c);
    let neg: Vec<f64> = hess.iter().map(|v| -v).collect();
    let chol = invert_spd(&neg)
        .and_then(|cov| cholesky(&cov))
        .unwrap_or_else(|| {
            let mut l = vec![0.0; d * d];
            for i in 0..d {
                l[i * d + i] = fallback_sd[i];
            }
            l
        });
    (c, chol)
}

fn cholesky(a: &[f64]) -> Option<Vec<f64>> {
    let d = (a.len() as f64).sqrt() as usize;
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    let l = m.cholesky()?.l();
    Some(
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| l[(i, j)])
            .collect(),
    )
}

fn solve_spd(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    let ch = nalgebra::DMatrix::from_row_slice(d, d, a).cholesky()?;
    Some(
        ch.solve(&nalgebra::DVector::from_column_slice(b))
            .iter()
            .copied()
            .collect(),
    )
}

fn invert_spd(a: &[f64]) -> Option<Vec<f64>> {
    let d = (a.len() as f64).sqrt() as usize;
    let inv = nalgebra::DMatrix::from_row_slice(d, d, a)
        .cholesky()?
        .inverse();
    Some(
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| inv[(i, j)])
            .collect(),
    )
}

/// ln p(X) of a flat model by quadrature centred on the integrand's mode.
pub fn quadrature_log_marginal(
    model: &ModelParams,
    xs: &[f64],
    nodes: usize,
) -> Result<f64, EvalError> {
    let d = model.config.latent_dim;
    if d > 2 {
        return Err(EvalError::Unsupported(format!(
            "quadrature needs a latent dimension of 1 or 2, got {d}"
        )));
    }
    if nodes < 8 {
        return Err(EvalError::Config(
            "quadrature needs at least 8 nodes".into(),
        ));
    }
    let view = model.view();
    let q = view.encode_class(xs)?;
    let g = |c: &[f64]| -> f64 {
        let mut t = view.prior_logpdf(c);
        for &x in xs {
            t += marginal_log_likelihood(&view, x, c);
        }
        t
    };
    let sd: Vec<f64> = q.log_var.iter().map(|v| (0.5 * v).exp()).collect();
    let (center, chol) = laplace(&g, &q.mean, &sd);
    Ok(log_integral(&g, &center, &chol, nodes))
}

/// Per-element −ln p(X)/|X| by quadrature.
pub fn quadrature_joint_nll(
    model: &ModelParams,
    xs: &[f64],
    nodes: usize,
) -> Result<f64, EvalError> {
    Ok(-quadrature_log_marginal(model, xs, nodes)? / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_moments() {
        // ∫ e^{−u²} u^{2k} du = Γ(k + ½)
        for n in [8, 20, 64, 128] {
            let (u, lw) = gauss_hermite(n);
            for k in 0..4 {
                let s: f64 = u
                    .iter()
                    .zip(&lw)
                    .map(|(x, l)| l.exp() * x.powi(2 * k))
                    .sum();
                let exact = crate::adiff::special::lgamma(k as f64 + 0.5).exp();
                assert!(
                    (s - exact).abs() < 1e-11 * exact,
                    "n={n} k={k}: {s} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gaussian_integrand_is_exact() {
        let g = |c: &[f64]| -0.5 * (c[0] - 1.0).powi(2) / 4.0 - 0.5 * c[1].powi(2);
        let (m, l) = laplace(&g, &[0.0, 0.3], &[1.0, 1.0]);
        let v = log_integral(&g, &m, &l, 10);
        // √(2π·4)·√(2π) = 4π
        assert!((v - (4.0 * std::f64::consts::PI).ln()).abs() < 1e-8, "{v}");
    }
}
