//! Special functions needed by the 1D observation families.
//!
//! All functions return `NaN` outside their domain; the checked wrappers in
//! the tape report the violation with the offending node instead.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0, Lanczos approximation (g = 7, 9 terms).
pub fn lgamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ψ(x) = d/dx ln Γ(x) for x > 0.
///
/// Shifts up with ψ(x) = ψ(x+1) − 1/x until x ≥ 6, then uses the asymptotic
/// expansion in 1/x².
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - tail
}

/// ψ'(x) for x > 0. Only used as the derivative of [`digamma`] on the tape.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 6.0 {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    shift + tail
}

const BESSEL_SWITCH: f64 = 15.0;

/// ln I₀(κ) for κ ≥ 0: power series below 15, large-argument expansion above.
pub fn log_bessel_i0(kappa: f64) -> f64 {
    if !(kappa >= 0.0) {
        return f64::NAN;
    }
    if kappa < BESSEL_SWITCH {
        bessel_series(kappa, 0).ln()
    } else {
        kappa - 0.5 * (2.0 * PI * kappa).ln() + asymptotic_factor(kappa, 0).ln()
    }
}

/// I₁(κ)/I₀(κ), the derivative of ln I₀.
pub fn bessel_ratio(kappa: f64) -> f64 {
    if !(kappa >= 0.0) {
        return f64::NAN;
    }
    if kappa < BESSEL_SWITCH {
        bessel_series(kappa, 1) / bessel_series(kappa, 0)
    } else {
        asymptotic_factor(kappa, 1) / asymptotic_factor(kappa, 0)
    }
}

/// d/dκ [I₁/I₀] = 1 − r/κ − r², with the κ → 0 limit ½.
pub fn bessel_ratio_derivative(kappa: f64) -> f64 {
    if !(kappa >= 0.0) {
        return f64::NAN;
    }
    if kappa < 1e-6 {
        return 0.5 - 3.0 * kappa * kappa / 16.0;
    }
    let r = bessel_ratio(kappa);
    1.0 - r / kappa - r * r
}

/// Σ_m (κ/2)^{2m+ν} / (m! (m+ν)!) for ν ∈ {0, 1}.
fn bessel_series(kappa: f64, order: u32) -> f64 {
    let half = 0.5 * kappa;
    let q = half * half;
    let mut term = if order == 0 { 1.0 } else { half };
    let mut sum = term;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= q / (m * (m + order as f64));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// The bracketed series in I_ν(κ) ~ e^κ / √(2πκ) · Σ_k (−1)^k a_k(ν) / κ^k,
/// truncated at its smallest term.
fn asymptotic_factor(kappa: f64, order: u32) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * kappa);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// ln(1 + eˣ) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Independent reference routes, kept separate from the production
/// algorithms so the verification suite can compare one against the other.
pub mod reference {
    use std::f64::consts::PI;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    /// ln Γ via upward shift to z ≥ 30 and the Stirling series.
    pub fn lgamma_stirling(x: f64) -> f64 {
        let mut z = x;
        let mut log_prod = 0.0;
        while z < 30.0 {
            log_prod += z.ln();
            z += 1.0;
        }
        let inv = 1.0 / z;
        let inv2 = inv * inv;
        let series = inv
            * (1.0 / 12.0
                - inv2
                    * (1.0 / 360.0
                        - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
        (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series - log_prod
    }

    /// ψ(x) = −γ + Σ_{k≥0} [1/(k+1) − 1/(k+x)], first 2000 terms summed
    /// directly and the tail closed with Euler–Maclaurin.
    pub fn digamma_series(x: f64) -> f64 {
        const K: usize = 2000;
        let mut sum = 0.0;
        for k in (0..K).rev() {
            let k = k as f64;
            sum += 1.0 / (k + 1.0) - 1.0 / (k + x);
        }
        let k = K as f64;
        let f = |j: f64| 1.0 / (j + 1.0) - 1.0 / (j + x);
        let d1 = |j: f64| -1.0 / ((j + 1.0) * (j + 1.0)) + 1.0 / ((j + x) * (j + x));
        let d3 = |j: f64| -6.0 / (j + 1.0).powi(4) + 6.0 / (j + x).powi(4);
        let integral = ((k + x) / (k + 1.0)).ln();
        let tail = integral + 0.5 * f(k) - d1(k) / 12.0 + d3(k) / 720.0;
        -EULER_GAMMA + sum + tail
    }

    /// ln Σ_m (κ/2)^{2m} / (m!)², summed to convergence.
    pub fn log_bessel_i0_series(kappa: f64) -> f64 {
        let q = 0.25 * kappa * kappa;
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        let mut m = 0.0;
        while m < 1000.0 {
            m += 1.0;
            term *= q / (m * m);
            sum += term;
            if term < 1e-18 * sum && m > q.sqrt() {
                break;
            }
        }
        sum.ln()
    }

    /// I₁/I₀ from the two power series.
    pub fn bessel_ratio_series(kappa: f64) -> f64 {
        let half = 0.5 * kappa;
        let q = half * half;
        let (mut t0, mut t1) = (1.0_f64, half);
        let (mut s0, mut s1) = (t0, t1);
        let mut m = 0.0;
        while m < 1000.0 {
            m += 1.0;
            t0 *= q / (m * m);
            t1 *= q / (m * (m + 1.0));
            s0 += t0;
            s1 += t1;
            if t0 < 1e-18 * s0 && m > half {
                break;
            }
        }
        s1 / s0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!(lgamma(1.0).abs() < 1e-13);
        assert!(lgamma(2.0).abs() < 1e-13);
        assert!((lgamma(0.5) - 0.572_364_942_924_700_1).abs() < 1e-12);
        assert!((digamma(1.0) + 0.577_215_664_901_532_9).abs() < 1e-12);
        assert_eq!(log_bessel_i0(0.0), 0.0);
        assert!((log_bessel_i0(2.0) - 0.823_993_541_482_956_3).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_is_nan() {
        assert!(lgamma(0.0).is_nan());
        assert!(lgamma(-1.0).is_nan());
        assert!(digamma(-0.5).is_nan());
        assert!(log_bessel_i0(-1e-9).is_nan());
        assert!(bessel_ratio(f64::NAN).is_nan());
    }

    #[test]
    fn bessel_branches_meet() {
        let below = log_bessel_i0(BESSEL_SWITCH - 1e-9);
        let above = log_bessel_i0(BESSEL_SWITCH);
        assert!((below - above).abs() < 1e-9);
        assert!((bessel_ratio(BESSEL_SWITCH - 1e-9) - bessel_ratio(BESSEL_SWITCH)).abs() < 1e-9);
    }

    #[test]
    fn trigamma_matches_digamma_slope() {
        for &x in &[0.3, 1.0, 2.5, 7.0, 20.0] {
            let h = 1e-5;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!(
                (fd - trigamma(x)).abs() < 1e-6 * trigamma(x).max(1.0),
                "x={x}"
            );
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }
}
