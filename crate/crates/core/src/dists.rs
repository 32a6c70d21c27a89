//! Observation families, diagonal Gaussian latents, and their KLs.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiff::{log_sum_exp, Real};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Size of the discrete family's alphabet {1, …, 8}.
pub const DISCRETE_SYMBOLS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("{x} is outside the support of the {family} family")]
    OutOfSupport { family: Family, x: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid {family} parameters: {reason}")]
    InvalidParams { family: Family, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Mixture2,
    VonMises,
    Gamma,
    Discrete,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Gaussian,
        Family::Mixture2,
        Family::VonMises,
        Family::Gamma,
        Family::Discrete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Mixture2 => "mixture2",
            Family::VonMises => "von_mises",
            Family::Gamma => "gamma",
            Family::Discrete => "discrete",
        }
    }

    /// Whether `x` is an admissible observation. Von Mises observations are
    /// expected to be wrapped already.
    pub fn in_support(self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            Family::Gaussian | Family::Mixture2 => true,
            Family::VonMises => x > -PI && x <= PI,
            Family::Gamma => x > 0.0,
            Family::Discrete => x.fract() == 0.0 && (1.0..=DISCRETE_SYMBOLS as f64).contains(&x),
        }
    }

    pub fn check_support(self, x: f64) -> Result<(), DistError> {
        if self.in_support(x) {
            Ok(())
        } else {
            Err(DistError::OutOfSupport { family: self, x })
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown family '{s}' (expected one of gaussian, mixture2, von_mises, gamma, discrete)"))
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Concrete parameters of one class distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    /// Even mixture of N(center ± half_sep, sigma²).
    Mixture2 {
        center: f64,
        half_sep: f64,
        sigma: f64,
    },
    VonMises {
        mu: f64,
        kappa: f64,
    },
    /// Shape α, rate β.
    Gamma {
        alpha: f64,
        beta: f64,
    },
    /// Probabilities of symbols 1..=8.
    Discrete {
        probs: Vec<f64>,
    },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Gaussian { .. } => Family::Gaussian,
            FamilyParams::Mixture2 { .. } => Family::Mixture2,
            FamilyParams::VonMises { .. } => Family::VonMises,
            FamilyParams::Gamma { .. } => Family::Gamma,
            FamilyParams::Discrete { .. } => Family::Discrete,
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        let family = self.family();
        let bad = |reason: &str| {
            Err(DistError::InvalidParams {
                family,
                reason: reason.to_string(),
            })
        };
        match *self {
            FamilyParams::Gaussian { mu, sigma } => {
                if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
                    return bad("need finite mu and sigma > 0");
                }
            }
            FamilyParams::Mixture2 {
                center,
                half_sep,
                sigma,
            } => {
                if !center.is_finite()
                    || !half_sep.is_finite()
                    || !(sigma > 0.0)
                    || !sigma.is_finite()
                {
                    return bad("need finite center/half_sep and sigma > 0");
                }
            }
            FamilyParams::VonMises { mu, kappa } => {
                if !mu.is_finite() || !(kappa >= 0.0) || !kappa.is_finite() {
                    return bad("need finite mu and kappa >= 0");
                }
            }
            FamilyParams::Gamma { alpha, beta } => {
                if !(alpha > 0.0) || !(beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return bad("need alpha > 0 and beta > 0");
                }
            }
            FamilyParams::Discrete { ref probs } => {
                if probs.len() != DISCRETE_SYMBOLS {
                    return bad("need exactly 8 probabilities");
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return bad("probabilities must be non-negative");
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad("probabilities must sum to 1");
                }
            }
        }
        Ok(())
    }

    /// Log density (or log mass for the discrete family) at `x`.
    pub fn logpdf(&self, x: f64) -> Result<f64, DistError> {
        self.family().check_support(x)?;
        Ok(self.as_decoded().log_density(x))
    }

    pub fn as_decoded(&self) -> Decoded<f64> {
        match *self {
            FamilyParams::Gaussian { mu, sigma } => Decoded::Gaussian { mu, sigma },
            FamilyParams::Mixture2 {
                center,
                half_sep,
                sigma,
            } => Decoded::Mixture2 {
                center,
                half_sep,
                sigma,
            },
            FamilyParams::VonMises { mu, kappa } => Decoded::VonMises { mu, kappa },
            FamilyParams::Gamma { alpha, beta } => Decoded::Gamma { alpha, beta },
            FamilyParams::Discrete { ref probs } => Decoded::Discrete {
                log_probs: probs.iter().map(|p| p.ln()).collect(),
            },
        }
    }

    /// Draws one observation. Gamma uses Marsaglia–Tsang, von Mises uses
    /// Best–Fisher rejection.
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        match *self {
            FamilyParams::Gaussian { mu, sigma } => {
                mu + sigma * rng.sample::<f64, _>(StandardNormal)
            }
            FamilyParams::Mixture2 {
                center,
                half_sep,
                sigma,
            } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                center + sign * half_sep + sigma * rng.sample::<f64, _>(StandardNormal)
            }
            FamilyParams::VonMises { mu, kappa } => sample_von_mises(mu, kappa, rng),
            FamilyParams::Gamma { alpha, beta } => sample_gamma(alpha, rng) / beta,
            FamilyParams::Discrete { ref probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return (i + 1) as f64;
                    }
                }
                // rounding left u above the running total; take the last symbol with mass
                let last = probs
                    .iter()
                    .rposition(|&p| p > 0.0)
                    .unwrap_or(DISCRETE_SYMBOLS - 1);
                (last + 1) as f64
            }
        }
    }
}

/// Marsaglia–Tsang sampler for Gamma(α, 1).
fn sample_gamma<G: Rng + ?Sized>(alpha: f64, rng: &mut G) -> f64 {
    if alpha < 1.0 {
        // boost: Gamma(α) = Gamma(α + 1) · U^{1/α}
        let u: f64 = rng.random();
        return sample_gamma(alpha + 1.0, rng) * u.powf(1.0 / alpha);
    }
    let d = alpha - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        if u < 1.0 - 0.0331 * z.powi(4) || u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Best–Fisher rejection sampler, result wrapped into (−π, π].
fn sample_von_mises<G: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut G) -> f64 {
    if kappa < 1e-8 {
        return wrap_angle(PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        let u2: f64 = rng.random();
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let theta = if u3 > 0.5 { f.acos() } else { -f.acos() };
            return wrap_angle(mu + theta);
        }
    }
}

/// Family parameters as (possibly differentiable) values, produced by a
/// decoder link. Fixed scalars stay plain `f64`.
#[derive(Debug, Clone)]
pub enum Decoded<R> {
    Gaussian {
        mu: R,
        sigma: R,
    },
    Mixture2 {
        center: R,
        half_sep: f64,
        sigma: f64,
    },
    VonMises {
        mu: R,
        kappa: R,
    },
    Gamma {
        alpha: R,
        beta: f64,
    },
    Discrete {
        log_probs: Vec<R>,
    },
}

impl<R: Real> Decoded<R> {
    /// Log density at an in-support `x`; support is the caller's concern.
    pub fn log_density(&self, x: f64) -> R {
        match self {
            Decoded::Gaussian { mu, sigma } => gaussian_logpdf(x, *mu, *sigma),
            Decoded::Mixture2 {
                center,
                half_sep,
                sigma,
            } => {
                let lo = gaussian_logpdf_fixed_scale(x, *center - *half_sep, *sigma);
                let hi = gaussian_logpdf_fixed_scale(x, *center + *half_sep, *sigma);
                log_sum_exp(&[lo, hi]) - std::f64::consts::LN_2
            }
            Decoded::VonMises { mu, kappa } => {
                let c = (*mu * -1.0 + x).cos();
                *kappa * c - kappa.log_bessel_i0() - LN_2PI
            }
            Decoded::Gamma { alpha, beta } => {
                *alpha * beta.ln() + (*alpha - 1.0) * x.ln() - alpha.lgamma() - beta * x
            }
            Decoded::Discrete { log_probs } => {
                let idx = x as usize - 1;
                log_probs[idx]
            }
        }
    }

    pub fn to_params(&self) -> FamilyParams {
        match self {
            Decoded::Gaussian { mu, sigma } => FamilyParams::Gaussian {
                mu: mu.value(),
                sigma: sigma.value(),
            },
            Decoded::Mixture2 {
                center,
                half_sep,
                sigma,
            } => FamilyParams::Mixture2 {
                center: center.value(),
                half_sep: *half_sep,
                sigma: *sigma,
            },
            Decoded::VonMises { mu, kappa } => FamilyParams::VonMises {
                mu: mu.value(),
                kappa: kappa.value(),
            },
            Decoded::Gamma { alpha, beta } => FamilyParams::Gamma {
                alpha: alpha.value(),
                beta: *beta,
            },
            Decoded::Discrete { log_probs } => FamilyParams::Discrete {
                probs: log_probs.iter().map(|l| l.value().exp()).collect(),
            },
        }
    }
}

/// ln N(x; μ, σ²) with differentiable μ and σ.
pub fn gaussian_logpdf<R: Real>(x: f64, mu: R, sigma: R) -> R {
    let z = (mu * -1.0 + x) / sigma;
    z.square() * -0.5 - sigma.ln() - 0.5 * LN_2PI
}

fn gaussian_logpdf_fixed_scale<R: Real>(x: f64, mu: R, sigma: f64) -> R {
    let z = (mu * -1.0 + x) / sigma;
    z.square() * -0.5 - (sigma.ln() + 0.5 * LN_2PI)
}

/// Diagonal Gaussian over a latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<R> {
    pub mean: Vec<R>,
    pub log_var: Vec<R>,
}

impl<R: Real> GaussianPosterior<R> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn values(&self) -> GaussianPosterior<f64> {
        GaussianPosterior {
            mean: self.mean.iter().map(|v| v.value()).collect(),
            log_var: self.log_var.iter().map(|v| v.value()).collect(),
        }
    }

    /// ln q(z) for a (possibly differentiable) point `z`.
    pub fn logpdf(&self, z: &[R]) -> R {
        diag_gaussian_logpdf(z, &self.mean, &self.log_var)
    }
}

impl GaussianPosterior<f64> {
    pub fn standard(dim: usize) -> Self {
        GaussianPosterior {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }
}

/// Σᵢ ln N(zᵢ; mᵢ, exp(vᵢ)).
pub fn diag_gaussian_logpdf<R: Real>(z: &[R], mean: &[R], log_var: &[R]) -> R {
    let mut acc: Option<R> = None;
    for ((&zi, &mi), &vi) in z.iter().zip(mean).zip(log_var) {
        let term = ((zi - mi).square() / vi.exp() + vi + LN_2PI) * -0.5;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc.expect("zero-dimensional latent")
}

/// Σᵢ ln N(zᵢ; 0, 1).
pub fn standard_normal_logpdf<R: Real>(z: &[R]) -> R {
    let sq = z
        .iter()
        .skip(1)
        .fold(z[0].square(), |a, &zi| a + zi.square());
    sq * -0.5 - 0.5 * LN_2PI * z.len() as f64
}

/// KL(q ‖ p) between diagonal Gaussians.
pub fn gaussian_kl<R: Real>(
    q: &GaussianPosterior<R>,
    p: &GaussianPosterior<R>,
) -> Result<R, DistError> {
    if q.dim() != p.dim() {
        return Err(DistError::Dimension {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mut acc: Option<R> = None;
    for i in 0..q.dim() {
        let (mq, vq, mp, vp) = (q.mean[i], q.log_var[i], p.mean[i], p.log_var[i]);
        // ln(σp/σq) + (σq² + (μq−μp)²)/(2σp²) − ½
        let term = (vp - vq) * 0.5 + ((vq.exp() + (mq - mp).square()) / vp.exp()) * 0.5 - 0.5;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    Ok(acc.expect("zero-dimensional latent"))
}

/// KL(q ‖ N(0, I)).
pub fn kl_to_standard<R: Real>(q: &GaussianPosterior<R>) -> R {
    let mut acc: Option<R> = None;
    for (&m, &v) in q.mean.iter().zip(&q.log_var) {
        let term = (v.exp() + m.square() - v - 1.0) * 0.5;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc.expect("zero-dimensional latent")
}

/// mean + exp(½ log_var) ⊙ noise.
pub fn reparam_sample<R: Real>(
    q: &GaussianPosterior<R>,
    noise: &[f64],
) -> Result<Vec<R>, DistError> {
    if noise.len() != q.dim() {
        return Err(DistError::Dimension {
            expected: q.dim(),
            got: noise.len(),
        });
    }
    Ok(q.mean
        .iter()
        .zip(&q.log_var)
        .zip(noise)
        .map(|((&m, &v), &e)| m + (v * 0.5).exp() * e)
        .collect())
}

pub fn standard_normal_vec<G: Rng + ?Sized>(rng: &mut G, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiff::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn logpdf_examples() {
        let g = FamilyParams::Gaussian {
            mu: 0.0,
            sigma: 1.0,
        };
        close(g.logpdf(0.0).unwrap(), -0.918_938_53, 1e-8);
        let ga = FamilyParams::Gamma {
            alpha: 1.0,
            beta: 1.0,
        };
        close(ga.logpdf(1.0).unwrap(), -1.0, 1e-12);
        let m = FamilyParams::Mixture2 {
            center: 0.0,
            half_sep: 1.0,
            sigma: 1.0,
        };
        close(m.logpdf(0.0).unwrap(), -1.418_938_53, 1e-8);
        for x in [-3.0, -1.0, 0.2, PI] {
            let vm = FamilyParams::VonMises {
                mu: 1.234,
                kappa: 0.0,
            };
            close(vm.logpdf(x).unwrap(), -1.837_877_07, 1e-8);
        }
        let d = FamilyParams::Discrete {
            probs: vec![0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0],
        };
        close(d.logpdf(3.0).unwrap(), -1.386_294_36, 1e-8);
        assert_eq!(d.logpdf(6.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn support_violations() {
        let ga = FamilyParams::Gamma {
            alpha: 2.0,
            beta: 1.0,
        };
        assert!(matches!(
            ga.logpdf(0.0),
            Err(DistError::OutOfSupport { .. })
        ));
        let d = FamilyParams::Discrete {
            probs: vec![0.125; 8],
        };
        assert!(d.logpdf(0.0).is_err());
        assert!(d.logpdf(2.5).is_err());
        assert!(d.logpdf(9.0).is_err());
        let vm = FamilyParams::VonMises {
            mu: 0.0,
            kappa: 1.0,
        };
        assert!(vm.logpdf(-PI).is_err());
        assert!(vm.logpdf(4.0).is_err());
        assert!(vm.logpdf(PI).is_ok());
    }

    #[test]
    fn validation() {
        assert!(FamilyParams::Gaussian {
            mu: 0.0,
            sigma: 0.0
        }
        .validate()
        .is_err());
        assert!(FamilyParams::VonMises {
            mu: 0.0,
            kappa: 0.0
        }
        .validate()
        .is_ok());
        assert!(FamilyParams::Discrete {
            probs: vec![0.5; 8]
        }
        .validate()
        .is_err());
        assert!(FamilyParams::Discrete {
            probs: vec![0.125; 8]
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-10.0, -PI, -3.0, 0.0, PI, 3.5, 7.0, 100.0] {
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI, "{x} -> {w}");
            close(((x - w) / (2.0 * PI)).round() * 2.0 * PI, x - w, 1e-9);
        }
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn kl_examples() {
        let std1 = GaussianPosterior::standard(1);
        close(gaussian_kl(&std1, &std1).unwrap(), 0.0, 1e-15);
        let shifted = GaussianPosterior {
            mean: vec![1.0],
            log_var: vec![0.0],
        };
        close(gaussian_kl(&shifted, &std1).unwrap(), 0.5, 1e-15);
        let wide = GaussianPosterior {
            mean: vec![0.0],
            log_var: vec![1.0],
        };
        close(
            gaussian_kl(&wide, &std1).unwrap(),
            0.359_140_914_229_522_6,
            1e-12,
        );
        close(kl_to_standard(&wide), 0.359_140_914_229_522_6, 1e-12);
        let two = GaussianPosterior::standard(2);
        assert!(gaussian_kl(&std1, &two).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = GaussianPosterior {
            mean: vec![0.0],
            log_var: vec![1.0],
        };
        let p = GaussianPosterior::standard(1);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let z = reparam_sample(&q, &standard_normal_vec(&mut rng, 1)).unwrap();
                q.logpdf(&z) - p.logpdf(&z)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let exact = gaussian_kl(&q, &p).unwrap();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "{mean} vs {exact} (se {se})"
        );
    }

    #[test]
    fn reparam_examples() {
        let q = GaussianPosterior {
            mean: vec![0.0],
            log_var: vec![0.0],
        };
        assert_eq!(reparam_sample(&q, &[1.5]).unwrap(), vec![1.5]);
        let q = GaussianPosterior {
            mean: vec![2.0],
            log_var: vec![4.0_f64.ln()],
        };
        close(reparam_sample(&q, &[1.0]).unwrap()[0], 4.0, 1e-15);
        assert!(reparam_sample(&q, &[1.0, 2.0]).is_err());

        let t = Tape::new();
        let q = GaussianPosterior {
            mean: vec![t.var(0.0)],
            log_var: vec![t.var(0.0)],
        };
        let z = reparam_sample(&q, &[1.0]).unwrap()[0];
        let g = t.backward(z).unwrap();
        assert_eq!(g.wrt(q.log_var[0]), 0.5);
        assert_eq!(g.wrt(q.mean[0]), 1.0);
    }

    #[test]
    fn discrete_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = FamilyParams::Discrete {
            probs: vec![0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25],
        };
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            counts[d.sample(&mut rng) as usize - 1] += 1;
        }
        assert_eq!(counts[..4], [0, 0, 0, 0]);
        for c in &counts[4..] {
            close(*c as f64 / 10_000.0, 0.25, 0.02);
        }
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (
            m,
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn continuous_sampling_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = FamilyParams::Gaussian {
            mu: 0.0,
            sigma: 1.0,
        };
        let xs: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng)).collect();
        let (m, v) = moments(&xs);
        close(m, 0.0, 0.05);
        close(v, 1.0, 0.1);

        let ga = FamilyParams::Gamma {
            alpha: 3.0,
            beta: 1.0,
        };
        let xs: Vec<f64> = (0..10_000).map(|_| ga.sample(&mut rng)).collect();
        close(moments(&xs).0, 3.0, 0.1);

        let small = FamilyParams::Gamma {
            alpha: 0.5,
            beta: 2.0,
        };
        let xs: Vec<f64> = (0..20_000).map(|_| small.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        close(moments(&xs).0, 0.25, 0.02);
    }

    #[test]
    fn von_mises_circular_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mu, kappa) = (2.5, 2.0);
        let vm = FamilyParams::VonMises { mu, kappa };
        let n = 20_000;
        let (mut s, mut c) = (0.0, 0.0);
        for _ in 0..n {
            let x = vm.sample(&mut rng);
            assert!(Family::VonMises.in_support(x));
            s += x.sin();
            c += x.cos();
        }
        close(s.atan2(c), mu, 0.03);
        // mean resultant length is I1(κ)/I0(κ)
        let r = (s * s + c * c).sqrt() / n as f64;
        close(r, crate::adiff::special::bessel_ratio(kappa), 0.01);
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            acc += f(lo + i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn densities_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let mu: f64 = rng.random_range(-3.0..3.0);
            let sigma: f64 = rng.random_range(0.3..2.0);
            let g = FamilyParams::Gaussian { mu, sigma };
            let z = trapezoid(
                |x| g.logpdf(x).unwrap().exp(),
                mu - 12.0 * sigma,
                mu + 12.0 * sigma,
                20_000,
            );
            close(z, 1.0, 1e-3);

            let m = FamilyParams::Mixture2 {
                center: mu,
                half_sep: rng.random_range(0.0..3.0),
                sigma,
            };
            let z = trapezoid(|x| m.logpdf(x).unwrap().exp(), mu - 20.0, mu + 20.0, 40_000);
            close(z, 1.0, 1e-3);

            let vm = FamilyParams::VonMises {
                mu: rng.random_range(-PI..PI),
                kappa: rng.random_range(0.0..20.0),
            };
            let eps = 1e-12;
            let z = trapezoid(|x| vm.logpdf(x).unwrap().exp(), -PI + eps, PI, 20_000);
            close(z, 1.0, 1e-3);

            let ga = FamilyParams::Gamma {
                alpha: rng.random_range(1.0..5.0),
                beta: rng.random_range(0.5..2.0),
            };
            let z = trapezoid(|x| ga.logpdf(x).unwrap().exp(), 1e-9, 80.0, 80_000);
            close(z, 1.0, 1e-3);

            let raw: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let d = FamilyParams::Discrete {
                probs: raw.iter().map(|p| p / total).collect(),
            };
            let mass: f64 = (1..=8).map(|k| d.logpdf(k as f64).unwrap().exp()).sum();
            close(mass, 1.0, 1e-12);
        }
    }
}
