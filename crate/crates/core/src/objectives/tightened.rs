//! The auxiliary-inference bound: the loose subset term is replaced by
//! log r(D; c, X) − log q'(D; X), with q' uniform over size-N subsets and
//! r(D; c, X) = N! ∏_{d∈D} softmax_{e∈X}(f_ψ(c)·ξ_e)_d.
//!
//! r is the probability that N draws with replacement from the per-element
//! softmax produce exactly the set D, so it sums to at most one over subsets
//! and the bound stays a lower bound for any ψ, ξ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    check_class_size, mean_of, sample_latent, KlTerm, Latent, LossBreakdown, LossOpts,
    ObjectiveError,
};
use crate::adiff::special::lgamma;
use crate::adiff::{dot_plus, log_sum_exp, Real};
use crate::dists::kl_to_standard;
use crate::model::{log_likelihood_sum, ParamView};
use crate::synthdata::Episode;

/// ψ (an affine map c ↦ f_ψ(c) ∈ ℝᴷ) and one embedding ξ per element of
/// every class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxParams {
    pub embed_dim: usize,
    pub latent_dim: usize,
    pub class_sizes: Vec<usize>,
    pub values: Vec<f64>,
}

impl AuxParams {
    pub fn zeros(embed_dim: usize, latent_dim: usize, class_sizes: Vec<usize>) -> Self {
        let n: usize = class_sizes.iter().sum();
        let len = embed_dim * latent_dim + embed_dim + n * embed_dim;
        AuxParams {
            embed_dim,
            latent_dim,
            class_sizes,
            values: vec![0.0; len],
        }
    }

    /// ψ = 0 (so r starts uniform) and ξ ~ N(0, 0.1²).
    pub fn init(embed_dim: usize, latent_dim: usize, class_sizes: Vec<usize>, seed: u64) -> Self {
        let mut a = Self::zeros(embed_dim, latent_dim, class_sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = a.xi_base();
        for v in &mut a.values[start..] {
            *v = 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        a
    }

    fn xi_base(&self) -> usize {
        self.embed_dim * (self.latent_dim + 1)
    }

    fn class_offset(&self, class_id: usize) -> usize {
        self.xi_base() + self.class_sizes[..class_id].iter().sum::<usize>() * self.embed_dim
    }

    pub fn set_psi(&mut self, w: &[f64], b: &[f64]) {
        let (k, l) = (self.embed_dim, self.latent_dim);
        self.values[..k * l].copy_from_slice(w);
        self.values[k * l..k * (l + 1)].copy_from_slice(b);
    }

    pub fn set_xi(&mut self, class_id: usize, element: usize, xi: &[f64]) {
        let at = self.class_offset(class_id) + element * self.embed_dim;
        self.values[at..at + self.embed_dim].copy_from_slice(xi);
    }

    pub fn view(&self) -> AuxView<'_, f64> {
        AuxView {
            aux: self,
            p: &self.values,
        }
    }

    pub fn view_of<'a, R: Real>(&'a self, p: &'a [R]) -> AuxView<'a, R> {
        assert_eq!(p.len(), self.values.len());
        AuxView { aux: self, p }
    }
}

#[derive(Clone, Copy)]
pub struct AuxView<'a, R> {
    pub aux: &'a AuxParams,
    pub p: &'a [R],
}

impl<R: Real> AuxView<'_, R> {
    fn scores(&self, c: &[R], class_id: usize) -> Vec<R> {
        let (k, l) = (self.aux.embed_dim, self.aux.latent_dim);
        let f: Vec<R> = (0..k)
            .map(|j| dot_plus(&self.p[j * l..(j + 1) * l], c, self.p[k * l + j]))
            .collect();
        let base = self.aux.class_offset(class_id);
        (0..self.aux.class_sizes[class_id])
            .map(|e| {
                dot_plus(
                    &self.p[base + e * k..base + (e + 1) * k],
                    &f,
                    c[0].lift(0.0),
                )
            })
            .collect()
    }

    /// log r(D; c, X) for the support given by its element indices.
    pub fn log_r(&self, c: &[R], class_id: usize, d_indices: &[usize]) -> R {
        let s = self.scores(c, class_id);
        let norm = log_sum_exp(&s);
        let n = d_indices.len() as f64;
        let mut acc = c[0].lift(lgamma(n + 1.0));
        for &i in d_indices {
            acc = acc + s[i] - norm;
        }
        acc
    }
}

/// ln C(n, k).
fn log_binomial(n: usize, k: usize) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    lgamma(n as f64 + 1.0) - lgamma(k as f64 + 1.0) - lgamma((n - k) as f64 + 1.0)
}

/// log r − log q' when r is uniform: ln N! − N ln|X| + ln C(|X|, N). With
/// ψ = 0 the tightened loss equals the VHE loss minus this value over |X|.
pub fn tightened_uniform_offset(class_size: usize, d_size: usize) -> f64 {
    lgamma(d_size as f64 + 1.0) - d_size as f64 * (class_size as f64).ln()
        + log_binomial(class_size, d_size)
}

/// E log p(x|c) − (1/|X|)·KL[q(c;D) ∥ p(c)] + (1/|X|)·E[log r(D;c,X) − log q'(D;X)].
pub fn loss_tightened<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    aux: &AuxView<'_, R>,
    ep: &Episode,
    class_elements: &[f64],
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    check_class_size(ep.d.len(), ep.class_size)?;
    let known = aux.aux.class_sizes.get(ep.class_id).copied();
    if known != Some(class_elements.len()) || class_elements.len() != ep.class_size {
        return Err(ObjectiveError::Config(format!(
            "no element embeddings for class {} of size {}",
            ep.class_id, ep.class_size
        )));
    }
    if aux.aux.latent_dim != view.config().latent_dim {
        return Err(ObjectiveError::Config(
            "auxiliary latent dimension differs from the model's".into(),
        ));
    }
    let q = view.encode_class(&ep.d)?;
    let neg_log_q_prime = log_binomial(ep.class_size, ep.d.len());
    let mut recons = Vec::with_capacity(opts.mc_samples);
    let mut gains = Vec::with_capacity(opts.mc_samples);
    for _ in 0..opts.mc_samples {
        let c = sample_latent(&q, rng);
        recons.push(log_likelihood_sum(view, &[ep.x], &c)?);
        gains.push(aux.log_r(&c, ep.class_id, &ep.d_indices) + neg_log_q_prime);
    }
    let w = opts.kl_scale / ep.class_size as f64;
    let kl = vec![KlTerm {
        latent: Latent::C,
        value: kl_to_standard(&q),
        weight: w,
    }];
    Ok(LossBreakdown::assemble(
        mean_of(recons),
        kl,
        Some((mean_of(gains), w)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::Family;
    use crate::model::{ModelConfig, ModelParams};
    use crate::objectives::loss_vhe;

    fn setup() -> (ModelParams, Vec<f64>) {
        let m = ModelParams::init(ModelConfig::flat(Family::Gaussian, 2), 3).unwrap();
        (m, vec![0.5, -1.0, 2.0, 0.1, 1.4, -0.6])
    }

    fn ep(xs: &[f64], d_indices: &[usize]) -> Episode {
        Episode {
            class_id: 1,
            x: xs[2],
            x_index: 2,
            d: d_indices.iter().map(|&i| xs[i]).collect(),
            d_indices: d_indices.to_vec(),
            class_size: xs.len(),
        }
    }

    #[test]
    fn uniform_r_is_vhe_plus_constant() {
        let (m, xs) = setup();
        let aux = AuxParams::zeros(2, 2, vec![3, xs.len()]);
        let e = ep(&xs, &[4, 0, 2]);
        let base = ChaCha8Rng::seed_from_u64(1);
        let t = loss_tightened(
            &m.view(),
            &aux.view(),
            &e,
            &xs,
            LossOpts::default(),
            &mut base.clone(),
        )
        .unwrap();
        let v = loss_vhe(&m.view(), &e, LossOpts::default(), &mut base.clone()).unwrap();
        let expected = v.total - tightened_uniform_offset(xs.len(), 3) / xs.len() as f64;
        assert!((t.total - expected).abs() < 1e-10);

        // equal embeddings give the same uniform r
        let mut aux = AuxParams::init(2, 2, vec![3, xs.len()], 0);
        aux.set_psi(&[0.3, -0.2, 0.5, 1.0], &[0.1, 0.2]);
        for i in 0..xs.len() {
            aux.set_xi(1, i, &[0.7, -0.4]);
        }
        let t2 = loss_tightened(
            &m.view(),
            &aux.view(),
            &e,
            &xs,
            LossOpts::default(),
            &mut base.clone(),
        )
        .unwrap();
        assert!((t2.total - expected).abs() < 1e-10);
    }

    #[test]
    fn full_support_has_deterministic_q_prime() {
        assert_eq!(log_binomial(7, 7), 0.0);
        assert!((tightened_uniform_offset(8, 1)).abs() < 1e-14);
    }

    #[test]
    fn missing_embeddings_is_config_error() {
        let (m, xs) = setup();
        let aux = AuxParams::zeros(2, 2, vec![3, 4]);
        let r = loss_tightened(
            &m.view(),
            &aux.view(),
            &ep(&xs, &[0]),
            &xs,
            LossOpts::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(r, Err(ObjectiveError::Config(_))));
    }

    #[test]
    fn r_is_subnormalized() {
        // sum of r over all 2-subsets of a 4-element class stays below 1
        let mut aux = AuxParams::init(2, 1, vec![4], 5);
        aux.set_psi(&[1.3, -0.4], &[0.2, 0.9]);
        let c = [0.8];
        let mut total = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                total += aux.view().log_r(&c, 0, &[i, j]).exp();
            }
        }
        assert!(total <= 1.0 && total > 0.0, "{total}");
    }
}
