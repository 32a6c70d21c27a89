//! Episodic variational objectives as negated bounds.
//!
//! Every loss is generic over [`Real`], so the same code produces a plain
//! value for evaluation and a taped value for training. Monte Carlo noise is
//! drawn from the caller's RNG in a fixed order: the c latent first, then
//! the per-element z or the group latent a. Two calls that start from the
//! same RNG state therefore see the same c sample, which is what the
//! identities between objectives rely on.

mod tightened;

pub use tightened::{loss_tightened, tightened_uniform_offset, AuxParams, AuxView};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiff::Real;
use crate::dists::{
    gaussian_kl, kl_to_standard, reparam_sample, standard_normal_vec, GaussianPosterior,
};
use crate::model::{log_likelihood_sum, ModelError, ParamView};
use crate::synthdata::Episode;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("objective configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl From<ModelError> for ObjectiveError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Usage(m) => ObjectiveError::Usage(m),
            other => ObjectiveError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Vae,
    Ns,
    Vhe,
    Resample,
    Rescale,
    VheZ,
    Structured,
    Hierarchical,
    Tightened,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 9] = [
        ObjectiveKind::Vae,
        ObjectiveKind::Ns,
        ObjectiveKind::Vhe,
        ObjectiveKind::Resample,
        ObjectiveKind::Rescale,
        ObjectiveKind::VheZ,
        ObjectiveKind::Structured,
        ObjectiveKind::Hierarchical,
        ObjectiveKind::Tightened,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Vae => "vae",
            ObjectiveKind::Ns => "ns",
            ObjectiveKind::Vhe => "vhe",
            ObjectiveKind::Resample => "resample",
            ObjectiveKind::Rescale => "rescale",
            ObjectiveKind::VheZ => "vhe_z",
            ObjectiveKind::Structured => "structured",
            ObjectiveKind::Hierarchical => "hierarchical",
            ObjectiveKind::Tightened => "tightened",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ObjectiveKind::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown objective '{s}' (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// Which objective to optimise and how its expectations are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub d_size: usize,
    /// Multiplies every KL weight; the annealing factor is applied on top.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_weight_override: Option<f64>,
    #[serde(default = "one")]
    pub mc_samples: usize,
}

fn one() -> usize {
    1
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, d_size: usize) -> Self {
        ObjectiveSpec {
            kind,
            d_size,
            kl_weight_override: None,
            mc_samples: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.d_size == 0 {
            return Err(ObjectiveError::Config("d_size must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(ObjectiveError::Config(
                "mc_samples must be at least 1".into(),
            ));
        }
        if let Some(w) = self.kl_weight_override {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(ObjectiveError::Config(format!(
                    "kl_weight_override must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Options for one loss evaluation at annealing weight `anneal`.
    pub fn opts(&self, anneal: f64) -> LossOpts {
        LossOpts {
            kl_scale: self.kl_weight_override.unwrap_or(1.0) * anneal,
            mc_samples: self.mc_samples,
        }
    }
}

/// Per-call settings shared by every loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOpts {
    /// Uniform multiplier on all KL weights (override × annealing).
    pub kl_scale: f64,
    pub mc_samples: usize,
}

impl Default for LossOpts {
    fn default() -> Self {
        LossOpts {
            kl_scale: 1.0,
            mc_samples: 1,
        }
    }
}

/// The latent a KL term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latent {
    C,
    Z,
    A,
    /// Factor i of a structured model, in encoder order.
    Factor(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct KlTerm<R> {
    pub latent: Latent,
    pub value: R,
    pub weight: f64,
}

/// A loss with its signed components.
///
/// `total = −(recon − Σ weight·kl + aux_weight·aux)`, where the aux term is
/// only present for the tightened bound.
#[derive(Debug, Clone)]
pub struct LossBreakdown<R> {
    pub total: R,
    pub recon: R,
    pub kl: Vec<KlTerm<R>>,
    pub aux: Option<(R, f64)>,
}

impl<R: Real> LossBreakdown<R> {
    fn assemble(recon: R, kl: Vec<KlTerm<R>>, aux: Option<(R, f64)>) -> Self {
        let mut bound = recon;
        for t in &kl {
            bound = bound - t.value * t.weight;
        }
        if let Some((a, w)) = aux {
            bound = bound + a * w;
        }
        LossBreakdown {
            total: -bound,
            recon,
            kl,
            aux,
        }
    }

    pub fn term(&self, latent: Latent) -> Option<&KlTerm<R>> {
        self.kl.iter().find(|t| t.latent == latent)
    }

    /// Value of KL[q(c;D) ∥ p(c)], or 0 when the objective has no c term.
    pub fn kl_c(&self) -> f64 {
        self.term(Latent::C).map_or(0.0, |t| t.value.value())
    }

    pub fn weight(&self, latent: Latent) -> Option<f64> {
        self.term(latent).map(|t| t.weight)
    }

    /// The total recomputed from the plain component values.
    pub fn recombined(&self) -> f64 {
        let mut bound = self.recon.value();
        for t in &self.kl {
            bound -= t.weight * t.value.value();
        }
        if let Some((a, w)) = self.aux {
            bound += w * a.value();
        }
        -bound
    }

    pub fn values(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            total: self.total.value(),
            recon: self.recon.value(),
            kl: self
                .kl
                .iter()
                .map(|t| KlTerm {
                    latent: t.latent,
                    value: t.value.value(),
                    weight: t.weight,
                })
                .collect(),
            aux: self.aux.map(|(a, w)| (a.value(), w)),
        }
    }
}

fn mean_of<R: Real>(xs: Vec<R>) -> R {
    let n = xs.len() as f64;
    let mut it = xs.into_iter();
    let first = it.next().expect("at least one Monte Carlo sample");
    it.fold(first, |a, b| a + b) / n
}

pub(crate) fn sample_latent<R: Real, G: Rng + ?Sized>(
    q: &GaussianPosterior<R>,
    rng: &mut G,
) -> Vec<R> {
    let noise = standard_normal_vec(rng, q.dim());
    reparam_sample(q, &noise).expect("noise drawn at the posterior's dimension")
}

/// E_{q(c;D)} Σ_{x∈xs} log p(x|c) − weight·KL[q(c;D) ∥ p(c)], the shared core
/// of the flat objectives.
fn flat_bound<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    xs: &[f64],
    d: &[f64],
    weight: f64,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    let q = view.encode_class(d)?;
    let mut recons = Vec::with_capacity(opts.mc_samples);
    for _ in 0..opts.mc_samples {
        let c = sample_latent(&q, rng);
        recons.push(log_likelihood_sum(view, xs, &c)?);
    }
    let kl = KlTerm {
        latent: Latent::C,
        value: kl_to_standard(&q),
        weight: weight * opts.kl_scale,
    };
    Ok(LossBreakdown::assemble(mean_of(recons), vec![kl], None))
}

/// Single-element ELBO with q(c; {x}).
pub fn loss_vae<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    x: f64,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    flat_bound(view, &[x], &[x], 1.0, opts, rng)
}

fn check_class_size(d_len: usize, class_size: usize) -> Result<(), ObjectiveError> {
    if class_size < d_len || class_size == 0 {
        return Err(ObjectiveError::Usage(format!(
            "class size {class_size} is smaller than the support size {d_len}"
        )));
    }
    Ok(())
}

/// E_{q(c;D)} log p(x|c) − (1/|X|) KL[q(c;D) ∥ p(c)].
pub fn loss_vhe<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    ep: &Episode,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    check_class_size(ep.d.len(), ep.class_size)?;
    flat_bound(view, &[ep.x], &ep.d, 1.0 / ep.class_size as f64, opts, rng)
}

/// E_{q(c;D)} Σ_{x∈D} log p(x|c) − KL[q(c;D) ∥ p(c)].
pub fn loss_ns<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    d: &[f64],
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    if d.is_empty() {
        return Err(ObjectiveError::Usage("support set is empty".into()));
    }
    flat_bound(view, d, d, 1.0, opts, rng)
}

/// x resampled from the class, KL weighted by 1/|D|.
pub fn loss_resample<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    ep: &Episode,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    check_class_size(ep.d.len(), ep.class_size)?;
    flat_bound(view, &[ep.x], &ep.d, 1.0 / ep.d.len() as f64, opts, rng)
}

/// x taken from D itself, KL weighted by 1/|X|.
pub fn loss_rescale<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    x: f64,
    d: &[f64],
    class_size: usize,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    if !d.contains(&x) {
        return Err(ObjectiveError::Usage(format!(
            "rescale-only needs x ∈ D, but {x} is not in the support"
        )));
    }
    check_class_size(d.len(), class_size)?;
    flat_bound(view, &[x], d, 1.0 / class_size as f64, opts, rng)
}

/// VHE with a per-element latent: the z KL keeps weight 1 and only the
/// class KL is rescaled.
pub fn loss_vhe_z<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    ep: &Episode,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    if view.config().z_branch.is_none() {
        return Err(ObjectiveError::Config(
            "vhe_z needs a model with a per-element latent branch".into(),
        ));
    }
    check_class_size(ep.d.len(), ep.class_size)?;
    let q = view.encode_class(&ep.d)?;
    let mut recons = Vec::with_capacity(opts.mc_samples);
    let mut kl_zs = Vec::with_capacity(opts.mc_samples);
    for _ in 0..opts.mc_samples {
        let c = sample_latent(&q, rng);
        let qz = view.encode_z(ep.x, &c)?;
        let z = sample_latent(&qz, rng);
        recons.push(view.decode_with_z(&c, z[0])?.log_density(ep.x));
        kl_zs.push(kl_to_standard(&qz));
    }
    let kl = vec![
        KlTerm {
            latent: Latent::C,
            value: kl_to_standard(&q),
            weight: opts.kl_scale / ep.class_size as f64,
        },
        KlTerm {
            latent: Latent::Z,
            value: mean_of(kl_zs),
            weight: opts.kl_scale,
        },
    ];
    Ok(LossBreakdown::assemble(mean_of(recons), kl, None))
}

/// Support set of one latent factor that contains x.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSupport {
    pub d: Vec<f64>,
    pub class_size: usize,
}

/// Structured VHE: one latent per factor, each KL rescaled by its own class
/// size. Supports are given in the model's encoder order.
pub fn loss_structured<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    x: f64,
    supports: &[FactorSupport],
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    let names = view.config().encoder_names();
    if view.config().structure == crate::synthdata::Structure::Hierarchical {
        return Err(ObjectiveError::Config(
            "hierarchical models use loss_hierarchical".into(),
        ));
    }
    if supports.len() != names.len() {
        return Err(ObjectiveError::Usage(format!(
            "model has {} latent factors but {} supports were given",
            names.len(),
            supports.len()
        )));
    }
    let mut posteriors = Vec::with_capacity(names.len());
    for (name, s) in names.iter().zip(supports) {
        check_class_size(s.d.len(), s.class_size)?;
        posteriors.push(view.encode_with(name, &s.d, None)?);
    }
    let mut recons = Vec::with_capacity(opts.mc_samples);
    for _ in 0..opts.mc_samples {
        let mut input = Vec::with_capacity(view.config().decoder_input_dim());
        for q in &posteriors {
            input.extend(sample_latent(q, rng));
        }
        recons.push(log_likelihood_sum(view, &[x], &input)?);
    }
    let kl = if posteriors.len() == 1 {
        vec![KlTerm {
            latent: Latent::C,
            value: kl_to_standard(&posteriors[0]),
            weight: opts.kl_scale / supports[0].class_size as f64,
        }]
    } else {
        posteriors
            .iter()
            .zip(supports)
            .enumerate()
            .map(|(i, (q, s))| KlTerm {
                latent: Latent::Factor(i),
                value: kl_to_standard(q),
                weight: opts.kl_scale / s.class_size as f64,
            })
            .collect()
    };
    Ok(LossBreakdown::assemble(mean_of(recons), kl, None))
}

/// Two-level episode for the hierarchical bound: group-level support drawn
/// from the elements of x's group, class-level support from x's class.
#[derive(Debug, Clone, PartialEq)]
pub struct HierEpisode {
    pub x: f64,
    pub d_a: Vec<f64>,
    pub d_c: Vec<f64>,
    pub group_size: usize,
    pub class_size: usize,
}

/// E log p(x|c) − (1/|𝒳|) KL[q(a;Dᵃ) ∥ p(a)] − (1/|X|) KL[q(c;Dᶜ,a) ∥ p(c|a)]
/// with a ~ q(a;Dᵃ) and c ~ q(c;Dᶜ,a).
pub fn loss_hierarchical<R: Real, G: Rng + ?Sized>(
    view: &ParamView<'_, R>,
    ep: &HierEpisode,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    if view.config().structure != crate::synthdata::Structure::Hierarchical {
        return Err(ObjectiveError::Config(
            "loss_hierarchical needs a hierarchical model".into(),
        ));
    }
    check_class_size(ep.d_a.len(), ep.group_size)?;
    check_class_size(ep.d_c.len(), ep.class_size)?;
    if ep.class_size > ep.group_size {
        return Err(ObjectiveError::Usage(format!(
            "class size {} exceeds group size {}",
            ep.class_size, ep.group_size
        )));
    }
    let qa = view.encode_with("enc_group", &ep.d_a, None)?;
    let l = qa.dim();
    let mut recons = Vec::with_capacity(opts.mc_samples);
    let mut kl_cs = Vec::with_capacity(opts.mc_samples);
    for _ in 0..opts.mc_samples {
        let eps_c = standard_normal_vec(rng, l);
        let a = sample_latent(&qa, rng);
        let qc = view.encode_with("enc", &ep.d_c, Some(&a))?;
        let c = reparam_sample(&qc, &eps_c).expect("matching dimension");
        let prior_c = view.conditional_prior(&a)?;
        kl_cs.push(gaussian_kl(&qc, &prior_c).map_err(|e| ObjectiveError::Usage(e.to_string()))?);
        recons.push(log_likelihood_sum(view, &[ep.x], &c)?);
    }
    let kl = vec![
        KlTerm {
            latent: Latent::C,
            value: mean_of(kl_cs),
            weight: opts.kl_scale / ep.class_size as f64,
        },
        KlTerm {
            latent: Latent::A,
            value: kl_to_standard(&qa),
            weight: opts.kl_scale / ep.group_size as f64,
        },
    ];
    Ok(LossBreakdown::assemble(mean_of(recons), kl, None))
}
