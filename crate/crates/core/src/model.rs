//! Linear-Gaussian encoders, family decoder links, and priors.
//!
//! Every learnable number lives in one flat vector with named slices, so the
//! same [`ModelParams`] can be viewed as plain `f64`s for evaluation or as
//! tape variables for training.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiff::{affine, dot_plus, log_sum_exp, Real, Tape, Var};
use crate::dists::{
    diag_gaussian_logpdf, gaussian_logpdf, standard_normal_logpdf, wrap_angle, Decoded, Family,
    GaussianPosterior, DISCRETE_SYMBOLS,
};
use crate::synthdata::{Dataset, Hyper, Structure};

pub const CHECKPOINT_FORMAT: &str = "homoenc-model/1";
const INIT_WEIGHT_SD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Parse(String),
}

/// Per-element latent branch for the linear-Gaussian toy model:
/// p(z) = N(0,1), p(x|c,z) = N(w·c + b + w_z z, σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBranch {
    /// q(z; c, x) when true, q(z; x) otherwise.
    pub conditions_on_c: bool,
}

/// Decoder scalars that are held at their generator values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedScalars {
    pub mixture_half_sep: f64,
    pub mixture_sigma: f64,
    pub gamma_beta: f64,
}

impl From<&Hyper> for FixedScalars {
    fn from(h: &Hyper) -> Self {
        FixedScalars {
            mixture_half_sep: 0.5 * h.mixture_separation,
            mixture_sigma: h.mixture_sigma,
            gamma_beta: h.gamma_beta,
        }
    }
}

impl Default for FixedScalars {
    fn default() -> Self {
        FixedScalars::from(&Hyper::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub latent_dim: usize,
    pub structure: Structure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_branch: Option<ZBranch>,
    pub fixed: FixedScalars,
}

impl ModelConfig {
    pub fn flat(family: Family, latent_dim: usize) -> Self {
        ModelConfig {
            family,
            latent_dim,
            structure: Structure::Flat,
            z_branch: None,
            fixed: FixedScalars::default(),
        }
    }

    /// A model matching a dataset's family, structure and fixed scalars.
    pub fn for_dataset(ds: &Dataset, latent_dim: usize) -> Self {
        ModelConfig {
            family: ds.meta.family,
            latent_dim,
            structure: ds.meta.structure,
            z_branch: None,
            fixed: FixedScalars::from(&ds.meta.hyper),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_dim == 0 {
            return Err(ModelError::Config("latent_dim must be at least 1".into()));
        }
        if self.z_branch.is_some()
            && (self.family != Family::Gaussian || self.structure != Structure::Flat)
        {
            return Err(ModelError::Config(
                "the per-element latent branch needs a flat gaussian model".into(),
            ));
        }
        if self.structure != Structure::Flat && self.family != Family::Gaussian {
            return Err(ModelError::Config(format!(
                "{:?} structure is only defined for the gaussian family",
                self.structure
            )));
        }
        let f = &self.fixed;
        if !(f.mixture_sigma > 0.0) || !(f.gamma_beta > 0.0) || !f.mixture_half_sep.is_finite() {
            return Err(ModelError::Config(
                "fixed decoder scalars must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        match self.family {
            Family::Gaussian | Family::Mixture2 | Family::Gamma | Family::VonMises => 2,
            Family::Discrete => DISCRETE_SYMBOLS,
        }
    }

    /// Number of affine decoder outputs.
    pub fn decoder_outputs(&self) -> usize {
        match self.family {
            Family::Gaussian | Family::Mixture2 | Family::Gamma => 1,
            Family::VonMises => 2,
            Family::Discrete => DISCRETE_SYMBOLS,
        }
    }

    /// Length of the vector fed to the decoder.
    pub fn decoder_input_dim(&self) -> usize {
        match self.structure {
            Structure::Factorial => 2 * self.latent_dim,
            _ => self.latent_dim,
        }
    }

    /// Encoder names in factor order.
    pub fn encoder_names(&self) -> Vec<&'static str> {
        match self.structure {
            Structure::Flat => vec!["enc"],
            Structure::Hierarchical => vec!["enc_group", "enc"],
            Structure::Factorial => vec!["enc_content", "enc_style"],
        }
    }
}

/// Feature map applied to each support element before mean pooling.
pub fn features(family: Family, x: f64) -> Vec<f64> {
    match family {
        Family::Gaussian | Family::Mixture2 | Family::Gamma => vec![x, x * x],
        Family::VonMises => {
            let x = wrap_angle(x);
            vec![x.cos(), x.sin()]
        }
        Family::Discrete => {
            let mut v = vec![0.0; DISCRETE_SYMBOLS];
            let k = x.round() as usize;
            if (1..=DISCRETE_SYMBOLS).contains(&k) {
                v[k - 1] = 1.0;
            }
            v
        }
    }
}

pub fn pooled_features(family: Family, d: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; features(family, 0.0).len()];
    for &x in d {
        for (a, f) in acc.iter_mut().zip(features(family, x)) {
            *a += f;
        }
    }
    let n = d.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Slice {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderIdx {
    w_mu: Range<usize>,
    b_mu: Range<usize>,
    w_lv: Range<usize>,
    b_lv: Range<usize>,
    /// Coupling to a conditioning latent (hierarchical c-encoder only).
    u_mu: Option<Range<usize>>,
    u_lv: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Index {
    encoders: Vec<(String, EncoderIdx)>,
    dec_w: Range<usize>,
    dec_b: Range<usize>,
    dec_scale: Option<Range<usize>>,
    cond: Option<(Range<usize>, Range<usize>, Range<usize>)>,
    z: Option<ZIdx>,
}

#[derive(Debug, Clone, PartialEq)]
struct ZIdx {
    dec_w: Range<usize>,
    enc_w_x: Range<usize>,
    enc_w_c: Option<Range<usize>>,
    enc_b_mu: Range<usize>,
    enc_b_lv: Range<usize>,
}

struct LayoutBuilder {
    slices: Vec<Slice>,
    next: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, len: usize) -> Range<usize> {
        let r = self.next..self.next + len;
        self.slices.push(Slice {
            name,
            offset: self.next,
            len,
        });
        self.next += len;
        r
    }
}

fn build_index(cfg: &ModelConfig) -> (Index, Vec<Slice>) {
    let l = cfg.latent_dim;
    let f = cfg.feature_dim();
    let mut b = LayoutBuilder {
        slices: Vec::new(),
        next: 0,
    };
    let mut encoders = Vec::new();
    for name in cfg.encoder_names() {
        let conditioned = cfg.structure == Structure::Hierarchical && name == "enc";
        let idx = EncoderIdx {
            w_mu: b.add(format!("{name}.w_mu"), l * f),
            b_mu: b.add(format!("{name}.b_mu"), l),
            w_lv: b.add(format!("{name}.w_lv"), l * f),
            b_lv: b.add(format!("{name}.b_lv"), l),
            u_mu: conditioned.then(|| b.add(format!("{name}.u_mu"), l * l)),
            u_lv: conditioned.then(|| b.add(format!("{name}.u_lv"), l * l)),
        };
        encoders.push((name.to_string(), idx));
    }
    let p = cfg.decoder_outputs();
    let dec_w = b.add("dec.w".into(), p * cfg.decoder_input_dim());
    let dec_b = b.add("dec.b".into(), p);
    let dec_scale = matches!(cfg.family, Family::Gaussian | Family::VonMises)
        .then(|| b.add("dec.scale".into(), 1));
    let cond = (cfg.structure == Structure::Hierarchical).then(|| {
        (
            b.add("cond.w".into(), l * l),
            b.add("cond.b".into(), l),
            b.add("cond.lv".into(), l),
        )
    });
    let z = cfg.z_branch.map(|zb| ZIdx {
        dec_w: b.add("zdec.w".into(), 1),
        enc_w_x: b.add("zenc.w_x".into(), 1),
        enc_w_c: zb.conditions_on_c.then(|| b.add("zenc.w_c".into(), l)),
        enc_b_mu: b.add("zenc.b_mu".into(), 1),
        enc_b_lv: b.add("zenc.b_lv".into(), 1),
    });
    (
        Index {
            encoders,
            dec_w,
            dec_b,
            dec_scale,
            cond,
            z,
        },
        b.slices,
    )
}

/// All learnable weights of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub slices: Vec<Slice>,
    pub values: Vec<f64>,
    index: Index,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: ModelConfig,
    slices: Vec<Slice>,
    params: Vec<f64>,
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (index, slices) = build_index(&config);
        let n = slices.last().map_or(0, |s| s.offset + s.len);
        Ok(ModelParams {
            config,
            slices,
            values: vec![0.0; n],
            index,
        })
    }

    /// Weights ~ N(0, 0.01²), biases and scales 0. The von Mises decoder
    /// bias starts at (1, 0) so the angle link begins away from atan2's
    /// singularity at the origin.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in m.slices.clone() {
            let is_weight = s.name.contains(".w") || s.name.contains(".u_");
            if is_weight {
                for v in &mut m.values[s.range()] {
                    *v = INIT_WEIGHT_SD * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if m.config.family == Family::VonMises {
            let b = m.index.dec_b.start;
            m.values[b] = 1.0;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> &[f64] {
        let s = self
            .slice(name)
            .unwrap_or_else(|| panic!("no parameter slice named {name}"));
        &self.values[s.range()]
    }

    pub fn set(&mut self, name: &str, values: &[f64]) {
        let r = self
            .slice(name)
            .unwrap_or_else(|| panic!("no parameter slice named {name}"))
            .range();
        assert_eq!(r.len(), values.len(), "slice {name} has length {}", r.len());
        self.values[r].copy_from_slice(values);
    }

    /// Name of the slice containing flat index `i`.
    pub fn slice_of(&self, i: usize) -> &str {
        &self
            .slices
            .iter()
            .find(|s| s.range().contains(&i))
            .expect("index out of range")
            .name
    }

    pub fn view(&self) -> ParamView<'_, f64> {
        ParamView {
            model: self,
            p: &self.values,
        }
    }

    pub fn view_of<'a, R: Real>(&'a self, p: &'a [R]) -> ParamView<'a, R> {
        assert_eq!(p.len(), self.values.len());
        ParamView { model: self, p }
    }

    /// Puts every parameter on `tape`: trainable ones as leaves, the rest as
    /// constants. Returns the variables and the flat indices of the leaves
    /// in leaf order.
    pub fn to_tape<'t>(
        &self,
        tape: &'t Tape,
        trainable: impl Fn(usize) -> bool,
    ) -> (Vec<Var<'t>>, Vec<usize>) {
        let mut leaves = Vec::new();
        let vars = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if trainable(i) {
                    leaves.push(i);
                    tape.var(v)
                } else {
                    tape.constant(v)
                }
            })
            .collect();
        (vars, leaves)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &self.checkpoint()).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes")
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            slices: self.slices.clone(),
            params: self.values.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::from_checkpoint(ck)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::from_checkpoint(ck)
    }

    fn from_checkpoint(ck: Checkpoint) -> Result<Self, ModelError> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Parse(format!("unknown format '{}'", ck.format)));
        }
        let mut m = Self::zeros(ck.config)?;
        if m.slices != ck.slices {
            return Err(ModelError::Parse(
                "slice table does not match the configuration".into(),
            ));
        }
        if ck.params.len() != m.values.len() {
            return Err(ModelError::Parse(format!(
                "expected {} parameters, found {}",
                m.values.len(),
                ck.params.len()
            )));
        }
        if ck.params.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Parse("non-finite parameter".into()));
        }
        m.values = ck.params;
        Ok(m)
    }
}

/// Read access to a parameter vector of either scalar type.
#[derive(Clone, Copy)]
pub struct ParamView<'a, R> {
    pub model: &'a ModelParams,
    pub p: &'a [R],
}

impl<'a, R: Real> ParamView<'a, R> {
    pub fn config(&self) -> &'a ModelConfig {
        &self.model.config
    }

    fn at(&self, r: &Range<usize>) -> &'a [R] {
        &self.p[r.clone()]
    }

    fn encoder(&self, name: &str) -> Result<&'a EncoderIdx, ModelError> {
        self.model
            .index
            .encoders
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| ModelError::Config(format!("model has no encoder named {name}")))
    }

    /// q(c; D) from the named encoder, optionally conditioned on another
    /// latent (the hierarchical c-encoder takes the sampled group latent).
    pub fn encode_with(
        &self,
        encoder: &str,
        d: &[f64],
        cond: Option<&[R]>,
    ) -> Result<GaussianPosterior<R>, ModelError> {
        if d.is_empty() {
            return Err(ModelError::Usage(
                "cannot encode an empty support set".into(),
            ));
        }
        let cfg = self.config();
        let idx = self.encoder(encoder)?;
        let pooled = pooled_features(cfg.family, d);
        let (l, f) = (cfg.latent_dim, pooled.len());
        let (w_mu, b_mu, w_lv, b_lv) = (
            self.at(&idx.w_mu),
            self.at(&idx.b_mu),
            self.at(&idx.w_lv),
            self.at(&idx.b_lv),
        );
        let mut mean = Vec::with_capacity(l);
        let mut log_var = Vec::with_capacity(l);
        for j in 0..l {
            let mut m = affine(&w_mu[j * f..(j + 1) * f], &pooled, b_mu[j]);
            let mut v = affine(&w_lv[j * f..(j + 1) * f], &pooled, b_lv[j]);
            if let (Some(u_mu), Some(u_lv)) = (&idx.u_mu, &idx.u_lv) {
                let a = cond.ok_or_else(|| {
                    ModelError::Usage(format!("encoder {encoder} needs a conditioning latent"))
                })?;
                m = dot_plus(&self.at(u_mu)[j * l..(j + 1) * l], a, m);
                v = dot_plus(&self.at(u_lv)[j * l..(j + 1) * l], a, v);
            }
            mean.push(m);
            log_var.push(v);
        }
        Ok(GaussianPosterior { mean, log_var })
    }

    /// q(c; D) of a flat model. Mean pooling makes it invariant to the order
    /// of D.
    pub fn encode_class(&self, d: &[f64]) -> Result<GaussianPosterior<R>, ModelError> {
        self.encode_with("enc", d, None)
    }

    /// Family parameters from the decoder input (c, or the concatenated
    /// factor latents).
    pub fn decode_params(&self, c: &[R]) -> Result<Decoded<R>, ModelError> {
        self.decode_inner(c, None)
    }

    /// Decoder of the per-element latent model: the gaussian mean gains w_z·z.
    pub fn decode_with_z(&self, c: &[R], z: R) -> Result<Decoded<R>, ModelError> {
        if self.model.index.z.is_none() {
            return Err(ModelError::Config(
                "model has no per-element latent branch".into(),
            ));
        }
        self.decode_inner(c, Some(z))
    }

    fn decode_inner(&self, c: &[R], z: Option<R>) -> Result<Decoded<R>, ModelError> {
        let cfg = self.config();
        let din = cfg.decoder_input_dim();
        if c.len() != din {
            return Err(ModelError::Usage(format!(
                "decoder expects a {din}-dimensional input, got {}",
                c.len()
            )));
        }
        let idx = &self.model.index;
        let w = self.at(&idx.dec_w);
        let b = self.at(&idx.dec_b);
        let out = |k: usize| dot_plus(&w[k * din..(k + 1) * din], c, b[k]);
        let scale = || {
            idx.dec_scale
                .as_ref()
                .map(|r| self.p[r.start].softplus())
                .expect("family has a scale slot")
        };
        Ok(match cfg.family {
            Family::Gaussian => {
                let mut mu = out(0);
                if let (Some(z), Some(zi)) = (z, &idx.z) {
                    mu = mu + self.p[zi.dec_w.start] * z;
                }
                Decoded::Gaussian { mu, sigma: scale() }
            }
            Family::Mixture2 => Decoded::Mixture2 {
                center: out(0),
                half_sep: cfg.fixed.mixture_half_sep,
                sigma: cfg.fixed.mixture_sigma,
            },
            Family::VonMises => {
                let (v0, v1) = (out(0), out(1));
                Decoded::VonMises {
                    mu: v1.atan2(v0),
                    kappa: scale(),
                }
            }
            Family::Gamma => Decoded::Gamma {
                alpha: out(0).softplus(),
                beta: cfg.fixed.gamma_beta,
            },
            Family::Discrete => {
                let logits: Vec<R> = (0..DISCRETE_SYMBOLS).map(out).collect();
                let norm = log_sum_exp(&logits);
                Decoded::Discrete {
                    log_probs: logits.into_iter().map(|l| l - norm).collect(),
                }
            }
        })
    }

    /// ln p(x | decoder input).
    pub fn log_likelihood(&self, x: f64, c: &[R]) -> Result<R, ModelError> {
        Ok(self
            .decode_params(c)?
            .log_density(ingest(self.config().family, x)))
    }

    /// Standard normal prior over c.
    pub fn prior_logpdf(&self, c: &[R]) -> R {
        standard_normal_logpdf(c)
    }

    /// p(c | a) = N(W a + b, diag(exp(lv))).
    pub fn conditional_prior(&self, a: &[R]) -> Result<GaussianPosterior<R>, ModelError> {
        let (w, b, lv) = self.model.index.cond.as_ref().ok_or_else(|| {
            ModelError::Config(
                "model has no conditional prior (needs hierarchical structure)".into(),
            )
        })?;
        let l = self.config().latent_dim;
        if a.len() != l {
            return Err(ModelError::Usage(format!(
                "conditioning latent must have dimension {l}"
            )));
        }
        let (w, b, lv) = (self.at(w), self.at(b), self.at(lv));
        let mean = (0..l)
            .map(|j| dot_plus(&w[j * l..(j + 1) * l], a, b[j]))
            .collect();
        Ok(GaussianPosterior {
            mean,
            log_var: lv.to_vec(),
        })
    }

    pub fn conditional_logpdf(&self, c: &[R], a: &[R]) -> Result<R, ModelError> {
        let p = self.conditional_prior(a)?;
        Ok(diag_gaussian_logpdf(c, &p.mean, &p.log_var))
    }

    /// q(z; x) or q(z; c, x) of the per-element branch.
    pub fn encode_z(&self, x: f64, c: &[R]) -> Result<GaussianPosterior<R>, ModelError> {
        let zi =
            self.model.index.z.as_ref().ok_or_else(|| {
                ModelError::Config("model has no per-element latent branch".into())
            })?;
        let mut mean = self.p[zi.enc_w_x.start] * x + self.p[zi.enc_b_mu.start];
        if let Some(wc) = &zi.enc_w_c {
            mean = dot_plus(self.at(wc), c, mean);
        }
        Ok(GaussianPosterior {
            mean: vec![mean],
            log_var: vec![self.p[zi.enc_b_lv.start]],
        })
    }
}

/// Canonicalizes an observation on ingestion (von Mises angles are wrapped).
pub fn ingest(family: Family, x: f64) -> f64 {
    match family {
        Family::VonMises => wrap_angle(x),
        _ => x,
    }
}

/// Log-likelihood of a batch of observations under fixed decoder input.
pub fn log_likelihood_sum<R: Real>(
    view: &ParamView<'_, R>,
    xs: &[f64],
    c: &[R],
) -> Result<R, ModelError> {
    let dec = view.decode_params(c)?;
    let family = view.config().family;
    let mut it = xs.iter().map(|&x| dec.log_density(ingest(family, x)));
    let first = it
        .next()
        .ok_or_else(|| ModelError::Usage("empty observation set".into()))?;
    Ok(it.fold(first, |a, b| a + b))
}

/// Parameters of the conjugate toy p(c)=N(0,1), p(x|c)=N(c,1) with an
/// encoder that returns the exact posterior p(c | D) for |D| = `support`.
pub fn conjugate_exact(support: usize) -> ModelParams {
    let mut m = ModelParams::zeros(ModelConfig::flat(Family::Gaussian, 1)).expect("valid config");
    let n = support as f64;
    m.set("enc.w_mu", &[n / (1.0 + n), 0.0]);
    m.set("enc.b_lv", &[-(1.0 + n).ln()]);
    m.set("dec.w", &[1.0]);
    m.set("dec.scale", &[softplus_inverse(1.0)]);
    m
}

/// x with softplus(x) = y, for y > 0.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0);
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Convenience used by tests and examples: ln N(x; μ, σ²).
pub fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    gaussian_logpdf(x, mu, sigma)
}
