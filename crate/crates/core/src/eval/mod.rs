//! Few-shot metrics, importance-weighted marginal likelihood, and the CSV
//! record format.
//!
//! Every metric draws its randomness from a stream keyed by (seed, metric,
//! support size, class or episode index), so metrics can be computed in
//! parallel, in any subset, and still reproduce bit for bit.

pub mod oracles;
pub mod quadrature;

pub use quadrature::{gauss_hermite, quadrature_joint_nll, quadrature_log_marginal};

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::adiff::log_sum_exp;
use crate::dists::{
    gaussian_logpdf, kl_to_standard, reparam_sample, standard_normal_vec, Decoded, Family,
};
use crate::model::{ingest, ModelError, ModelParams, ParamView};
use crate::synthdata::{sample_indices, Dataset, Structure};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Usage(m) => EvalError::Usage(m),
            ModelError::Io(io) => EvalError::Io(io),
            other => EvalError::Config(other.to_string()),
        }
    }
}

/// How per-class classification scores aggregate the c samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRule {
    /// ln (1/S) Σ p(x|c_s), the expected conditional likelihood.
    ExpectedLikelihood,
    /// (1/S) Σ ln p(x|c_s).
    MeanLogLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Importance samples for the joint NLL.
    pub k: usize,
    /// c samples per expectation in the generation and classification metrics.
    pub mc_outer: usize,
    pub n_way: usize,
    pub nodes: usize,
    pub seed: u64,
    /// Support sets drawn per class for encoded information and generation.
    pub episodes_per_class: usize,
    /// Held-out elements scored per support set.
    pub heldout: usize,
    pub classification_episodes: usize,
    pub score_rule: ScoreRule,
    /// Adds the quadrature joint NLL row (latent dimension ≤ 2).
    pub quadrature: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 200,
            mc_outer: 20,
            n_way: 2,
            nodes: 64,
            seed: 0,
            episodes_per_class: 10,
            heldout: 10,
            classification_episodes: 1000,
            score_rule: ScoreRule::ExpectedLikelihood,
            quadrature: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k == 0 || self.mc_outer == 0 || self.episodes_per_class == 0 || self.heldout == 0 {
            return Err(EvalError::Config(
                "k, mc_outer, episodes_per_class and heldout must be at least 1".into(),
            ));
        }
        if self.n_way < 2 {
            return Err(EvalError::Config("n_way must be at least 2".into()));
        }
        if self.nodes < 8 {
            return Err(EvalError::Config(
                "quadrature needs at least 8 nodes".into(),
            ));
        }
        Ok(())
    }
}

const TAG_INFO: u64 = 1;
const TAG_GEN: u64 = 2;
const TAG_CLASS: u64 = 3;
const TAG_IW: u64 = 4;
const TAG_STYLE: u64 = 5;

/// RNG for one (metric, support size, unit) cell.
pub fn stream_rng(seed: u64, tag: u64, d_size: usize, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (d_size as u64).rotate_left(32),
    );
    rng.set_stream(unit as u64);
    rng
}

/// ln p(x | c) with any per-element latent integrated out analytically.
pub fn marginal_log_likelihood(view: &ParamView<'_, f64>, x: f64, c: &[f64]) -> f64 {
    let dec = view
        .decode_params(c)
        .expect("decoder input has the latent dimension");
    let x = ingest(view.config().family, x);
    if view.config().z_branch.is_some() {
        if let Decoded::Gaussian { mu, sigma } = dec {
            let w_z = view.model.get("zdec.w")[0];
            return gaussian_logpdf(x, mu, (sigma * sigma + w_z * w_z).sqrt());
        }
    }
    dec.log_density(x)
}

fn require_flat(model: &ModelParams) -> Result<(), EvalError> {
    if model.config.structure != Structure::Flat {
        return Err(EvalError::Unsupported(
            "the metric suite covers flat models only".into(),
        ));
    }
    Ok(())
}

fn check_family(model: &ModelParams, ds: &Dataset) -> Result<(), EvalError> {
    same_family(model, ds)?;
    require_flat(model)
}

fn same_family(model: &ModelParams, ds: &Dataset) -> Result<(), EvalError> {
    if model.config.family != ds.meta.family {
        return Err(EvalError::Config(format!(
            "model family {} does not match dataset family {}",
            model.config.family, ds.meta.family
        )));
    }
    Ok(())
}

fn sample_c<G: Rng>(q: &crate::dists::GaussianPosterior<f64>, rng: &mut G) -> Vec<f64> {
    let noise = standard_normal_vec(rng, q.dim());
    reparam_sample(q, &noise).expect("matching dimension")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean over classes and support draws of KL[q(c;D) ∥ p(c)].
pub fn encoded_information(
    model: &ModelParams,
    ds: &Dataset,
    d_size: usize,
    cfg: &EvalConfig,
) -> Result<f64, EvalError> {
    check_family(model, ds)?;
    let per_class: Result<Vec<f64>, EvalError> = (0..ds.classes.len())
        .into_par_iter()
        .map(|i| {
            let xs = &ds.classes[i].elements;
            if d_size == 0 || d_size > xs.len() {
                return Err(EvalError::Usage(format!(
                    "support size {d_size} does not fit a class of {}",
                    xs.len()
                )));
            }
            let mut rng = stream_rng(cfg.seed, TAG_INFO, d_size, i);
            let mut acc = Vec::with_capacity(cfg.episodes_per_class);
            for _ in 0..cfg.episodes_per_class {
                let d: Vec<f64> = sample_indices(xs.len(), d_size, &mut rng)
                    .iter()
                    .map(|&j| xs[j])
                    .collect();
                acc.push(kl_to_standard(&model.view().encode_class(&d)?));
            }
            Ok(mean(&acc))
        })
        .collect();
    Ok(mean(&per_class?))
}

/// −E_{c∼q(c;D)} ln p(x'|c) over held-out x' from the same class, outside D.
pub fn fewshot_generation_nll(
    model: &ModelParams,
    ds: &Dataset,
    d_size: usize,
    cfg: &EvalConfig,
) -> Result<f64, EvalError> {
    check_family(model, ds)?;
    let per_class: Result<Vec<f64>, EvalError> = (0..ds.classes.len())
        .into_par_iter()
        .map(|i| {
            let xs = &ds.classes[i].elements;
            if d_size == 0 || xs.len() <= d_size {
                return Err(EvalError::Usage(format!(
                    "class {i} has {} elements, too few to hold out a point beyond a support of {d_size}",
                    xs.len()
                )));
            }
            let held = cfg.heldout.min(xs.len() - d_size);
            let mut rng = stream_rng(cfg.seed, TAG_GEN, d_size, i);
            let view = model.view();
            let mut acc = Vec::new();
            for _ in 0..cfg.episodes_per_class {
                let idx = sample_indices(xs.len(), d_size + held, &mut rng);
                let d: Vec<f64> = idx[..d_size].iter().map(|&j| xs[j]).collect();
                let q = view.encode_class(&d)?;
                for _ in 0..cfg.mc_outer {
                    let c = sample_c(&q, &mut rng);
                    for &j in &idx[d_size..] {
                        acc.push(-marginal_log_likelihood(&view, xs[j], &c));
                    }
                }
            }
            Ok(mean(&acc))
        })
        .collect();
    Ok(mean(&per_class?))
}

/// Score of query x against one support set.
pub fn class_score<G: Rng>(
    model: &ModelParams,
    x: f64,
    d: &[f64],
    mc: usize,
    rule: ScoreRule,
    rng: &mut G,
) -> Result<f64, EvalError> {
    let view = model.view();
    let q = view.encode_class(d)?;
    let lls: Vec<f64> = (0..mc)
        .map(|_| marginal_log_likelihood(&view, x, &sample_c(&q, rng)))
        .collect();
    Ok(match rule {
        ScoreRule::ExpectedLikelihood => log_sum_exp(&lls) - (mc as f64).ln(),
        ScoreRule::MeanLogLikelihood => mean(&lls),
    })
}

/// First index of the largest score.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Error rate of n-way few-shot classification by expected conditional
/// likelihood. The query is drawn from one of the n classes and excluded
/// from that class's support.
pub fn fewshot_classification_error(
    model: &ModelParams,
    ds: &Dataset,
    d_size: usize,
    cfg: &EvalConfig,
) -> Result<f64, EvalError> {
    check_family(model, ds)?;
    if ds.classes.len() < cfg.n_way {
        return Err(EvalError::Usage(format!(
            "{}-way classification needs at least {} classes",
            cfg.n_way, cfg.n_way
        )));
    }
    let errors: Result<Vec<f64>, EvalError> = (0..cfg.classification_episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(cfg.seed, TAG_CLASS, d_size, e);
            let chosen = sample_indices(ds.classes.len(), cfg.n_way, &mut rng);
            let target = rng.random_range(0..cfg.n_way);
            let t_elems = &ds.classes[chosen[target]].elements;
            if t_elems.len() <= d_size {
                return Err(EvalError::Usage(format!(
                    "classes need more than {d_size} elements to hold out a query"
                )));
            }
            let q_idx = rng.random_range(0..t_elems.len());
            let x = t_elems[q_idx];
            let mut scores = Vec::with_capacity(cfg.n_way);
            for (j, &ci) in chosen.iter().enumerate() {
                let elems = &ds.classes[ci].elements;
                let pool: Vec<f64> = if j == target {
                    elems
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != q_idx)
                        .map(|(_, v)| *v)
                        .collect()
                } else {
                    elems.clone()
                };
                if pool.len() < d_size {
                    return Err(EvalError::Usage(format!(
                        "class {ci} is smaller than the support size {d_size}"
                    )));
                }
                let d: Vec<f64> = sample_indices(pool.len(), d_size, &mut rng)
                    .iter()
                    .map(|&k| pool[k])
                    .collect();
                scores.push(class_score(
                    model,
                    x,
                    &d,
                    cfg.mc_outer,
                    cfg.score_rule,
                    &mut rng,
                )?);
            }
            Ok(if argmax(&scores) == target { 0.0 } else { 1.0 })
        })
        .collect();
    Ok(mean(&errors?))
}

/// Held-out NLL of one factorial cell under its own style code and under
/// the codes of the other styles.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleTransferCell {
    pub content_id: usize,
    pub style_id: usize,
    pub matched_nll: f64,
    /// Mean over every other style.
    pub mismatched_nll: f64,
}

impl StyleTransferCell {
    pub fn matched_wins(&self) -> bool {
        self.matched_nll < self.mismatched_nll
    }
}

/// Decodes held-out elements of cell (A, B) from the posterior-mean content
/// code of A paired with the style code of B, and of every C ≠ B. Codes are
/// inferred from `d_size` elements of the content or style class in `train`.
pub fn style_transfer(
    model: &ModelParams,
    train: &Dataset,
    heldout: &Dataset,
    d_size: usize,
    cfg: &EvalConfig,
) -> Result<Vec<StyleTransferCell>, EvalError> {
    same_family(model, train)?;
    if model.config.structure != Structure::Factorial
        || train.meta.structure != Structure::Factorial
        || heldout.meta.structure != Structure::Factorial
    {
        return Err(EvalError::Unsupported(
            "style transfer needs a factorial model and factorial datasets".into(),
        ));
    }
    let n_styles = train.meta.n_styles.unwrap_or(0);
    if n_styles < 2 {
        return Err(EvalError::Usage(
            "style transfer needs at least two styles".into(),
        ));
    }
    let view = model.view();
    let cells: Result<Vec<StyleTransferCell>, EvalError> = (0..heldout.classes.len())
        .into_par_iter()
        .map(|i| {
            let cell = &heldout.classes[i];
            let (a, b) = match (cell.content_id, cell.style_id) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(EvalError::Usage(format!("cell {i} lacks factor ids"))),
            };
            let mut rng = stream_rng(cfg.seed, TAG_STYLE, d_size, i);
            let mut draw = |pool: Vec<f64>| -> Result<Vec<f64>, EvalError> {
                if d_size == 0 || d_size > pool.len() {
                    return Err(EvalError::Usage(format!(
                        "support size {d_size} does not fit a factor class of {}",
                        pool.len()
                    )));
                }
                Ok(sample_indices(pool.len(), d_size, &mut rng)
                    .iter()
                    .map(|&j| pool[j])
                    .collect())
            };
            let mut nll = vec![0.0; n_styles];
            for _ in 0..cfg.episodes_per_class {
                let content = view
                    .encode_with("enc_content", &draw(train.content_elements(a))?, None)?
                    .mean;
                for (s, acc) in nll.iter_mut().enumerate() {
                    let style = view
                        .encode_with("enc_style", &draw(train.style_elements(s))?, None)?
                        .mean;
                    let code: Vec<f64> = content.iter().chain(&style).copied().collect();
                    let ll: f64 = cell
                        .elements
                        .iter()
                        .map(|&x| view.log_likelihood(x, &code))
                        .sum::<Result<f64, ModelError>>()?;
                    *acc -= ll / cell.elements.len() as f64;
                }
            }
            let episodes = cfg.episodes_per_class as f64;
            let others: Vec<f64> = (0..n_styles)
                .filter(|&s| s != b)
                .map(|s| nll[s] / episodes)
                .collect();
            Ok(StyleTransferCell {
                content_id: a,
                style_id: b,
                matched_nll: nll[b] / episodes,
                mismatched_nll: mean(&others),
            })
        })
        .collect();
    cells
}

/// log (1/k) Σ_s p(c_s) p(X|c_s) / q(c_s;X) with c_s ~ q(c;X).
pub fn iw_log_marginal<G: Rng>(
    model: &ModelParams,
    xs: &[f64],
    k: usize,
    rng: &mut G,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::Config("k must be at least 1".into()));
    }
    let view = model.view();
    let q = view.encode_class(xs)?;
    let mut logw = Vec::with_capacity(k);
    for _ in 0..k {
        let c = sample_c(&q, rng);
        let mut w = view.prior_logpdf(&c) - q.logpdf(&c);
        for &x in xs {
            w += marginal_log_likelihood(&view, x, &c);
        }
        logw.push(w);
    }
    Ok(log_sum_exp(&logw) - (k as f64).ln())
}

/// Per-element importance-weighted NLL of one class.
pub fn iw_joint_nll<G: Rng>(
    model: &ModelParams,
    xs: &[f64],
    k: usize,
    rng: &mut G,
) -> Result<f64, EvalError> {
    Ok(-iw_log_marginal(model, xs, k, rng)? / xs.len() as f64)
}

/// Mean over classes of the per-element IW joint NLL.
pub fn dataset_iw_nll(
    model: &ModelParams,
    ds: &Dataset,
    cfg: &EvalConfig,
) -> Result<f64, EvalError> {
    check_family(model, ds)?;
    let per: Result<Vec<f64>, EvalError> = (0..ds.classes.len())
        .into_par_iter()
        .map(|i| {
            iw_joint_nll(
                model,
                &ds.classes[i].elements,
                cfg.k,
                &mut stream_rng(cfg.seed, TAG_IW, 0, i),
            )
        })
        .collect();
    Ok(mean(&per?))
}

/// Mean over classes of the per-element quadrature joint NLL.
pub fn dataset_quadrature_nll(
    model: &ModelParams,
    ds: &Dataset,
    nodes: usize,
) -> Result<f64, EvalError> {
    check_family(model, ds)?;
    let per: Result<Vec<f64>, EvalError> = ds
        .classes
        .par_iter()
        .map(|c| quadrature_joint_nll(model, &c.elements, nodes))
        .collect();
    Ok(mean(&per?))
}

pub const METRIC_INFO: &str = "encoded_information";
pub const METRIC_GEN: &str = "generation_nll";
pub const METRIC_CLASS: &str = "classification_error";
pub const METRIC_JOINT: &str = "joint_nll";
pub const METRIC_QUAD: &str = "quadrature_joint_nll";

/// One evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub objective: String,
    pub family: Family,
    pub d_size: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub metric: String,
    #[serde(serialize_with = "seventeen_digits")]
    pub value: f64,
}

fn seventeen_digits<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::synthdata::fmt_f64(*v))
}

/// Fields stamped on every record of one evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub objective: String,
    pub seed: u64,
}

/// All metrics for each support size, in a fixed order: encoded information,
/// generation NLL, classification error, joint NLL, and optionally the
/// quadrature joint NLL.
pub fn run_metric_suite(
    model: &ModelParams,
    ds: &Dataset,
    d_sizes: &[usize],
    cfg: &EvalConfig,
    prov: &Provenance,
) -> Result<Vec<MetricRecord>, EvalError> {
    cfg.validate()?;
    check_family(model, ds)?;
    let quad = if cfg.quadrature {
        if model.config.latent_dim > 2 {
            return Err(EvalError::Unsupported(
                "quadrature needs a latent dimension of 1 or 2".into(),
            ));
        }
        Some(dataset_quadrature_nll(model, ds, cfg.nodes)?)
    } else {
        None
    };
    let joint = dataset_iw_nll(model, ds, cfg)?;
    let mut out = Vec::new();
    for &n in d_sizes {
        let mut push = |metric: &str, value: f64| {
            out.push(MetricRecord {
                objective: prov.objective.clone(),
                family: model.config.family,
                d_size: n,
                latent_dim: model.config.latent_dim,
                seed: prov.seed,
                metric: metric.to_string(),
                value,
            })
        };
        push(METRIC_INFO, encoded_information(model, ds, n, cfg)?);
        push(METRIC_GEN, fewshot_generation_nll(model, ds, n, cfg)?);
        push(
            METRIC_CLASS,
            fewshot_classification_error(model, ds, n, cfg)?,
        );
        push(METRIC_JOINT, joint);
        if let Some(q) = quad {
            push(METRIC_QUAD, q);
        }
    }
    Ok(out)
}

pub fn write_csv<W: Write>(
    records: &[MetricRecord],
    out: W,
    header: bool,
) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() && header {
        w.write_record([
            "objective",
            "family",
            "d_size",
            "latent_dim",
            "seed",
            "metric",
            "value",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    let records: Result<Vec<MetricRecord>, csv::Error> = r.deserialize().collect();
    Ok(records?)
}

#[cfg(test)]
mod tests {
    use super::oracles::{exact_conjugate_log_marginal, ConjugateHyper};
    use super::*;
    use crate::model::{conjugate_exact, ModelConfig};
    use crate::synthdata::{generate, generate_factorial, Hyper};

    #[test]
    fn zero_model_encodes_nothing() {
        let ds = generate(Family::Gaussian, 5, 10, 0, &Hyper::default()).unwrap();
        let m = ModelParams::zeros(ModelConfig::flat(Family::Gaussian, 2)).unwrap();
        assert_eq!(
            encoded_information(&m, &ds, 3, &EvalConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_encoder_information() {
        let ds = generate(Family::Gaussian, 5, 10, 0, &Hyper::default()).unwrap();
        let mut m = ModelParams::zeros(ModelConfig::flat(Family::Gaussian, 1)).unwrap();
        m.set("enc.b_mu", &[1.0]);
        assert!(
            (encoded_information(&m, &ds, 2, &EvalConfig::default()).unwrap() - 0.5).abs() < 1e-15
        );
    }

    #[test]
    fn iw_with_exact_posterior_is_exact() {
        let xs = [0.4, -1.1, 2.3];
        let m = conjugate_exact(xs.len());
        let exact = exact_conjugate_log_marginal(ConjugateHyper::STANDARD, &xs);
        for k in [1, 10, 200] {
            let v = iw_log_marginal(&m, &xs, k, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
            assert!((v - exact).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn quadrature_examples() {
        let m = conjugate_exact(1);
        assert!((quadrature_joint_nll(&m, &[0.0], 64).unwrap() - 1.265_512_12).abs() < 1e-8);
        let m2 = conjugate_exact(2);
        assert!((quadrature_joint_nll(&m2, &[1.0, -1.0], 64).unwrap() - 1.693_591_61).abs() < 1e-8);
    }

    #[test]
    fn argmax_ignores_shifts() {
        let s = [0.3, 1.2, -0.5];
        let shifted: Vec<f64> = s.iter().map(|v| v - 40.0).collect();
        assert_eq!(argmax(&s), argmax(&shifted));
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![MetricRecord {
            objective: "vhe".into(),
            family: Family::VonMises,
            d_size: 5,
            latent_dim: 2,
            seed: 3,
            metric: METRIC_GEN.into(),
            value: 0.1 + 0.2,
        }];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("objective,family,d_size,latent_dim,seed,metric,value\n"));
        assert!(text.contains("3.0000000000000004e-1"));
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn suite_shape() {
        let ds = generate(Family::Gaussian, 6, 12, 1, &Hyper::default()).unwrap();
        let m = ModelParams::init(ModelConfig::flat(Family::Gaussian, 1), 0).unwrap();
        let cfg = EvalConfig {
            k: 5,
            mc_outer: 3,
            episodes_per_class: 2,
            classification_episodes: 20,
            quadrature: true,
            ..EvalConfig::default()
        };
        let prov = Provenance {
            objective: "ns".into(),
            seed: 4,
        };
        let recs = run_metric_suite(&m, &ds, &[1, 2, 5], &cfg, &prov).unwrap();
        assert_eq!(recs.len(), 15);
        assert!(recs.iter().all(|r| r.objective == "ns" && r.seed == 4));
        let again = run_metric_suite(&m, &ds, &[1, 2, 5], &cfg, &prov).unwrap();
        assert_eq!(recs, again);
    }

    #[test]
    fn style_transfer_needs_factorial_inputs() {
        let ds = generate(Family::Gaussian, 4, 10, 1, &Hyper::default()).unwrap();
        let m = ModelParams::init(ModelConfig::flat(Family::Gaussian, 1), 0).unwrap();
        let err = style_transfer(&m, &ds, &ds, 2, &EvalConfig::default()).unwrap_err();
        assert!(matches!(err, EvalError::Unsupported(_)));
    }

    #[test]
    fn style_transfer_covers_every_cell() {
        let full = generate_factorial(2, 3, 12, 2, &Hyper::default()).unwrap();
        let (train, held) = full.split_elements(8).unwrap();
        let m = ModelParams::init(ModelConfig::for_dataset(&train, 1), 3).unwrap();
        let cfg = EvalConfig {
            episodes_per_class: 2,
            ..EvalConfig::default()
        };
        let cells = style_transfer(&m, &train, &held, 3, &cfg).unwrap();
        assert_eq!(cells.len(), 6);
        assert!(cells
            .iter()
            .all(|c| c.matched_nll.is_finite() && c.mismatched_nll.is_finite()));
        assert_eq!(cells, style_transfer(&m, &train, &held, 3, &cfg).unwrap());
    }
}
