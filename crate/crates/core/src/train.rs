//! Minibatch training with reparameterized gradients, Adam, and linear KL
//! annealing.
//!
//! One epoch visits every class `episodes_per_class` times in shuffled order
//! and groups the visits into minibatches of `batch_size` episodes. A run is
//! a pure function of the dataset, the initial parameters and the config.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adiff::{Real, Tape};
use crate::dists::Family;
use crate::model::{ModelConfig, ModelError, ModelParams, ParamView, ZBranch};
use crate::objectives::{
    loss_hierarchical, loss_ns, loss_resample, loss_rescale, loss_structured, loss_tightened,
    loss_vae, loss_vhe, loss_vhe_z, AuxParams, AuxView, FactorSupport, HierEpisode, LossBreakdown,
    LossOpts, ObjectiveError, ObjectiveKind, ObjectiveSpec,
};
use crate::synthdata::{
    sample_episode_from, sample_indices, DataError, Dataset, Episode, Structure,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training configuration error: {0}")]
    Config(String),
    #[error("non-finite {what} in run {run}, epoch {epoch}, step {step}")]
    NonFinite {
        what: String,
        run: usize,
        epoch: usize,
        step: usize,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<ObjectiveError> for TrainError {
    fn from(e: ObjectiveError) -> Self {
        TrainError::Config(e.to_string())
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in the descent direction. Rejects
/// non-finite gradients before touching any state.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    hp: &AdamConfig,
) -> Result<(), usize> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(state.m.len(), grads.len());
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(i);
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

/// min(1, (epoch+1)/anneal_epochs), or 1 without annealing.
pub fn anneal_weight(epoch: usize, anneal_epochs: usize) -> f64 {
    if anneal_epochs == 0 {
        1.0
    } else {
        ((epoch + 1) as f64 / anneal_epochs as f64).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: ObjectiveSpec,
    pub latent_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub anneal_epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub runs: usize,
    pub episodes_per_class: usize,
    /// Parameter slices held at their initial values, matched by name prefix.
    pub frozen: Vec<String>,
    /// q(z; c, x) instead of q(z; x) for the per-element objective.
    pub z_conditions_on_c: bool,
    /// Embedding width of the tightened bound's inverse model.
    pub aux_embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: ObjectiveSpec::new(ObjectiveKind::Vhe, 1),
            latent_dim: 2,
            batch_size: 16,
            epochs: 200,
            anneal_epochs: 50,
            adam: AdamConfig::default(),
            seed: 0,
            runs: 3,
            episodes_per_class: 1,
            frozen: Vec::new(),
            z_conditions_on_c: false,
            aux_embed_dim: 2,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.epochs + self.anneal_epochs
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.objective.validate()?;
        let a = &self.adam;
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.runs == 0 || self.batch_size == 0 || self.episodes_per_class == 0 {
            return bad("runs, batch_size and episodes_per_class must be at least 1");
        }
        if !(a.lr >= 0.0) || !a.lr.is_finite() {
            return bad("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.latent_dim == 0 || self.aux_embed_dim == 0 {
            return bad("latent_dim and aux_embed_dim must be at least 1");
        }
        Ok(())
    }

    /// The model architecture this config trains on `ds`.
    pub fn model_config(&self, ds: &Dataset) -> ModelConfig {
        let mut cfg = ModelConfig::for_dataset(ds, self.latent_dim);
        if self.objective.kind == ObjectiveKind::VheZ {
            cfg.z_branch = Some(ZBranch {
                conditions_on_c: self.z_conditions_on_c,
            });
        }
        cfg
    }

    /// Seed of restart `run`, shared by model initialization and episode
    /// sampling.
    pub fn run_seed(&self, run: usize) -> u64 {
        splitmix(self.seed ^ splitmix(run as u64 + 1))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Checks that the objective can run on the dataset's structure and class
/// sizes.
pub fn check_compatible(ds: &Dataset, cfg: &TrainConfig) -> Result<(), TrainError> {
    let kind = cfg.objective.kind;
    let structure = ds.meta.structure;
    let ok = match kind {
        ObjectiveKind::Hierarchical => structure == Structure::Hierarchical,
        ObjectiveKind::Structured => structure != Structure::Hierarchical,
        _ => structure == Structure::Flat,
    };
    if !ok {
        let s = format!("{structure:?}").to_lowercase();
        return Err(TrainError::Config(format!(
            "objective {kind} cannot train on a {s} dataset"
        )));
    }
    if kind == ObjectiveKind::VheZ && ds.meta.family != Family::Gaussian {
        return Err(TrainError::Config(
            "vhe_z is only defined for the gaussian family".into(),
        ));
    }
    let n = cfg.objective.d_size;
    let smallest = ds
        .classes
        .iter()
        .map(|c| c.elements.len())
        .min()
        .unwrap_or(0);
    let limit = if structure == Structure::Factorial && kind == ObjectiveKind::Structured {
        smallest
            * ds.meta
                .n_contents
                .unwrap_or(1)
                .min(ds.meta.n_styles.unwrap_or(1))
    } else {
        smallest
    };
    if n > limit {
        return Err(TrainError::Config(format!(
            "d_size {n} exceeds the smallest class ({limit} elements)"
        )));
    }
    Ok(())
}

/// One training item: whatever an objective needs from the dataset.
#[derive(Debug, Clone)]
pub enum Item {
    Single(f64),
    Episode(Episode),
    Support(Vec<f64>),
    Rescale {
        x: f64,
        d: Vec<f64>,
        class_size: usize,
    },
    Factors {
        x: f64,
        supports: Vec<FactorSupport>,
    },
    Hier(HierEpisode),
}

/// Draws the item `kind` needs from the class (or factorial cell) at
/// position `class_idx`.
pub fn sample_item<G: Rng>(
    ds: &Dataset,
    kind: ObjectiveKind,
    class_idx: usize,
    d_size: usize,
    rng: &mut G,
) -> Result<Item, TrainError> {
    let class = &ds.classes[class_idx];
    let xs = &class.elements;
    let id = class.class_id;
    Ok(match kind {
        ObjectiveKind::Vae => Item::Single(xs[rng.random_range(0..xs.len())]),
        ObjectiveKind::Ns => {
            let idx = sample_indices(xs.len(), d_size, rng);
            Item::Support(idx.iter().map(|&i| xs[i]).collect())
        }
        ObjectiveKind::Rescale => {
            let ep = sample_episode_from(xs, id, d_size, rng)?;
            let x = ep.d[rng.random_range(0..ep.d.len())];
            Item::Rescale {
                x,
                d: ep.d,
                class_size: ep.class_size,
            }
        }
        ObjectiveKind::Structured if ds.meta.structure == Structure::Factorial => {
            let x = xs[rng.random_range(0..xs.len())];
            let content =
                ds.content_elements(class.content_id.expect("factorial cell has a content id"));
            let style = ds.style_elements(class.style_id.expect("factorial cell has a style id"));
            let mut supports = Vec::with_capacity(2);
            for pool in [content, style] {
                let idx = sample_indices(pool.len(), d_size, rng);
                supports.push(FactorSupport {
                    d: idx.iter().map(|&i| pool[i]).collect(),
                    class_size: pool.len(),
                });
            }
            Item::Factors { x, supports }
        }
        ObjectiveKind::Structured => {
            let ep = sample_episode_from(xs, id, d_size, rng)?;
            Item::Factors {
                x: ep.x,
                supports: vec![FactorSupport {
                    d: ep.d,
                    class_size: ep.class_size,
                }],
            }
        }
        ObjectiveKind::Hierarchical => {
            let group =
                ds.group_elements(class.group_id.expect("hierarchical class has a group id"));
            let ep = sample_episode_from(xs, id, d_size, rng)?;
            let idx = sample_indices(group.len(), d_size.min(group.len()), rng);
            Item::Hier(HierEpisode {
                x: ep.x,
                d_a: idx.iter().map(|&i| group[i]).collect(),
                d_c: ep.d,
                group_size: group.len(),
                class_size: ep.class_size,
            })
        }
        ObjectiveKind::Vhe
        | ObjectiveKind::Resample
        | ObjectiveKind::VheZ
        | ObjectiveKind::Tightened => {
            let mut ep = sample_episode_from(xs, class_idx, d_size, rng)?;
            ep.class_id = class_idx;
            Item::Episode(ep)
        }
    })
}

/// Loss of one item. `aux` is required for the tightened objective.
pub fn item_loss<R: Real, G: Rng>(
    view: &ParamView<'_, R>,
    aux: Option<&AuxView<'_, R>>,
    ds: &Dataset,
    kind: ObjectiveKind,
    item: &Item,
    opts: LossOpts,
    rng: &mut G,
) -> Result<LossBreakdown<R>, ObjectiveError> {
    let mismatch = || ObjectiveError::Usage(format!("item does not fit objective {kind}"));
    Ok(match (kind, item) {
        (ObjectiveKind::Vae, Item::Single(x)) => loss_vae(view, *x, opts, rng)?,
        (ObjectiveKind::Ns, Item::Support(d)) => loss_ns(view, d, opts, rng)?,
        (ObjectiveKind::Vhe, Item::Episode(ep)) => loss_vhe(view, ep, opts, rng)?,
        (ObjectiveKind::Resample, Item::Episode(ep)) => loss_resample(view, ep, opts, rng)?,
        (ObjectiveKind::VheZ, Item::Episode(ep)) => loss_vhe_z(view, ep, opts, rng)?,
        (ObjectiveKind::Rescale, Item::Rescale { x, d, class_size }) => {
            loss_rescale(view, *x, d, *class_size, opts, rng)?
        }
        (ObjectiveKind::Structured, Item::Factors { x, supports }) => {
            loss_structured(view, *x, supports, opts, rng)?
        }
        (ObjectiveKind::Hierarchical, Item::Hier(ep)) => loss_hierarchical(view, ep, opts, rng)?,
        (ObjectiveKind::Tightened, Item::Episode(ep)) => {
            let aux = aux.ok_or_else(|| {
                ObjectiveError::Config("tightened objective needs auxiliary parameters".into())
            })?;
            loss_tightened(view, aux, ep, &ds.classes[ep.class_id].elements, opts, rng)?
        }
        _ => return Err(mismatch()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_kl_c: f64,
    pub anneal: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub run: usize,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub params: ModelParams,
    pub aux: Option<AuxParams>,
    /// Kept in memory only; never written to output files.
    pub wall_clock_secs: f64,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::INFINITY, |e| e.mean_loss)
    }

    /// `epoch,mean_loss,mean_kl_c,anneal` rows at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,mean_kl_c,anneal\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e}\n",
                e.epoch, e.mean_loss, e.mean_kl_c, e.anneal
            ));
        }
        s
    }
}

/// Mask of trainable flat indices.
pub fn trainable_mask(params: &ModelParams, frozen: &[String]) -> Vec<bool> {
    (0..params.len())
        .map(|i| {
            !frozen
                .iter()
                .any(|p| params.slice_of(i).starts_with(p.as_str()))
        })
        .collect()
}

/// Trains one run from `init`, calling `observe` after every epoch.
pub fn train_run_with(
    ds: &Dataset,
    init: ModelParams,
    cfg: &TrainConfig,
    run: usize,
    mut observe: impl FnMut(&EpochStats, &ModelParams, Option<&AuxParams>),
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    check_compatible(ds, cfg)?;
    let start = Instant::now();
    let seed = cfg.run_seed(run);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let kind = cfg.objective.kind;
    let mut params = init;
    let mut aux = (kind == ObjectiveKind::Tightened).then(|| {
        let sizes = ds.classes.iter().map(|c| c.elements.len()).collect();
        AuxParams::init(cfg.aux_embed_dim, params.config.latent_dim, sizes, seed)
    });
    let mask = trainable_mask(&params, &cfg.frozen);
    let n_model = mask.iter().filter(|&&t| t).count();
    let n_aux = aux.as_ref().map_or(0, |a| a.values.len());
    let mut adam = AdamState::new(n_model + n_aux);
    let mut history = Vec::with_capacity(cfg.total_epochs());

    for epoch in 0..cfg.total_epochs() {
        let anneal = anneal_weight(epoch, cfg.anneal_epochs);
        let opts = cfg.objective.opts(anneal);
        let mut order: Vec<usize> = (0..ds.classes.len())
            .flat_map(|c| std::iter::repeat_n(c, cfg.episodes_per_class))
            .collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut kl_sum) = (0.0, 0.0);
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let tape = Tape::new();
            let (vars, leaves) = params.to_tape(&tape, |i| mask[i]);
            let aux_vars: Vec<_> = aux.as_ref().map_or(Vec::new(), |a| {
                a.values.iter().map(|&v| tape.var(v)).collect()
            });
            let view = params.view_of(&vars);
            let aux_view = aux.as_ref().map(|a| a.view_of(&aux_vars));
            let mut total = None;
            for &class_idx in batch {
                let item = sample_item(ds, kind, class_idx, cfg.objective.d_size, &mut rng)?;
                let loss = item_loss(&view, aux_view.as_ref(), ds, kind, &item, opts, &mut rng)?;
                loss_sum += loss.total.value();
                kl_sum += loss.kl_c();
                total = Some(match total {
                    None => loss.total,
                    Some(t) => t + loss.total,
                });
            }
            let mean = total.expect("nonempty minibatch") / batch.len() as f64;
            let non_finite = |what: &str| TrainError::NonFinite {
                what: what.into(),
                run,
                epoch,
                step,
            };
            if tape.check().is_err() || !mean.value().is_finite() {
                return Err(non_finite("loss"));
            }
            let grads = tape
                .backward(mean)
                .map_err(|_| non_finite("loss"))?
                .leaves();
            let mut flat: Vec<f64> = leaves.iter().map(|&i| params.values[i]).collect();
            if let Some(a) = &aux {
                flat.extend_from_slice(&a.values);
            }
            adam_step(&mut adam, &mut flat, &grads, &cfg.adam)
                .map_err(|i| non_finite(&format!("gradient (parameter {i})")))?;
            for (k, &i) in leaves.iter().enumerate() {
                params.values[i] = flat[k];
            }
            if let Some(a) = &mut aux {
                a.values.copy_from_slice(&flat[leaves.len()..]);
            }
        }
        let n = order.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / n,
            mean_kl_c: kl_sum / n,
            anneal,
        };
        observe(&stats, &params, aux.as_ref());
        history.push(stats);
    }
    Ok(TrainHistory {
        run,
        seed,
        epochs: history,
        params,
        aux,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn train_run(
    ds: &Dataset,
    init: ModelParams,
    cfg: &TrainConfig,
    run: usize,
) -> Result<TrainHistory, TrainError> {
    train_run_with(ds, init, cfg, run, |_, _, _| {})
}

/// All `runs` restarts from fresh initializations, in parallel.
pub fn train_all(ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<TrainHistory>, TrainError> {
    cfg.validate()?;
    check_compatible(ds, cfg)?;
    let model_cfg = cfg.model_config(ds);
    (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let init = ModelParams::init(model_cfg.clone(), cfg.run_seed(run))?;
            train_run(ds, init, cfg, run)
        })
        .collect()
}

/// Index of the run with the lowest final-epoch loss; ties go to the lowest
/// index.
pub fn select_best(histories: &[TrainHistory]) -> Option<usize> {
    best_index(histories.iter().map(TrainHistory::final_loss))
}

pub fn best_index(losses: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in losses.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

/// Trains every restart and returns the best one.
pub fn train_best(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainHistory, TrainError> {
    let mut all = train_all(ds, cfg)?;
    let best = select_best(&all).expect("at least one run");
    Ok(all.swap_remove(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, generate_hierarchical, Hyper};

    #[test]
    fn adam_examples() {
        let hp = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, -2.0];
        adam_step(&mut st, &mut p, &[0.0, 0.0], &hp).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[1.0], &hp).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);

        let hp0 = AdamConfig {
            lr: 0.5,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
        };
        let mut st = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        adam_step(&mut st, &mut p, &[3.0, -0.25], &hp0).unwrap();
        assert!((p[0] + 0.5 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p[1] - 0.5 * 0.25 / (0.25 + 1e-8)).abs() < 1e-15);

        let mut st = AdamState::new(1);
        assert_eq!(adam_step(&mut st, &mut [0.0], &[f64::NAN], &hp), Err(0));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn anneal_examples() {
        assert_eq!(anneal_weight(0, 50), 0.02);
        assert_eq!(anneal_weight(49, 50), 1.0);
        assert_eq!(anneal_weight(120, 50), 1.0);
        assert_eq!(anneal_weight(0, 0), 1.0);
    }

    #[test]
    fn select_best_examples() {
        assert_eq!(best_index([3.0]), Some(0));
        assert_eq!(best_index([5.0, 4.2, 4.9]), Some(1));
        assert_eq!(best_index([4.0, 3.0, 3.0]), Some(1));
        assert_eq!(best_index([]), None);
    }

    fn small_cfg(kind: ObjectiveKind) -> TrainConfig {
        TrainConfig {
            objective: ObjectiveSpec::new(kind, 2),
            epochs: 2,
            anneal_epochs: 1,
            runs: 1,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let ds = generate(Family::Gaussian, 6, 10, 1, &Hyper::default()).unwrap();
        let cfg = small_cfg(ObjectiveKind::Vhe);
        let a = train_all(&ds, &cfg).unwrap();
        let b = train_all(&ds, &cfg).unwrap();
        assert_eq!(a[0].epochs, b[0].epochs);
        assert_eq!(a[0].params, b[0].params);
        assert_eq!(a[0].epochs.len(), 3);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let ds = generate(Family::Gamma, 4, 8, 2, &Hyper::default()).unwrap();
        let mut cfg = small_cfg(ObjectiveKind::Ns);
        cfg.adam.lr = 0.0;
        let init = ModelParams::init(cfg.model_config(&ds), 1).unwrap();
        let h = train_run(&ds, init.clone(), &cfg, 0).unwrap();
        assert_eq!(h.params, init);
    }

    #[test]
    fn frozen_slices_stay_put() {
        let ds = generate(Family::Gaussian, 4, 8, 2, &Hyper::default()).unwrap();
        let mut cfg = small_cfg(ObjectiveKind::Vhe);
        cfg.frozen = vec!["dec".into()];
        let init = ModelParams::init(cfg.model_config(&ds), 1).unwrap();
        let h = train_run(&ds, init.clone(), &cfg, 0).unwrap();
        assert_eq!(h.params.get("dec.w"), init.get("dec.w"));
        assert_ne!(h.params.get("enc.w_mu"), init.get("enc.w_mu"));
    }

    #[test]
    fn every_objective_trains_on_its_data() {
        let flat = generate(Family::Gaussian, 4, 8, 3, &Hyper::default()).unwrap();
        let hier = generate_hierarchical(2, 2, 6, 3, &Hyper::default()).unwrap();
        let fact = crate::synthdata::generate_factorial(2, 2, 5, 3, &Hyper::default()).unwrap();
        for kind in ObjectiveKind::ALL {
            let ds = match kind {
                ObjectiveKind::Hierarchical => &hier,
                ObjectiveKind::Structured => &fact,
                _ => &flat,
            };
            let h = train_best(ds, &small_cfg(kind)).unwrap_or_else(|e| panic!("{kind}: {e}"));
            assert!(h.final_loss().is_finite(), "{kind}");
            assert_eq!(h.aux.is_some(), kind == ObjectiveKind::Tightened);
        }
    }

    #[test]
    fn mismatched_objective_is_config_error() {
        let flat = generate(Family::Gaussian, 4, 8, 3, &Hyper::default()).unwrap();
        let err = train_best(&flat, &small_cfg(ObjectiveKind::Hierarchical)).unwrap_err();
        assert!(
            matches!(err, TrainError::Config(ref m) if m.contains("hierarchical")),
            "{err}"
        );
        let disc = generate(Family::Discrete, 4, 8, 3, &Hyper::default()).unwrap();
        assert!(train_best(&disc, &small_cfg(ObjectiveKind::VheZ)).is_err());
        let mut cfg = small_cfg(ObjectiveKind::Vhe);
        cfg.objective.d_size = 9;
        assert!(train_best(&flat, &cfg).is_err());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let ds = generate(Family::Gaussian, 4, 8, 3, &Hyper::default()).unwrap();
        let cfg = small_cfg(ObjectiveKind::Vhe);
        let mut init = ModelParams::init(cfg.model_config(&ds), 1).unwrap();
        init.set("enc.b_lv", &[800.0, 0.0]);
        let err = train_run(&ds, init, &cfg, 0).unwrap_err();
        assert!(
            matches!(
                err,
                TrainError::NonFinite {
                    epoch: 0,
                    step: 0,
                    ..
                }
            ),
            "{err}"
        );
    }
}
