//! Property suites run by `homoenc verify`: gradient checks, special
//! functions, objective identities, bound validity on conjugate models, the
//! variational gap, and the marginal-likelihood estimators.
//!
//! Each check yields a [`Property`] carrying the measured value next to its
//! tolerance, so a report shows how close every property came to failing.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::adiff::special::{self, reference};
use crate::adiff::{grad_check, Real, Tape};
use crate::dists::{gaussian_kl, Family, GaussianPosterior};
use crate::eval::oracles::{
    analytic_set_bound, conjugate_posterior, exact_conjugate_log_marginal,
    exact_hierarchical_log_marginal, ConjugateHyper, HierarchyHyper,
};
use crate::eval::{iw_log_marginal, quadrature_log_marginal};
use crate::model::{conjugate_exact, softplus_inverse, ModelConfig, ModelParams, ZBranch};
use crate::objectives::{
    loss_hierarchical, loss_ns, loss_resample, loss_rescale, loss_structured, loss_tightened,
    loss_vae, loss_vhe, loss_vhe_z, AuxParams, FactorSupport, HierEpisode, LossOpts, ObjectiveKind,
    ObjectiveSpec,
};
use crate::synthdata::{
    generate, generate_factorial, generate_hierarchical, sample_episode_from, sample_indices,
    Dataset, Episode, Hyper, Structure,
};
use crate::train::{item_loss, sample_item, train_best, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Gradients,
    Special,
    Identities,
    Bounds,
    Gap,
    Estimators,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Gradients,
        Suite::Special,
        Suite::Identities,
        Suite::Bounds,
        Suite::Gap,
        Suite::Estimators,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Special => "special",
            Suite::Identities => "identities",
            Suite::Bounds => "bounds",
            Suite::Gap => "gap",
            Suite::Estimators => "estimators",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?} (expected one of: gradients, special, identities, bounds, gap, estimators)"))
    }
}

/// Outcome of one checked property. `measured` passes when it is at most
/// `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl Property {
    fn new(suite: Suite, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Property {
            suite,
            name: name.into(),
            measured,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}/{}  measured {:.3e}  tolerance {:.3e}",
            if self.passed() { "pass" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random parameter points per objective and per op.
    pub grad_points: usize,
    /// Monte Carlo episodes per bound.
    pub bound_episodes: usize,
    pub gap_instances: usize,
    /// Training budget of the model certified by quadrature.
    pub train_epochs: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            grad_points: 20,
            bound_episodes: 100_000,
            gap_instances: 100,
            train_epochs: 100,
        }
    }
}

pub fn run(suites: &[Suite], cfg: &VerifyConfig) -> Vec<Property> {
    let mut out = Vec::new();
    for &s in suites {
        out.extend(match s {
            Suite::Gradients => gradient_suite(cfg),
            Suite::Special => special_suite(),
            Suite::Identities => identity_suite(cfg),
            Suite::Bounds => bound_suite(cfg),
            Suite::Gap => gap_suite(cfg),
            Suite::Estimators => estimator_suite(cfg),
        });
    }
    out
}

// ---------------------------------------------------------------- gradients

const GRAD_H: f64 = 1e-4;
/// Step for whole objectives, whose third derivatives are larger.
const OBJECTIVE_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;
const FLAT_FAMILIES: [Family; 5] = [
    Family::Gaussian,
    Family::Mixture2,
    Family::VonMises,
    Family::Gamma,
    Family::Discrete,
];

fn perturb(m: &mut ModelParams, sd: f64, rng: &mut ChaCha8Rng) {
    for v in &mut m.values {
        *v += sd * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Dataset exercised by gradient point `point` of objective `kind`.
fn gradient_dataset(kind: ObjectiveKind, point: usize, seed: u64) -> Dataset {
    let hyper = Hyper {
        gaussian_mu_sd: 2.0,
        mixture_center_sd: 2.0,
        hier_tau: 1.0,
        factorial_content_sd: 2.0,
        factorial_style_sd: 1.0,
        ..Hyper::default()
    };
    let ds = match kind {
        ObjectiveKind::Hierarchical => generate_hierarchical(2, 2, 4, seed, &hyper),
        ObjectiveKind::Structured if point.is_multiple_of(2) => {
            generate_factorial(2, 2, 3, seed, &hyper)
        }
        ObjectiveKind::VheZ => generate(Family::Gaussian, 3, 5, seed, &hyper),
        _ => generate(
            FLAT_FAMILIES[point % FLAT_FAMILIES.len()],
            3,
            5,
            seed,
            &hyper,
        ),
    };
    ds.expect("fixed generator settings are valid")
}

/// Worst relative error between taped and central-difference gradients of
/// one objective at one random parameter point, with the Monte Carlo noise
/// frozen in the tape.
pub fn objective_gradient_error(kind: ObjectiveKind, point: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point as u64);
    let ds = gradient_dataset(kind, point, rng.random());
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(kind, 2),
        latent_dim: 2,
        z_conditions_on_c: point % 2 == 1,
        ..TrainConfig::default()
    };
    let mut model = ModelParams::init(cfg.model_config(&ds), rng.random()).expect("valid model");
    perturb(&mut model, 0.2, &mut rng);
    let aux = (kind == ObjectiveKind::Tightened).then(|| {
        let mut a = AuxParams::init(
            2,
            2,
            ds.classes.iter().map(|c| c.elements.len()).collect(),
            rng.random(),
        );
        for v in &mut a.values {
            *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        a
    });
    let class_idx = rng.random_range(0..ds.classes.len());
    let item = sample_item(&ds, kind, class_idx, 2, &mut rng).expect("item fits the dataset");

    let tape = Tape::new();
    let (vars, _) = model.to_tape(&tape, |_| true);
    let aux_vars: Vec<_> = aux.as_ref().map_or(Vec::new(), |a| {
        a.values.iter().map(|&v| tape.var(v)).collect()
    });
    let view = model.view_of(&vars);
    let aux_view = aux.as_ref().map(|a| a.view_of(&aux_vars));
    let opts = LossOpts {
        kl_scale: 0.7,
        mc_samples: 2,
    };
    let loss = item_loss(&view, aux_view.as_ref(), &ds, kind, &item, opts, &mut rng)
        .expect("loss evaluates");
    match grad_check(&tape, loss.total, &tape.leaf_values(), OBJECTIVE_H) {
        Ok(r) => r.max_rel_error,
        Err(_) => f64::INFINITY,
    }
}

/// Differentiable unary ops with their sampling domains.
const UNARY_OPS: [(&str, f64, f64); 10] = [
    ("exp", -3.0, 3.0),
    ("ln", 0.1, 10.0),
    ("sqrt", 0.1, 10.0),
    ("sin", -4.0, 4.0),
    ("cos", -4.0, 4.0),
    ("softplus", -8.0, 8.0),
    ("lgamma", 0.1, 20.0),
    ("digamma", 0.1, 20.0),
    ("log_bessel_i0", 0.0, 40.0),
    ("bessel_ratio", 0.01, 40.0),
];

fn apply_op<'t>(name: &str, x: crate::adiff::Var<'t>) -> crate::adiff::Var<'t> {
    match name {
        "exp" => x.exp(),
        "ln" => x.ln(),
        "sqrt" => x.sqrt(),
        "sin" => x.sin(),
        "cos" => x.cos(),
        "softplus" => x.softplus(),
        "lgamma" => x.lgamma(),
        "digamma" => x.digamma(),
        "log_bessel_i0" => x.log_bessel_i0(),
        "bessel_ratio" => x.bessel_ratio(),
        _ => unreachable!("unknown op {name}"),
    }
}

/// Worst gradient-check error of every differentiable op over random
/// in-domain points.
pub fn op_gradient_errors(points: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b5);
    let mut out = Vec::new();
    for (name, lo, hi) in UNARY_OPS {
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let t = Tape::new();
            let x = t.var(rng.random_range(lo..hi));
            let y = apply_op(name, x);
            worst = worst.max(
                grad_check(&t, y, &t.leaf_values(), GRAD_H)
                    .map_or(f64::INFINITY, |r| r.max_rel_error),
            );
        }
        out.push((name, worst));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let t = Tape::new();
        let a = t.var(rng.random_range(-3.0..3.0));
        let b = t.var(rng.random_range(0.5..3.0) * if rng.random() { 1.0 } else { -1.0 });
        let y = a.atan2(b) + a * b - a / b + (a - b).square();
        worst = worst.max(
            grad_check(&t, y, &t.leaf_values(), GRAD_H).map_or(f64::INFINITY, |r| r.max_rel_error),
        );
    }
    out.push(("binary", worst));
    out
}

pub fn gradient_suite(cfg: &VerifyConfig) -> Vec<Property> {
    let mut out: Vec<Property> = op_gradient_errors(cfg.grad_points, cfg.seed)
        .into_iter()
        .map(|(name, e)| Property::new(Suite::Gradients, format!("op/{name}"), e, GRAD_TOL))
        .collect();
    for kind in ObjectiveKind::ALL {
        let worst = (0..cfg.grad_points)
            .map(|p| objective_gradient_error(kind, p, cfg.seed))
            .fold(0.0, f64::max);
        out.push(Property::new(
            Suite::Gradients,
            format!("objective/{kind}"),
            worst,
            GRAD_TOL,
        ));
    }
    out
}

// ---------------------------------------------------------------- special functions

const SPECIAL_TOL: f64 = 1e-8;

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn max_abs_error(f: fn(f64) -> f64, oracle: fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    grid(lo, hi, 200)
        .map(|x| (f(x) - oracle(x)).abs())
        .fold(0.0, f64::max)
}

pub fn special_suite() -> Vec<Property> {
    vec![
        Property::new(
            Suite::Special,
            "lgamma",
            max_abs_error(special::lgamma, reference::lgamma_stirling, 0.05, 60.0),
            SPECIAL_TOL,
        ),
        Property::new(
            Suite::Special,
            "digamma",
            max_abs_error(special::digamma, reference::digamma_series, 0.05, 60.0),
            SPECIAL_TOL,
        ),
        Property::new(
            Suite::Special,
            "log_bessel_i0",
            max_abs_error(
                special::log_bessel_i0,
                reference::log_bessel_i0_series,
                0.0,
                60.0,
            ),
            SPECIAL_TOL,
        ),
        Property::new(
            Suite::Special,
            "bessel_ratio",
            max_abs_error(
                special::bessel_ratio,
                reference::bessel_ratio_series,
                0.0,
                60.0,
            ),
            SPECIAL_TOL,
        ),
    ]
}

// ---------------------------------------------------------------- identities

fn random_flat_model(family: Family, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut m = ModelParams::init(ModelConfig::flat(family, 2), rng.random()).expect("valid model");
    perturb(&mut m, 0.3, rng);
    m
}

/// Largest deviations of the identity chain, the one-factor structured
/// loss, and the rescale-sum identity over random models and classes.
pub fn identity_deviations(instances: usize, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d);
    let opts = LossOpts::default();
    let mut worst = [0.0_f64; 3];
    for i in 0..instances {
        let family = FLAT_FAMILIES[i % FLAT_FAMILIES.len()];
        let ds = generate(family, 1, 6, rng.random(), &Hyper::default()).expect("valid generator");
        let xs = &ds.classes[0].elements;
        let m = random_flat_model(family, &mut rng);
        let v = m.view();
        let x = xs[0];
        let base = ChaCha8Rng::seed_from_u64(rng.random());

        let vae = loss_vae(&v, x, opts, &mut base.clone()).expect("vae").total;
        let vhe = loss_vhe(&v, &Episode::singleton(x), opts, &mut base.clone())
            .expect("vhe")
            .total;
        let single = Episode {
            class_size: xs.len(),
            ..Episode::singleton(x)
        };
        let res = loss_resample(&v, &single, opts, &mut base.clone())
            .expect("resample")
            .total;
        let resc = loss_rescale(&v, x, &[x], 1, opts, &mut base.clone())
            .expect("rescale")
            .total;
        let chain = [vhe, res, resc]
            .iter()
            .map(|l| (l - vae).abs())
            .fold(0.0, f64::max);
        worst[0] = worst[0].max(chain);

        let ep = sample_episode_from(xs, 0, 3, &mut rng).expect("episode");
        let vhe = loss_vhe(&v, &ep, opts, &mut base.clone())
            .expect("vhe")
            .total;
        let support = [FactorSupport {
            d: ep.d.clone(),
            class_size: ep.class_size,
        }];
        let st = loss_structured(&v, ep.x, &support, opts, &mut base.clone())
            .expect("structured")
            .total;
        worst[1] = worst[1].max((st - vhe).abs());

        let ns = loss_ns(&v, &ep.d, opts, &mut base.clone()).expect("ns");
        let sum: f64 =
            ep.d.iter()
                .map(|&x| {
                    loss_rescale(&v, x, &ep.d, xs.len(), opts, &mut base.clone())
                        .expect("rescale")
                        .total
                })
                .sum();
        let shift = (1.0 - ep.d.len() as f64 / xs.len() as f64) * ns.kl_c();
        worst[2] = worst[2].max((sum - (ns.total - shift)).abs());
    }
    worst
}

pub fn identity_suite(cfg: &VerifyConfig) -> Vec<Property> {
    let [chain, structured, rescale] = identity_deviations(50, cfg.seed);
    vec![
        Property::new(Suite::Identities, "vae=vhe=resample=rescale", chain, 1e-12),
        Property::new(
            Suite::Identities,
            "structured(one factor)=vhe",
            structured,
            1e-12,
        ),
        Property::new(Suite::Identities, "sum(rescale)=ns-shift", rescale, 1e-10),
    ]
}

// ---------------------------------------------------------------- bounds

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Two-level model with standard-normal group prior, c | a ~ N(a, σc²) and
/// x | c ~ N(c, σx²), whose encoders are exact for full supports of
/// `classes` classes of `class_size` elements.
pub fn hierarchy_exact(
    sigma_c: f64,
    sigma_x: f64,
    classes: usize,
    class_size: usize,
) -> ModelParams {
    let mut cfg = ModelConfig::flat(Family::Gaussian, 1);
    cfg.structure = Structure::Hierarchical;
    let mut m = ModelParams::zeros(cfg).expect("valid model");
    let (vc, vx, n) = (sigma_c * sigma_c, sigma_x * sigma_x, class_size as f64);
    let mean_var = vc + vx / n;
    let pa = 1.0 + classes as f64 / mean_var;
    m.set("enc_group.w_mu", &[(classes as f64 / mean_var) / pa, 0.0]);
    m.set("enc_group.b_lv", &[-pa.ln()]);
    let pc = 1.0 / vc + n / vx;
    m.set("enc.w_mu", &[(n / vx) / pc, 0.0]);
    m.set("enc.u_mu", &[(1.0 / vc) / pc]);
    m.set("enc.b_lv", &[-pc.ln()]);
    m.set("cond.w", &[1.0]);
    m.set("cond.lv", &[vc.ln()]);
    m.set("dec.w", &[1.0]);
    m.set("dec.scale", &[softplus_inverse(sigma_x)]);
    m
}

/// x = c + w_z·z + ε with ε ~ N(0, σ²), with the exact q(c | X) for
/// |X| = `support` and the exact q(z | c, x).
pub fn vhe_z_exact(w_z: f64, sigma: f64, support: usize) -> ModelParams {
    let mut cfg = ModelConfig::flat(Family::Gaussian, 1);
    cfg.z_branch = Some(ZBranch {
        conditions_on_c: true,
    });
    let mut m = ModelParams::zeros(cfg).expect("valid model");
    let s2 = w_z * w_z + sigma * sigma;
    let n = support as f64;
    let p = 1.0 + n / s2;
    m.set("enc.w_mu", &[(n / s2) / p, 0.0]);
    m.set("enc.b_lv", &[-p.ln()]);
    let pz = 1.0 + w_z * w_z / (sigma * sigma);
    let g = (w_z / (sigma * sigma)) / pz;
    m.set("zenc.w_x", &[g]);
    m.set("zenc.w_c", &[-g]);
    m.set("zenc.b_lv", &[-pz.ln()]);
    m.set("zdec.w", &[w_z]);
    m.set("dec.w", &[1.0]);
    m.set("dec.scale", &[softplus_inverse(sigma)]);
    m
}

/// Auxiliary parameters whose r(D; c, X) is the exact posterior over a
/// one-element support under the conjugate model with an exact encoder.
pub fn tightened_exact_aux(xs: &[f64]) -> AuxParams {
    let mut aux = AuxParams::zeros(2, 1, vec![xs.len()]);
    aux.set_psi(&[1.0, 0.0], &[0.0, 1.0]);
    for (i, &x) in xs.iter().enumerate() {
        aux.set_xi(0, i, &[x, -0.25 * x * x]);
    }
    aux
}

fn conjugate_class(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: f64 = rng.sample(StandardNormal);
    (0..n)
        .map(|_| c + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Per-class bound estimates: each sample is |X| times the negated
/// per-element loss of one random episode, so its mean bounds ln p(X).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSamples {
    pub exact: f64,
    pub vhe: Vec<f64>,
    pub ns: Vec<f64>,
    pub hierarchical: Vec<f64>,
    pub hierarchical_exact: f64,
    pub vhe_z: Vec<f64>,
    pub vhe_z_exact: f64,
    /// (loose, tightened) pairs sharing the c sample.
    pub tightened: Vec<(f64, f64)>,
    pub tightened_exact: f64,
}

pub fn bound_samples(episodes: usize, seed: u64) -> BoundSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0);
    let opts = LossOpts::default();
    let xs = conjugate_class(5, &mut rng);
    let nx = xs.len() as f64;
    let exact = exact_conjugate_log_marginal(ConjugateHyper::STANDARD, &xs);

    let vhe_model = conjugate_exact(2);
    let ns_model = conjugate_exact(xs.len());
    let (mut vhe, mut ns) = (Vec::with_capacity(episodes), Vec::with_capacity(episodes));
    for _ in 0..episodes {
        let ep = sample_episode_from(&xs, 0, 2, &mut rng).expect("episode");
        vhe.push(
            -nx * loss_vhe(&vhe_model.view(), &ep, opts, &mut rng)
                .expect("vhe")
                .total,
        );
        ns.push(
            -loss_ns(&ns_model.view(), &xs, opts, &mut rng)
                .expect("ns")
                .total,
        );
    }

    let (sc, sx) = (0.8, 0.5);
    let hm = hierarchy_exact(sc, sx, 3, 4);
    let classes: Vec<Vec<f64>> = {
        let a: f64 = rng.sample(StandardNormal);
        (0..3)
            .map(|_| {
                let c = a + sc * rng.sample::<f64, _>(StandardNormal);
                (0..4)
                    .map(|_| c + sx * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    };
    let group: Vec<f64> = classes.iter().flatten().copied().collect();
    let hierarchical_exact = exact_hierarchical_log_marginal(
        HierarchyHyper {
            tau: 1.0,
            sigma_c: sc,
            sigma_x: sx,
        },
        &classes,
    );
    let mut hierarchical = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let class = &classes[rng.random_range(0..classes.len())];
        let ep = HierEpisode {
            x: class[rng.random_range(0..class.len())],
            d_a: group.clone(),
            d_c: class.clone(),
            group_size: group.len(),
            class_size: class.len(),
        };
        hierarchical.push(
            -(group.len() as f64)
                * loss_hierarchical(&hm.view(), &ep, opts, &mut rng)
                    .expect("hierarchical")
                    .total,
        );
    }

    let (w_z, sigma) = (0.7, 0.6);
    let s = f64::hypot(w_z, sigma);
    let zxs: Vec<f64> = {
        let c: f64 = rng.sample(StandardNormal);
        (0..4)
            .map(|_| c + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let zm = vhe_z_exact(w_z, sigma, zxs.len());
    let vhe_z_exact_value = exact_conjugate_log_marginal(
        ConjugateHyper {
            m0: 0.0,
            tau0: 1.0,
            sigma: s,
        },
        &zxs,
    );
    let mut vhe_z = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let ep = sample_episode_from(&zxs, 0, zxs.len(), &mut rng).expect("episode");
        vhe_z.push(
            -(zxs.len() as f64)
                * loss_vhe_z(&zm.view(), &ep, opts, &mut rng)
                    .expect("vhe_z")
                    .total,
        );
    }

    let txs = conjugate_class(8, &mut rng);
    let tightened_exact = exact_conjugate_log_marginal(ConjugateHyper::STANDARD, &txs);
    let tm = conjugate_exact(1);
    let aux = tightened_exact_aux(&txs);
    let nt = txs.len() as f64;
    let mut tightened = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let ep = sample_episode_from(&txs, 0, 1, &mut rng).expect("episode");
        let shared = ChaCha8Rng::seed_from_u64(rng.random());
        let loose = loss_vhe(&tm.view(), &ep, opts, &mut shared.clone())
            .expect("vhe")
            .total;
        let tight = loss_tightened(
            &tm.view(),
            &aux.view(),
            &ep,
            &txs,
            opts,
            &mut shared.clone(),
        )
        .expect("tightened")
        .total;
        tightened.push((-nt * loose, -nt * tight));
    }

    BoundSamples {
        exact,
        vhe,
        ns,
        hierarchical,
        hierarchical_exact,
        vhe_z,
        vhe_z_exact: vhe_z_exact_value,
        tightened,
        tightened_exact,
    }
}

/// Excess of the bound mean over the truth, and three standard errors.
fn excess(samples: &[f64], truth: f64) -> (f64, f64) {
    let (m, se) = mean_se(samples);
    (m - truth, 3.0 * se)
}

pub fn bound_suite(cfg: &VerifyConfig) -> Vec<Property> {
    let b = bound_samples(cfg.bound_episodes, cfg.seed);
    let mut out = Vec::new();
    let mut push =
        |name: &str, (m, tol): (f64, f64)| out.push(Property::new(Suite::Bounds, name, m, tol));
    push("vhe<=exact", excess(&b.vhe, b.exact));
    push("ns(D=X)<=exact", excess(&b.ns, b.exact));
    push(
        "hierarchical<=exact",
        excess(&b.hierarchical, b.hierarchical_exact),
    );
    push("vhe_z<=exact", excess(&b.vhe_z, b.vhe_z_exact));
    let diffs: Vec<f64> = b.tightened.iter().map(|(l, t)| l - t).collect();
    push("tightened>=vhe", excess(&diffs, 0.0));
    let tight: Vec<f64> = b.tightened.iter().map(|p| p.1).collect();
    push("tightened<=exact", excess(&tight, b.tightened_exact));
    out
}

// ---------------------------------------------------------------- gap

/// Largest |ln p(X) − bound − KL[q ∥ p(c|X)]| over random conjugate
/// instances, with q produced by a random encoder from a random subset.
pub fn gap_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let h = ConjugateHyper {
            m0: rng.sample(StandardNormal),
            tau0: rng.random_range(0.5..2.0),
            sigma: rng.random_range(0.3..2.0),
        };
        let n = rng.random_range(1..=6);
        let c = h.m0 + h.tau0 * rng.sample::<f64, _>(StandardNormal);
        let xs: Vec<f64> = (0..n)
            .map(|_| c + h.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d: Vec<f64> = sample_indices(n, rng.random_range(1..=n), &mut rng)
            .iter()
            .map(|&i| xs[i])
            .collect();
        let mut enc = ModelParams::init(ModelConfig::flat(Family::Gaussian, 1), rng.random())
            .expect("valid model");
        perturb(&mut enc, 0.5, &mut rng);
        let q = enc.view().encode_class(&d).expect("nonempty support");
        let (m, v) = (q.mean[0], q.log_var[0].exp());
        let (pm, pv) = conjugate_posterior(h, &xs);
        let post = GaussianPosterior {
            mean: vec![pm],
            log_var: vec![pv.ln()],
        };
        let kl = gaussian_kl(&q, &post).expect("matching dimension");
        let gap = exact_conjugate_log_marginal(h, &xs) - analytic_set_bound(h, &xs, m, v);
        worst = worst.max((gap - kl).abs());
    }
    worst
}

pub fn gap_suite(cfg: &VerifyConfig) -> Vec<Property> {
    vec![Property::new(
        Suite::Gap,
        "ln p(X)-bound=KL",
        gap_deviation(cfg.gap_instances, cfg.seed),
        1e-8,
    )]
}

// ---------------------------------------------------------------- estimators

/// Largest deviation of the importance-weighted estimate from the exact
/// marginal when q is the exact posterior, over k ∈ {1, 10, 200}.
pub fn iw_exact_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let xs = conjugate_class(rng.random_range(1..=5), &mut rng);
        let exact = exact_conjugate_log_marginal(ConjugateHyper::STANDARD, &xs);
        let m = conjugate_exact(xs.len());
        for k in [1, 10, 200] {
            let v = iw_log_marginal(&m, &xs, k, &mut rng).expect("valid k");
            worst = worst.max((v - exact).abs());
        }
    }
    worst
}

/// Largest deviation of the quadrature marginal from the exact conjugate
/// marginal.
pub fn quadrature_exact_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let xs = conjugate_class(rng.random_range(1..=5), &mut rng);
        let exact = exact_conjugate_log_marginal(ConjugateHyper::STANDARD, &xs);
        let m = conjugate_exact(rng.random_range(1..=5));
        worst = worst.max((quadrature_log_marginal(&m, &xs, 64).expect("1-d model") - exact).abs());
    }
    worst
}

/// Largest per-element difference between 64 and 128 node quadrature on
/// random smooth 1-d models.
pub fn quadrature_node_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x64);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mut m = ModelParams::init(ModelConfig::flat(Family::Gaussian, 1), rng.random())
            .expect("valid model");
        perturb(&mut m, 0.5, &mut rng);
        m.set("dec.scale", &[rng.random_range(0.0..2.0)]);
        let xs = conjugate_class(rng.random_range(1..=5), &mut rng);
        let a = quadrature_log_marginal(&m, &xs, 64).expect("1-d model");
        let b = quadrature_log_marginal(&m, &xs, 128).expect("1-d model");
        worst = worst.max((a - b).abs() / xs.len() as f64);
    }
    worst
}

/// Paired comparison of k = 50 against k = 1 importance-weighted estimates
/// with a deliberately inexact q, plus the quadrature truth.
#[derive(Debug, Clone, PartialEq)]
pub struct IwMonotonicity {
    /// Per-seed (k=1, k=50) estimates of ln p(X).
    pub pairs: Vec<(f64, f64)>,
    pub truth: f64,
}

pub fn iw_monotonicity(seeds: usize, seed: u64) -> IwMonotonicity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50);
    let xs = conjugate_class(4, &mut rng);
    let mut m = conjugate_exact(xs.len());
    m.set("enc.b_lv", &[m.get("enc.b_lv")[0] + 1.0]);
    m.set("enc.b_mu", &[0.4]);
    let truth = quadrature_log_marginal(&m, &xs, 64).expect("1-d model");
    let pairs = (0..seeds)
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s as u64);
            let k1 = iw_log_marginal(&m, &xs, 1, &mut r).expect("valid k");
            let k50 = iw_log_marginal(&m, &xs, 50, &mut r).expect("valid k");
            (k1, k50)
        })
        .collect();
    IwMonotonicity { pairs, truth }
}

/// A 1-d latent VHE trained on a small gaussian dataset, and the per-element
/// gap between its importance-weighted and quadrature joint NLL on fresh
/// classes.
pub fn trained_iw_quadrature_gap(epochs: usize, seed: u64) -> f64 {
    let train =
        generate(Family::Gaussian, 30, 20, seed, &Hyper::default()).expect("valid generator");
    let test = generate(
        Family::Gaussian,
        10,
        20,
        seed.wrapping_add(1),
        &Hyper::default(),
    )
    .expect("valid generator");
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(ObjectiveKind::Vhe, 5),
        latent_dim: 1,
        epochs,
        anneal_epochs: epochs / 4,
        runs: 1,
        seed,
        ..TrainConfig::default()
    };
    let model = train_best(&train, &cfg).expect("training succeeds").params;
    let ecfg = crate::eval::EvalConfig {
        seed,
        ..Default::default()
    };
    let iw = crate::eval::dataset_iw_nll(&model, &test, &ecfg).expect("flat model");
    let quad = crate::eval::dataset_quadrature_nll(&model, &test, 64).expect("1-d model");
    (iw - quad).abs()
}

pub fn estimator_suite(cfg: &VerifyConfig) -> Vec<Property> {
    let mut out = vec![
        Property::new(
            Suite::Estimators,
            "iw(exact q)=exact",
            iw_exact_deviation(20, cfg.seed),
            1e-10,
        ),
        Property::new(
            Suite::Estimators,
            "quadrature=exact",
            quadrature_exact_deviation(20, cfg.seed),
            1e-9,
        ),
        Property::new(
            Suite::Estimators,
            "quadrature 64~128 nodes",
            quadrature_node_deviation(20, cfg.seed),
            1e-9,
        ),
    ];
    let mono = iw_monotonicity(200, cfg.seed);
    let diffs: Vec<f64> = mono.pairs.iter().map(|(a, b)| a - b).collect();
    let (d, se) = mean_se(&diffs);
    out.push(Property::new(
        Suite::Estimators,
        "iw(k=50)>=iw(k=1)",
        d,
        3.0 * se,
    ));
    for (name, col) in [("iw(k=1)<=truth", 0), ("iw(k=50)<=truth", 1)] {
        let xs: Vec<f64> = mono
            .pairs
            .iter()
            .map(|p| if col == 0 { p.0 } else { p.1 })
            .collect();
        let (m, se) = mean_se(&xs);
        out.push(Property::new(
            Suite::Estimators,
            name,
            m - mono.truth,
            3.0 * se,
        ));
    }
    out.push(Property::new(
        Suite::Estimators,
        "trained iw~quadrature",
        trained_iw_quadrature_gap(cfg.train_epochs, cfg.seed),
        0.05,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn special_and_identities_pass() {
        let cfg = VerifyConfig::default();
        for p in special_suite().into_iter().chain(identity_suite(&cfg)) {
            assert!(p.passed(), "{p}");
        }
    }

    #[test]
    fn gradients_pass_on_a_few_points() {
        let cfg = VerifyConfig {
            grad_points: 5,
            ..VerifyConfig::default()
        };
        for p in gradient_suite(&cfg) {
            assert!(p.passed(), "{p}");
        }
    }

    #[test]
    fn exact_fixtures_have_constant_bounds_in_expectation() {
        let b = bound_samples(2000, 1);
        for (s, t) in [
            (&b.ns, b.exact),
            (&b.hierarchical, b.hierarchical_exact),
            (&b.vhe_z, b.vhe_z_exact),
        ] {
            let (m, se) = mean_se(s);
            assert!((m - t).abs() < 4.0 * se + 1e-9, "{m} vs {t} (se {se})");
        }
    }
}
