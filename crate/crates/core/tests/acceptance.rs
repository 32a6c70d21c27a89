//! Acceptance suite. Prints one line per criterion and exits nonzero when
//! any criterion fails. Run with `cargo test --test acceptance`; pass
//! criterion numbers to run a subset.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use homoenc::adiff::special;
use homoenc::dists::{Family, LN_2PI};
use homoenc::eval::oracles::{analytic_set_bound, ConjugateHyper};
use homoenc::eval::{
    dataset_iw_nll, dataset_quadrature_nll, encoded_information, fewshot_classification_error,
    iw_log_marginal, style_transfer, EvalConfig,
};
use homoenc::model::{conjugate_exact, ModelConfig, ModelParams};
use homoenc::objectives::{
    loss_hierarchical, loss_ns, loss_resample, loss_rescale, loss_structured, loss_tightened,
    loss_vae, loss_vhe, loss_vhe_z, FactorSupport, HierEpisode, LossOpts, ObjectiveKind,
    ObjectiveSpec,
};
use homoenc::synthdata::{
    generate, generate_factorial, sample_episode_from, sample_indices, Episode, Hyper,
};
use homoenc::train::{train_best, TrainConfig};
use homoenc::verify::{
    hierarchy_exact, objective_gradient_error, tightened_exact_aux, vhe_z_exact,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn perturbed(cfg: ModelConfig, sd: f64, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut m = ModelParams::init(cfg, rng.random()).unwrap();
    for v in &mut m.values {
        *v += sd * normal(rng);
    }
    m
}

fn conjugate_class(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = normal(rng);
    (0..n).map(|_| c + normal(rng)).collect()
}

// 1
fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0_f64, "");
    for kind in ObjectiveKind::ALL {
        for point in 0..20 {
            let e = objective_gradient_error(kind, point, 20_24);
            if e > worst.0 || e.is_nan() {
                worst = (e, kind.name());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-5 && secs < 60.0,
        format!(
            "worst relative error {:.2e} ({}) over 20 points x {} objectives in {secs:.1}s",
            worst.0,
            worst.1,
            ObjectiveKind::ALL.len()
        ),
    )
}

// 2
fn special_functions() -> Outcome {
    let grid = |lo: f64, hi: f64| (0..200).map(move |i| lo + (hi - lo) * i as f64 / 199.0);
    let err = |f: fn(f64) -> f64, g: &dyn Fn(f64) -> f64, lo, hi| {
        grid(lo, hi)
            .map(|x| (f(x) - g(x)).abs())
            .fold(0.0, f64::max)
    };
    let errors = [
        ("lgamma", err(special::lgamma, &common::lgamma, 0.05, 60.0)),
        (
            "digamma",
            err(special::digamma, &common::digamma, 0.05, 60.0),
        ),
        (
            "log I0",
            err(
                special::log_bessel_i0,
                &|x| common::log_bessel_i(0, x),
                0.0,
                60.0,
            ),
        ),
        (
            "I1/I0",
            err(special::bessel_ratio, &common::bessel_ratio, 0.0, 60.0),
        ),
    ];
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errors
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(worst < 1e-8, detail)
}

// 3
fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let opts = LossOpts {
        kl_scale: 1.0,
        mc_samples: 3,
    };
    // unit-scale data keeps the losses O(1), so absolute tolerances apply
    let hyper = Hyper {
        gaussian_mu_sd: 2.0,
        mixture_center_sd: 2.0,
        ..Hyper::default()
    };
    let mut worst = [0.0_f64; 3];
    for i in 0..100 {
        let family = Family::ALL[i % Family::ALL.len()];
        let ds = generate(family, 1, 7, rng.random(), &hyper).unwrap();
        let xs = &ds.classes[0].elements;
        let m = perturbed(ModelConfig::flat(family, 2), 0.3, &mut rng);
        let v = m.view();
        let noise = ChaCha8Rng::seed_from_u64(rng.random());
        let x = xs[rng.random_range(0..xs.len())];

        let vae = loss_vae(&v, x, opts, &mut noise.clone()).unwrap().total;
        let vhe = loss_vhe(&v, &Episode::singleton(x), opts, &mut noise.clone())
            .unwrap()
            .total;
        let one = Episode {
            class_size: xs.len(),
            ..Episode::singleton(x)
        };
        let res = loss_resample(&v, &one, opts, &mut noise.clone())
            .unwrap()
            .total;
        let resc = loss_rescale(&v, x, &[x], 1, opts, &mut noise.clone())
            .unwrap()
            .total;
        for l in [vhe, res, resc] {
            worst[0] = worst[0].max((l - vae).abs());
        }

        let ep = sample_episode_from(xs, 0, 1 + i % xs.len(), &mut rng).unwrap();
        let vhe = loss_vhe(&v, &ep, opts, &mut noise.clone()).unwrap().total;
        let factor = [FactorSupport {
            d: ep.d.clone(),
            class_size: ep.class_size,
        }];
        let st = loss_structured(&v, ep.x, &factor, opts, &mut noise.clone())
            .unwrap()
            .total;
        worst[1] = worst[1].max((st - vhe).abs());

        let ns = loss_ns(&v, &ep.d, opts, &mut noise.clone()).unwrap();
        let sum: f64 =
            ep.d.iter()
                .map(|&x| {
                    loss_rescale(&v, x, &ep.d, xs.len(), opts, &mut noise.clone())
                        .unwrap()
                        .total
                })
                .sum();
        let shift = (1.0 - ep.d.len() as f64 / xs.len() as f64) * ns.kl_c();
        worst[2] = worst[2].max((sum - (ns.total - shift)).abs());
    }
    outcome(
        worst[0] < 1e-12 && worst[1] < 1e-12 && worst[2] < 1e-10,
        format!(
            "chain {:.1e}, structured {:.1e}, rescale sum {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// 4
fn bounds() -> Outcome {
    const EPISODES: usize = 100_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let opts = LossOpts::default();
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    let mut check = |name, samples: &[f64], truth: f64| {
        let (m, se) = common::mean_se(samples);
        checks.push((name, m - truth, 3.0 * se));
    };

    let xs = conjugate_class(5, &mut rng);
    let exact = common::conjugate_log_marginal(&xs, 0.0, 1.0, 1.0);
    let (vhe_model, ns_model) = (conjugate_exact(2), conjugate_exact(xs.len()));
    let mut vhe = Vec::with_capacity(EPISODES);
    let mut ns = Vec::with_capacity(EPISODES);
    for _ in 0..EPISODES {
        let ep = sample_episode_from(&xs, 0, 2, &mut rng).unwrap();
        vhe.push(
            -5.0 * loss_vhe(&vhe_model.view(), &ep, opts, &mut rng)
                .unwrap()
                .total,
        );
        ns.push(
            -loss_ns(&ns_model.view(), &xs, opts, &mut rng)
                .unwrap()
                .total,
        );
    }
    check("vhe", &vhe, exact);
    check("ns", &ns, exact);

    let (sc, sx) = (0.8, 0.5);
    let a = normal(&mut rng);
    let classes: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let c = a + sc * normal(&mut rng);
            (0..4).map(|_| c + sx * normal(&mut rng)).collect()
        })
        .collect();
    let group: Vec<f64> = classes.concat();
    let hm = hierarchy_exact(sc, sx, 3, 4);
    let hier: Vec<f64> = (0..EPISODES)
        .map(|_| {
            let class = &classes[rng.random_range(0..3)];
            let ep = HierEpisode {
                x: class[rng.random_range(0..class.len())],
                d_a: group.clone(),
                d_c: class.clone(),
                group_size: group.len(),
                class_size: class.len(),
            };
            -12.0
                * loss_hierarchical(&hm.view(), &ep, opts, &mut rng)
                    .unwrap()
                    .total
        })
        .collect();
    check(
        "hierarchical",
        &hier,
        common::hierarchy_log_marginal(&classes, 1.0, sc, sx),
    );

    let (w_z, sigma) = (0.7, 0.6);
    let s = f64::hypot(w_z, sigma);
    let c = normal(&mut rng);
    let zxs: Vec<f64> = (0..4).map(|_| c + s * normal(&mut rng)).collect();
    let zm = vhe_z_exact(w_z, sigma, zxs.len());
    let vz: Vec<f64> = (0..EPISODES)
        .map(|_| {
            let ep = sample_episode_from(&zxs, 0, 4, &mut rng).unwrap();
            -4.0 * loss_vhe_z(&zm.view(), &ep, opts, &mut rng).unwrap().total
        })
        .collect();
    check(
        "vhe_z",
        &vz,
        common::conjugate_log_marginal(&zxs, 0.0, 1.0, s),
    );

    let txs = conjugate_class(8, &mut rng);
    let tm = conjugate_exact(1);
    let aux = tightened_exact_aux(&txs);
    let (mut gain, mut tight) = (Vec::new(), Vec::new());
    for _ in 0..EPISODES {
        let ep = sample_episode_from(&txs, 0, 1, &mut rng).unwrap();
        let noise = ChaCha8Rng::seed_from_u64(rng.random());
        let l = -8.0
            * loss_vhe(&tm.view(), &ep, opts, &mut noise.clone())
                .unwrap()
                .total;
        let t = -8.0
            * loss_tightened(&tm.view(), &aux.view(), &ep, &txs, opts, &mut noise.clone())
                .unwrap()
                .total;
        gain.push(l - t);
        tight.push(t);
    }
    check("tightened>=vhe", &gain, 0.0);
    check(
        "tightened",
        &tight,
        common::conjugate_log_marginal(&txs, 0.0, 1.0, 1.0),
    );

    let secs = start.elapsed().as_secs_f64();
    let pass = checks.iter().all(|(_, ex, tol)| ex <= tol) && secs < 120.0;
    let detail = checks
        .iter()
        .map(|(n, ex, tol)| format!("{n} {ex:+.3}/{tol:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("excess/3SE: {detail}; {secs:.1}s"))
}

// 5
fn gap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = ConjugateHyper {
            m0: normal(&mut rng),
            tau0: rng.random_range(0.5..2.0),
            sigma: rng.random_range(0.3..2.0),
        };
        let n = rng.random_range(1..=8);
        let c = h.m0 + h.tau0 * normal(&mut rng);
        let xs: Vec<f64> = (0..n).map(|_| c + h.sigma * normal(&mut rng)).collect();
        let d: Vec<f64> = sample_indices(n, rng.random_range(1..=n), &mut rng)
            .iter()
            .map(|&i| xs[i])
            .collect();
        let enc = perturbed(ModelConfig::flat(Family::Gaussian, 1), 0.5, &mut rng);
        let q = enc.view().encode_class(&d).unwrap();
        let (m, v) = (q.mean[0], q.log_var[0].exp());
        let exact = common::conjugate_log_marginal(&xs, h.m0, h.tau0, h.sigma);
        let (pm, pv) = common::conjugate_posterior(&xs, h.m0, h.tau0, h.sigma);
        let kl = common::kl_normal(m, v, pm, pv);
        worst = worst.max((exact - analytic_set_bound(h, &xs, m, v) - kl).abs());
    }
    outcome(
        worst < 1e-8,
        format!("worst deviation {worst:.2e} over 100 instances"),
    )
}

// 6
fn estimators() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut exact_dev: f64 = 0.0;
    for _ in 0..30 {
        let xs = conjugate_class(rng.random_range(1..=8), &mut rng);
        let exact = common::conjugate_log_marginal(&xs, 0.0, 1.0, 1.0);
        let m = conjugate_exact(xs.len());
        for k in [1, 10, 200] {
            let iw = iw_log_marginal(&m, &xs, k, &mut rng).unwrap();
            exact_dev = exact_dev.max((iw - exact).abs());
        }
    }

    let train = generate(Family::Gaussian, 30, 20, 6, &Hyper::default()).unwrap();
    let test = generate(Family::Gaussian, 10, 20, 7, &Hyper::default()).unwrap();
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(ObjectiveKind::Vhe, 5),
        latent_dim: 1,
        epochs: 400,
        anneal_epochs: 50,
        runs: 1,
        ..TrainConfig::default()
    };
    let model = train_best(&train, &cfg).unwrap().params;
    let view = model.view();
    let brute: f64 = test
        .classes
        .iter()
        .map(|class| {
            let g = |c: f64| {
                -0.5 * (c * c + LN_2PI)
                    + class
                        .elements
                        .iter()
                        .map(|&x| view.log_likelihood(x, &[c]).unwrap())
                        .sum::<f64>()
            };
            -common::log_integral_1d(g, -60.0, 60.0, 480_001) / class.elements.len() as f64
        })
        .sum::<f64>()
        / test.classes.len() as f64;
    let ecfg = EvalConfig {
        k: 200,
        ..EvalConfig::default()
    };
    let iw = dataset_iw_nll(&model, &test, &ecfg).unwrap();
    let quad = dataset_quadrature_nll(&model, &test, 64).unwrap();
    let gap = (iw - brute).abs();
    outcome(
        exact_dev < 1e-10 && gap < 0.05,
        format!(
            "exact-q deviation {exact_dev:.1e}; trained model iw {iw:.4} vs grid integral {brute:.4} (gap {gap:.4}), gauss-hermite {quad:.4}"
        ),
    )
}

// 7
fn collapse() -> Outcome {
    let start = Instant::now();
    let ds = generate(Family::Gaussian, 100, 100, 1, &Hyper::default()).unwrap();
    let eval = EvalConfig::default();
    let mut res = Vec::new();
    for kind in [ObjectiveKind::Vhe, ObjectiveKind::Ns] {
        let cfg = TrainConfig {
            objective: ObjectiveSpec::new(kind, 1),
            seed: 7,
            epochs: 3000,
            runs: 3,
            ..TrainConfig::default()
        };
        let best = train_best(&ds, &cfg).unwrap();
        let info = encoded_information(&best.params, &ds, 1, &eval).unwrap();
        let err = fewshot_classification_error(&best.params, &ds, 1, &eval).unwrap();
        res.push((info, err));
    }
    let secs = start.elapsed().as_secs_f64();
    let [(vi, ve), (ni, ne)] = [res[0], res[1]];
    outcome(
        ni < 0.1 && vi > 1.0 && ve <= ne && secs <= 600.0,
        format!(
            "encoded information ns {ni:.4} vhe {vi:.3} nats; 1-shot error vhe {ve:.3} ns {ne:.3}; {secs:.0}s"
        ),
    )
}

// 8
fn factorial() -> Outcome {
    let full = generate_factorial(4, 3, 40, 11, &Hyper::default()).unwrap();
    let (train, heldout) = full.split_elements(30).unwrap();
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(ObjectiveKind::Structured, 5),
        latent_dim: 1,
        epochs: 300,
        seed: 3,
        ..TrainConfig::default()
    };
    let model = train_best(&train, &cfg).unwrap().params;
    let cells = style_transfer(&model, &train, &heldout, 5, &EvalConfig::default()).unwrap();
    let wins = cells.iter().filter(|c| c.matched_wins()).count();
    let frac = wins as f64 / cells.len() as f64;
    outcome(
        frac >= 0.8,
        format!(
            "matched style has lower held-out NLL in {wins}/{} cells",
            cells.len()
        ),
    )
}

// 9
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_cli(dir: &Path, args: &str) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_homoenc"))
        .args(args.split_whitespace())
        .current_dir(dir)
        .env_remove("HOMOENC_SEED")
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn determinism() -> Outcome {
    let commands = [
        "gen-data --family von_mises --classes 12 --per-class 15 --seed 3 --out vm.jsonl",
        "gen-data --family gaussian --structure factorial --contents 3 --styles 2 --per-class 10 --out fact.jsonl",
        "gen-data --family gaussian --classes 12 --per-class 15 --seed 4 --out g.jsonl",
        "train --objective vhe --d-size 2 --epochs 15 --runs 2 --data g.jsonl --out run",
        "train --objective tightened --d-size 2 --epochs 5 --runs 1 --data g.jsonl --out tight",
        "eval --model run/model.json --data g.jsonl --d-sizes 1,2 --oracle quadrature --out m.csv",
        "sweep --objectives vhe,ns --d-sizes 1,2 --families gaussian,gamma --classes 10 --per-class 10 --test-classes 4 --epochs 5 --runs 1 --k 20 --classification-episodes 20 --eval-d-sizes 1,2 --jobs 3 --out sweep",
        "verify --suite special --suite identities --suite gap",
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut differing = Vec::new();
    let mut failed = Vec::new();
    for cmd in commands {
        let (ca, oa) = run_cli(a.path(), cmd);
        let (cb, ob) = run_cli(b.path(), cmd);
        if ca != 0 || cb != 0 {
            failed.push(format!("`{cmd}` exited {ca}/{cb}"));
        }
        if ca != cb || oa != ob {
            differing.push(format!("stdout of `{cmd}`"));
        }
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let names: Vec<&String> = sa.iter().map(|f| &f.0).collect();
    for (fa, fb) in sa.iter().zip(&sb) {
        if fa != fb {
            differing.push(fa.0.clone());
        }
    }
    if sa.len() != sb.len() {
        differing.push("file sets".into());
    }

    // the sweep is also independent of its worker count
    let c = tempfile::tempdir().unwrap();
    let one_job = commands[6].replace("--jobs 3", "--jobs 1");
    run_cli(c.path(), &one_job);
    let sc = snapshot(&c.path().join("sweep"));
    let sweep_a = snapshot(&a.path().join("sweep"));
    if sc != sweep_a {
        differing.push("sweep with --jobs 1 vs --jobs 3".into());
    }

    let pass = differing.is_empty() && failed.is_empty();
    let detail = if pass {
        format!(
            "{} commands run twice, {} output files byte-identical",
            commands.len(),
            names.len()
        )
    } else {
        format!("differs: {differing:?}; failed: {failed:?}")
    };
    outcome(pass, detail)
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "gradient correctness", gradients),
        (2, "special functions", special_functions),
        (3, "objective identity chain", identities),
        (4, "bound validity", bounds),
        (5, "gap identity", gap),
        (6, "estimator certification", estimators),
        (7, "collapse at one shot", collapse),
        (8, "factorial disentanglement", factorial),
        (9, "cli determinism", determinism),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failures = 0;
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let r = f();
        println!(
            "criterion {n} {name}: {}  {}  [{:.1}s]",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            start.elapsed().as_secs_f64()
        );
        failures += usize::from(!r.pass);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
