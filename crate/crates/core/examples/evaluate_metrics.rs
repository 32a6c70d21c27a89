//! Trains a small model and writes the four metrics for several support
//! sizes as CSV on stdout.

use homoenc::dists::Family;
use homoenc::eval::{run_metric_suite, write_csv, EvalConfig, Provenance};
use homoenc::objectives::{ObjectiveKind, ObjectiveSpec};
use homoenc::synthdata::{generate, Hyper};
use homoenc::train::{train_best, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = generate(Family::Gaussian, 40, 40, 1, &Hyper::default())?;
    let test = generate(Family::Gaussian, 10, 40, 2, &Hyper::default())?;
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(ObjectiveKind::Vhe, 5),
        latent_dim: 1,
        epochs: 60,
        anneal_epochs: 10,
        runs: 1,
        ..TrainConfig::default()
    };
    let best = train_best(&train, &cfg)?;
    let eval = EvalConfig {
        k: 50,
        classification_episodes: 200,
        quadrature: true,
        ..EvalConfig::default()
    };
    let prov = Provenance {
        objective: "vhe".into(),
        seed: cfg.seed,
    };
    let records = run_metric_suite(&best.params, &test, &[1, 5, 10], &eval, &prov)?;
    write_csv(&records, std::io::stdout().lock(), true)?;
    Ok(())
}
