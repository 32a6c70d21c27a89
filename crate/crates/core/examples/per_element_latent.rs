//! Trains the VHE with a per-element latent and compares its few-shot
//! generation NLL with the plain VHE.

use homoenc::dists::Family;
use homoenc::eval::{fewshot_generation_nll, EvalConfig};
use homoenc::objectives::{ObjectiveKind, ObjectiveSpec};
use homoenc::synthdata::{generate, Hyper};
use homoenc::train::{train_best, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(Family::Gaussian, 40, 40, 6, &Hyper::default())?;
    let eval = EvalConfig::default();
    for kind in [ObjectiveKind::Vhe, ObjectiveKind::VheZ] {
        let cfg = TrainConfig {
            objective: ObjectiveSpec::new(kind, 5),
            latent_dim: 1,
            epochs: 100,
            anneal_epochs: 20,
            runs: 1,
            ..TrainConfig::default()
        };
        let best = train_best(&ds, &cfg)?;
        let nll = fewshot_generation_nll(&best.params, &ds, 5, &eval)?;
        println!(
            "{kind:>5}: loss {:.4}  5-shot generation NLL {nll:.4}",
            best.final_loss()
        );
    }
    Ok(())
}
