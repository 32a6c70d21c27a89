//! Trains the two-level bound on grouped classes and reads off the learned
//! conditional prior.

use homoenc::objectives::{ObjectiveKind, ObjectiveSpec};
use homoenc::synthdata::{generate_hierarchical, Hyper};
use homoenc::train::{train_best, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_hierarchical(10, 5, 20, 4, &Hyper::default())?;
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(ObjectiveKind::Hierarchical, 5),
        latent_dim: 1,
        epochs: 100,
        anneal_epochs: 20,
        runs: 1,
        ..TrainConfig::default()
    };
    let best = train_best(&ds, &cfg)?;
    println!("final loss {:.4}", best.final_loss());
    for name in ["cond.w", "cond.b", "cond.lv"] {
        println!("{name:<8} {:?}", best.params.get(name));
    }
    Ok(())
}
