//! Trains the VHE on the two-component mixture family, prints the loss
//! curve and saves the checkpoint.

use homoenc::dists::Family;
use homoenc::objectives::{ObjectiveKind, ObjectiveSpec};
use homoenc::synthdata::{generate, Hyper};
use homoenc::train::{train_best, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(Family::Mixture2, 50, 50, 2, &Hyper::default())?;
    let cfg = TrainConfig {
        objective: ObjectiveSpec::new(ObjectiveKind::Vhe, 5),
        epochs: 100,
        anneal_epochs: 20,
        ..TrainConfig::default()
    };
    let best = train_best(&ds, &cfg)?;
    for e in best.epochs.iter().step_by(10) {
        println!(
            "epoch {:>4}  anneal {:.2}  loss {:.4}  kl {:.4}",
            e.epoch, e.anneal, e.mean_loss, e.mean_kl_c
        );
    }
    println!("final loss {:.4}", best.final_loss());
    let path = std::env::temp_dir().join("homoenc-vhe.json");
    best.params.save(&path)?;
    println!("saved {}", path.display());
    Ok(())
}
