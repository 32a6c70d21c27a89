//! Trains VHE and NS with one-element supports on the gaussian family and
//! compares how much each encodes about the class.

use homoenc::dists::Family;
use homoenc::eval::{encoded_information, fewshot_classification_error, EvalConfig};
use homoenc::objectives::{ObjectiveKind, ObjectiveSpec};
use homoenc::synthdata::{generate, Hyper};
use homoenc::train::{train_best, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(Family::Gaussian, 100, 100, 1, &Hyper::default())?;
    let epochs = std::env::args().nth(1).map_or(Ok(3000), |s| s.parse())?;
    let eval = EvalConfig::default();
    for kind in [ObjectiveKind::Vhe, ObjectiveKind::Ns] {
        let cfg = TrainConfig {
            objective: ObjectiveSpec::new(kind, 1),
            seed: 7,
            epochs,
            ..TrainConfig::default()
        };
        let best = train_best(&ds, &cfg)?;
        let info = encoded_information(&best.params, &ds, 1, &eval)?;
        let err = fewshot_classification_error(&best.params, &ds, 1, &eval)?;
        println!("{kind:>4}: final loss {:.4}  encoded information {info:.4} nats  1-shot error {err:.3}", best.final_loss());
    }
    Ok(())
}
