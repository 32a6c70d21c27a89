//! Evaluates every flat objective on one class with a freshly initialized
//! model and shows how the VAE, VHE and ablations coincide on a singleton.

use homoenc::dists::Family;
use homoenc::model::{ModelConfig, ModelParams};
use homoenc::objectives::{loss_ns, loss_resample, loss_rescale, loss_vae, loss_vhe, LossOpts};
use homoenc::synthdata::{generate, sample_episode, Episode, Hyper};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(Family::Gaussian, 5, 20, 1, &Hyper::default())?;
    let model = ModelParams::init(ModelConfig::flat(Family::Gaussian, 2), 9)?;
    let view = model.view();
    let opts = LossOpts {
        kl_scale: 1.0,
        mc_samples: 4,
    };
    let rng = ChaCha8Rng::seed_from_u64(0);

    let ep = sample_episode(&ds, 0, 5, &mut rng.clone())?;
    let vhe = loss_vhe(&view, &ep, opts, &mut rng.clone())?;
    let resample = loss_resample(&view, &ep, opts, &mut rng.clone())?;
    let rescale = loss_rescale(&view, ep.d[0], &ep.d, ep.class_size, opts, &mut rng.clone())?;
    let ns = loss_ns(&view, &ep.d, opts, &mut rng.clone())?;
    println!("|D| = 5 of a class of 20");
    println!("  vhe      {:10.5}  kl {:.5}", vhe.total, vhe.kl_c());
    println!("  resample {:10.5}", resample.total);
    println!("  rescale  {:10.5}  (x taken from D)", rescale.total);
    println!("  ns       {:10.5}  (whole support)", ns.total);

    let x = ds.classes[0].elements[0];
    let single = Episode::singleton(x);
    println!("singleton support, same noise:");
    println!(
        "  vae      {:.15}",
        loss_vae(&view, x, opts, &mut rng.clone())?.total
    );
    println!(
        "  vhe      {:.15}",
        loss_vhe(&view, &single, opts, &mut rng.clone())?.total
    );
    println!(
        "  resample {:.15}",
        loss_resample(&view, &single, opts, &mut rng.clone())?.total
    );
    println!(
        "  rescale  {:.15}",
        loss_rescale(&view, x, &[x], 1, opts, &mut rng.clone())?.total
    );
    Ok(())
}
