//! With the exact-posterior encoder on p(c)=N(0,1), p(x|c)=N(c,1), the
//! importance-weighted estimate and quadrature both recover the closed-form
//! marginal.

use homoenc::eval::oracles::{exact_conjugate_log_marginal, ConjugateHyper};
use homoenc::eval::{iw_log_marginal, quadrature_log_marginal};
use homoenc::model::conjugate_exact;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xs = [0.3, -1.2, 2.0, 0.7];
    let model = conjugate_exact(xs.len());
    let exact = exact_conjugate_log_marginal(ConjugateHyper::STANDARD, &xs);
    println!("closed form  {exact:.15}");
    for k in [1, 10, 200] {
        let iw = iw_log_marginal(&model, &xs, k, &mut ChaCha8Rng::seed_from_u64(k as u64))?;
        println!("iw k={k:<4} {iw:.15}");
    }
    println!(
        "quadrature  {:.15}",
        quadrature_log_marginal(&model, &xs, 32)?
    );
    Ok(())
}
