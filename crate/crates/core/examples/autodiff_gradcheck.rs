//! Builds a small expression on the tape, reads its gradient and checks it
//! against central differences.

use homoenc::adiff::{grad_check, Real, Tape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tape = Tape::new();
    let x = tape.var(1.3);
    let y = tape.var(-0.4);
    // f = lgamma(x) sin(y) + softplus(x y) + log I0(x²)
    let f = x.lgamma() * y.sin() + (x * y).softplus() + x.square().log_bessel_i0();
    let grads = tape.backward(f)?;
    println!("f = {:.12}", f.value());
    println!("df/dx = {:.12}  df/dy = {:.12}", grads.wrt(x), grads.wrt(y));
    let check = grad_check(&tape, f, &tape.leaf_values(), 1e-5)?;
    println!(
        "central differences: max relative error {:.2e} at leaf {}",
        check.max_rel_error, check.worst_leaf
    );
    Ok(())
}
