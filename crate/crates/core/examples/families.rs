//! Draws one class from each observation family and scores its elements
//! under the generating parameters.

use homoenc::dists::Family;
use homoenc::synthdata::{generate, Hyper};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for family in Family::ALL {
        let ds = generate(family, 1, 8, 5, &Hyper::default())?;
        let class = &ds.classes[0];
        let ll: f64 = class
            .elements
            .iter()
            .map(|&x| class.true_params.logpdf(x))
            .sum::<Result<f64, _>>()?;
        let shown: Vec<String> = class.elements.iter().map(|x| format!("{x:.2}")).collect();
        println!("{family:>9}: {:?}", class.true_params);
        println!("           [{}]  log-lik {ll:.3}", shown.join(", "));
    }
    Ok(())
}
