//! Generates the flat, hierarchical and factorial datasets, writes one to
//! JSONL and reads it back.

use homoenc::dists::Family;
use homoenc::synthdata::{generate, generate_factorial, generate_hierarchical, Dataset, Hyper};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hyper = Hyper::default();
    let flat = generate(Family::Mixture2, 100, 100, 42, &hyper)?;
    let hier = generate_hierarchical(10, 10, 20, 42, &hyper)?;
    let fact = generate_factorial(4, 3, 20, 42, &hyper)?;
    for ds in [&flat, &hier, &fact] {
        println!(
            "{:?} {}: {} classes, {} elements",
            ds.meta.structure,
            ds.meta.family,
            ds.classes.len(),
            ds.total_elements()
        );
    }
    println!("content 0 has {} elements", fact.content_elements(0).len());

    let path = std::env::temp_dir().join("homoenc-mixture2.jsonl");
    flat.save(&path)?;
    let back = Dataset::load(&path)?;
    println!(
        "round trip through {} equal: {}",
        path.display(),
        back == flat
    );
    Ok(())
}
