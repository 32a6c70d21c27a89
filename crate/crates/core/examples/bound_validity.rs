//! Monte Carlo means of each bound on the conjugate toy against the exact
//! log marginal.

use homoenc::verify::{bound_samples, mean_se};

fn main() {
    let episodes = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let s = bound_samples(episodes, 0);
    let exact = s.exact;
    println!("exact log p(X)        {exact:.4}");
    for (name, xs) in [("vhe", &s.vhe), ("ns", &s.ns)] {
        let (m, se) = mean_se(xs);
        println!("{name:<21} {m:.4} ± {se:.4}");
    }
    let (h, se) = mean_se(&s.hierarchical);
    println!(
        "hierarchical          {h:.4} ± {se:.4}  (exact {:.4})",
        s.hierarchical_exact
    );
    let (z, se) = mean_se(&s.vhe_z);
    println!(
        "vhe_z                 {z:.4} ± {se:.4}  (exact {:.4})",
        s.vhe_z_exact
    );
    let loose: Vec<f64> = s.tightened.iter().map(|p| p.0).collect();
    let tight: Vec<f64> = s.tightened.iter().map(|p| p.1).collect();
    println!(
        "tightened             {:.4} over loose {:.4}  (exact {:.4})",
        mean_se(&tight).0,
        mean_se(&loose).0,
        s.tightened_exact
    );
}
