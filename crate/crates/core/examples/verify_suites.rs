//! Runs the fast property suites and prints each measured property.

use homoenc::verify::{run, Suite, VerifyConfig};

fn main() {
    let cfg = VerifyConfig {
        bound_episodes: 20_000,
        ..VerifyConfig::default()
    };
    let props = run(
        &[Suite::Special, Suite::Identities, Suite::Gap, Suite::Bounds],
        &cfg,
    );
    for p in &props {
        println!("{p}");
    }
    let failed = props.iter().filter(|p| !p.passed()).count();
    println!("{} properties, {failed} failed", props.len());
}
