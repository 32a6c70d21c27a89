//! Tabulates the special functions the likelihoods depend on.

use homoenc::adiff::special::{bessel_ratio, digamma, lgamma, log_bessel_i0, trigamma};

fn main() {
    println!(
        "{:>6} {:>16} {:>16} {:>16} {:>16} {:>16}",
        "x", "lgamma", "digamma", "trigamma", "log I0", "I1/I0"
    );
    for x in [0.1, 0.5, 1.0, 2.5, 10.0, 50.0] {
        println!(
            "{x:>6} {:>16.10} {:>16.10} {:>16.10} {:>16.10} {:>16.10}",
            lgamma(x),
            digamma(x),
            trigamma(x),
            log_bessel_i0(x),
            bessel_ratio(x)
        );
    }
}
