//! The entropy functions behind the marginal penalties: `φ`, its conjugate
//! `φ*`, and the proximal map `aprox` that appears in every Sinkhorn update.
//! The KL and power entropies use the Lambert W function for `aprox`.

use uot::divergence::{aprox, csiszar_divergence, phi_conjugate, phi_value};
use uot::lambert::lambert_w;
use uot::Entropy;

fn main() -> uot::Result<()> {
    let entropies = [
        ("balanced", Entropy::Balanced),
        ("kl", Entropy::Kl { rho: 1.0 }),
        ("tv", Entropy::Tv { rho: 1.0 }),
        ("range", Entropy::Range { a: 0.5, b: 2.0 }),
        ("power(s=0.5)", Entropy::Power { s: 0.5, rho: 1.0 }),
        ("berg", Entropy::Berg { rho: 1.0 }),
    ];
    println!("{:<14} {:>10} {:>10} {:>12} {:>12}", "entropy", "phi(2)", "phi*(0.3)", "aprox(0.5)", "D(a|b)");
    for (name, e) in entropies {
        println!(
            "{name:<14} {:>10.5} {:>10.5} {:>12.5} {:>12.5}",
            phi_value(e, 2.0),
            phi_conjugate(e, 0.3),
            aprox(e, 0.1, 0.5),
            csiszar_divergence(e, &[0.6, 0.9], &[0.5, 1.0])?
        );
    }
    for x in [-0.3, 0.0, 1.0, 100.0] {
        let w = lambert_w(x)?;
        println!("W({x}) = {w:.12}, W e^W = {:.12}", w * w.exp());
    }
    Ok(())
}
