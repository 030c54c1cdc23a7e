//! How `ρ` controls mass transfer between two bimodal densities on `[0, 1]`
//! whose mode masses disagree: small `ρ` keeps each mode's own mass, large
//! `ρ` recovers balanced transport.

use uot::cli::bench::{bench_mode_masses, ModeMassBench};

fn main() -> uot::Result<()> {
    let cfg = ModeMassBench { rhos: vec![0.01, 0.1, 1.0, 10.0, 100.0], ..Default::default() };
    let report = bench_mode_masses(&cfg, true)?;
    println!("alpha modes {:?}, beta modes {:?}", report.alpha_modes, report.beta_modes);
    println!("{:>8} {:>20} {:>20} {:>10} {:>10}", "rho", "row marginal modes", "col marginal modes", "mismatch", "mass");
    for r in &report.rows {
        println!(
            "{:>8} {:>9.4} {:>10.4} {:>9.4} {:>10.4} {:>10.2e} {:>10.4}",
            r.rho, r.pi1_modes[0], r.pi1_modes[1], r.pi2_modes[0], r.pi2_modes[1], r.mode_mismatch, r.plan_mass
        );
    }
    Ok(())
}
