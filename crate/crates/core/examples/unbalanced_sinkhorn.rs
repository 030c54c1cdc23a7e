//! Entropic transport between two Gaussian bumps of different mass on a
//! grid, under each marginal penalty.
//!
//! The balanced solve is infeasible for unequal masses and is skipped; the
//! relaxed penalties either create or destroy mass, which shows in the plan
//! mass column.

use ndarray::Array2;
use uot::measure::{cost_matrix, marginals, CostKind};
use uot::sinkhorn::{plan_from_potentials, sinkhorn_solve, SolveOptions};
use uot::{Divergence, Entropy};

fn bump(xs: &[f64], centre: f64, width: f64, mass: f64) -> Vec<f64> {
    let w: Vec<f64> = xs.iter().map(|x| (-(x - centre).powi(2) / (2.0 * width * width)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| mass * v / s).collect()
}

fn main() -> uot::Result<()> {
    let n = 60;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let alpha = bump(&xs, 0.3, 0.06, 1.0);
    let beta = bump(&xs, 0.7, 0.08, 1.5);
    let grid = Array2::from_shape_vec((n, 1), xs.clone()).unwrap();
    let cost = cost_matrix(grid.view(), grid.view(), CostKind::SqEuclidean)?;
    let opts = SolveOptions::with_epsilon(1e-3).tol(1e-9).max_iters(100_000);

    let penalties = [
        ("kl(rho=0.1)", Entropy::Kl { rho: 0.1 }),
        ("kl(rho=10)", Entropy::Kl { rho: 10.0 }),
        ("tv(rho=0.05)", Entropy::Tv { rho: 0.05 }),
        ("range[0.9,1.1]", Entropy::Range { a: 0.9, b: 1.1 }),
        ("power(s=0.5)", Entropy::Power { s: 0.5, rho: 1.0 }),
        ("berg(rho=1)", Entropy::Berg { rho: 1.0 }),
    ];
    println!("{:<16} {:>8} {:>12} {:>12} {:>10} {:>10}", "penalty", "iters", "primal", "dual", "mass", "row mass");
    for (name, entropy) in penalties {
        let d = Divergence::new(entropy)?;
        match sinkhorn_solve(&alpha, &beta, cost.view(), &d, &d, &opts) {
            Ok((pot, rep)) => {
                let plan = plan_from_potentials(&pot.f, &pot.g, cost.view(), opts.epsilon, &alpha, &beta);
                let (rows, _) = marginals(&plan);
                println!(
                    "{name:<16} {:>8} {:>12.6} {:>12.6} {:>10.4} {:>10.4}",
                    rep.iterations,
                    rep.primal,
                    rep.dual,
                    plan.mass(),
                    rows.iter().sum::<f64>()
                );
            }
            Err(e) => println!("{name:<16} error: {e}"),
        }
    }
    let bal = Divergence::new(Entropy::Balanced)?;
    if let Err(e) = sinkhorn_solve(&alpha, &beta, cost.view(), &bal, &bal, &opts) {
        println!("{:<16} error: {e}", "balanced");
    }
    Ok(())
}
