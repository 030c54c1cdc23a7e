//! Exact reference solvers: transportation simplex, 1-D sorting, TV-UOT as
//! an augmented LP, and the closed-form KL-UOT between two Diracs; each is
//! compared to a small-ε Sinkhorn solve.

use ndarray::Array2;
use uot::measure::{cost_matrix, CostKind};
use uot::oracle::{lp_ot_exact, ot_1d_sorted, uot_kl_two_diracs, uot_tv_exact};
use uot::sinkhorn::{sinkhorn_solve, SolveOptions};
use uot::{Divergence, Entropy};

fn main() -> uot::Result<()> {
    let xs = [0.1, 0.4, 0.5, 0.9];
    let ys = [0.0, 0.3, 0.8];
    let a = [0.1, 0.4, 0.3, 0.2];
    let b = [0.5, 0.25, 0.25];
    let px = Array2::from_shape_vec((4, 1), xs.to_vec()).unwrap();
    let py = Array2::from_shape_vec((3, 1), ys.to_vec()).unwrap();
    let c = cost_matrix(px.view(), py.view(), CostKind::SqEuclidean)?;
    let opts = SolveOptions::with_epsilon(1e-4).tol(1e-11).max_iters(1_000_000);

    let (lp, plan) = lp_ot_exact(&a, &b, c.view())?;
    let sorted = ot_1d_sorted(&xs, &a, &ys, &b, CostKind::SqEuclidean)?;
    let bal = Divergence::new(Entropy::Balanced)?;
    let (_, rep) = sinkhorn_solve(&a, &b, c.view(), &bal, &bal, &opts)?;
    println!("balanced: simplex {lp:.6}, sorted {sorted:.6}, sinkhorn {:.6}", rep.primal);
    println!("simplex plan has {} nonzeros", plan.iter().filter(|&&v| v > 0.0).count());

    let b_heavy = [0.8, 0.4, 0.4];
    for rho in [0.01, 0.05, 1.0] {
        let tv = Divergence::new(Entropy::Tv { rho })?;
        let (_, rep) = sinkhorn_solve(&a, &b_heavy, c.view(), &tv, &tv, &opts)?;
        println!("tv rho={rho}: exact {:.6}, sinkhorn {:.6}", uot_tv_exact(&a, &b_heavy, c.view(), rho)?, rep.primal);
    }

    for d in [0.0, 0.5, 2.0] {
        let kl = Divergence::new(Entropy::Kl { rho: 0.5 })?;
        let cd = Array2::from_elem((1, 1), d * d);
        let (_, rep) = sinkhorn_solve(&[0.7], &[1.3], cd.view(), &kl, &kl, &opts)?;
        println!("two diracs d={d}: closed form {:.6}, sinkhorn {:.6}", uot_kl_two_diracs(0.7, 1.3, d, 0.5), rep.primal);
    }
    Ok(())
}
