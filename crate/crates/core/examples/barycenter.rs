//! Free-support barycenter of two point clouds by a weighted particle flow
//! on `Σ ω_k S_ε(α, β_k)`, written out as snapshots and a loss trace.

use ndarray::Array2;
use uot::flows::{barycenter_flow, FlowConfig, FlowLoss, ParticleSystem};
use uot::io::save_trajectory;
use uot::measure::DiscreteMeasure;
use uot::Entropy;

fn square(n: usize, centre: [f64; 2], half: f64) -> uot::Result<DiscreteMeasure> {
    let side = (n as f64).sqrt().ceil() as usize;
    let pts = Array2::from_shape_fn((n, 2), |(i, k)| {
        let idx = if k == 0 { i % side } else { i / side };
        centre[k] - half + 2.0 * half * (idx as f64 + 0.5) / side as f64
    });
    DiscreteMeasure::uniform(pts, 1.0)
}

fn main() -> uot::Result<()> {
    let left = square(25, [0.2, 0.5], 0.1)?;
    let right = square(25, [0.8, 0.5], 0.1)?;
    let initial = ParticleSystem::random_uniform(25, 2, 1.0, 4)?;
    let config = FlowConfig {
        loss: FlowLoss::Sinkdiv,
        eps: 1e-3,
        entropy: Entropy::Kl { rho: 0.5 },
        eta_x: 10.0,
        eta_r: 0.2,
        iterations: 150,
        snapshot_stride: 25,
        ..Default::default()
    };
    let t = barycenter_flow(&initial, &[left, right], &[0.5, 0.5], &config)?;
    for p in &t.trace {
        println!("iteration {:>4}  loss {:.6}", p.iteration, p.loss);
    }
    let fin = t.final_system().measure();
    let centre: Vec<f64> = (0..2).map(|k| fin.points().column(k).dot(&ndarray::ArrayView1::from(fin.weights())) / fin.mass()).collect();
    println!("final mass {:.4}, centre of mass [{:.3}, {:.3}], step halvings {}", fin.mass(), centre[0], centre[1], t.halvings);
    let dir = std::env::temp_dir().join("uot_barycenter");
    save_trajectory(&t, &dir)?;
    println!("snapshots and trace.csv written to {}", dir.display());
    Ok(())
}
