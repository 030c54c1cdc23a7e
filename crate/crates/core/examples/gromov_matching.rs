//! Unbalanced Gromov-Wasserstein between a shape and a rotated copy with
//! outliers, followed by the `ε → ∞` limit `GW∞` and its debiased variant.
//!
//! GW compares intra-space distances only, so the rotation is invisible;
//! the KL relaxation lets the plan drop most of the outlier mass.

use std::f64::consts::PI;

use ndarray::Array2;
use uot::measure::DiscreteMeasure;
use uot::ugw::{gw_inf, sgw_inf, ugw_solve, MetricMeasureSpace, UgwOptions, UgwPenalty};

fn ring(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, 2), |(i, k)| {
        let t = 2.0 * PI * i as f64 / n as f64;
        let r = 0.3 + 0.1 * (3.0 * t).cos();
        if k == 0 { r * t.cos() } else { r * t.sin() }
    })
}

fn rotate(pts: &Array2<f64>, angle: f64) -> Array2<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    Array2::from_shape_fn(pts.dim(), |(i, k)| {
        let (x, y) = (pts[[i, 0]], pts[[i, 1]]);
        if k == 0 { c * x - s * y } else { s * x + c * y }
    })
}

fn main() -> uot::Result<()> {
    let n = 24;
    let x = MetricMeasureSpace::from_measure(&DiscreteMeasure::uniform(ring(n), 1.0)?);
    let mut pts = rotate(&ring(n), 0.7).into_raw_vec_and_offset().0;
    pts.extend_from_slice(&[3.0, 3.0, 3.1, 2.9, 2.9, 3.1]);
    let mut w = vec![1.0 / n as f64; n];
    w.extend([0.05; 3]);
    let y = MetricMeasureSpace::from_measure(&DiscreteMeasure::new(Array2::from_shape_vec((n + 3, 2), pts).unwrap(), w)?);

    for (name, penalty) in [("kl(rho=0.05)", UgwPenalty::Kl { rho: 0.05 }), ("kl(rho=10)", UgwPenalty::Kl { rho: 10.0 })] {
        let opts = UgwOptions { eps: 0.005, penalty, ..Default::default() };
        let (pi, _, rep) = ugw_solve(&x, &y, &opts)?;
        let outlier: f64 = pi.matrix().columns().into_iter().skip(n).map(|c| c.sum()).sum();
        println!(
            "{name:<14} iters {:>4}  A_eps {:>10.6}  distortion {:>10.6}  plan mass {:.4}  mass on outliers {:.2e}",
            rep.iterations, rep.functional, rep.distortion, rep.mass, outlier
        );
    }
    // The debiased limit needs equal masses: compare against the clean rotated ring.
    let clean = MetricMeasureSpace::from_measure(&DiscreteMeasure::uniform(rotate(&ring(n), 0.7), 1.0)?);
    for p in [1.0, 1.5, 2.0] {
        println!(
            "p = {p}: GW_inf(X, Y) = {:.6}, SGW_inf(X, rotated X) = {:.3e}",
            gw_inf(&x, &y, p)?,
            sgw_inf(&x, &clean, p)?
        );
    }
    Ok(())
}
