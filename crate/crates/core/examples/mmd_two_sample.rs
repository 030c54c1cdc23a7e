//! Kernel MMD between samples: an equal-law pair shrinks like `n^{-1/2}`
//! while a shifted pair stays bounded away from zero.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uot::measure::DiscreteMeasure;
use uot::mmd::{mmd_sq, KernelSpec};

fn sample(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> uot::Result<DiscreteMeasure> {
    let pts = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>() + shift);
    DiscreteMeasure::uniform(pts, 1.0)
}

fn main() -> uot::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kernels = [
        ("gaussian", KernelSpec::Gaussian { sigma: 0.2 }),
        ("laplacian", KernelSpec::Laplacian { s: 0.2 }),
        ("energy", KernelSpec::EnergyDistance),
    ];
    println!("{:<10} {:>6} {:>12} {:>12}", "kernel", "n", "same law", "shift 0.2");
    for (name, k) in kernels {
        for n in [64, 256, 1024] {
            let a = sample(&mut rng, n, 0.0)?;
            let b = sample(&mut rng, n, 0.0)?;
            let c = sample(&mut rng, n, 0.2)?;
            println!("{name:<10} {n:>6} {:>12.4e} {:>12.4e}", mmd_sq(&a, &b, k)?.sqrt(), mmd_sq(&a, &c, k)?.sqrt());
        }
    }
    Ok(())
}
