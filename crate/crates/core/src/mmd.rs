//! Kernel norms (MMD) between discrete measures.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{euclidean, DiscreteMeasure};
use crate::sinkdiv::Gradients;

/// Mass tolerance for the energy distance, which is only conditionally positive.
pub const ENERGY_MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `e^{−‖x−y‖²/(2σ²)}`.
    Gaussian { sigma: f64 },
    /// `e^{−‖x−y‖/s}`.
    Laplacian { s: f64 },
    /// `−‖x−y‖`.
    EnergyDistance,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian sigma must be positive, got {sigma}")),
            ),
            KernelSpec::Laplacian { s } if !(s > 0.0 && s.is_finite()) => Err(
                Error::InvalidParameter(format!("laplacian scale must be positive, got {s}")),
            ),
            _ => Ok(()),
        }
    }

    /// Kernel value as a function of the distance.
    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => (-d * d / (2.0 * sigma * sigma)).exp(),
            KernelSpec::Laplacian { s } => (-d / s).exp(),
            KernelSpec::EnergyDistance => -d,
        }
    }

    /// `∇_x k(x, y)`, written to `out`. Zero at `x = y` for the nonsmooth kernels.
    pub fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let d = euclidean(x, y);
        let scale = match *self {
            KernelSpec::Gaussian { sigma } => -self.eval(d) / (sigma * sigma),
            KernelSpec::Laplacian { s } if d > 0.0 => -self.eval(d) / (s * d),
            KernelSpec::EnergyDistance if d > 0.0 => -1.0 / d,
            _ => 0.0,
        };
        for k in 0..out.len() {
            out[k] = scale * (x[k] - y[k]);
        }
    }
}

/// `K_ij = k(x_i, y_j)`.
pub fn kernel_matrix(xs: ArrayView2<'_, f64>, ys: ArrayView2<'_, f64>, spec: KernelSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    if xs.ncols() != ys.ncols() {
        return Err(Error::DimensionMismatch(xs.ncols(), ys.ncols()));
    }
    let mut out = Array2::zeros((xs.nrows(), ys.nrows()));
    for (i, x) in xs.axis_iter(Axis(0)).enumerate() {
        let x = x.to_vec();
        for (j, y) in ys.axis_iter(Axis(0)).enumerate() {
            out[[i, j]] = spec.eval(euclidean(&x, &y.to_vec()));
        }
    }
    Ok(out)
}

/// `⟨K a, b⟩` for weight vectors and a kernel between two point sets.
fn bilinear(xs: ArrayView2<'_, f64>, a: &[f64], ys: ArrayView2<'_, f64>, b: &[f64], spec: KernelSpec) -> f64 {
    let yv: Vec<Vec<f64>> = ys.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let mut total = 0.0;
    for (i, x) in xs.axis_iter(Axis(0)).enumerate() {
        if a[i] == 0.0 {
            continue;
        }
        let x = x.to_vec();
        let mut row = 0.0;
        for (j, y) in yv.iter().enumerate() {
            if b[j] != 0.0 {
                row += b[j] * spec.eval(euclidean(&x, y));
            }
        }
        total += a[i] * row;
    }
    total
}

fn check(alpha: &DiscreteMeasure, beta: &DiscreteMeasure, spec: KernelSpec) -> Result<()> {
    spec.validate()?;
    if alpha.dim() != beta.dim() {
        return Err(Error::DimensionMismatch(alpha.dim(), beta.dim()));
    }
    if spec == KernelSpec::EnergyDistance {
        let (ma, mb) = (alpha.mass(), beta.mass());
        if (ma - mb).abs() > ENERGY_MASS_TOL * ma.max(mb).max(1.0) {
            return Err(Error::MassMismatch(ma, mb));
        }
    }
    Ok(())
}

/// `‖α − β‖²_k = ⟨Kα, α⟩ + ⟨Kβ, β⟩ − 2⟨Kα, β⟩`.
///
/// The energy distance is only conditionally positive and requires equal masses.
pub fn mmd_sq(alpha: &DiscreteMeasure, beta: &DiscreteMeasure, spec: KernelSpec) -> Result<f64> {
    check(alpha, beta, spec)?;
    let (xa, wa) = (alpha.points(), alpha.weights());
    let (xb, wb) = (beta.points(), beta.weights());
    Ok(bilinear(xa, wa, xa, wa, spec) + bilinear(xb, wb, xb, wb, spec) - 2.0 * bilinear(xa, wa, xb, wb, spec))
}

/// `mmd_sq` with its gradients in the atoms and weights of `α`.
pub fn mmd_gradients(alpha: &DiscreteMeasure, beta: &DiscreteMeasure, spec: KernelSpec) -> Result<Gradients> {
    let value = mmd_sq(alpha, beta, spec)?;
    let (n, dim) = (alpha.len(), alpha.dim());
    let (xa, wa) = (alpha.points(), alpha.weights());
    let (xb, wb) = (beta.points(), beta.weights());
    let mut positions = Array2::zeros((n, dim));
    let mut weights = vec![0.0; n];
    let mut buf = vec![0.0; dim];
    for i in 0..n {
        let xi = xa.row(i).to_vec();
        let mut pot = 0.0;
        for k in 0..n {
            let xk = xa.row(k).to_vec();
            pot += wa[k] * spec.eval(euclidean(&xi, &xk));
            spec.grad_x(&xi, &xk, &mut buf);
            for c in 0..dim {
                positions[[i, c]] += 2.0 * wa[i] * wa[k] * buf[c];
            }
        }
        for j in 0..beta.len() {
            let yj = xb.row(j).to_vec();
            pot -= wb[j] * spec.eval(euclidean(&xi, &yj));
            spec.grad_x(&xi, &yj, &mut buf);
            for c in 0..dim {
                positions[[i, c]] -= 2.0 * wa[i] * wb[j] * buf[c];
            }
        }
        weights[i] = 2.0 * pot;
    }
    Ok(Gradients {
        value,
        positions,
        weights,
    })
}
