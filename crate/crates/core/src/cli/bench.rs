//! Mode-mass experiment on two 1-D Gaussian mixtures.
//!
//! Both inputs live on a uniform grid of `[0, 1]` and have one mode on each
//! half, with unequal amplitudes. For each `ρ` the KL-relaxed plan is solved
//! and the mass of each marginal on `[0, ½]` and `[½, 1]` is reported.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{Divergence, Entropy};
use crate::error::Result;
use crate::measure::{cost_matrix, marginals, CostKind};
use crate::sinkhorn::{plan_from_potentials, SolveOptions};
use crate::ti::ti_sinkhorn_solve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeMassBench {
    pub grid: usize,
    pub eps: f64,
    pub rhos: Vec<f64>,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ModeMassBench {
    fn default() -> Self {
        Self {
            grid: 200,
            eps: 1e-3,
            rhos: vec![0.01, 0.03, 0.1, 0.3, 0.5, 1.0, 3.0, 10.0, 100.0],
            tol: 1e-9,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMassRow {
    pub rho: f64,
    /// Mass of `π₁` on `[0, ½]` and `[½, 1]`.
    pub pi1_modes: [f64; 2],
    /// Mass of `π₂` on `[0, ½]` and `[½, 1]`.
    pub pi2_modes: [f64; 2],
    /// Largest relative gap between paired modes of `π₁` and `π₂`.
    pub mode_mismatch: f64,
    /// `‖π₁ − α‖₁`.
    pub marginal_l1: f64,
    pub plan_mass: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMassReport {
    pub alpha_modes: [f64; 2],
    pub beta_modes: [f64; 2],
    pub alpha_mass: f64,
    pub beta_mass: f64,
    pub rows: Vec<ModeMassRow>,
}

/// `Σ_k a_k N(c_k, σ²)` sampled on the grid and rescaled to total mass 1.
fn mixture(xs: &[f64], modes: [(f64, f64); 2], sigma: f64) -> Vec<f64> {
    let raw: Vec<f64> = xs
        .iter()
        .map(|&x| {
            modes
                .iter()
                .map(|&(c, a)| a * (-(x - c).powi(2) / (2.0 * sigma * sigma)).exp())
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn halves(xs: &[f64], w: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (x, v) in xs.iter().zip(w) {
        out[usize::from(*x >= 0.5)] += v;
    }
    out
}

/// The built-in instance: grid, `α` and `β`.
pub fn mode_mass_instance(grid: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..grid).map(|i| (i as f64 + 0.5) / grid as f64).collect();
    let alpha = mixture(&xs, [(0.325, 0.55), (0.675, 0.45)], 0.03);
    let beta = mixture(&xs, [(0.175, 0.5), (0.825, 0.5)], 0.03);
    (xs, alpha, beta)
}

pub fn bench_mode_masses(cfg: &ModeMassBench, parallel: bool) -> Result<ModeMassReport> {
    let (xs, alpha, beta) = mode_mass_instance(cfg.grid);
    let pts = ndarray::Array2::from_shape_vec((xs.len(), 1), xs.clone()).expect("column of grid points");
    let cost = cost_matrix(pts.view(), pts.view(), CostKind::SqEuclidean)?;
    let opts = SolveOptions::with_epsilon(cfg.eps).tol(cfg.tol).max_iters(cfg.max_iters);
    let solve = |&rho: &f64| -> Result<ModeMassRow> {
        let d = Divergence::new(Entropy::Kl { rho })?;
        let (pot, report) = ti_sinkhorn_solve(&alpha, &beta, cost.view(), &d, &d, &opts)?;
        let plan = plan_from_potentials(&pot.f, &pot.g, cost.view(), cfg.eps, &alpha, &beta);
        let (p1, p2) = marginals(&plan);
        let (m1, m2) = (halves(&xs, &p1), halves(&xs, &p2));
        let mode_mismatch = (0..2).map(|k| (m1[k] - m2[k]).abs() / m2[k]).fold(0.0, f64::max);
        Ok(ModeMassRow {
            rho,
            pi1_modes: m1,
            pi2_modes: m2,
            mode_mismatch,
            marginal_l1: p1.iter().zip(&alpha).map(|(p, a)| (p - a).abs()).sum(),
            plan_mass: plan.mass(),
            iterations: report.iterations,
            converged: report.converged,
        })
    };
    let rows = if parallel {
        cfg.rhos.par_iter().map(solve).collect::<Result<Vec<_>>>()?
    } else {
        cfg.rhos.iter().map(solve).collect::<Result<Vec<_>>>()?
    };
    Ok(ModeMassReport {
        alpha_modes: halves(&xs, &alpha),
        beta_modes: halves(&xs, &beta),
        alpha_mass: alpha.iter().sum(),
        beta_mass: beta.iter().sum(),
        rows,
    })
}
