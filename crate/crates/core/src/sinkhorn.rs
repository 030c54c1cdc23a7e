//! Log-domain Sinkhorn iterations for entropic, possibly unbalanced, OT.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{check_range_feasible, Divergence};
use crate::error::{Error, Result};
use crate::measure::{check_weights, matrix_marginals, total_mass, TransportPlan};
use crate::numeric::{log_weight, logsumexp_iter, xlogxy};
use crate::report::SolveReport;

/// Geometric ε schedule `ε_k = max(ε, start·factor^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annealing {
    pub start: f64,
    pub factor: f64,
}

/// How the Softmin reductions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftminMode {
    /// Max-shifted logsumexp on `−C/ε`.
    #[default]
    Log,
    /// Precomputed kernel `e^{−C/ε}` and plain sums; requires
    /// `min_j C_ij/ε < 700` on every row and column.
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub annealing: Option<Annealing>,
    pub init_g: Option<Vec<f64>>,
    pub mode: SoftminMode,
    /// Row-parallel reductions. Each row is still reduced in index order, so
    /// results match the sequential mode.
    pub parallel: bool,
    pub record_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            tol: 1e-6,
            max_iters: 10_000,
            annealing: None,
            init_g: None,
            mode: SoftminMode::Log,
            parallel: false,
            record_history: false,
        }
    }
}

impl SolveOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if let Some(a) = self.annealing {
            if !(a.start > 0.0 && a.factor > 0.0 && a.factor < 1.0) {
                return Err(Error::InvalidParameter(
                    "annealing needs start > 0 and 0 < factor < 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Dual potentials `(f, g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// `Smin^ε_w(h) = −ε log Σ_k w_k e^{−h_k/ε}`; `+inf` when every weight is zero.
pub fn softmin(eps: f64, weights: &[f64], h: &[f64]) -> f64 {
    assert_eq!(weights.len(), h.len(), "softmin: length mismatch");
    let lse = logsumexp_iter(
        weights
            .iter()
            .zip(h)
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, &x)| w.ln() - x / eps),
    );
    -eps * lse
}

/// Softmin engine for one `(α, β, C, ε)` instance.
///
/// Holds `C/ε` in both orientations so that row and column reductions read
/// contiguous memory.
pub struct Sinkhorn<'a> {
    alpha: &'a [f64],
    beta: &'a [f64],
    d1: &'a Divergence,
    d2: &'a Divergence,
    eps: f64,
    n: usize,
    m: usize,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
    mode: SoftminMode,
    parallel: bool,
}

impl<'a> Sinkhorn<'a> {
    pub fn new(
        alpha: &'a [f64],
        beta: &'a [f64],
        cost: ArrayView2<'_, f64>,
        d1: &'a Divergence,
        d2: &'a Divergence,
        eps: f64,
    ) -> Result<Self> {
        Self::with_mode(alpha, beta, cost, d1, d2, eps, SoftminMode::Log, false)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_mode(
        alpha: &'a [f64],
        beta: &'a [f64],
        cost: ArrayView2<'_, f64>,
        d1: &'a Divergence,
        d2: &'a Divergence,
        eps: f64,
        mode: SoftminMode,
        parallel: bool,
    ) -> Result<Self> {
        let (n, m) = cost.dim();
        if alpha.len() != n || beta.len() != m {
            return Err(Error::ShapeMismatch {
                expected: (alpha.len(), beta.len()),
                got: (n, m),
            });
        }
        if n == 0 || m == 0 {
            return Err(Error::Empty);
        }
        check_weights(alpha)?;
        check_weights(beta)?;
        d1.check_len(n)?;
        d2.check_len(m)?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
        }
        let mut rows = vec![0.0; n * m];
        let mut cols = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let c = cost[[i, j]] / eps;
                rows[i * m + j] = c;
                cols[j * n + i] = c;
            }
        }
        if mode == SoftminMode::Kernel {
            let worst_row = (0..n)
                .map(|i| rows[i * m..(i + 1) * m].iter().cloned().fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max);
            let worst_col = (0..m)
                .map(|j| cols[j * n..(j + 1) * n].iter().cloned().fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max);
            let worst = worst_row.max(worst_col);
            if worst >= 700.0 {
                return Err(Error::KernelUnderflow(worst));
            }
            rows.iter_mut().for_each(|c| *c = (-*c).exp());
            cols.iter_mut().for_each(|c| *c = (-*c).exp());
        }
        Ok(Self {
            alpha,
            beta,
            d1,
            d2,
            eps,
            n,
            m,
            log_a: alpha.iter().map(|&w| log_weight(w)).collect(),
            log_b: beta.iter().map(|&w| log_weight(w)).collect(),
            rows,
            cols,
            mode,
            parallel,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// `S_β(g)_i = Smin^ε_β(C_{i·} − g)` for every row `i`.
    pub fn smin_beta(&self, g: &[f64]) -> Vec<f64> {
        reduce(
            &self.rows, self.n, self.m, g, &self.log_b, self.beta, self.eps, self.mode, self.parallel,
        )
    }

    /// `S_α(f)_j = Smin^ε_α(C_{·j} − f)` for every column `j`.
    pub fn smin_alpha(&self, f: &[f64]) -> Vec<f64> {
        reduce(
            &self.cols, self.m, self.n, f, &self.log_a, self.alpha, self.eps, self.mode, self.parallel,
        )
    }

    /// `f = −aprox_{φ₁*}(−S_β(g))`.
    pub fn update_f(&self, g: &[f64]) -> Vec<f64> {
        let s = self.smin_beta(g);
        s.iter()
            .enumerate()
            .map(|(i, &v)| -self.d1.at(i).aprox(self.eps, -v))
            .collect()
    }

    /// `g = −aprox_{φ₂*}(−S_α(f))`.
    pub fn update_g(&self, f: &[f64]) -> Vec<f64> {
        let s = self.smin_alpha(f);
        s.iter()
            .enumerate()
            .map(|(j, &v)| -self.d2.at(j).aprox(self.eps, -v))
            .collect()
    }

    /// Runs alternating updates from `g` and returns the final potentials,
    /// iteration count, last update norm and the update history.
    pub fn iterate(
        &self,
        mut g: Vec<f64>,
        tol: f64,
        max_iters: usize,
        history: Option<&mut Vec<f64>>,
    ) -> (Vec<f64>, Vec<f64>, usize, f64) {
        let mut hist = history;
        let mut f = vec![0.0; self.n];
        let mut last = f64::INFINITY;
        let mut it = 0;
        while it < max_iters {
            f = self.update_f(&g);
            let g_new = self.update_g(&f);
            last = masked_sup_diff(&g_new, &g, self.beta);
            g = g_new;
            it += 1;
            if let Some(h) = hist.as_deref_mut() {
                h.push(last);
            }
            if last < tol {
                break;
            }
        }
        (f, g, it, last)
    }
}

fn masked_sup_diff(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut out: f64 = 0.0;
    for k in 0..a.len() {
        if w[k] > 0.0 {
            let d = a[k] - b[k];
            if d.is_nan() {
                // inf − inf: both sides saw no mass, nothing moved.
                continue;
            }
            out = out.max(d.abs());
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn reduce(
    mat: &[f64],
    rows: usize,
    cols: usize,
    pot: &[f64],
    log_w: &[f64],
    w: &[f64],
    eps: f64,
    mode: SoftminMode,
    parallel: bool,
) -> Vec<f64> {
    let row = |i: usize| -> f64 {
        let r = &mat[i * cols..(i + 1) * cols];
        match mode {
            SoftminMode::Log => {
                let terms = (0..cols)
                    .filter(|&j| w[j] > 0.0)
                    .map(|j| log_w[j] + pot[j] / eps - r[j]);
                -eps * logsumexp_iter(terms)
            }
            SoftminMode::Kernel => {
                let mut acc = 0.0;
                for j in 0..cols {
                    if w[j] > 0.0 {
                        acc += r[j] * w[j] * (pot[j] / eps).exp();
                    }
                }
                -eps * acc.ln()
            }
        }
    };
    if parallel {
        (0..rows).into_par_iter().map(row).collect()
    } else {
        (0..rows).map(row).collect()
    }
}

/// Zeroes potentials on zero-weight atoms.
fn mask(p: &mut [f64], w: &[f64]) {
    for (x, &wk) in p.iter_mut().zip(w) {
        if wk <= 0.0 {
            *x = 0.0;
        }
    }
}

/// Unbalanced Sinkhorn: alternate exact block maximization of the dual.
///
/// Non-convergence within `max_iters` is reported in the returned report,
/// not raised.
pub fn sinkhorn_solve(
    alpha: &[f64],
    beta: &[f64],
    cost: ArrayView2<'_, f64>,
    d1: &Divergence,
    d2: &Divergence,
    opts: &SolveOptions,
) -> Result<(DualPotentials, SolveReport)> {
    opts.validate()?;
    check_range_feasible(d1, total_mass(alpha), d2, total_mass(beta))?;
    let m = beta.len();
    let mut g = match &opts.init_g {
        Some(g0) if g0.len() != m => return Err(Error::LengthMismatch(g0.len(), m)),
        Some(g0) => g0.clone(),
        None => vec![0.0; m],
    };
    let mut history = opts.record_history.then(Vec::new);
    let mut total_iters = 0;
    if let Some(sched) = opts.annealing {
        let mut eps = sched.start;
        while eps > opts.epsilon {
            let engine = Sinkhorn::with_mode(alpha, beta, cost, d1, d2, eps, opts.mode, opts.parallel)?;
            let budget = opts.max_iters.saturating_sub(total_iters);
            let (_, g_stage, it, _) = engine.iterate(g, opts.tol, budget, history.as_mut());
            g = g_stage;
            total_iters += it;
            eps *= sched.factor;
        }
    }
    let engine = Sinkhorn::with_mode(alpha, beta, cost, d1, d2, opts.epsilon, opts.mode, opts.parallel)?;
    let budget = opts.max_iters.saturating_sub(total_iters);
    let (mut f, mut g, it, last) = engine.iterate(g, opts.tol, budget, history.as_mut());
    total_iters += it;
    let converged = last < opts.tol;
    mask(&mut f, alpha);
    mask(&mut g, beta);

    let plan = plan_from_potentials(&f, &g, cost, opts.epsilon, alpha, beta);
    let primal = primal_value(&plan, cost, opts.epsilon, alpha, beta, d1, d2)?;
    let dual = dual_value(&f, &g, cost, opts.epsilon, alpha, beta, d1, d2);
    let mut report = SolveReport::new(total_iters, last, primal, dual, converged);
    report.history = history;
    Ok((DualPotentials { f, g }, report))
}

/// `π_ij = exp((f_i + g_j − C_ij)/ε)·α_i·β_j`, zero where `C = +inf` or a
/// weight vanishes.
pub fn plan_from_potentials(
    f: &[f64],
    g: &[f64],
    cost: ArrayView2<'_, f64>,
    eps: f64,
    alpha: &[f64],
    beta: &[f64],
) -> TransportPlan {
    let (n, m) = cost.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        if alpha[i] <= 0.0 {
            continue;
        }
        let la = alpha[i].ln();
        for j in 0..m {
            let c = cost[[i, j]];
            if beta[j] <= 0.0 || c == f64::INFINITY {
                continue;
            }
            out[[i, j]] = ((f[i] + g[j] - c) / eps + la + beta[j].ln()).exp();
        }
    }
    TransportPlan::from_raw(out)
}

/// Entropic UOT dual
/// `−⟨α, φ₁*(−f)⟩ − ⟨β, φ₂*(−g)⟩ − ε⟨α⊗β, e^{(f⊕g−C)/ε} − 1⟩`.
#[allow(clippy::too_many_arguments)]
pub fn dual_value(
    f: &[f64],
    g: &[f64],
    cost: ArrayView2<'_, f64>,
    eps: f64,
    alpha: &[f64],
    beta: &[f64],
    d1: &Divergence,
    d2: &Divergence,
) -> f64 {
    let (n, m) = cost.dim();
    let mut lin = 0.0;
    for i in 0..n {
        if alpha[i] > 0.0 {
            lin -= alpha[i] * d1.at(i).phi_star(-f[i]);
        }
    }
    for j in 0..m {
        if beta[j] > 0.0 {
            lin -= beta[j] * d2.at(j).phi_star(-g[j]);
        }
    }
    let mut ent = 0.0;
    for i in 0..n {
        if alpha[i] <= 0.0 {
            continue;
        }
        for j in 0..m {
            if beta[j] <= 0.0 {
                continue;
            }
            let c = cost[[i, j]];
            let e = if c == f64::INFINITY {
                0.0
            } else {
                ((f[i] + g[j] - c) / eps).exp()
            };
            ent += alpha[i] * beta[j] * (e - 1.0);
        }
    }
    lin - eps * ent
}

/// Generalized `KL(π|α⊗β) = Σ π ln(π/(αβ)) − π + αβ`.
pub fn plan_kl(plan: ArrayView2<'_, f64>, alpha: &[f64], beta: &[f64]) -> f64 {
    let (n, m) = plan.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..m {
            let p = plan[[i, j]];
            let r = alpha[i] * beta[j];
            acc += xlogxy(p, r) - p + r;
        }
    }
    acc
}

/// Entropic UOT primal `⟨C,π⟩ + D_φ₁(π₁|α) + D_φ₂(π₂|β) + ε KL(π|α⊗β)`.
pub fn primal_value(
    plan: &TransportPlan,
    cost: ArrayView2<'_, f64>,
    eps: f64,
    alpha: &[f64],
    beta: &[f64],
    d1: &Divergence,
    d2: &Divergence,
) -> Result<f64> {
    let pm = plan.matrix();
    if pm.dim() != cost.dim() {
        return Err(Error::ShapeMismatch {
            expected: cost.dim(),
            got: pm.dim(),
        });
    }
    if alpha.len() != cost.nrows() || beta.len() != cost.ncols() {
        return Err(Error::ShapeMismatch {
            expected: cost.dim(),
            got: (alpha.len(), beta.len()),
        });
    }
    let mut transport = 0.0;
    for (p, c) in pm.iter().zip(cost.iter()) {
        if *p > 0.0 {
            transport += p * c;
        }
    }
    let (r, c) = matrix_marginals(pm.view());
    let m1 = d1.divergence(&r, alpha)?;
    let m2 = d2.divergence(&c, beta)?;
    Ok(transport + m1 + m2 + eps * plan_kl(pm.view(), alpha, beta))
}

/// Largest absolute row/column marginal deviation, in ℓ₁.
pub fn marginal_errors(plan: &TransportPlan, alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let (r, c) = matrix_marginals(plan.matrix().view());
    let e1 = r.iter().zip(alpha).map(|(x, y)| (x - y).abs()).sum();
    let e2 = c.iter().zip(beta).map(|(x, y)| (x - y).abs()).sum();
    (e1, e2)
}

/// Rounds a plan onto `{π ≥ 0 : π1 = α, πᵀ1 = β}` for `m(α) = m(β)`:
/// scales down rows and columns exceeding their targets, then adds the
/// rank-one correction `e_r e_cᵀ / ‖e_r‖₁` (Altschuler, Weed and Rigollet).
/// The ℓ₁ change is at most twice the marginal violation.
pub fn round_to_marginals(plan: &TransportPlan, alpha: &[f64], beta: &[f64]) -> Result<TransportPlan> {
    let mut p = plan.matrix().clone();
    let (n, m) = p.dim();
    if alpha.len() != n || beta.len() != m {
        return Err(Error::ShapeMismatch {
            expected: (n, m),
            got: (alpha.len(), beta.len()),
        });
    }
    check_weights(alpha)?;
    check_weights(beta)?;
    let (ma, mb) = (total_mass(alpha), total_mass(beta));
    if (ma - mb).abs() > 1e-12 * ma.max(mb) {
        return Err(Error::MassMismatch(ma, mb));
    }
    let (r, _) = matrix_marginals(p.view());
    for i in 0..n {
        if r[i] > alpha[i] {
            let s = alpha[i] / r[i];
            p.row_mut(i).mapv_inplace(|v| v * s);
        }
    }
    let (_, c) = matrix_marginals(p.view());
    for j in 0..m {
        if c[j] > beta[j] {
            let s = beta[j] / c[j];
            p.column_mut(j).mapv_inplace(|v| v * s);
        }
    }
    let (r, c) = matrix_marginals(p.view());
    let er: Vec<f64> = alpha.iter().zip(&r).map(|(a, x)| (a - x).max(0.0)).collect();
    let ec: Vec<f64> = beta.iter().zip(&c).map(|(b, x)| (b - x).max(0.0)).collect();
    let total: f64 = er.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..m {
                p[[i, j]] += er[i] * ec[j] / total;
            }
        }
    }
    Ok(TransportPlan::from_raw(p))
}
