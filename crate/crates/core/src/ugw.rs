//! Unbalanced Gromov-Wasserstein between metric measure spaces.
//!
//! The distortion is `Ω(t) = t^q` with `q ∈ {1, 2}`. Marginals are penalized
//! with the tensorized divergence `ρKL(μ⊗μ | α⊗α)`, or constrained exactly in
//! balanced mode. The entropic problem is relaxed to the bi-convex functional
//! `B_ε(π, γ)` and minimized by alternating entropic UOT solves.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{Divergence, Entropy};
use crate::error::{Error, Result};
use crate::measure::{check_weights, euclidean, matrix_marginals, total_mass, CostKind, DiscreteMeasure, TransportPlan};
use crate::numeric::xlogxy;
use crate::oracle::ot_1d_sorted;
use crate::sinkdiv::Gradients;
use crate::sinkhorn::{plan_from_potentials, sinkhorn_solve, SolveOptions};

/// Plans below this mass are reported as a collapse.
pub const MASS_COLLAPSE: f64 = 1e-12;

/// A finite metric measure space `(X, d_X, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMeasureSpace {
    distance: Array2<f64>,
    weights: Vec<f64>,
}

impl MetricMeasureSpace {
    /// Checks symmetry (to `1e-12` relative), a zero diagonal and nonnegativity.
    pub fn new(distance: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let (n, m) = distance.dim();
        if n != m {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                got: (n, m),
            });
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch(weights.len(), n));
        }
        if n == 0 {
            return Err(Error::Empty);
        }
        check_weights(&weights)?;
        let scale = distance.iter().fold(0.0f64, |s, d| s.max(d.abs()));
        for i in 0..n {
            if distance[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!("distance[{i}][{i}] must be zero")));
            }
            for j in 0..n {
                let d = distance[[i, j]];
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "distance[{i}][{j}] must be finite and nonnegative, got {d}"
                    )));
                }
                if (d - distance[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!("distance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { distance, weights })
    }

    /// Euclidean distances between the atoms of a measure.
    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        let pts = m.points();
        let n = m.len();
        let rows: Vec<Vec<f64>> = pts.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in i + 1..n {
                let v = euclidean(&rows[i], &rows[j]);
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        Self {
            distance: d,
            weights: m.weights().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn distance(&self) -> ArrayView2<'_, f64> {
        self.distance.view()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        total_mass(&self.weights)
    }

    /// Relabels atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        let d = Array2::from_shape_fn((n, n), |(i, j)| self.distance[[perm[i], perm[j]]]);
        let w = perm.iter().map(|&p| self.weights[p]).collect();
        Ok(Self { distance: d, weights: w })
    }
}

fn omega(t: f64, q: u32) -> f64 {
    match q {
        1 => t.abs(),
        2 => t * t,
        _ => t.abs().powi(q as i32),
    }
}

fn check_exponent(q: u32) -> Result<()> {
    if q == 1 || q == 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("distortion exponent must be 1 or 2, got {q}")))
    }
}

/// `(C_γ)_ij = Σ_{i'j'} |DX_ii' − DY_jj'|^q γ_i'j'`.
///
/// `q = 2` uses the factored form `DX²γ₁ ⊕ DY²γ₂ − 2·DX γ DYᵀ`.
pub fn gw_cost_tensor_contract(
    dx: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    gamma: ArrayView2<'_, f64>,
    q: u32,
) -> Result<Array2<f64>> {
    check_exponent(q)?;
    let (n, m) = (dx.nrows(), dy.nrows());
    if gamma.dim() != (n, m) || dx.ncols() != n || dy.ncols() != m {
        return Err(Error::ShapeMismatch {
            expected: (n, m),
            got: gamma.dim(),
        });
    }
    if q != 2 {
        return Ok(contract_direct(dx, dy, gamma, q));
    }
    let (g1, g2) = matrix_marginals(gamma);
    let dx2 = dx.mapv(|v| v * v);
    let dy2 = dy.mapv(|v| v * v);
    let a = dx2.dot(&ndarray::ArrayView1::from(&g1));
    let b = dy2.dot(&ndarray::ArrayView1::from(&g2));
    let cross = dx.dot(&gamma).dot(&dy.t());
    Ok(Array2::from_shape_fn((n, m), |(i, j)| a[i] + b[j] - 2.0 * cross[[i, j]]))
}

fn contract_direct(dx: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>, gamma: ArrayView2<'_, f64>, q: u32) -> Array2<f64> {
    let (n, m) = gamma.dim();
    let support: Vec<(usize, usize, f64)> = gamma
        .indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|((i, j), &v)| (i, j, v))
        .collect();
    Array2::from_shape_fn((n, m), |(i, j)| {
        support
            .iter()
            .map(|&(k, l, v)| omega(dx[[i, k]] - dy[[j, l]], q) * v)
            .sum()
    })
}

/// `G(π) = ⟨C_π, π⟩`.
pub fn gw_distortion(pi: ArrayView2<'_, f64>, x: &MetricMeasureSpace, y: &MetricMeasureSpace, q: u32) -> Result<f64> {
    let c = gw_cost_tensor_contract(x.distance(), y.distance(), pi, q)?;
    Ok((&c * &pi).sum())
}

/// Full KL between nonnegative vectors, `Σ μ ln(μ/a) − μ + a`.
pub fn kl(mu: &[f64], a: &[f64]) -> f64 {
    mu.iter().zip(a).map(|(&m, &w)| xlogxy(m, w) - m + w).sum()
}

/// `KL(μ⊗ν | α⊗β) = m(ν)KL(μ|α) + m(μ)KL(ν|β) + (m(μ) − m(α))(m(ν) − m(β))`.
pub fn tensor_kl(mu: &[f64], nu: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
    let (mm, mn) = (total_mass(mu), total_mass(nu));
    let (ma, mb) = (total_mass(alpha), total_mass(beta));
    mn * kl(mu, alpha) + mm * kl(nu, beta) + (mm - ma) * (mn - mb)
}

/// Marginal treatment of the plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "penalty", rename_all = "snake_case")]
pub enum UgwPenalty {
    /// `ρ·KL^⊗` on both marginals.
    Kl { rho: f64 },
    /// Exact marginal constraints (balanced GW).
    Balanced,
}

impl UgwPenalty {
    fn validate(&self) -> Result<()> {
        match *self {
            UgwPenalty::Kl { rho } if !(rho > 0.0 && rho.is_finite()) => {
                Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")))
            }
            _ => Ok(()),
        }
    }
}

fn flat(p: ArrayView2<'_, f64>) -> Vec<f64> {
    p.iter().cloned().collect()
}

/// `B_ε(π, γ)`: distortion of `π⊗γ`, tensorized marginal penalties and
/// `ε·KL(π⊗γ | (α⊗β)^{⊗2})`. In balanced mode infeasible marginals give `+inf`.
pub fn bi_functional(
    pi: ArrayView2<'_, f64>,
    gamma: ArrayView2<'_, f64>,
    x: &MetricMeasureSpace,
    y: &MetricMeasureSpace,
    penalty: UgwPenalty,
    eps: f64,
    q: u32,
) -> Result<f64> {
    let c = gw_cost_tensor_contract(x.distance(), y.distance(), gamma, q)?;
    let transport = (&c * &pi).sum();
    let (a, b) = (x.weights(), y.weights());
    let (p1, p2) = matrix_marginals(pi);
    let (g1, g2) = matrix_marginals(gamma);
    let marg = match penalty {
        UgwPenalty::Kl { rho } => rho * (tensor_kl(&p1, &g1, a, a) + tensor_kl(&p2, &g2, b, b)),
        UgwPenalty::Balanced => {
            let d = Divergence::new(Entropy::Balanced)?;
            d.divergence(&p1, a)? + d.divergence(&p2, b)? + d.divergence(&g1, a)? + d.divergence(&g2, b)?
        }
    };
    let ent = if eps > 0.0 {
        let ab = flat(crate::measure::outer(a, b).view());
        eps * tensor_kl(&flat(pi), &flat(gamma), &ab, &ab)
    } else {
        0.0
    };
    Ok(transport + marg + ent)
}

/// `A(π) = G(π) + ρ[2m(π₁)KL(π₁|α) + (m(π₁) − m(α))²] + (same for π₂, β)`.
pub fn ugw_functional(
    pi: ArrayView2<'_, f64>,
    x: &MetricMeasureSpace,
    y: &MetricMeasureSpace,
    rho: f64,
    q: u32,
) -> Result<f64> {
    let g = gw_distortion(pi, x, y, q)?;
    let (p1, p2) = matrix_marginals(pi);
    let m = total_mass(&p1);
    let side = |p: &[f64], w: &[f64]| 2.0 * m * kl(p, w) + (m - total_mass(w)).powi(2);
    Ok(g + rho * (side(&p1, x.weights()) + side(&p2, y.weights())))
}

/// Initial plan for the alternating solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UgwInit {
    /// `π₀ = α⊗β`.
    #[default]
    Product,
    /// Greedy coupling of the cost between local distance distributions.
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UgwOptions {
    pub eps: f64,
    pub penalty: UgwPenalty,
    pub exponent: u32,
    pub tol: f64,
    pub max_iters: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iters: usize,
    pub init: UgwInit,
    /// Extra runs from seeded multiplicative perturbations of the initial plan.
    pub restarts: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for UgwOptions {
    fn default() -> Self {
        Self {
            eps: 0.05,
            penalty: UgwPenalty::Kl { rho: 1.0 },
            exponent: 2,
            tol: 1e-7,
            max_iters: 500,
            sinkhorn_tol: 1e-10,
            sinkhorn_max_iters: 100_000,
            init: UgwInit::Product,
            restarts: 0,
            seed: 0,
            parallel: false,
        }
    }
}

impl UgwOptions {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.tol > 0.0) || !(self.sinkhorn_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        check_exponent(self.exponent)?;
        self.penalty.validate()
    }
}

/// Result of one alternating solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgwReport {
    pub iterations: usize,
    pub last_update: f64,
    pub converged: bool,
    /// `B_ε(π_t, γ_t)`, starting with the initial pair.
    pub trace: Vec<f64>,
    /// `A_ε(π) = B_ε(π, π)` at the returned plan.
    pub functional: f64,
    /// `G(π)` at the returned plan.
    pub distortion: f64,
    pub mass: f64,
}

/// Solves the entropic UOT sub-problem for a fixed plan `gamma`.
fn half_step(
    gamma: &Array2<f64>,
    x: &MetricMeasureSpace,
    y: &MetricMeasureSpace,
    opts: &UgwOptions,
    warm: Option<Vec<f64>>,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (a, b) = (x.weights(), y.weights());
    let mg = gamma.sum();
    if !(mg >= MASS_COLLAPSE) {
        return Err(Error::MassCollapse(mg));
    }
    let mut cost = gw_cost_tensor_contract(x.distance(), y.distance(), gamma.view(), opts.exponent)?;
    let (g1, g2) = matrix_marginals(gamma.view());
    let ab = crate::measure::outer(a, b);
    let ent: f64 = gamma.iter().zip(ab.iter()).map(|(&g, &w)| xlogxy(g, w)).sum();
    let log_marg = |p: &[f64], w: &[f64]| p.iter().zip(w).map(|(&u, &v)| xlogxy(u, v)).sum::<f64>();
    let shift = match opts.penalty {
        UgwPenalty::Kl { rho } => rho * (log_marg(&g1, a) + log_marg(&g2, b)) + opts.eps * ent,
        UgwPenalty::Balanced => opts.eps * ent,
    };
    cost.mapv_inplace(|c| c + shift);
    let d = match opts.penalty {
        UgwPenalty::Kl { rho } => Divergence::new(Entropy::Kl { rho: rho * mg })?,
        UgwPenalty::Balanced => Divergence::new(Entropy::Balanced)?,
    };
    let eps_t = opts.eps * mg;
    let mut sopts = SolveOptions::with_epsilon(eps_t)
        .tol(opts.sinkhorn_tol)
        .max_iters(opts.sinkhorn_max_iters);
    sopts.init_g = warm;
    let (pot, report) = sinkhorn_solve(a, b, cost.view(), &d, &d, &sopts)?;
    if !report.converged {
        return Err(Error::NotConverged {
            what: "Sinkhorn sub-problem",
            iterations: report.iterations,
            residual: report.last_update_sup_norm,
        });
    }
    let plan = plan_from_potentials(&pot.f, &pot.g, cost.view(), eps_t, a, b).into_matrix();
    Ok((plan, pot.g))
}

/// Rescales both plans to the geometric mean of their masses; `B_ε` only
/// depends on `π⊗γ`, so its value is unchanged.
fn balance_masses(p: &mut Array2<f64>, g: &mut Array2<f64>) {
    let (mp, mg) = (p.sum(), g.sum());
    if mp > 0.0 && mg > 0.0 {
        let target = (mp * mg).sqrt();
        p.mapv_inplace(|v| v * target / mp);
        g.mapv_inplace(|v| v * target / mg);
    }
}

fn check_spaces(x: &MetricMeasureSpace, y: &MetricMeasureSpace, opts: &UgwOptions) -> Result<()> {
    opts.validate()?;
    if opts.penalty == UgwPenalty::Balanced {
        let (ma, mb) = (x.mass(), y.mass());
        if (ma - mb).abs() > 1e-9 * ma.max(mb) {
            return Err(Error::MassMismatch(ma, mb));
        }
    }
    if x.mass() <= 0.0 || y.mass() <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(())
}

/// Alternating minimization of `B_ε` from `init`; returns the last iterate.
pub fn ugw_solve_from(
    x: &MetricMeasureSpace,
    y: &MetricMeasureSpace,
    init: Array2<f64>,
    opts: &UgwOptions,
) -> Result<(TransportPlan, TransportPlan, UgwReport)> {
    check_spaces(x, y, opts)?;
    if init.dim() != (x.len(), y.len()) {
        return Err(Error::ShapeMismatch {
            expected: (x.len(), y.len()),
            got: init.dim(),
        });
    }
    let q = opts.exponent;
    let mut pi = init;
    let mut gamma = pi.clone();
    let mut trace = vec![bi_functional(pi.view(), gamma.view(), x, y, opts.penalty, opts.eps, q)?];
    let (mut warm_g, mut warm_p) = (None, None);
    let mut last = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iters {
        let (g_new, wg) = half_step(&pi, x, y, opts, warm_g.take())?;
        gamma = g_new;
        warm_g = Some(wg);
        balance_masses(&mut pi, &mut gamma);
        let prev = pi.clone();
        let (p_new, wp) = half_step(&gamma, x, y, opts, warm_p.take())?;
        pi = p_new;
        warm_p = Some(wp);
        balance_masses(&mut pi, &mut gamma);
        it += 1;
        last = pi.iter().zip(prev.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trace.push(bi_functional(pi.view(), gamma.view(), x, y, opts.penalty, opts.eps, q)?);
        if last < opts.tol {
            break;
        }
    }
    let functional = bi_functional(pi.view(), pi.view(), x, y, opts.penalty, opts.eps, q)?;
    let distortion = gw_distortion(pi.view(), x, y, q)?;
    let report = UgwReport {
        iterations: it,
        last_update: last,
        converged: last < opts.tol,
        trace,
        functional,
        distortion,
        mass: pi.sum(),
    };
    Ok((TransportPlan::from_raw(pi), TransportPlan::from_raw(gamma), report))
}

/// Alternating UGW solver with the configured initialization and restarts.
///
/// Restarts perturb the initial plan by `exp(U(−1, 1))` factors drawn from a
/// generator seeded with `opts.seed`; the run with the lowest final `A_ε` is
/// returned, ties going to the earliest run.
pub fn ugw_solve(
    x: &MetricMeasureSpace,
    y: &MetricMeasureSpace,
    opts: &UgwOptions,
) -> Result<(TransportPlan, TransportPlan, UgwReport)> {
    check_spaces(x, y, opts)?;
    let base = match opts.init {
        UgwInit::Product => crate::measure::outer(x.weights(), y.weights()),
        UgwInit::Histogram => histogram_init(x, y)?,
    };
    if opts.restarts == 0 {
        return ugw_solve_from(x, y, base, opts);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inits = vec![base.clone()];
    for _ in 0..opts.restarts {
        inits.push(base.mapv(|v| v * rng.random_range(-1.0f64..1.0).exp()));
    }
    let runs: Vec<Result<_>> = if opts.parallel {
        inits.into_par_iter().map(|p| ugw_solve_from(x, y, p, opts)).collect()
    } else {
        inits.into_iter().map(|p| ugw_solve_from(x, y, p, opts)).collect()
    };
    let mut best: Option<(TransportPlan, TransportPlan, UgwReport)> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.2.functional < b.2.functional) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Debiased entropic GW, `GW_ε(X, Y) − ½GW_ε(X, X) − ½GW_ε(Y, Y)`, each
/// term being the final `A_ε` of an alternating solve. Its sign is not
/// guaranteed for finite `ε`.
pub fn sgw_eps(x: &MetricMeasureSpace, y: &MetricMeasureSpace, opts: &UgwOptions) -> Result<f64> {
    let xy = ugw_solve(x, y, opts)?.2.functional;
    let xx = ugw_solve(x, x, opts)?.2.functional;
    let yy = ugw_solve(y, y, opts)?.2.functional;
    Ok(xy - 0.5 * xx - 0.5 * yy)
}

/// Local distance distribution of atom `i`: `d(x_i, ·)♯α`, normalized.
fn local_histogram(x: &MetricMeasureSpace, i: usize) -> (Vec<f64>, Vec<f64>) {
    let m = x.mass();
    let d = x.distance();
    let pairs: Vec<(f64, f64)> = (0..x.len()).map(|k| (d[[i, k]], x.weights()[k] / m)).collect();
    pairs.into_iter().unzip()
}

/// Cost `W₁(h_{x_i}, h_{y_j})` between local distance distributions, coupled
/// greedily (cheapest pairs first) and scaled to mass `m(α)m(β)`.
pub fn histogram_init(x: &MetricMeasureSpace, y: &MetricMeasureSpace) -> Result<Array2<f64>> {
    let (n, m) = (x.len(), y.len());
    let hx: Vec<_> = (0..n).map(|i| local_histogram(x, i)).collect();
    let hy: Vec<_> = (0..m).map(|j| local_histogram(y, j)).collect();
    let mut cells = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let c = ot_1d_sorted(&hx[i].0, &hx[i].1, &hy[j].0, &hy[j].1, CostKind::EuclideanPower { p: 1.0 })?;
            cells.push((c, i, j));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (ma, mb) = (x.mass(), y.mass());
    let mut ra: Vec<f64> = x.weights().iter().map(|w| w / ma).collect();
    let mut rb: Vec<f64> = y.weights().iter().map(|w| w / mb).collect();
    let mut plan = Array2::zeros((n, m));
    for (_, i, j) in cells {
        let t = ra[i].min(rb[j]);
        if t > 0.0 {
            plan[[i, j]] = t * ma * mb;
            ra[i] -= t;
            rb[j] -= t;
        }
    }
    Ok(plan)
}

/// `Φ(X) = d_X♯(α⊗α)` with equal distances merged.
pub fn distance_histogram(x: &MetricMeasureSpace) -> DiscreteMeasure {
    let (vals, weights) = distance_histogram_parts(x);
    DiscreteMeasure::on_line(&vals, weights).expect("valid histogram")
}

fn distance_histogram_parts(x: &MetricMeasureSpace) -> (Vec<f64>, Vec<f64>) {
    let w = x.weights();
    let d = x.distance();
    let mut pairs = Vec::with_capacity(w.len() * w.len());
    for i in 0..w.len() {
        for k in 0..w.len() {
            pairs.push((d[[i, k]], w[i] * w[k]));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vals: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (v, m) in pairs {
        if vals.last() == Some(&v) {
            *weights.last_mut().unwrap() += m;
        } else {
            vals.push(v);
            weights.push(m);
        }
    }
    (vals, weights)
}

fn check_kernel_exponent(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("kernel exponent must be positive, got {p}")))
    }
}

/// `GW_∞(X, Y) = Σ α_iα_i'β_jβ_j' |DX_ii' − DY_jj'|^p` by the quadruple sum.
pub fn gw_inf(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<f64> {
    check_kernel_exponent(p)?;
    let (a, b) = (x.weights(), y.weights());
    let (dx, dy) = (x.distance(), y.distance());
    let mut total = 0.0;
    for i in 0..a.len() {
        for i2 in 0..a.len() {
            let wa = a[i] * a[i2];
            if wa == 0.0 {
                continue;
            }
            let u = dx[[i, i2]];
            let mut inner = 0.0;
            for j in 0..b.len() {
                for j2 in 0..b.len() {
                    inner += b[j] * b[j2] * (u - dy[[j, j2]]).abs().powf(p);
                }
            }
            total += wa * inner;
        }
    }
    Ok(total)
}

/// `GW_∞` as the kernel pairing `∫|u − v|^p dΦ(X)(u) dΦ(Y)(v)`.
pub fn gw_inf_histogram(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<f64> {
    check_kernel_exponent(p)?;
    let (u, wu) = distance_histogram_parts(x);
    let (v, wv) = distance_histogram_parts(y);
    let mut total = 0.0;
    for k in 0..u.len() {
        let mut inner = 0.0;
        for l in 0..v.len() {
            inner += wv[l] * (u[k] - v[l]).abs().powf(p);
        }
        total += wu[k] * inner;
    }
    Ok(total)
}

/// `SGW_∞ = GW_∞(X, Y) − ½GW_∞(X, X) − ½GW_∞(Y, Y)`.
///
/// Nonnegative for equal masses and `1 ≤ p < 2`; at `p = 2` it reduces to a
/// comparison of the first moments of the distance histograms.
pub fn sgw_inf(x: &MetricMeasureSpace, y: &MetricMeasureSpace, p: f64) -> Result<f64> {
    let (mx, my) = (x.mass(), y.mass());
    if (mx - my).abs() > 1e-9 * mx.max(my) {
        return Err(Error::MassMismatch(mx, my));
    }
    Ok(gw_inf_histogram(x, y, p)? - 0.5 * gw_inf_histogram(x, x, p)? - 0.5 * gw_inf_histogram(y, y, p)?)
}

/// `h(d) = Σ_v w_v |d − v|^p` and its derivative in `d`.
fn pairing(d: f64, vals: &[f64], w: &[f64], p: f64) -> (f64, f64) {
    let mut h = 0.0;
    let mut dh = 0.0;
    for (v, wv) in vals.iter().zip(w) {
        let t = d - v;
        let a = t.abs();
        h += wv * a.powf(p);
        if a > 0.0 {
            dh += wv * p * a.powf(p - 1.0) * t.signum();
        }
    }
    (h, dh)
}

/// Gradients of `GW_∞(X(α), Y)`, optionally debiased to `SGW_∞`, for a
/// point cloud `α` with Euclidean distances.
pub fn gw_inf_gradients(alpha: &DiscreteMeasure, y: &MetricMeasureSpace, p: f64, debiased: bool) -> Result<Gradients> {
    check_kernel_exponent(p)?;
    let x = MetricMeasureSpace::from_measure(alpha);
    let value = if debiased { sgw_inf(&x, y, p)? } else { gw_inf_histogram(&x, y, p)? };
    let (vy, wy) = distance_histogram_parts(y);
    let (vx, wx) = distance_histogram_parts(&x);
    let (n, dim) = (alpha.len(), alpha.dim());
    let a = alpha.weights();
    let pts: Vec<Vec<f64>> = alpha.points().axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let dx = x.distance();
    let mut positions = Array2::zeros((n, dim));
    let mut weights = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            let d = dx[[i, k]];
            let (hy, dhy) = pairing(d, &vy, &wy, p);
            let (mut h, mut dh) = (hy, dhy);
            if debiased {
                let (hx, dhx) = pairing(d, &vx, &wx, p);
                h -= hx;
                dh -= dhx;
            }
            weights[i] += 2.0 * a[k] * h;
            if d > 0.0 && k != i {
                let s = 2.0 * a[i] * a[k] * dh / d;
                for c in 0..dim {
                    positions[[i, c]] += s * (pts[i][c] - pts[k][c]);
                }
            }
        }
    }
    Ok(Gradients {
        value,
        positions,
        weights,
    })
}
