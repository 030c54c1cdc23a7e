//! Translation-invariant Sinkhorn for KL-relaxed marginals.
//!
//! The invariant dual `H(f̄, ḡ) = sup_λ D(f̄ + λ, ḡ − λ)` is maximized by
//! alternating exact block updates; the optimal translation is applied at
//! the end to recover the maximizers of the standard dual.

use ndarray::ArrayView2;

use crate::divergence::{Divergence, Entropy};
use crate::error::{Error, Result};
use crate::measure::total_mass;
use crate::numeric::{hilbert_diff, logsumexp_iter, sup_diff};
use crate::report::SolveReport;
use crate::sinkhorn::{dual_value, plan_from_potentials, primal_value, softmin, DualPotentials, Sinkhorn, SolveOptions};

const INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITERS: usize = 200;

/// Potentials of the invariant dual, defined up to `(f̄ + λ, ḡ − λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiPotentials {
    pub f_bar: Vec<f64>,
    pub g_bar: Vec<f64>,
}

/// `ln⟨w, e^{−h/ρ}⟩`, masked on zero weights.
fn log_mass_exp(h: &[f64], w: &[f64], rho: f64) -> f64 {
    logsumexp_iter(
        w.iter()
            .zip(h)
            .filter(|(&wk, _)| wk > 0.0)
            .map(|(&wk, &x)| wk.ln() - x / rho),
    )
}

/// `λ⋆ = ρ₁ρ₂/(ρ₁+ρ₂)·ln[⟨α, e^{−f̄/ρ₁}⟩ / ⟨β, e^{−ḡ/ρ₂}⟩]`.
pub fn optimal_translation(
    f_bar: &[f64],
    g_bar: &[f64],
    alpha: &[f64],
    beta: &[f64],
    rho1: f64,
    rho2: f64,
) -> Result<f64> {
    if !(total_mass(alpha) > 0.0 && total_mass(beta) > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(translation(f_bar, g_bar, alpha, beta, rho1, rho2))
}

fn translation(f_bar: &[f64], g_bar: &[f64], alpha: &[f64], beta: &[f64], rho1: f64, rho2: f64) -> f64 {
    let r = rho1 * rho2 / (rho1 + rho2);
    r * (log_mass_exp(f_bar, alpha, rho1) - log_mass_exp(g_bar, beta, rho2))
}

/// Invariant dual `H_ε(f̄, ḡ)`. With `eps = 0` the entropic term is
/// replaced by the constraint `f̄ ⊕ ḡ ≤ C` (value `−inf` when violated).
#[allow(clippy::too_many_arguments)]
pub fn ti_dual_value(
    f_bar: &[f64],
    g_bar: &[f64],
    cost: ArrayView2<'_, f64>,
    eps: f64,
    alpha: &[f64],
    beta: &[f64],
    rho1: f64,
    rho2: f64,
) -> f64 {
    let (n, m) = cost.dim();
    let (t1, t2) = (rho1 / (rho1 + rho2), rho2 / (rho1 + rho2));
    let la = log_mass_exp(f_bar, alpha, rho1);
    let lb = log_mass_exp(g_bar, beta, rho2);
    let coupling = (rho1 + rho2) * (t1 * la + t2 * lb).exp();
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
            if eps == 0.0 {
                if f_bar[i] + g_bar[j] > c {
                    return f64::NEG_INFINITY;
                }
            } else {
                let e = if c == f64::INFINITY {
                    0.0
                } else {
                    ((f_bar[i] + g_bar[j] - c) / eps).exp()
                };
                ent += alpha[i] * beta[j] * (e - 1.0);
            }
        }
    }
    rho1 * total_mass(alpha) + rho2 * total_mass(beta) - eps * ent - coupling
}

/// Solver state for one instance.
pub struct TiSinkhorn<'a> {
    engine: Sinkhorn<'a>,
    alpha: &'a [f64],
    beta: &'a [f64],
    eps: f64,
    rho1: f64,
    rho2: f64,
}

impl<'a> TiSinkhorn<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: &'a [f64],
        beta: &'a [f64],
        cost: ArrayView2<'_, f64>,
        eps: f64,
        d1: &'a Divergence,
        d2: &'a Divergence,
    ) -> Result<Self> {
        let rho1 = kl_rho(d1)?;
        let rho2 = kl_rho(d2)?;
        if !(total_mass(alpha) > 0.0 && total_mass(beta) > 0.0) {
            return Err(Error::ZeroMass);
        }
        let engine = Sinkhorn::new(alpha, beta, cost, d1, d2, eps)?;
        Ok(Self {
            engine,
            alpha,
            beta,
            eps,
            rho1,
            rho2,
        })
    }

    /// Ψ₁: `ḡ = argmax_ḡ H(f̄, ḡ)`.
    pub fn psi1(&self, f_bar: &[f64]) -> Result<Vec<f64>> {
        let s = self.engine.smin_alpha(f_bar);
        if self.rho1 == self.rho2 {
            return Ok(self.equal_rho_update(&s, f_bar, self.alpha, self.beta));
        }
        // ḡ = −aprox₂(−S_α(f̄) + λ) + λ with λ = λ⋆(f̄, ḡ).
        let d2 = Entropy::Kl { rho: self.rho2 };
        let la = log_mass_exp(f_bar, self.alpha, self.rho1);
        damped_fixed_point(&s, |g| {
            let lam = self.translation_from_logs(la, log_mass_exp(g, self.beta, self.rho2));
            s.iter().map(|&x| -d2.aprox(self.eps, -x + lam) + lam).collect()
        })
    }

    /// Ψ₂: `f̄ = argmax_f̄ H(f̄, ḡ)`.
    pub fn psi2(&self, g_bar: &[f64]) -> Result<Vec<f64>> {
        let s = self.engine.smin_beta(g_bar);
        if self.rho1 == self.rho2 {
            return Ok(self.equal_rho_update(&s, g_bar, self.beta, self.alpha));
        }
        // f̄ = −aprox₁(−S_β(ḡ) − λ) − λ with λ = λ⋆(f̄, ḡ).
        let d1 = Entropy::Kl { rho: self.rho1 };
        let lb = log_mass_exp(g_bar, self.beta, self.rho2);
        damped_fixed_point(&s, |f| {
            let lam = self.translation_from_logs(log_mass_exp(f, self.alpha, self.rho1), lb);
            s.iter().map(|&x| -d1.aprox(self.eps, -x - lam) - lam).collect()
        })
    }

    fn translation_from_logs(&self, la: f64, lb: f64) -> f64 {
        self.rho1 * self.rho2 / (self.rho1 + self.rho2) * (la - lb)
    }

    /// Closed-form block update for `ρ₁ = ρ₂ = ρ`, `ξ = ε/(ε + 2ρ)`:
    /// `ĥ = ρ/(ρ+ε)·S(p) − ½·ε/(ρ+ε)·Smin^ρ(p)`, output `ĥ + ξ·Smin^ρ(ĥ)`.
    fn equal_rho_update(&self, s: &[f64], p: &[f64], w_p: &[f64], w_out: &[f64]) -> Vec<f64> {
        let (rho, eps) = (self.rho1, self.eps);
        let xi = eps / (eps + 2.0 * rho);
        let shift = 0.5 * eps / (rho + eps) * softmin(rho, w_p, p);
        let h: Vec<f64> = s.iter().map(|&x| rho / (rho + eps) * x - shift).collect();
        let corr = xi * softmin(rho, w_out, &h);
        h.into_iter().map(|x| x + corr).collect()
    }

    /// Φ: `(f̄ + λ⋆, ḡ − λ⋆)`.
    pub fn translate(&self, p: &TiPotentials) -> DualPotentials {
        let lam = translation(&p.f_bar, &p.g_bar, self.alpha, self.beta, self.rho1, self.rho2);
        DualPotentials {
            f: p.f_bar.iter().map(|x| x + lam).collect(),
            g: p.g_bar.iter().map(|x| x - lam).collect(),
        }
    }
}

/// `ψ ← ½ψ + ½T(ψ)` from `ψ₀ = T₀` until the sup-norm step is below
/// `INNER_TOL`. For KL marginals `T` moves only along constants, with slope
/// `τ(1 − ρ/(ρ+ε)) < 1`, so the damped map contracts.
fn damped_fixed_point(start: &[f64], t: impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
    let mut psi = t(start);
    let mut last = f64::INFINITY;
    for _ in 0..INNER_MAX_ITERS {
        let next: Vec<f64> = psi.iter().zip(t(&psi)).map(|(a, b)| 0.5 * (a + b)).collect();
        last = sup_diff(&next, &psi);
        psi = next;
        if last < INNER_TOL {
            return Ok(psi);
        }
    }
    Err(Error::NotConverged {
        what: "translation-invariant inner fixed point",
        iterations: INNER_MAX_ITERS,
        residual: last,
    })
}

fn kl_rho(d: &Divergence) -> Result<f64> {
    match (d.entropy(), d.rho_atoms()) {
        (Entropy::Kl { rho }, None) => Ok(rho),
        _ => Err(Error::InvalidParameter(
            "translation-invariant Sinkhorn needs KL marginals with a scalar rho".into(),
        )),
    }
}

/// One invariant half-update pair starting from `f̄`: returns `(f̄, Ψ₁(f̄))`.
pub fn ti_update(state: &TiSinkhorn<'_>, f_bar: &[f64]) -> Result<TiPotentials> {
    Ok(TiPotentials {
        f_bar: f_bar.to_vec(),
        g_bar: state.psi1(f_bar)?,
    })
}

/// TI-Sinkhorn: iterate `f̄ ← Ψ₂(Ψ₁(f̄))` until the Hilbert seminorm of the
/// update drops below `tol`, then translate by `λ⋆`.
pub fn ti_sinkhorn_solve(
    alpha: &[f64],
    beta: &[f64],
    cost: ArrayView2<'_, f64>,
    d1: &Divergence,
    d2: &Divergence,
    opts: &SolveOptions,
) -> Result<(DualPotentials, SolveReport)> {
    opts.validate()?;
    let eps = opts.epsilon;
    let state = TiSinkhorn::new(alpha, beta, cost, eps, d1, d2)?;
    let mut f_bar = match &opts.init_g {
        Some(g0) if g0.len() != beta.len() => return Err(Error::LengthMismatch(g0.len(), beta.len())),
        Some(g0) => state.psi2(g0)?,
        None => vec![0.0; alpha.len()],
    };
    let mut g_bar = state.psi1(&f_bar)?;
    let mut history = opts.record_history.then(Vec::new);
    let mut last = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iters {
        let f_new = state.psi2(&g_bar)?;
        last = masked_hilbert(&f_new, &f_bar, alpha);
        f_bar = f_new;
        g_bar = state.psi1(&f_bar)?;
        it += 1;
        if let Some(h) = history.as_mut() {
            h.push(last);
        }
        if last < opts.tol {
            break;
        }
    }
    let converged = last < opts.tol;
    let mut pot = state.translate(&TiPotentials { f_bar, g_bar });
    for (x, &w) in pot.f.iter_mut().zip(alpha) {
        if w <= 0.0 {
            *x = 0.0;
        }
    }
    for (x, &w) in pot.g.iter_mut().zip(beta) {
        if w <= 0.0 {
            *x = 0.0;
        }
    }
    let plan = plan_from_potentials(&pot.f, &pot.g, cost, eps, alpha, beta);
    let primal = primal_value(&plan, cost, eps, alpha, beta, d1, d2)?;
    let dual = dual_value(&pot.f, &pot.g, cost, eps, alpha, beta, d1, d2);
    let mut report = SolveReport::new(it, last, primal, dual, converged);
    report.history = history;
    Ok((pot, report))
}

fn masked_hilbert(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .zip(w)
        .filter(|(_, &wk)| wk > 0.0)
        .map(|((&p, &q), _)| (p, q))
        .unzip();
    hilbert_diff(&x, &y)
}
