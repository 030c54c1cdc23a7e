//! Debiased Sinkhorn divergence and its gradients.
//!
//! `S_ε(α, β) = OT_ε(α, β) − ½OT_ε(α, α) − ½OT_ε(β, β) + (ε/2)(m(α) − m(β))²`.
//!
//! Positivity holds when `e^{−C/ε}` is a positive universal kernel, e.g. for
//! `‖x − y‖^p` with `1 ≤ p ≤ 2`. For the WFR cost it only holds locally,
//! below the cutoff; kernel positivity of user costs is not checked.

use ndarray::{Array2, ArrayView2};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::measure::{measure_cost, total_mass, CostKind, DiscreteMeasure};
use crate::numeric::sup_diff;
use crate::sinkhorn::{dual_value, sinkhorn_solve, DualPotentials, Sinkhorn, SolveOptions};

/// Converged symmetric potential of a self-transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPotential {
    pub f: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `f = −aprox(−S_α(f))` by the averaged map `f ← ½(f + T(f))`.
///
/// Stops when the sup-norm residual over atoms of positive weight drops below
/// `opts.tol`; fails with [`Error::NotConverged`] after `opts.max_iters`.
pub fn symmetric_potential(
    alpha: &[f64],
    c_aa: ArrayView2<'_, f64>,
    desc: &Divergence,
    opts: &SolveOptions,
) -> Result<SymmetricPotential> {
    symmetric_potential_from(alpha, c_aa, desc, opts, None)
}

/// [`symmetric_potential`] started from `init` instead of zero.
pub fn symmetric_potential_from(
    alpha: &[f64],
    c_aa: ArrayView2<'_, f64>,
    desc: &Divergence,
    opts: &SolveOptions,
    init: Option<&[f64]>,
) -> Result<SymmetricPotential> {
    opts.validate()?;
    let (n, m) = c_aa.dim();
    if n != m {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            got: (n, m),
        });
    }
    let engine = Sinkhorn::with_mode(alpha, alpha, c_aa, desc, desc, opts.epsilon, opts.mode, opts.parallel)?;
    let mut f = match init {
        Some(f0) if f0.len() != n => return Err(Error::LengthMismatch(f0.len(), n)),
        Some(f0) => f0.to_vec(),
        None => vec![0.0; n],
    };
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let t = engine.update_g(&f);
        residual = masked_residual(&f, &t, alpha);
        if residual < opts.tol {
            mask(&mut f, alpha);
            return Ok(SymmetricPotential {
                f,
                iterations: it,
                residual,
            });
        }
        for (x, y) in f.iter_mut().zip(&t) {
            *x = 0.5 * (*x + y);
        }
    }
    Err(Error::NotConverged {
        what: "symmetric potential",
        iterations: opts.max_iters,
        residual,
    })
}

fn masked_residual(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let pa: Vec<f64> = a.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(x, _)| *x).collect();
    let pb: Vec<f64> = b.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(x, _)| *x).collect();
    sup_diff(&pa, &pb)
}

fn mask(p: &mut [f64], w: &[f64]) {
    for (x, &wk) in p.iter_mut().zip(w) {
        if wk <= 0.0 {
            *x = 0.0;
        }
    }
}

/// `OT_ε(α, α) = D_ε(f, f)` at the symmetric potential.
pub fn self_transport(
    alpha: &[f64],
    c_aa: ArrayView2<'_, f64>,
    desc: &Divergence,
    opts: &SolveOptions,
) -> Result<(f64, SymmetricPotential)> {
    self_transport_from(alpha, c_aa, desc, opts, None)
}

fn self_transport_from(
    alpha: &[f64],
    c_aa: ArrayView2<'_, f64>,
    desc: &Divergence,
    opts: &SolveOptions,
    init: Option<&[f64]>,
) -> Result<(f64, SymmetricPotential)> {
    let pot = symmetric_potential_from(alpha, c_aa, desc, opts, init)?;
    let value = dual_value(&pot.f, &pot.f, c_aa, opts.epsilon, alpha, alpha, desc, desc);
    Ok((value, pot))
}

/// All terms of one divergence evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTerms {
    pub value: f64,
    pub cross: f64,
    pub self_alpha: f64,
    pub self_beta: f64,
    pub mass_term: f64,
    pub cross_potentials: DualPotentials,
    pub f_alpha: SymmetricPotential,
    pub g_beta: SymmetricPotential,
    pub cross_iterations: usize,
}

/// Cross problem `OT_ε^{(φ₁,φ₂)}(α, β)` as a dual value, failing when the
/// solve does not converge.
fn cross_transport(
    alpha: &[f64],
    beta: &[f64],
    c_ab: ArrayView2<'_, f64>,
    d1: &Divergence,
    d2: &Divergence,
    opts: &SolveOptions,
) -> Result<(f64, DualPotentials, usize)> {
    let (pot, report) = sinkhorn_solve(alpha, beta, c_ab, d1, d2, opts)?;
    if !report.converged {
        return Err(Error::NotConverged {
            what: "Sinkhorn",
            iterations: report.iterations,
            residual: report.last_update_sup_norm,
        });
    }
    Ok((report.dual, pot, report.iterations))
}

/// Debiased divergence with possibly different penalties on each side.
///
/// With `d1 = d2` this is the symmetric Sinkhorn divergence. The self terms
/// carry a factor ½ in both cases so that `S(α, α) = 0`.
#[allow(clippy::too_many_arguments)]
pub fn divergence_terms(
    alpha: &[f64],
    beta: &[f64],
    c_ab: ArrayView2<'_, f64>,
    c_aa: ArrayView2<'_, f64>,
    c_bb: ArrayView2<'_, f64>,
    d1: &Divergence,
    d2: &Divergence,
    opts: &SolveOptions,
) -> Result<DivergenceTerms> {
    divergence_terms_warm(alpha, beta, c_ab, c_aa, c_bb, d1, d2, opts, &WarmStart::default())
}

/// [`divergence_terms`] with warm-started sub-solves. The cross solve uses
/// `warm.cross_g` in place of `opts.init_g`.
#[allow(clippy::too_many_arguments)]
pub fn divergence_terms_warm(
    alpha: &[f64],
    beta: &[f64],
    c_ab: ArrayView2<'_, f64>,
    c_aa: ArrayView2<'_, f64>,
    c_bb: ArrayView2<'_, f64>,
    d1: &Divergence,
    d2: &Divergence,
    opts: &SolveOptions,
    warm: &WarmStart,
) -> Result<DivergenceTerms> {
    let cross_opts = SolveOptions {
        init_g: warm.cross_g.clone().or_else(|| opts.init_g.clone()),
        ..opts.clone()
    };
    let run_cross = || cross_transport(alpha, beta, c_ab, d1, d2, &cross_opts);
    let run_selves = || {
        let a = self_transport_from(alpha, c_aa, d1, opts, warm.self_alpha.as_deref());
        let b = self_transport_from(beta, c_bb, d2, opts, warm.self_beta.as_deref());
        (a, b)
    };
    let (cross, (sa, sb)) = if opts.parallel {
        rayon::join(run_cross, run_selves)
    } else {
        (run_cross(), run_selves())
    };
    let (cross, cross_potentials, cross_iterations) = cross?;
    let (self_alpha, f_alpha) = sa?;
    let (self_beta, g_beta) = sb?;
    let dm = total_mass(alpha) - total_mass(beta);
    let mass_term = 0.5 * opts.epsilon * dm * dm;
    Ok(DivergenceTerms {
        value: cross - 0.5 * self_alpha - 0.5 * self_beta + mass_term,
        cross,
        self_alpha,
        self_beta,
        mass_term,
        cross_potentials,
        f_alpha,
        g_beta,
        cross_iterations,
    })
}

/// Symmetric Sinkhorn divergence `S_ε(α, β)` from precomputed costs.
#[allow(clippy::too_many_arguments)]
pub fn sinkhorn_divergence(
    alpha: &[f64],
    beta: &[f64],
    c_ab: ArrayView2<'_, f64>,
    c_aa: ArrayView2<'_, f64>,
    c_bb: ArrayView2<'_, f64>,
    desc: &Divergence,
    opts: &SolveOptions,
) -> Result<f64> {
    divergence_terms(alpha, beta, c_ab, c_aa, c_bb, desc, desc, opts).map(|t| t.value)
}

/// Asymmetric divergence with penalty `d1` on `α` and `d2` on `β`.
#[allow(clippy::too_many_arguments)]
pub fn asymmetric_divergence(
    alpha: &[f64],
    beta: &[f64],
    c_ab: ArrayView2<'_, f64>,
    c_aa: ArrayView2<'_, f64>,
    c_bb: ArrayView2<'_, f64>,
    d1: &Divergence,
    d2: &Divergence,
    opts: &SolveOptions,
) -> Result<f64> {
    divergence_terms(alpha, beta, c_ab, c_aa, c_bb, d1, d2, opts).map(|t| t.value)
}

/// Symmetric divergence between two point-cloud measures.
pub fn measure_divergence(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    kind: CostKind,
    desc: &Divergence,
    opts: &SolveOptions,
) -> Result<DivergenceTerms> {
    let c_ab = measure_cost(alpha, beta, kind)?;
    let c_aa = measure_cost(alpha, alpha, kind)?;
    let c_bb = measure_cost(beta, beta, kind)?;
    divergence_terms(
        alpha.weights(),
        beta.weights(),
        c_ab.view(),
        c_aa.view(),
        c_bb.view(),
        desc,
        desc,
        opts,
    )
}

/// A loss value with its gradients in the atoms and weights of the moving measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub value: f64,
    /// `N × D`, row `i` is the gradient in `x_i`.
    pub positions: Array2<f64>,
    /// Derivatives in the weights `α_i`.
    pub weights: Vec<f64>,
}

/// Potentials used to warm-start the sub-solves of a divergence evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub cross_g: Option<Vec<f64>>,
    pub self_alpha: Option<Vec<f64>>,
    pub self_beta: Option<Vec<f64>>,
}

impl WarmStart {
    /// Warm start from the converged potentials of a previous evaluation.
    pub fn from_terms(t: &DivergenceTerms) -> Self {
        Self {
            cross_g: Some(t.cross_potentials.g.clone()),
            self_alpha: Some(t.f_alpha.f.clone()),
            self_beta: Some(t.g_beta.f.clone()),
        }
    }
}

/// `Σ_j π_ij ∇_x C(x_i, y_j)` and `∂D/∂α_i = −φ*(−f_i) − εΣ_j β_j(E_ij − 1)`
/// for the dual `D(f, g)` at fixed potentials.
#[allow(clippy::too_many_arguments)]
fn envelope(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    cost: ArrayView2<'_, f64>,
    f: &[f64],
    g: &[f64],
    eps: f64,
    kind: CostKind,
    desc: &Divergence,
) -> (Array2<f64>, Vec<f64>) {
    let (n, dim) = (alpha.len(), alpha.dim());
    let (a, b) = (alpha.weights(), beta.weights());
    let xs = alpha.points();
    let ys: Vec<Vec<f64>> = beta.points().rows().into_iter().map(|r| r.to_vec()).collect();
    let mut positions = Array2::zeros((n, dim));
    let mut weights = vec![0.0; n];
    let mut buf = vec![0.0; dim];
    for i in 0..n {
        let xi = xs.row(i).to_vec();
        let mut lin = 0.0;
        for j in 0..beta.len() {
            if b[j] <= 0.0 {
                continue;
            }
            let c = cost[[i, j]];
            let e = if c.is_finite() { ((f[i] + g[j] - c) / eps).exp() } else { 0.0 };
            lin += b[j] * (e - 1.0);
            let pij = a[i] * b[j] * e;
            if pij > 0.0 {
                kind.grad_x(&xi, &ys[j], &mut buf);
                for k in 0..dim {
                    positions[[i, k]] += pij * buf[k];
                }
            }
        }
        weights[i] = -desc.at(i).phi_star(-f[i]) - eps * lin;
    }
    (positions, weights)
}

fn point_costs(kind: CostKind) -> Result<()> {
    if kind == CostKind::User {
        return Err(Error::InvalidParameter(
            "gradients need a cost defined on point coordinates".into(),
        ));
    }
    Ok(())
}

/// Gradients of the raw entropic cost `OT_ε(·, β)` in the atoms and weights
/// of `α`, by the envelope theorem at the converged potentials.
pub fn transport_gradients(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    kind: CostKind,
    desc: &Divergence,
    opts: &SolveOptions,
) -> Result<Gradients> {
    point_costs(kind)?;
    let c_ab = measure_cost(alpha, beta, kind)?;
    let (a, b) = (alpha.weights(), beta.weights());
    let (value, pot, _) = cross_transport(a, b, c_ab.view(), desc, desc, opts)?;
    let engine = Sinkhorn::with_mode(a, b, c_ab.view(), desc, desc, opts.epsilon, opts.mode, opts.parallel)?;
    let f = engine.update_f(&pot.g);
    let (positions, weights) = envelope(alpha, beta, c_ab.view(), &f, &pot.g, opts.epsilon, kind, desc);
    Ok(Gradients {
        value,
        positions,
        weights,
    })
}

/// Envelope-theorem gradients at the converged potentials of the three
/// sub-problems: potentials are held fixed and only the explicit dependence
/// of the dual on `(x_i, α_i)` is differentiated.
pub fn divergence_gradients(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    kind: CostKind,
    desc: &Divergence,
    opts: &SolveOptions,
) -> Result<Gradients> {
    divergence_gradients_warm(alpha, beta, kind, desc, opts, &WarmStart::default()).map(|(g, _)| g)
}

/// [`divergence_gradients`] with warm-started sub-solves; also returns the
/// terms so that the next call can be warm-started from them.
pub fn divergence_gradients_warm(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    kind: CostKind,
    desc: &Divergence,
    opts: &SolveOptions,
    warm: &WarmStart,
) -> Result<(Gradients, DivergenceTerms)> {
    point_costs(kind)?;
    let c_ab = measure_cost(alpha, beta, kind)?;
    let c_aa = measure_cost(alpha, alpha, kind)?;
    let c_bb = measure_cost(beta, beta, kind)?;
    let a = alpha.weights();
    let b = beta.weights();
    let terms = divergence_terms_warm(a, b, c_ab.view(), c_aa.view(), c_bb.view(), desc, desc, opts, warm)?;
    let eps = opts.epsilon;

    // Extend potentials to zero-weight atoms so weight derivatives are defined there.
    let cross = Sinkhorn::with_mode(a, b, c_ab.view(), desc, desc, eps, opts.mode, opts.parallel)?;
    let f = cross.update_f(&terms.cross_potentials.g);
    let own = Sinkhorn::with_mode(a, a, c_aa.view(), desc, desc, eps, opts.mode, opts.parallel)?;
    let fa = own.update_g(&terms.f_alpha.f);

    let (pc, wc) = envelope(alpha, beta, c_ab.view(), &f, &terms.cross_potentials.g, eps, kind, desc);
    // The self term appears with weight ½ but depends on α twice.
    let (ps, ws) = envelope(alpha, alpha, c_aa.view(), &fa, &terms.f_alpha.f, eps, kind, desc);
    let dm = alpha.mass() - beta.mass();
    let weights = wc.iter().zip(&ws).map(|(c, s)| c - s + eps * dm).collect();
    Ok((
        Gradients {
            value: terms.value,
            positions: pc - ps,
            weights,
        },
        terms,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::Entropy;
    use crate::measure::cost_matrix;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kl(rho: f64) -> Divergence {
        Divergence::new(Entropy::Kl { rho }).unwrap()
    }

    fn tight(eps: f64) -> SolveOptions {
        SolveOptions::with_epsilon(eps).tol(1e-11).max_iters(100_000)
    }

    fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
        let pts = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
        let w = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        DiscreteMeasure::new(pts, w).unwrap()
    }

    #[test]
    fn single_balanced_atom_has_zero_potential() {
        let c = array![[0.0]];
        let d = Divergence::new(Entropy::Balanced).unwrap();
        for eps in [0.01, 1.0, 10.0] {
            let p = symmetric_potential(&[1.0], c.view(), &d, &tight(eps)).unwrap();
            assert!(p.f[0].abs() < 1e-12);
        }
    }

    #[test]
    fn single_kl_atom_closed_form() {
        // S_α(f) = −f − ε ln w, so f = −k(f + ε ln w) with k = ρ/(ρ+ε).
        let c = array![[0.0]];
        let (eps, rho, w) = (1.0, 1.0, 2.0f64);
        let p = symmetric_potential(&[w], c.view(), &kl(rho), &tight(eps)).unwrap();
        let k = rho / (rho + eps);
        let expected = -k * eps * w.ln() / (1.0 + k);
        assert!((p.f[0] - expected).abs() < 1e-10, "{} vs {expected}", p.f[0]);
        assert!((expected + std::f64::consts::LN_2 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn residual_meets_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_measure(&mut rng, 7);
        let c = cost_matrix(a.points(), a.points(), CostKind::SqEuclidean).unwrap();
        let d = kl(0.5);
        let opts = SolveOptions::with_epsilon(0.05).tol(1e-10);
        let p = symmetric_potential(a.weights(), c.view(), &d, &opts).unwrap();
        let engine = Sinkhorn::new(a.weights(), a.weights(), c.view(), &d, &d, 0.05).unwrap();
        let t = engine.update_g(&p.f);
        assert!(sup_diff(&p.f, &t) < 1e-9);
    }

    #[test]
    fn symmetric_potential_maximizes_the_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_measure(&mut rng, 5);
        let c = cost_matrix(a.points(), a.points(), CostKind::SqEuclidean).unwrap();
        let d = kl(1.0);
        let opts = tight(0.1);
        let (value, _) = self_transport(a.weights(), c.view(), &d, &opts).unwrap();
        let (_, report) = sinkhorn_solve(a.weights(), a.weights(), c.view(), &d, &d, &opts).unwrap();
        assert!((value - report.dual).abs() < 1e-10);
        assert!((value - report.primal).abs() < 1e-8);
    }

    #[test]
    fn non_convergence_is_an_error() {
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        let opts = SolveOptions::with_epsilon(0.01).tol(1e-14).max_iters(2);
        let err = symmetric_potential(&[0.5, 0.5], c.view(), &kl(1.0), &opts).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }));
    }

    #[test]
    fn divergence_of_a_measure_with_itself_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for eps in [0.01, 0.1, 1.0] {
            let a = random_measure(&mut rng, 8);
            let t = measure_divergence(&a, &a, CostKind::SqEuclidean, &kl(1.0), &tight(eps)).unwrap();
            assert!(t.value.abs() < 1e-9, "eps {eps}: {}", t.value);
        }
    }

    #[test]
    fn positive_and_symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = kl(1.0);
        let opts = tight(0.1);
        for _ in 0..100 {
            let n = rng.random_range(1..8);
            let m = rng.random_range(1..8);
            let a = random_measure(&mut rng, n);
            let b = random_measure(&mut rng, m);
            let ab = measure_divergence(&a, &b, CostKind::SqEuclidean, &d, &opts).unwrap();
            let ba = measure_divergence(&b, &a, CostKind::SqEuclidean, &d, &opts).unwrap();
            assert!(ab.value >= -1e-8, "{}", ab.value);
            assert!((ab.value - ba.value).abs() < 1e-9);
        }
    }

    #[test]
    fn balanced_equal_masses_have_no_mass_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DiscreteMeasure::uniform(Array2::from_shape_fn((4, 2), |_| rng.random()), 1.0).unwrap();
        let b = DiscreteMeasure::uniform(Array2::from_shape_fn((6, 2), |_| rng.random()), 1.0).unwrap();
        let d = Divergence::new(Entropy::Balanced).unwrap();
        let t = measure_divergence(&a, &b, CostKind::SqEuclidean, &d, &tight(0.1)).unwrap();
        assert!(t.mass_term.abs() < 1e-20);
        assert!(t.value > 0.0);
    }

    #[test]
    fn kernel_norm_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = kl(1.0);
        for eps in [0.05, 0.3, 1.0] {
            let opts = tight(eps);
            for _ in 0..20 {
                let a = random_measure(&mut rng, 5);
                let b = random_measure(&mut rng, 6);
                let t = measure_divergence(&a, &b, CostKind::SqEuclidean, &d, &opts).unwrap();
                let u: Vec<f64> = a.weights().iter().zip(&t.f_alpha.f).map(|(w, f)| w * (f / eps).exp()).collect();
                let v: Vec<f64> = b.weights().iter().zip(&t.g_beta.f).map(|(w, g)| w * (g / eps).exp()).collect();
                let quad = |x: &DiscreteMeasure, y: &DiscreteMeasure, p: &[f64], q: &[f64]| {
                    let c = measure_cost(x, y, CostKind::SqEuclidean).unwrap();
                    let mut s = 0.0;
                    for i in 0..p.len() {
                        for j in 0..q.len() {
                            s += p[i] * q[j] * (-c.view()[[i, j]] / eps).exp();
                        }
                    }
                    s
                };
                let norm = quad(&a, &a, &u, &u) + quad(&b, &b, &v, &v) - 2.0 * quad(&a, &b, &u, &v);
                assert!(t.value >= 0.5 * eps * norm - 1e-9, "{} < {}", t.value, 0.5 * eps * norm);
            }
        }
    }

    #[test]
    fn self_terms_need_no_more_iterations_than_the_cross_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = kl(1.0);
        let opts = SolveOptions::with_epsilon(0.05).tol(1e-8);
        for _ in 0..10 {
            let a = random_measure(&mut rng, 10);
            let b = random_measure(&mut rng, 10);
            let t = measure_divergence(&a, &b, CostKind::SqEuclidean, &d, &opts).unwrap();
            assert!(t.f_alpha.iterations <= t.cross_iterations);
            assert!(t.g_beta.iterations <= t.cross_iterations);
        }
    }

    fn asym(a: &DiscreteMeasure, b: &DiscreteMeasure, d1: &Divergence, d2: &Divergence, opts: &SolveOptions) -> f64 {
        let c_ab = measure_cost(a, b, CostKind::SqEuclidean).unwrap();
        let c_aa = measure_cost(a, a, CostKind::SqEuclidean).unwrap();
        let c_bb = measure_cost(b, b, CostKind::SqEuclidean).unwrap();
        asymmetric_divergence(a.weights(), b.weights(), c_ab.view(), c_aa.view(), c_bb.view(), d1, d2, opts)
            .unwrap()
    }

    #[test]
    fn asymmetric_divergence_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let opts = tight(0.1);
        let a = random_measure(&mut rng, 5);
        let same = asym(&a, &a, &kl(1.0), &kl(1.0), &opts);
        assert!(same.abs() < 1e-9);

        let (d1, d2) = (kl(0.3), kl(3.0));
        let mut witnessed = false;
        for _ in 0..30 {
            let a = random_measure(&mut rng, 5);
            let b = random_measure(&mut rng, 4);
            let v = asym(&a, &b, &d1, &d2, &opts);
            assert!(v >= -1e-8, "{v}");
            let w = asym(&b, &a, &d1, &d2, &opts);
            assert!(w >= -1e-8, "{w}");
            witnessed |= (v - w).abs() > 1e-6;
        }
        assert!(witnessed);
    }

    #[test]
    fn gradients_vanish_at_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_measure(&mut rng, 6);
        let g = divergence_gradients(&a, &a, CostKind::SqEuclidean, &kl(1.0), &tight(0.1)).unwrap();
        assert!(g.positions.iter().all(|v| v.abs() < 1e-7), "{:?}", g.positions);
        assert!(g.weights.iter().all(|v| v.abs() < 1e-7), "{:?}", g.weights);
    }

    fn value(a: &DiscreteMeasure, b: &DiscreteMeasure, d: &Divergence, opts: &SolveOptions) -> f64 {
        measure_divergence(a, b, CostKind::SqEuclidean, d, opts).unwrap().value
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = 1e-5;
        for (desc, eps) in [(kl(1.0), 0.1), (kl(0.2), 0.05), (Divergence::new(Entropy::Tv { rho: 1.0 }).unwrap(), 0.2)] {
            let opts = SolveOptions::with_epsilon(eps).tol(1e-13).max_iters(200_000);
            let a = random_measure(&mut rng, 6);
            let b = random_measure(&mut rng, 6);
            let g = divergence_gradients(&a, &b, CostKind::SqEuclidean, &desc, &opts).unwrap();
            let (pts, w) = (a.points().to_owned(), a.weights().to_vec());
            for i in 0..6 {
                for k in 0..2 {
                    let mut p = pts.clone();
                    p[[i, k]] += h;
                    let up = value(&DiscreteMeasure::new(p.clone(), w.clone()).unwrap(), &b, &desc, &opts);
                    p[[i, k]] -= 2.0 * h;
                    let dn = value(&DiscreteMeasure::new(p, w.clone()).unwrap(), &b, &desc, &opts);
                    let fd = (up - dn) / (2.0 * h);
                    let an = g.positions[[i, k]];
                    assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-2), "x[{i},{k}]: {fd} vs {an}");
                }
                let mut wp = w.clone();
                wp[i] += h;
                let up = value(&DiscreteMeasure::new(pts.clone(), wp.clone()).unwrap(), &b, &desc, &opts);
                wp[i] -= 2.0 * h;
                let dn = value(&DiscreteMeasure::new(pts.clone(), wp).unwrap(), &b, &desc, &opts);
                let fd = (up - dn) / (2.0 * h);
                let an = g.weights[i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-2), "w[{i}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn mass_term_gradient() {
        // The explicit mass term contributes ε(m(α) − m(β)) to each weight
        // derivative; the assembled derivative must match finite differences.
        let eps = 0.3;
        let (ma, mb) = (1.7, 0.4);
        let a = [ma];
        let b = [mb];
        let c = array![[0.0]];
        let d = kl(1.0);
        let opts = tight(eps);
        let t = divergence_terms(&a, &b, c.view(), c.view(), c.view(), &d, &d, &opts).unwrap();
        assert!((t.mass_term - 0.5 * eps * (ma - mb) * (ma - mb)).abs() < 1e-15);
        let h = 1e-6;
        let mt = |m: f64| 0.5 * eps * (m - mb) * (m - mb);
        let fd = (mt(ma + h) - mt(ma - h)) / (2.0 * h);
        assert!((fd - eps * (ma - mb)).abs() < 1e-8);
        let pa = DiscreteMeasure::on_line(&[0.0], vec![ma]).unwrap();
        let pb = DiscreteMeasure::on_line(&[0.0], vec![mb]).unwrap();
        let g = divergence_gradients(&pa, &pb, CostKind::SqEuclidean, &d, &opts).unwrap();
        let total_fd = {
            let up = value(&pa.with_weights(vec![ma + 1e-5]).unwrap(), &pb, &d, &opts);
            let dn = value(&pa.with_weights(vec![ma - 1e-5]).unwrap(), &pb, &d, &opts);
            (up - dn) / 2e-5
        };
        assert!((g.weights[0] - total_fd).abs() < 1e-6);
    }

    #[test]
    fn transport_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let opts = SolveOptions::with_epsilon(0.1).tol(1e-13).max_iters(200_000);
        let d = kl(0.5);
        let a = random_measure(&mut rng, 5);
        let b = random_measure(&mut rng, 4);
        let g = transport_gradients(&a, &b, CostKind::SqEuclidean, &d, &opts).unwrap();
        let ot = |m: &DiscreteMeasure| {
            let c = measure_cost(m, &b, CostKind::SqEuclidean).unwrap();
            sinkhorn_solve(m.weights(), b.weights(), c.view(), &d, &d, &opts).unwrap().1.dual
        };
        let h = 1e-5;
        let (pts, w) = (a.points().to_owned(), a.weights().to_vec());
        for i in 0..5 {
            for k in 0..2 {
                let mut p = pts.clone();
                p[[i, k]] += h;
                let up = ot(&DiscreteMeasure::new(p.clone(), w.clone()).unwrap());
                p[[i, k]] -= 2.0 * h;
                let dn = ot(&DiscreteMeasure::new(p, w.clone()).unwrap());
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g.positions[[i, k]]).abs() <= 1e-4 * g.positions[[i, k]].abs().max(1e-2));
            }
            let mut wp = w.clone();
            wp[i] += h;
            let up = ot(&a.with_weights(wp.clone()).unwrap());
            wp[i] -= 2.0 * h;
            let dn = ot(&a.with_weights(wp).unwrap());
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g.weights[i]).abs() <= 1e-4 * g.weights[i].abs().max(1e-2));
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = kl(1.0);
        let opts = tight(0.05);
        let a = random_measure(&mut rng, 6);
        let b = random_measure(&mut rng, 5);
        let (cold, terms) = divergence_gradients_warm(&a, &b, CostKind::SqEuclidean, &d, &opts, &WarmStart::default()).unwrap();
        let shifted = DiscreteMeasure::new(a.points().mapv(|v| v + 1e-3), a.weights().to_vec()).unwrap();
        let (warm, _) =
            divergence_gradients_warm(&shifted, &b, CostKind::SqEuclidean, &d, &opts, &WarmStart::from_terms(&terms)).unwrap();
        let fresh = divergence_gradients(&shifted, &b, CostKind::SqEuclidean, &d, &opts).unwrap();
        assert!((warm.value - fresh.value).abs() < 1e-10);
        assert!(warm.positions.iter().zip(fresh.positions.iter()).all(|(x, y)| (x - y).abs() < 1e-8));
        assert!(cold.value > 0.0);
    }

    #[test]
    fn user_costs_have_no_gradient() {
        let a = DiscreteMeasure::on_line(&[0.0], vec![1.0]).unwrap();
        assert!(divergence_gradients(&a, &a, CostKind::User, &kl(1.0), &tight(1.0)).is_err());
    }
}
