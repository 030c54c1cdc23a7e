//! Particle gradient flows over positions and masses.
//!
//! A system `θ = (x_i, r_i)` induces the measure `α_θ = Σ r_i² δ_{x_i}`.
//! Each step moves positions by gradient descent and masses by the mirror
//! update `r ← r·exp(−2η_r ∇_r L)`, which keeps them nonnegative.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{Divergence, Entropy};
use crate::error::{Error, Result};
use crate::measure::{CostKind, DiscreteMeasure};
use crate::mmd::{mmd_gradients, KernelSpec};
use crate::sinkdiv::{divergence_gradients_warm, transport_gradients, Gradients, WarmStart};
use crate::sinkhorn::SolveOptions;
use crate::ugw::{gw_inf_gradients, MetricMeasureSpace};

/// Particles with positions `x_i` and root masses `r_i ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    positions: Array2<f64>,
    root_masses: Vec<f64>,
}

impl ParticleSystem {
    pub fn new(positions: Array2<f64>, root_masses: Vec<f64>) -> Result<Self> {
        if positions.nrows() != root_masses.len() {
            return Err(Error::LengthMismatch(positions.nrows(), root_masses.len()));
        }
        if root_masses.is_empty() {
            return Err(Error::Empty);
        }
        for (idx, &value) in root_masses.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { idx, value });
            }
            if value < 0.0 {
                return Err(Error::NegativeWeight { idx, value });
            }
        }
        if let Some((idx, &value)) = positions.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { idx, value });
        }
        Ok(Self {
            positions,
            root_masses,
        })
    }

    /// Particles on the atoms of `m` with `r_i = √w_i`.
    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        Self {
            positions: m.points().to_owned(),
            root_masses: m.weights().iter().map(|w| w.sqrt()).collect(),
        }
    }

    /// `n` particles drawn uniformly in `[0, 1]^dim` with total mass `mass`.
    pub fn random_uniform(n: usize, dim: usize, mass: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = Array2::from_shape_fn((n, dim), |_| rng.random::<f64>());
        Self::new(positions, vec![(mass / n as f64).sqrt(); n])
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn root_masses(&self) -> &[f64] {
        &self.root_masses
    }

    pub fn len(&self) -> usize {
        self.root_masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root_masses.is_empty()
    }

    /// `α_θ = Σ r_i² δ_{x_i}`.
    pub fn measure(&self) -> DiscreteMeasure {
        let w = self.root_masses.iter().map(|r| r * r).collect();
        DiscreteMeasure::new(self.positions.clone(), w).expect("valid particle system")
    }
}

/// Loss minimized by the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum FlowLoss {
    /// Raw entropic transport cost `OT_ε`.
    OtEps,
    /// Debiased Sinkhorn divergence `S_ε`.
    Sinkdiv,
    Mmd { kernel: KernelSpec },
    GwInf { p: f64 },
    SgwInf { p: f64 },
}

/// One target measure with its barycentric weight `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTarget {
    pub measure: DiscreteMeasure,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub loss: FlowLoss,
    pub eps: f64,
    pub entropy: Entropy,
    pub cost: CostKind,
    pub eta_x: f64,
    pub eta_r: f64,
    pub iterations: usize,
    pub snapshot_stride: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iters: usize,
    /// Halve both rates and retry when a step increases the loss.
    pub safeguard: bool,
    pub max_halvings: usize,
    pub seed: u64,
    #[serde(skip)]
    pub targets: Vec<FlowTarget>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            loss: FlowLoss::Sinkdiv,
            eps: 0.01,
            entropy: Entropy::Kl { rho: 1.0 },
            cost: CostKind::SqEuclidean,
            eta_x: 1.0,
            eta_r: 0.1,
            iterations: 100,
            snapshot_stride: 10,
            sinkhorn_tol: 1e-9,
            sinkhorn_max_iters: 100_000,
            safeguard: true,
            max_halvings: 10,
            seed: 0,
            targets: Vec::new(),
        }
    }
}

impl FlowConfig {
    pub fn with_target(mut self, measure: DiscreteMeasure) -> Self {
        self.targets = vec![FlowTarget { measure, weight: 1.0 }];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_x >= 0.0 && self.eta_r >= 0.0) {
            return Err(Error::InvalidParameter("learning rates must be nonnegative".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("flow needs at least one target".into()));
        }
        if self.targets.iter().any(|t| !(t.weight >= 0.0)) {
            return Err(Error::InvalidParameter("target weights must be nonnegative".into()));
        }
        if matches!(self.loss, FlowLoss::OtEps | FlowLoss::Sinkdiv) && !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        if let FlowLoss::Mmd { kernel } = self.loss {
            kernel.validate()?;
        }
        self.entropy.validate()
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions::with_epsilon(self.eps)
            .tol(self.sinkhorn_tol)
            .max_iters(self.sinkhorn_max_iters)
    }
}

/// Loss evaluator with per-target caches (warm starts, target geometry).
struct Evaluator<'a> {
    config: &'a FlowConfig,
    desc: Divergence,
    spaces: Vec<Option<MetricMeasureSpace>>,
}

/// Loss value and gradients in `(x, r)`.
#[derive(Debug, Clone)]
struct Evaluation {
    value: f64,
    grad_x: Array2<f64>,
    grad_r: Vec<f64>,
    warm: Vec<WarmStart>,
}

impl<'a> Evaluator<'a> {
    fn new(config: &'a FlowConfig) -> Result<Self> {
        config.validate()?;
        let spaces = config
            .targets
            .iter()
            .map(|t| match config.loss {
                FlowLoss::GwInf { .. } | FlowLoss::SgwInf { .. } => Some(MetricMeasureSpace::from_measure(&t.measure)),
                _ => None,
            })
            .collect();
        Ok(Self {
            config,
            desc: Divergence::new(config.entropy)?,
            spaces,
        })
    }

    fn evaluate(&self, system: &ParticleSystem, warm: &[WarmStart]) -> Result<Evaluation> {
        let alpha = system.measure();
        let cfg = self.config;
        let (n, dim) = (system.len(), alpha.dim());
        let mut value = 0.0;
        let mut grad_x = Array2::zeros((n, dim));
        let mut grad_w = vec![0.0; n];
        let mut next_warm = Vec::with_capacity(cfg.targets.len());
        for (k, target) in cfg.targets.iter().enumerate() {
            let w0 = warm.get(k).cloned().unwrap_or_default();
            let (g, w1): (Gradients, WarmStart) = match cfg.loss {
                FlowLoss::OtEps => {
                    let mut opts = cfg.solve_options();
                    opts.init_g = w0.cross_g.clone();
                    let g = transport_gradients(&alpha, &target.measure, cfg.cost, &self.desc, &opts)?;
                    (g, WarmStart::default())
                }
                FlowLoss::Sinkdiv => {
                    let (g, t) = divergence_gradients_warm(
                        &alpha,
                        &target.measure,
                        cfg.cost,
                        &self.desc,
                        &cfg.solve_options(),
                        &w0,
                    )?;
                    (g, WarmStart::from_terms(&t))
                }
                FlowLoss::Mmd { kernel } => (mmd_gradients(&alpha, &target.measure, kernel)?, WarmStart::default()),
                FlowLoss::GwInf { p } | FlowLoss::SgwInf { p } => {
                    let y = self.spaces[k].as_ref().expect("target space");
                    let debiased = matches!(cfg.loss, FlowLoss::SgwInf { .. });
                    (gw_inf_gradients(&alpha, y, p, debiased)?, WarmStart::default())
                }
            };
            value += target.weight * g.value;
            grad_x.scaled_add(target.weight, &g.positions);
            for (acc, v) in grad_w.iter_mut().zip(&g.weights) {
                *acc += target.weight * v;
            }
            next_warm.push(w1);
        }
        // α_i = r_i², so ∂L/∂r_i = 2 r_i ∂L/∂α_i.
        let grad_r = grad_w
            .iter()
            .zip(system.root_masses())
            .map(|(g, r)| 2.0 * r * g)
            .collect();
        Ok(Evaluation {
            value,
            grad_x,
            grad_r,
            warm: next_warm,
        })
    }
}

fn apply_step(system: &ParticleSystem, e: &Evaluation, eta_x: f64, eta_r: f64) -> ParticleSystem {
    let positions = &system.positions - &(&e.grad_x * eta_x);
    let root_masses = system
        .root_masses
        .iter()
        .zip(&e.grad_r)
        .map(|(r, g)| r * (-2.0 * eta_r * g).exp())
        .collect();
    ParticleSystem {
        positions,
        root_masses,
    }
}

/// Takes a step from `(system, current)`; returns the accepted state, its
/// evaluation and the number of halvings used.
fn safeguarded_step(
    ev: &Evaluator<'_>,
    system: &ParticleSystem,
    current: &Evaluation,
) -> Result<(ParticleSystem, Evaluation, usize)> {
    let cfg = ev.config;
    let (mut eta_x, mut eta_r) = (cfg.eta_x, cfg.eta_r);
    for halvings in 0..=cfg.max_halvings {
        let trial = apply_step(system, current, eta_x, eta_r);
        let e = ev.evaluate(&trial, &current.warm)?;
        if !cfg.safeguard || e.value <= current.value {
            return Ok((trial, e, halvings));
        }
        eta_x *= 0.5;
        eta_r *= 0.5;
    }
    Ok((system.clone(), current.clone(), cfg.max_halvings))
}

/// One synchronous update of every particle.
pub fn flow_step(system: &ParticleSystem, config: &FlowConfig) -> Result<ParticleSystem> {
    let ev = Evaluator::new(config)?;
    let current = ev.evaluate(system, &[])?;
    Ok(safeguarded_step(&ev, system, &current)?.0)
}

/// Evaluates the configured loss at `system`.
pub fn flow_loss(system: &ParticleSystem, config: &FlowConfig) -> Result<f64> {
    let ev = Evaluator::new(config)?;
    Ok(ev.evaluate(system, &[])?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub system: ParticleSystem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub trace: Vec<TracePoint>,
    /// Total number of rate halvings taken by the safeguard.
    pub halvings: usize,
}

impl Trajectory {
    pub fn final_system(&self) -> &ParticleSystem {
        &self.snapshots.last().expect("at least the initial snapshot").system
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().expect("at least the initial loss").loss
    }
}

/// Runs `config.iterations` steps, recording a snapshot and the loss every
/// `snapshot_stride` iterations and at the end.
pub fn run_flow(initial: &ParticleSystem, config: &FlowConfig) -> Result<Trajectory> {
    let ev = Evaluator::new(config)?;
    let stride = config.snapshot_stride.max(1);
    let mut system = initial.clone();
    let mut current = ev.evaluate(&system, &[])?;
    let mut snapshots = vec![Snapshot {
        iteration: 0,
        system: system.clone(),
    }];
    let mut trace = vec![TracePoint {
        iteration: 0,
        loss: current.value,
    }];
    let mut halvings = 0;
    for it in 1..=config.iterations {
        let (s, e, h) = safeguarded_step(&ev, &system, &current)?;
        system = s;
        current = e;
        halvings += h;
        if it % stride == 0 || it == config.iterations {
            snapshots.push(Snapshot {
                iteration: it,
                system: system.clone(),
            });
            trace.push(TracePoint {
                iteration: it,
                loss: current.value,
            });
        }
    }
    Ok(Trajectory {
        snapshots,
        trace,
        halvings,
    })
}

/// Minimizes `Σ_k ω_k L(α, β_k)` from `initial`; `ω` must sum to one.
pub fn barycenter_flow(
    initial: &ParticleSystem,
    targets: &[DiscreteMeasure],
    omegas: &[f64],
    config: &FlowConfig,
) -> Result<Trajectory> {
    if targets.len() != omegas.len() {
        return Err(Error::LengthMismatch(targets.len(), omegas.len()));
    }
    let total: f64 = omegas.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("barycenter weights must sum to 1, got {total}")));
    }
    let cfg = FlowConfig {
        targets: targets
            .iter()
            .zip(omegas)
            .map(|(m, &w)| FlowTarget {
                measure: m.clone(),
                weight: w,
            })
            .collect(),
        ..config.clone()
    };
    run_flow(initial, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dirac(x: f64, y: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(array![[x, y]], vec![1.0]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ParticleSystem::new(array![[0.0]], vec![-1.0]).is_err());
        assert!(ParticleSystem::new(array![[0.0]], vec![1.0, 1.0]).is_err());
        assert!(ParticleSystem::new(array![[f64::NAN]], vec![1.0]).is_err());
        let s = ParticleSystem::new(array![[0.0]], vec![1.0]).unwrap();
        assert!(flow_step(&s, &FlowConfig::default()).is_err());
    }

    #[test]
    fn zero_gradient_leaves_system_unchanged() {
        // A single atom on top of its target has an exactly vanishing MMD gradient.
        let target = DiscreteMeasure::new(array![[0.2, 0.3]], vec![0.25]).unwrap();
        let s = ParticleSystem::new(array![[0.2, 0.3]], vec![0.5]).unwrap();
        let cfg = FlowConfig {
            loss: FlowLoss::Mmd {
                kernel: KernelSpec::Gaussian { sigma: 0.3 },
            },
            ..Default::default()
        }
        .with_target(target);
        let next = flow_step(&s, &cfg).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn zero_mass_rate_preserves_masses() {
        let s = ParticleSystem::random_uniform(5, 2, 1.0, 3).unwrap();
        let cfg = FlowConfig {
            eta_r: 0.0,
            eps: 0.1,
            ..Default::default()
        }
        .with_target(dirac(0.5, 0.5));
        let next = flow_step(&s, &cfg).unwrap();
        assert_eq!(next.root_masses(), s.root_masses());
        assert_ne!(next.positions(), s.positions());
    }

    #[test]
    fn single_particle_moves_toward_the_dirac() {
        let s = ParticleSystem::new(array![[0.1, 0.2]], vec![1.0]).unwrap();
        let cfg = FlowConfig {
            loss: FlowLoss::OtEps,
            eps: 0.05,
            eta_x: 0.05,
            eta_r: 0.0,
            ..Default::default()
        }
        .with_target(dirac(0.8, 0.6));
        let next = flow_step(&s, &cfg).unwrap();
        let d = |p: &Array2<f64>| ((p[[0, 0]] - 0.8).powi(2) + (p[[0, 1]] - 0.6).powi(2)).sqrt();
        assert!(d(next.positions()) < d(s.positions()));
        // Straight toward y: the displacement is parallel to y − x.
        let dx = next.positions() - s.positions();
        let cross = dx[[0, 0]] * 0.4 - dx[[0, 1]] * 0.7;
        assert!(cross.abs() < 1e-12);
    }

    #[test]
    fn static_at_the_target() {
        let target = DiscreteMeasure::new(array![[0.2, 0.3], [0.7, 0.6], [0.4, 0.9]], vec![0.3, 0.3, 0.4]).unwrap();
        let s = ParticleSystem::from_measure(&target);
        let cfg = FlowConfig {
            eps: 0.1,
            iterations: 5,
            snapshot_stride: 1,
            sinkhorn_tol: 1e-12,
            ..Default::default()
        }
        .with_target(target);
        let t = run_flow(&s, &cfg).unwrap();
        assert!(t.trace.iter().all(|p| p.loss.abs() < 1e-9));
        let end = t.final_system();
        assert!(end.positions().iter().zip(s.positions().iter()).all(|(a, b)| (a - b).abs() < 1e-7));
        assert!(end.root_masses().iter().zip(s.root_masses()).all(|(a, b)| (a - b).abs() < 1e-7));
    }

    #[test]
    fn sinkdiv_trace_is_nonincreasing_and_reproducible() {
        let target = DiscreteMeasure::new(array![[0.2, 0.3], [0.7, 0.6], [0.4, 0.9]], vec![0.3, 0.3, 0.4]).unwrap();
        let s = ParticleSystem::random_uniform(6, 2, 0.5, 1).unwrap();
        let cfg = FlowConfig {
            eps: 0.05,
            eta_x: 5.0,
            eta_r: 0.5,
            iterations: 30,
            snapshot_stride: 1,
            ..Default::default()
        }
        .with_target(target);
        let a = run_flow(&s, &cfg).unwrap();
        for w in a.trace.windows(2) {
            assert!(w[1].loss <= w[0].loss);
        }
        assert!(a.final_loss() < 0.5 * a.trace[0].loss);
        let b = run_flow(&s, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_target_barycenter_is_run_flow() {
        let target = DiscreteMeasure::new(array![[0.2, 0.3], [0.7, 0.6]], vec![0.5, 0.5]).unwrap();
        let s = ParticleSystem::random_uniform(4, 2, 1.0, 2).unwrap();
        let cfg = FlowConfig {
            eps: 0.1,
            iterations: 5,
            ..Default::default()
        };
        let a = barycenter_flow(&s, std::slice::from_ref(&target), &[1.0], &cfg).unwrap();
        let b = run_flow(&s, &cfg.clone().with_target(target.clone())).unwrap();
        assert_eq!(a, b);
        let twice = barycenter_flow(&s, &[target.clone(), target.clone()], &[0.5, 0.5], &cfg).unwrap();
        for (p, q) in twice.trace.iter().zip(&b.trace) {
            assert!((p.loss - q.loss).abs() < 1e-9);
        }
        assert!(barycenter_flow(&s, &[target], &[0.7], &cfg).is_err());
    }

    #[test]
    fn mmd_mass_flow_reaches_the_mixture() {
        let grid = Array2::from_shape_fn((6, 1), |(i, _)| i as f64 / 5.0);
        let a1 = DiscreteMeasure::new(grid.clone(), vec![0.4, 0.3, 0.1, 0.1, 0.05, 0.05]).unwrap();
        let a2 = DiscreteMeasure::new(grid.clone(), vec![0.0, 0.1, 0.1, 0.2, 0.3, 0.3]).unwrap();
        let omegas = [0.3, 0.7];
        let s = ParticleSystem::new(grid, vec![(1.0f64 / 6.0).sqrt(); 6]).unwrap();
        let cfg = FlowConfig {
            loss: FlowLoss::Mmd {
                kernel: KernelSpec::Gaussian { sigma: 0.3 },
            },
            eta_x: 0.0,
            eta_r: 1.0,
            iterations: 3000,
            snapshot_stride: 100,
            ..Default::default()
        };
        let t = barycenter_flow(&s, &[a1.clone(), a2.clone()], &omegas, &cfg).unwrap();
        let w = t.final_system().measure().weights().to_vec();
        for i in 0..6 {
            let mix = omegas[0] * a1.weights()[i] + omegas[1] * a2.weights()[i];
            assert!((w[i] - mix).abs() < 0.02, "atom {i}: {} vs {mix}", w[i]);
        }
    }

    #[test]
    fn gw_flow_runs() {
        let target = DiscreteMeasure::uniform(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 1.0).unwrap();
        let s = ParticleSystem::random_uniform(4, 2, 1.0, 5).unwrap();
        let cfg = FlowConfig {
            loss: FlowLoss::SgwInf { p: 1.5 },
            eta_r: 0.0,
            eta_x: 0.5,
            iterations: 50,
            ..Default::default()
        }
        .with_target(target);
        let t = run_flow(&s, &cfg).unwrap();
        assert!(t.final_loss() < t.trace[0].loss);
    }
}
