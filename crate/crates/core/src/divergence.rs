//! Entropy functions, their Legendre conjugates, the anisotropic proximity
//! operator and discrete Csiszár divergences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambert::lambert_w_exp;

/// Relative slack under which a ratio counts as equal to 1 for the balanced
/// indicator entropy.
pub const BALANCED_FEASIBILITY_TOL: f64 = 1e-6;

/// The scalar entropy `φ` of a Csiszár divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "div", rename_all = "snake_case")]
pub enum Entropy {
    /// `φ = ι_{1}`: exact marginal constraints.
    Balanced,
    /// `φ(p) = ρ(p ln p − p + 1)`.
    Kl { rho: f64 },
    /// `φ(p) = ρ|p − 1|`.
    Tv { rho: f64 },
    /// `φ = ι_{[a, b]}`.
    Range { a: f64, b: f64 },
    /// `φ(p) = ρ/(s(s−1))·(p^s − s(p−1) − 1)`; `s = 0` is the Berg entropy.
    Power { s: f64, rho: f64 },
    /// `φ(p) = ρ(p − 1 − ln p)`.
    Berg { rho: f64 },
}

impl Entropy {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Entropy::Balanced => Ok(()),
            Entropy::Kl { rho } | Entropy::Tv { rho } | Entropy::Berg { rho } => {
                if rho > 0.0 && rho.is_finite() {
                    Ok(())
                } else {
                    bad(format!("rho must be positive and finite, got {rho}"))
                }
            }
            Entropy::Range { a, b } => {
                if (0.0..=1.0).contains(&a) && b >= 1.0 && b.is_finite() {
                    Ok(())
                } else {
                    bad(format!("range needs 0 <= a <= 1 <= b < inf, got a={a}, b={b}"))
                }
            }
            Entropy::Power { s, rho } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    bad(format!("rho must be positive and finite, got {rho}"))
                } else if s == 1.0 || !s.is_finite() {
                    bad(format!("power exponent must be finite and != 1, got {s}"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Rewrites `Power { s: 0 }` as `Berg`.
    fn canonical(self) -> Self {
        match self {
            Entropy::Power { s: 0.0, rho } => Entropy::Berg { rho },
            e => e,
        }
    }

    /// Marginal-relaxation strength, `+inf` for constraint entropies.
    pub fn rho(&self) -> f64 {
        match *self {
            Entropy::Balanced | Entropy::Range { .. } => f64::INFINITY,
            Entropy::Kl { rho }
            | Entropy::Tv { rho }
            | Entropy::Power { rho, .. }
            | Entropy::Berg { rho } => rho,
        }
    }

    /// `φ(p)` for `p ≥ 0`.
    pub fn phi(&self, p: f64) -> f64 {
        if p < 0.0 {
            return f64::INFINITY;
        }
        match self.canonical() {
            Entropy::Balanced => {
                if (p - 1.0).abs() <= BALANCED_FEASIBILITY_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Entropy::Kl { rho } => {
                if p == 0.0 {
                    rho
                } else {
                    rho * (p * p.ln() - p + 1.0)
                }
            }
            Entropy::Tv { rho } => rho * (p - 1.0).abs(),
            Entropy::Range { a, b } => {
                if p >= a * (1.0 - BALANCED_FEASIBILITY_TOL) && p <= b * (1.0 + BALANCED_FEASIBILITY_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Entropy::Berg { rho } => {
                if p == 0.0 {
                    f64::INFINITY
                } else {
                    rho * (p - 1.0 - p.ln())
                }
            }
            Entropy::Power { s, rho } => {
                if p == 0.0 {
                    if s < 0.0 {
                        f64::INFINITY
                    } else {
                        rho / s
                    }
                } else {
                    rho / (s * (s - 1.0)) * (p.powf(s) - s * (p - 1.0) - 1.0)
                }
            }
        }
    }

    /// Legendre conjugate `φ*(q) = sup_{p ≥ 0} pq − φ(p)`.
    pub fn phi_star(&self, q: f64) -> f64 {
        match self.canonical() {
            Entropy::Balanced => q,
            Entropy::Kl { rho } => rho * (q / rho).exp_m1(),
            Entropy::Tv { rho } => {
                if q > rho {
                    f64::INFINITY
                } else {
                    q.max(-rho)
                }
            }
            Entropy::Range { a, b } => (a * q).max(b * q),
            Entropy::Berg { rho } => {
                if q >= rho {
                    f64::INFINITY
                } else if q.abs() < 0.5 * rho {
                    -rho * (-q / rho).ln_1p()
                } else {
                    -rho * ((rho - q) / rho).ln()
                }
            }
            Entropy::Power { s, rho } => {
                let r = s / (s - 1.0);
                let k = rho * (r - 1.0);
                let base = (k + q) / k;
                let scale = rho * (r - 1.0) / r;
                if s > 1.0 {
                    scale * (base.max(0.0).powf(r) - 1.0)
                } else if base > 0.0 {
                    scale * (base.powf(r) - 1.0)
                } else if base == 0.0 && r > 0.0 {
                    -rho / s
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Recession constant `φ′_∞ = lim φ(p)/p`.
    pub fn recession(&self) -> f64 {
        match self.canonical() {
            Entropy::Tv { rho } | Entropy::Berg { rho } => rho,
            Entropy::Power { s, rho } if s < 1.0 => rho / (1.0 - s),
            _ => f64::INFINITY,
        }
    }

    /// `aprox(p) = argmin_q ε e^{(p − q)/ε} + φ*(q)`.
    pub fn aprox(&self, eps: f64, p: f64) -> f64 {
        match self.canonical() {
            Entropy::Balanced => p,
            Entropy::Kl { rho } => p / (1.0 + eps / rho),
            Entropy::Tv { rho } => p.clamp(-rho, rho),
            Entropy::Range { a, b } => {
                let lo = p - eps * a.ln();
                let hi = p - eps * b.ln();
                if lo < 0.0 {
                    lo
                } else if hi > 0.0 {
                    hi
                } else {
                    0.0
                }
            }
            Entropy::Berg { rho } => power_aprox_lambert(0.0, rho, eps, p),
            Entropy::Power { s, rho } => {
                let r = s / (s - 1.0);
                if r < 1.0 {
                    power_aprox_lambert(r, rho, eps, p)
                } else if p == f64::INFINITY {
                    p
                } else if p == f64::NEG_INFINITY {
                    -rho * (r - 1.0)
                } else {
                    power_aprox_newton(r, rho, eps, p)
                }
            }
        }
    }

    /// Returns the interval `m·[a, b]` of feasible plan masses for a range
    /// entropy, or `None` for other variants.
    pub fn mass_interval(&self, mass: f64) -> Option<(f64, f64)> {
        match *self {
            Entropy::Range { a, b } => Some((a * mass, b * mass)),
            Entropy::Balanced => Some((mass, mass)),
            _ => None,
        }
    }
}

/// Lambert-W closed form of the power-entropy aprox for `r < 1`.
fn power_aprox_lambert(r: f64, rho: f64, eps: f64, p: f64) -> f64 {
    let u = 1.0 - r;
    let l = (rho / eps).ln() + (rho * u - p) / (eps * u);
    let q = rho * u - eps * u * lambert_w_exp(l);
    // For r ≤ 0 the domain of φ* is open at ρ(1 − r); keep the rounded
    // minimizer strictly inside it.
    if r <= 0.0 && q >= rho * u {
        (rho * u).next_down()
    } else {
        q
    }
}

/// Root of the aprox stationarity condition for `r > 1`, written in
/// `z = ln(1 + q/(ρ(r−1)))`: `F(z) = (p − ρ(r−1)(e^z − 1))/ε − (r−1)z`,
/// which is strictly decreasing. Newton steps are kept inside a bisection
/// bracket.
fn power_aprox_newton(r: f64, rho: f64, eps: f64, p: f64) -> f64 {
    let k = rho * (r - 1.0);
    let f = |z: f64| (p - k * z.exp_m1()) / eps - (r - 1.0) * z;
    let df = |z: f64| -(k * z.exp()) / eps - (r - 1.0);
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while f(lo) < 0.0 {
        lo *= 2.0;
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fz = f(z);
        if fz == 0.0 {
            break;
        }
        if fz > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let mut next = z - fz / df(z);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - z).abs() <= 1e-15 * (1.0 + z.abs());
        z = next;
        if done || hi - lo <= 1e-15 * (1.0 + z.abs()) {
            break;
        }
    }
    k * z.exp_m1()
}

/// An entropy with an optional spatially varying strength `ρ(x_i)`.
///
/// Per-atom strengths are supported for KL only.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    entropy: Entropy,
    rho_atoms: Option<Vec<f64>>,
}

impl Divergence {
    pub fn new(entropy: Entropy) -> Result<Self> {
        entropy.validate()?;
        Ok(Self {
            entropy,
            rho_atoms: None,
        })
    }

    /// KL with one strength per atom.
    pub fn kl_varying(rho: Vec<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::Empty);
        }
        for &r in &rho {
            Entropy::Kl { rho: r }.validate()?;
        }
        Ok(Self {
            entropy: Entropy::Kl { rho: rho[0] },
            rho_atoms: Some(rho),
        })
    }

    pub fn entropy(&self) -> Entropy {
        self.entropy
    }

    pub fn rho_atoms(&self) -> Option<&[f64]> {
        self.rho_atoms.as_deref()
    }

    /// Entropy acting on atom `i`.
    #[inline]
    pub fn at(&self, i: usize) -> Entropy {
        match &self.rho_atoms {
            Some(r) => Entropy::Kl { rho: r[i] },
            None => self.entropy,
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.entropy == Entropy::Balanced
    }

    /// Checks that per-atom strengths (if any) match the measure size.
    pub fn check_len(&self, n: usize) -> Result<()> {
        match &self.rho_atoms {
            Some(r) if r.len() != n => Err(Error::LengthMismatch(r.len(), n)),
            _ => Ok(()),
        }
    }

    /// Same divergence with every strength multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let entropy = match self.entropy {
            Entropy::Kl { rho } => Entropy::Kl { rho: rho * s },
            Entropy::Tv { rho } => Entropy::Tv { rho: rho * s },
            Entropy::Berg { rho } => Entropy::Berg { rho: rho * s },
            Entropy::Power { s: e, rho } => Entropy::Power { s: e, rho: rho * s },
            e => e,
        };
        Self {
            entropy,
            rho_atoms: self
                .rho_atoms
                .as_ref()
                .map(|r| r.iter().map(|x| x * s).collect()),
        }
    }

    /// Discrete `D_φ(a|b) = Σ_{b_i>0} φ(a_i/b_i) b_i + φ′_∞ Σ_{b_i=0} a_i`.
    pub fn divergence(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch(a.len(), b.len()));
        }
        self.check_len(a.len())?;
        Ok(self.divergence_unchecked(a, b))
    }

    pub(crate) fn divergence_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.entropy == Entropy::Balanced {
            return balanced_divergence(a, b);
        }
        if let Entropy::Range { a: lo, b: hi } = self.entropy {
            return range_divergence(lo, hi, a, b);
        }
        let mut acc = 0.0;
        for i in 0..a.len() {
            let e = self.at(i);
            if b[i] > 0.0 {
                acc += e.phi(a[i] / b[i]) * b[i];
            } else if a[i] > 0.0 {
                acc += e.recession() * a[i];
            }
        }
        acc
    }
}

/// Indicator of `a = b` up to the balanced feasibility tolerance, measured
/// in ℓ₁ relative to the mass of `b`.
fn balanced_divergence(a: &[f64], b: &[f64]) -> f64 {
    let mass: f64 = b.iter().sum();
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    if err <= BALANCED_FEASIBILITY_TOL * mass.max(f64::MIN_POSITIVE) || err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Indicator of `a·b_i ≤ a_i ≤ b·b_i` pointwise, with the same relative slack
/// on the ℓ₁ violation as the balanced case.
fn range_divergence(lo: f64, hi: f64, a: &[f64], b: &[f64]) -> f64 {
    let mass: f64 = b.iter().sum();
    let err: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (lo * y - x).max(0.0) + (x - hi * y).max(0.0))
        .sum();
    if err <= BALANCED_FEASIBILITY_TOL * mass.max(f64::MIN_POSITIVE) || err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl From<Entropy> for Divergence {
    fn from(entropy: Entropy) -> Self {
        Self {
            entropy,
            rho_atoms: None,
        }
    }
}

/// Free-function form of [`Entropy::phi`].
pub fn phi_value(desc: Entropy, p: f64) -> f64 {
    desc.phi(p)
}

/// Free-function form of [`Entropy::phi_star`].
pub fn phi_conjugate(desc: Entropy, q: f64) -> f64 {
    desc.phi_star(q)
}

/// Free-function form of [`Entropy::aprox`].
pub fn aprox(desc: Entropy, eps: f64, p: f64) -> f64 {
    desc.aprox(eps, p)
}

/// Discrete Csiszár divergence between two weight vectors on a shared support.
pub fn csiszar_divergence(desc: Entropy, a: &[f64], b: &[f64]) -> Result<f64> {
    Divergence::new(desc)?.divergence(a, b)
}

/// Checks that two range-constrained marginals admit a common plan mass.
pub fn check_range_feasible(d1: &Divergence, m_alpha: f64, d2: &Divergence, m_beta: f64) -> Result<()> {
    if let (Some((l1, h1)), Some((l2, h2))) = (
        d1.entropy().mass_interval(m_alpha),
        d2.entropy().mass_interval(m_beta),
    ) {
        let slack = 1e-9 * (h1.max(h2)).max(1.0);
        if l1 > h2 + slack || l2 > h1 + slack {
            if d1.is_balanced() && d2.is_balanced() {
                return Err(Error::MassMismatch(m_alpha, m_beta));
            }
            return Err(Error::RangeInfeasible(l1, h1, l2, h2));
        }
    }
    Ok(())
}
