//! Closed-form cone costs.
//!
//! A cone point `[x, r]` carries a base location `x` and a radius `r ≥ 0`;
//! all points with `r = 0` are identified with the apex. Formulas take the
//! base distance `d = d(x, y)` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::euclidean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "snake_case")]
pub enum ConeSetting {
    /// `ρ[r² + s² − 2rs·e^{−d²/2ρ}]`, the squared distance induced by `ρKL` and `d²`.
    GaussianHellinger { rho: f64 },
    /// `r² + s² − 2rs·cos(min(π/2, d))`.
    Wfr,
    /// Power entropy with exponent `k > 1`, base cost `d²`; squared distance.
    Power { k: f64, rho: f64 },
    /// `ρ[r + s − min(r, s)(2 − d^q/ρ)₊]`, the `q`-th power of the distance induced by `ρTV`.
    Partial { rho: f64, q: f64 },
}

impl ConeSetting {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            ConeSetting::GaussianHellinger { rho } if !(rho > 0.0) => bad(format!("rho must be positive, got {rho}")),
            ConeSetting::Power { k, .. } if !(k > 1.0) => bad(format!("power cone needs k > 1, got {k}")),
            ConeSetting::Power { rho, .. } if !(rho > 0.0) => bad(format!("rho must be positive, got {rho}")),
            ConeSetting::Partial { rho, .. } if !(rho > 0.0) => bad(format!("rho must be positive, got {rho}")),
            ConeSetting::Partial { q, .. } if !(q >= 1.0) => bad(format!("partial cone needs q >= 1, got {q}")),
            _ => Ok(()),
        }
    }

    /// Power to which the distance is raised by [`cone_cost`].
    pub fn exponent(&self) -> f64 {
        match *self {
            ConeSetting::Partial { q, .. } => q,
            _ => 2.0,
        }
    }
}

/// A point of the cone over a Euclidean base space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub x: Vec<f64>,
    pub r: f64,
}

impl ConePoint {
    pub fn new(x: Vec<f64>, r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("cone radius must be nonnegative, got {r}")));
        }
        Ok(Self { x, r })
    }

    pub fn is_apex(&self) -> bool {
        self.r == 0.0
    }
}

/// The cost between `[x, r]` and `[y, s]` at base distance `d`, i.e. the
/// cone distance raised to [`ConeSetting::exponent`].
pub fn cone_cost(setting: ConeSetting, d: f64, r: f64, s: f64) -> Result<f64> {
    setting.validate()?;
    if !(d >= 0.0) || !(r >= 0.0) || !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cone cost needs nonnegative arguments, got d={d}, r={r}, s={s}"
        )));
    }
    let value = match setting {
        ConeSetting::GaussianHellinger { rho } => {
            rho * (r * r + s * s - 2.0 * r * s * (-d * d / (2.0 * rho)).exp())
        }
        ConeSetting::Wfr => r * r + s * s - 2.0 * r * s * d.min(std::f64::consts::FRAC_PI_2).cos(),
        ConeSetting::Power { k, rho } => {
            let mean = if r == 0.0 || s == 0.0 {
                0.0
            } else if r == s {
                r
            } else {
                (0.5 * (r.powf(1.0 - k) + s.powf(1.0 - k))).powf(1.0 / (1.0 - k))
            };
            let base = (1.0 + (1.0 - k) * d * d / (2.0 * rho)).max(0.0);
            2.0 * rho / k * (0.5 * (r + s) - mean * base.powf(k / (k - 1.0)))
        }
        ConeSetting::Partial { rho, q } => {
            rho * (r + s - r.min(s) * (2.0 - d.powf(q) / rho).max(0.0))
        }
    };
    // Cancellation at identical points can leave a tiny negative residue.
    Ok(value.max(0.0))
}

/// Cone distance between two cone points.
pub fn cone_distance(setting: ConeSetting, a: &ConePoint, b: &ConePoint) -> Result<f64> {
    if a.x.len() != b.x.len() {
        return Err(Error::DimensionMismatch(a.x.len(), b.x.len()));
    }
    let c = cone_cost(setting, euclidean(&a.x, &b.x), a.r, b.r)?;
    Ok(c.powf(1.0 / setting.exponent()))
}
