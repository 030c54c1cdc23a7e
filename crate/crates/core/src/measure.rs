//! Discrete measures, ground costs and transport plans.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_weight;

/// A positive measure `Σ_i w_i δ_{x_i}` on `R^D`.
///
/// Zero-weight atoms are kept so indices stay aligned with user data; solvers
/// mask them out of every reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::LengthMismatch(points.nrows(), weights.len()));
        }
        check_weights(&weights)?;
        if let Some((idx, &value)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { idx, value });
        }
        Ok(Self { points, weights })
    }

    /// Measure on the real line.
    pub fn on_line(xs: &[f64], weights: Vec<f64>) -> Result<Self> {
        let points = Array2::from_shape_vec((xs.len(), 1), xs.to_vec())
            .expect("column vector shape");
        Self::new(points, weights)
    }

    /// Uniform weights `mass / N` on the given points.
    pub fn uniform(points: Array2<f64>, mass: f64) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::Empty);
        }
        Self::new(points, vec![mass / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        total_mass(&self.weights)
    }

    /// `ln w_i`, with `-inf` for zero weights.
    pub fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| log_weight(w)).collect()
    }

    /// Same support, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), weights)
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<f64>) {
        (self.points, self.weights)
    }
}

/// Validates a weight vector: finite and nonnegative.
pub fn check_weights(weights: &[f64]) -> Result<()> {
    for (idx, &value) in weights.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { idx, value });
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { idx, value });
        }
    }
    Ok(())
}

/// Sum of weights in ascending index order.
pub fn total_mass(weights: &[f64]) -> f64 {
    weights.iter().sum()
}

/// Ground cost as a function of the Euclidean distance between atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    /// `‖x − y‖²`.
    SqEuclidean,
    /// `‖x − y‖^p`.
    EuclideanPower { p: f64 },
    /// `−ln cos²(min(π/2, ‖x − y‖ / cutoff))`; `+inf` at and beyond the cutoff.
    Wfr { cutoff: f64 },
    /// Entries supplied directly by the caller.
    User,
}

impl CostKind {
    /// Applies the cost profile to a distance `d ≥ 0`.
    pub fn apply(&self, d: f64) -> f64 {
        match *self {
            CostKind::SqEuclidean => d * d,
            CostKind::EuclideanPower { p } => d.powf(p),
            CostKind::Wfr { cutoff } => {
                let t = d / cutoff;
                if t >= std::f64::consts::FRAC_PI_2 {
                    f64::INFINITY
                } else {
                    -2.0 * t.cos().ln()
                }
            }
            CostKind::User => d,
        }
    }

    /// Gradient of `C(x, y)` with respect to `x`, written to `out`.
    pub fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let d = euclidean(x, y);
        let scale = match *self {
            CostKind::SqEuclidean => 2.0,
            CostKind::EuclideanPower { p } => {
                if d == 0.0 {
                    0.0
                } else {
                    p * d.powf(p - 2.0)
                }
            }
            CostKind::Wfr { cutoff } => {
                let t = d / cutoff;
                if d == 0.0 || t >= std::f64::consts::FRAC_PI_2 {
                    0.0
                } else {
                    // d/dd of −2 ln cos(d/c) is (2/c) tan(d/c).
                    2.0 * t.tan() / (cutoff * d)
                }
            }
            CostKind::User => {
                if d == 0.0 {
                    0.0
                } else {
                    1.0 / d
                }
            }
        };
        for k in 0..out.len() {
            out[k] = scale * (x[k] - y[k]);
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CostKind::EuclideanPower { p } if !(p > 0.0) => Err(Error::InvalidParameter(
                format!("cost exponent must be positive, got {p}"),
            )),
            CostKind::Wfr { cutoff } if !(cutoff > 0.0) => Err(Error::InvalidParameter(
                format!("WFR cutoff must be positive, got {cutoff}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Euclidean distance between two coordinate slices.
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// An `N × M` ground-cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    kind: CostKind,
}

impl CostMatrix {
    /// Wraps user-supplied entries. Entries must be nonnegative; `+inf` is
    /// allowed and marks forbidden pairs.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self> {
        for (idx, &value) in entries.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "cost entry {idx} must be nonnegative, got {value}"
                )));
            }
        }
        Ok(Self {
            entries,
            kind: CostKind::User,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    /// Mean of the finite entries.
    pub fn mean(&self) -> f64 {
        let (sum, n) = self
            .entries
            .iter()
            .filter(|c| c.is_finite())
            .fold((0.0, 0usize), |(s, n), &c| (s + c, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Pairwise cost between two point clouds.
pub fn cost_matrix(
    xs: ArrayView2<'_, f64>,
    ys: ArrayView2<'_, f64>,
    kind: CostKind,
) -> Result<CostMatrix> {
    if xs.nrows() == 0 || ys.nrows() == 0 {
        return Err(Error::Empty);
    }
    if xs.ncols() != ys.ncols() {
        return Err(Error::DimensionMismatch(xs.ncols(), ys.ncols()));
    }
    if kind == CostKind::User {
        return Err(Error::InvalidParameter(
            "user costs are built with CostMatrix::from_entries".into(),
        ));
    }
    kind.validate()?;
    let mut entries = Array2::zeros((xs.nrows(), ys.nrows()));
    for (i, x) in xs.axis_iter(Axis(0)).enumerate() {
        let x = x.to_vec();
        for (j, y) in ys.axis_iter(Axis(0)).enumerate() {
            let y = y.to_vec();
            entries[[i, j]] = kind.apply(euclidean(&x, &y));
        }
    }
    Ok(CostMatrix { entries, kind })
}

/// Cost between the atoms of two measures.
pub fn measure_cost(a: &DiscreteMeasure, b: &DiscreteMeasure, kind: CostKind) -> Result<CostMatrix> {
    cost_matrix(a.points(), b.points(), kind)
}

/// A nonnegative coupling matrix `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
}

impl TransportPlan {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        for (idx, &value) in matrix.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(Error::NegativeWeight { idx, value });
            }
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_raw(matrix: Array2<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn mass(&self) -> f64 {
        self.matrix.iter().sum()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }
}

/// Row sums `π₁` and column sums `π₂` of a plan.
pub fn marginals(plan: &TransportPlan) -> (Vec<f64>, Vec<f64>) {
    matrix_marginals(plan.matrix.view())
}

pub(crate) fn matrix_marginals(m: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = m.dim();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            let v = m[[i, j]];
            rows[i] += v;
            cols[j] += v;
        }
    }
    (rows, cols)
}

/// Outer product `a ⊗ b` of two weight vectors.
pub fn outer(a: &[f64], b: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
