use serde::{Deserialize, Serialize};

/// Summary of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Norm of the last potential update (sup-norm, or Hilbert seminorm for TI).
    #[serde(rename = "last_update")]
    pub last_update_sup_norm: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub converged: bool,
    /// Per-iteration update norms, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub history: Option<Vec<f64>>,
}

impl SolveReport {
    pub(crate) fn new(iterations: usize, last_update: f64, primal: f64, dual: f64, converged: bool) -> Self {
        Self {
            iterations,
            last_update_sup_norm: last_update,
            primal,
            dual,
            gap: primal - dual,
            converged,
            history: None,
        }
    }

    /// Weak duality holds up to `slack`.
    pub fn weak_duality_holds(&self, slack: f64) -> bool {
        self.primal >= self.dual - slack
    }
}
