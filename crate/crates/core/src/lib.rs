//! Unbalanced optimal transport on discrete measures.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cone;
pub mod divergence;
pub mod error;
pub mod flows;
pub mod io;
pub mod lambert;
pub mod measure;
pub mod mmd;
pub mod numeric;
pub mod oracle;
pub mod report;
pub mod sinkdiv;
pub mod sinkhorn;
pub mod ti;
pub mod ugw;

pub use divergence::{Divergence, Entropy};
pub use error::{Error, Result};
pub use measure::{CostKind, CostMatrix, DiscreteMeasure, TransportPlan};
pub use report::SolveReport;
