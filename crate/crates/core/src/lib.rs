//! Layer-wise pruning of linear layers with ADMM weight updates.
//!
//! Given a weight matrix `W` (`m x n`, inputs by outputs) and calibration
//! inputs `X` (`N x m`), [`prune_layer`] finds a sparse `Ŵ` that keeps
//! `X·Ŵ` close to `X·W`. Masks are chosen gradually from the ADMM iterates
//! on a cubic schedule, either unstructured or N:M structured.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod masking;
pub mod report;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result, TensorFormatError};
pub use masking::{Mask, SparsitySchedule, StructurePattern};
pub use report::{IterRecord, PruneReport, ReportSummary};
pub use solver::{
    admm_fixed_mask, prune_layer, prune_layer_observed, reconstruction_error, MaskRule,
    PruneOutcome, SolverConfig,
};
pub use tensor::Matrix;
