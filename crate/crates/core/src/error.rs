//! Error types shared across the simulator.

use thiserror::Error;

/// Unified error type for configuration, solver, and simulation failures.
///
/// The CLI maps variants to exit codes: configuration problems exit 1,
/// infeasible slots in strict mode exit 2, failed validation exits 3.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid layer spec: {0}")]
    InvalidLayerSpec(String),

    #[error("partition point {l} out of range 1..={max} for DT {dt}")]
    PartitionOutOfRange { dt: usize, l: usize, max: usize },

    /// A slot admitted no feasible decision under the active constraint set.
    /// In lenient mode callers record a violation instead of surfacing this.
    #[error("infeasible at slot {t}: {what}")]
    InfeasibleSlot { t: u64, what: String },

    /// Every AP has zero block-generation rate, so no block can ever close.
    #[error("no miner: total block-generation rate is zero")]
    NoMiner,

    #[error("solver error: {0}")]
    Solver(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
