use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("coherent state not resolvable on grid: {0}")]
    Unresolvable(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-hermitian observable: imaginary residue {residue:e} exceeds {limit:e}")]
    NonHermitian { residue: f64, limit: f64 },

    #[error("unstable time step: dt * energy scale = {product:.4} exceeds {limit} (dt = {dt:e}, scale = {scale:e})")]
    UnstableStep {
        dt: f64,
        scale: f64,
        product: f64,
        limit: f64,
    },

    #[error("density matrix lost positivity: smallest eigenvalue {0:e} is below -1e-6")]
    Negativity(f64),

    #[error("no decoherence: {0}")]
    NoDecoherence(String),

    #[error("fit rejected: {0}")]
    PoorFit(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Cells must enclose more than one unit of ħ of phase-space area.
    #[error("phase cell {index:?} has area {area:e} <= hbar = {hbar:e}; cells must exceed hbar in phase-space volume")]
    CellTooSmall {
        index: (i32, i32),
        area: f64,
        hbar: f64,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("probe state violates support precondition: {0}")]
    ProbeOutsideWindow(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("unknown branch history {0:?}")]
    UnknownBranch(Vec<(i32, i32)>),

    #[error("branch tree exceeds leaf cap ({leaves} > {cap})")]
    TooManyLeaves { leaves: usize, cap: usize },

    #[error("branch state escaped the phase-space window (outside mass {0:e})")]
    EscapedWindow(f64),

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("classical trajectory left the window at t = {t}")]
    LeftWindow { t: f64 },

    #[error("history too short: {0}")]
    HistoryTooShort(String),

    #[error("mismatched horizons: {0}")]
    Horizon(String),

    #[error("caustic inside domain at q = {q}; use the multibranch construction")]
    CausticInDomain { q: f64 },

    #[error("energy {energy} is below the potential everywhere on the grid")]
    ClassicallyForbidden { energy: f64 },

    #[error("surface resampling exceeded the budget of {0} samples")]
    ResampleBudget(usize),

    #[error("too few folds: {0} found, need at least 2")]
    TooFewFolds(usize),

    #[error("BREAKDOWN: lobe area {area:e} is {ratio:.4} hbar; folds are clustered below hbar")]
    Breakdown { area: f64, ratio: f64 },

    #[error("unmatched branch topology: {0}")]
    BranchTopology(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
