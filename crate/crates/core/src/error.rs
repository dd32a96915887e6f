use thiserror::Error;

use crate::hamiltonian::ElectronicState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("model has no tensors for electronic state {0}")]
    MissingState(ElectronicState),

    #[error("ion separation {0} Å is below the 0.5 Å minimum")]
    SeparationTooSmall(f64),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error(
        "field step too coarse at step {step}: matched eigenvector overlap {overlap:.3} < 0.5, \
         use a finer sweep"
    )]
    StepTooCoarse { step: usize, overlap: f64 },

    #[error("unknown preset `{0}` (expected siteA, siteB or siteB-ising)")]
    UnknownPreset(String),

    #[error("unknown fit parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid fit specification: {0}")]
    InvalidFitSpec(String),

    #[error("under-determined fit: {peaks} peaks for {params} free parameters")]
    UnderDetermined { peaks: usize, params: usize },

    #[error("simulation failed at {field} T: {source}")]
    Simulation {
        field: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("refusing to write an empty map")]
    EmptyMap,

    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failures of the numerics (as opposed to bad input): non-Hermitian
    /// matrices, eigensolver or tracking breakdowns.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotHermitian(_) | Error::NoConvergence(_) | Error::StepTooCoarse { .. } => true,
            Error::Simulation { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
