use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by model construction, simulation and filter steps.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    /// A symbol with positive empirical mass has (numerically) zero
    /// predicted probability.
    #[error("impossible observation: symbol {symbol} has q = {mass} but predicted probability {likelihood:e}")]
    ImpossibleObservation {
        symbol: usize,
        mass: f64,
        likelihood: f64,
    },

    #[error("covariance lost positive semidefiniteness (min eigenvalue {min_eigenvalue:e}); step size too large?")]
    CovarianceBlowUp { min_eigenvalue: f64 },

    #[error("particle ensemble diverged (non-finite state)")]
    ParticleBlowUp,

    #[error("singular innovation covariance")]
    SingularInnovation,

    #[error("per-step jump probability {probability} from state {state} is not below 1; reduce dt")]
    StepTooLarge { state: usize, probability: f64 },

    #[error("simplex collapsed: only {mass} probability mass left after clipping")]
    SimplexCollapse { mass: f64 },

    #[error("KL oracle routes disagree by {deviation:e}")]
    OracleDisagreement { deviation: f64 },

    #[error("KL oracle did not converge (residual {residual:e} after {iterations} iterations)")]
    OracleNotConverged { residual: f64, iterations: usize },

    #[error("at step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Strips any [`Error::AtStep`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for numerical instabilities (as opposed to bad inputs).
    pub fn is_blow_up(&self) -> bool {
        matches!(
            self.root(),
            Error::CovarianceBlowUp { .. }
                | Error::ParticleBlowUp
                | Error::SimplexCollapse { .. }
                | Error::StepTooLarge { .. }
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
