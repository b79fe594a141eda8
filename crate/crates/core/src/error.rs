use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants split into two families: validation failures (bad inputs,
/// inconsistent configuration) and numerical failures (singular systems,
/// non-finite values, non-convergence). [`Error::is_numerical`] tells them
/// apart; the CLI maps them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("step count {0} is not supported (expected 1..={1})")]
    UnsupportedStepCount(usize, usize),

    #[error("order {0} is not available (expected 1..=6)")]
    UnsupportedOrder(usize),

    #[error("order-condition system is singular")]
    SingularSystem,

    #[error("order conditions are overdetermined: {conditions} conditions for {unknowns} unknowns")]
    Overdetermined { conditions: usize, unknowns: usize },

    #[error("order conditions are underdetermined: {conditions} conditions for {unknowns} unknowns")]
    Underdetermined { conditions: usize, unknowns: usize },

    #[error("pinned values violate order condition C{0}")]
    InconsistentPins(usize),

    #[error("predictor and corrector step counts differ ({predictor} vs {corrector})")]
    StepCountMismatch { predictor: usize, corrector: usize },

    #[error("predictor and corrector error constants coincide; Milne indicator undefined")]
    DegenerateIndicator,

    #[error("characteristic polynomial must be monic with degree >= 1")]
    InvalidPolynomial,

    #[error("eigenvalue iteration did not converge for degree-{0} polynomial")]
    NonConvergence(usize),

    #[error("requested {requested} array elements exceeds the budget of {budget}; use streaming regeneration")]
    AllocationTooLarge { requested: usize, budget: usize },

    #[error("non-finite state at trajectory {trajectory}, step {step}")]
    NonFiniteState { trajectory: usize, step: usize },

    #[error("non-finite regression response at step {step}")]
    NonFiniteResponse { step: usize },

    #[error("basis with {size} functions exceeds the cap of {cap}")]
    BasisTooLarge { size: usize, cap: usize },

    #[error("regression needs at least one sample")]
    EmptySample,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem has no closed-form solution")]
    NoClosedForm,

    #[error("deterministic solve requires a problem with zero diffusion")]
    NotDeterministic,

    #[error("scheme fails the root condition ({0}); pass the unstable override to run it anyway")]
    UnstableScheme(String),

    #[error("need at least {needed} batches, got {got}")]
    TooFewBatches { needed: usize, got: usize },

    #[error("convergence rate needs positive errors, got {0}")]
    NonPositiveError(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed scheme document: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem
                | Error::DegenerateIndicator
                | Error::NonConvergence(_)
                | Error::NonFiniteState { .. }
                | Error::NonFiniteResponse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
