use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite amplitude or matrix entry")]
    NonFinite,

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("photon index {index} out of range for a {photons}-photon register")]
    IndexOutOfRange { index: usize, photons: usize },

    #[error("photon index {0} listed more than once")]
    DuplicateIndex(usize),

    #[error("empty photon index list")]
    EmptyIndexList,

    #[error("operator is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("projector is not idempotent (max deviation {0:e})")]
    NotIdempotent(f64),

    #[error("projectors are not mutually orthogonal (max deviation {0:e})")]
    NotOrthogonal(f64),

    #[error("density operator trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("Kraus operators are not trace preserving (max deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("infeasible visibilities V_HV = {v_hv}, V_PM = {v_pm}: implied weights {lambda:?}")]
    InfeasibleVisibilities { v_hv: f64, v_pm: f64, lambda: [f64; 3] },

    #[error("parity visibility target {target} is unreachable (attainable range [{min}, {max}])")]
    UnreachableVisibility { target: f64, min: f64, max: f64 },

    #[error("angle {0} degrees out of range")]
    AngleOutOfRange(f64),

    #[error("spatial mode `{0}` appears more than once")]
    DuplicateMode(String),

    #[error("spatial mode `{0}` holds more than one photon")]
    MultiplePhotonsInMode(String),

    #[error("spatial mode `{0}` holds no photon")]
    EmptyMode(String),

    #[error("output mode `{0}` is already occupied by a pass-through photon")]
    OutputModeOccupied(String),

    #[error("state cannot be read out on modes {0:?}")]
    ModeLayout(Vec<String>),

    #[error("post-selection probability {0:e} is below the resolution threshold")]
    Undefined(f64),

    #[error("missing six-state entry for {0}")]
    MissingState(String),

    #[error("trial count must be at least 1")]
    NoTrials,

    #[error("estimate undefined: no accepted trials")]
    NoAcceptedTrials,
}
