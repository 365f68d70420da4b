use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A feedback function could not be built from the given parameters.
    #[error("construction failed: {0}")]
    Construction(String),

    /// A segment is not in the cone of nondecreasing segments vanishing at -1.
    #[error("segment not in cone K: {0}")]
    NotInCone(String),

    /// Re-entry into the cone violated monotonicity beyond the scheme error budget.
    #[error("cone re-entry failed: {0}")]
    ConeReentry(String),

    #[error("no sign change of tau - 1 on [{lo}, {hi}]: tau(lo) = {tau_lo}, tau(hi) = {tau_hi}")]
    NoBracket {
        lo: f64,
        hi: f64,
        tau_lo: f64,
        tau_hi: f64,
    },

    #[error("planar orbit from u0 = {u0} did not reach the v-axis before t = {t_max}")]
    NoAxisHit { u0: f64, t_max: f64 },

    #[error("Hamiltonian drift {drift:e} exceeds tolerance {tol:e}; refine the step (currently {step:e})")]
    HamiltonianDrift { drift: f64, tol: f64, step: f64 },

    #[error("both ends of the family classify as {class}: {transcript}")]
    SameClassification { class: String, transcript: String },

    #[error("orbit could not be classified: {0}")]
    Unclassified(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
