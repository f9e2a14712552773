use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: expected {domain}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        domain: &'static str,
    },

    #[error("chain length {n} exceeds the packed-word limit of {max} sites")]
    ChainTooLong { n: usize, max: usize },

    #[error("site 0 is frozen occupied and cannot flip")]
    FrozenOrigin,

    #[error("site {site} is outside 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("invalid occupancy word {word:#x} for n = {n}: {reason}")]
    InvalidConfiguration {
        word: u64,
        n: usize,
        reason: &'static str,
    },

    #[error("state space too large: n = {n}, v = {v} needs ~{entries} generator entries (budget {budget})")]
    StateSpaceTooLarge {
        n: usize,
        v: usize,
        entries: u128,
        budget: u128,
    },

    #[error("generator is not reversible: detailed-balance violation {violation:e} at ({row}, {col})")]
    NotReversible { row: usize, col: usize, violation: f64 },

    #[error("eigensolver failed to converge: residual {residual:e} after {iterations} iterations")]
    EigenNotConverged { residual: f64, iterations: usize },

    #[error("test function is constant (zero variance)")]
    ConstantTestFunction,

    #[error("test function has {got} values, expected {expected}")]
    TestFunctionLength { got: usize, expected: usize },

    #[error("test function is not finite at index {index}")]
    NonFiniteTestFunction { index: usize },

    #[error("simulation grew past the site cap of {cap}")]
    SiteCapExceeded { cap: usize },

    #[error("only {got} replicas satisfied the conditioning event (need {need})")]
    InsufficientConditioning { got: usize, need: usize },

    #[error("only {points} lags lie in the fit window (need {need})")]
    FitWindowTooShort { points: usize, need: usize },

    #[error("{what} = {value} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("search budget of {budget} states exhausted")]
    BudgetExceeded { budget: usize },

    #[error("second configuration is not an extension of the first: disagree at site {site}")]
    NotAnExtension { site: usize },

    #[error("site set has {size} elements, exact evaluation supports at most {max}")]
    SubsetTooLarge { size: usize, max: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, value: impl ToString, domain: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            domain,
        }
    }

    /// True for errors caused by caller input rather than numerical failure.
    pub fn is_precondition(&self) -> bool {
        !matches!(
            self,
            Error::EigenNotConverged { .. } | Error::NotReversible { .. }
        )
    }
}
