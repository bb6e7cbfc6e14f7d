use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar or vector argument violates its precondition.
    InvalidParameter { name: &'static str, reason: String },
    /// Probabilities that do not form a distribution.
    InvalidDistribution(String),
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    ActionOutsideBox { player: usize, step: usize },
    NonFiniteState { player: usize, step: usize },
    /// A particle flow does not cover the simulation grid.
    FlowGridMismatch { expected: usize, found: usize },
    /// A flow class with positive probability received no samples.
    EmptyClass { class: usize, probability: f64 },
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => write!(f, "invalid `{name}`: {reason}"),
            Error::InvalidDistribution(msg) => write!(f, "invalid distribution: {msg}"),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            Error::ActionOutsideBox { player, step } => {
                write!(f, "player {player} chose an action outside the action box at step {step}")
            }
            Error::NonFiniteState { player, step } => {
                write!(f, "state of player {player} became non-finite at step {step}")
            }
            Error::FlowGridMismatch { expected, found } => {
                write!(f, "measure flow has {found} time steps, simulation grid has {expected}")
            }
            Error::EmptyClass { class, probability } => write!(
                f,
                "flow class {class} has probability {probability} but received no samples; increase reps"
            ),
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl core::error::Error for Error {}
