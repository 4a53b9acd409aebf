//! Engine-wide error type.

use thiserror::Error;

use crate::system::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("tick index {index} out of range (prefix has {len} intervals)")]
    OutOfRange { index: usize, len: usize },

    #[error("unknown channel '{0}'")]
    UnknownChannel(String),

    #[error("join error: {0}")]
    Join(String),

    #[error("interface mismatch: {0}")]
    Interface(String),

    #[error("interface adaption error: {0}")]
    Adaption(String),

    #[error("composition error: {0}")]
    Composition(String),

    #[error("inconsistent system: {}", render_violations(.0))]
    Inconsistent(Vec<Violation>),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("machine definition error: {0}")]
    MachineDef(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("alphabet violation: message {message} is not in alphabet '{alphabet}' of channel '{channel}'")]
    AlphabetViolation {
        channel: String,
        alphabet: String,
        message: String,
    },

    #[error("invariant error: {0}")]
    Invariant(String),
}

fn render_violations(vs: &[Violation]) -> String {
    let parts: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
    parts.join("; ")
}
