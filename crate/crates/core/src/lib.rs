//! Execution and refinement engine for timed pipe-and-filter
//! architectures.
//!
//! Components are machines that exchange finite message intervals over
//! named channels in lockstep ticks. The crate provides the stream
//! algebra, machine semantics, network composition with feedback, a
//! refinement-rule kit with obligation tracking, and bounded checking to
//! back the rules' behavioral premises.

pub mod behavior;
pub mod corpus;
pub mod error;
pub mod expr;
pub mod oracle;
pub mod random;
pub mod rules;
pub mod stream;
pub mod system;
pub mod value;

pub use error::{Error, Result};
