//! Frontend for the architecture engine: a small DSL for systems of
//! stream-processing machines, a line-oriented script format for
//! refinement steps, canonical text/JSON serialization, Graphviz export,
//! and the `pafr` command-line tool gluing them together.
//!
//! The library side exists so integration tests (and other tools) can
//! drive the same parsing and rendering the binary uses.

pub mod cmd;
pub mod diag;
pub mod dot;
pub mod emit;
pub mod json;
pub mod lex;
pub mod parser;
pub mod script;
