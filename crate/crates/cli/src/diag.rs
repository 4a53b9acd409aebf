//! Source positions and diagnostics for the surface languages.

use std::fmt;

/// A region of a source file, 1-based and inclusive at the start,
/// exclusive at the end column. Every diagnostic carries one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub end_line: usize,
    pub end_column: usize,
}

impl SourceSpan {
    pub fn point(file: &str, line: usize, column: usize) -> SourceSpan {
        SourceSpan {
            file: file.to_string(),
            line,
            column,
            end_line: line,
            end_column: column + 1,
        }
    }

    /// The smallest span covering both `self` and `other`.
    pub fn to(&self, other: &SourceSpan) -> SourceSpan {
        let mut s = self.clone();
        if (other.end_line, other.end_column) > (s.end_line, s.end_column) {
            s.end_line = other.end_line;
            s.end_column = other.end_column;
        }
        s
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A user-facing message anchored to a span. `reference` names the
/// violated consistency condition or refinement rule when one applies.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
    pub reference: Option<String>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}: {}", self.span, self.message)?;
        if let Some(r) = &self.reference {
            write!(f, " [{r}]")?;
        }
        Ok(())
    }
}

/// A syntax or resolution error from one of the surface parsers.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{span}: error: {message}")]
pub struct ParseError {
    pub message: String,
    pub span: SourceSpan,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: SourceSpan) -> ParseError {
        ParseError {
            message: message.into(),
            span,
        }
    }

    pub fn diagnostic(&self) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            message: self.message.clone(),
            span: self.span.clone(),
            reference: None,
        }
    }
}
