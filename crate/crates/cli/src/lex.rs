//! Tokenizer shared by the architecture and value grammars.

use crate::diag::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    /// Identifier: a letter or `_` followed by letters, digits, `_`, or
    /// `'` (primed names like `PRE'` are ordinary identifiers).
    Ident(String),
    Int(i64),
    /// Symbol literal, written `'k0`.
    Sym(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Lt,
    Gt,
    Colon,
    Comma,
    Equals,
    Arrow,
    Star,
    Pipe,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Int(n) => write!(f, "'{n}'"),
            Tok::Sym(s) => write!(f, "''{s}'"),
            Tok::LBrace => write!(f, "'{{'"),
            Tok::RBrace => write!(f, "'}}'"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::Lt => write!(f, "'<'"),
            Tok::Gt => write!(f, "'>'"),
            Tok::Colon => write!(f, "':'"),
            Tok::Comma => write!(f, "','"),
            Tok::Equals => write!(f, "'='"),
            Tok::Arrow => write!(f, "'->'"),
            Tok::Star => write!(f, "'*'"),
            Tok::Pipe => write!(f, "'|'"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Tokenize `text`. Comments run from `#` to end of line; newlines are
/// otherwise insignificant.
pub fn lex(file: &str, text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut column = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let start = SourceSpan::point(file, line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump(&mut chars);
            }
            continue;
        }
        let simple = |tok: Tok| Token {
            tok,
            span: start.clone(),
        };
        match c {
            '{' => {
                bump(&mut chars);
                out.push(simple(Tok::LBrace));
            }
            '}' => {
                bump(&mut chars);
                out.push(simple(Tok::RBrace));
            }
            '(' => {
                bump(&mut chars);
                out.push(simple(Tok::LParen));
            }
            ')' => {
                bump(&mut chars);
                out.push(simple(Tok::RParen));
            }
            '<' => {
                bump(&mut chars);
                out.push(simple(Tok::Lt));
            }
            '>' => {
                bump(&mut chars);
                out.push(simple(Tok::Gt));
            }
            ':' => {
                bump(&mut chars);
                out.push(simple(Tok::Colon));
            }
            ',' => {
                bump(&mut chars);
                out.push(simple(Tok::Comma));
            }
            '=' => {
                bump(&mut chars);
                out.push(simple(Tok::Equals));
            }
            '*' => {
                bump(&mut chars);
                out.push(simple(Tok::Star));
            }
            '|' => {
                bump(&mut chars);
                out.push(simple(Tok::Pipe));
            }
            '-' => {
                bump(&mut chars);
                match chars.peek() {
                    Some('>') => {
                        bump(&mut chars);
                        out.push(simple(Tok::Arrow));
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let mut n = String::from("-");
                        while let Some(&d) = chars.peek() {
                            if !d.is_ascii_digit() {
                                break;
                            }
                            n.push(bump(&mut chars));
                        }
                        let v = n.parse::<i64>().map_err(|_| {
                            ParseError::new(format!("integer '{n}' out of range"), start.clone())
                        })?;
                        out.push(simple(Tok::Int(v)));
                    }
                    _ => {
                        return Err(ParseError::new(
                            "expected '->' or a negative integer after '-'",
                            start,
                        ))
                    }
                }
            }
            '\'' => {
                bump(&mut chars);
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !ident_continue(d) {
                        break;
                    }
                    s.push(bump(&mut chars));
                }
                if s.is_empty() {
                    return Err(ParseError::new("empty symbol literal after '''", start));
                }
                out.push(simple(Tok::Sym(s)));
            }
            d if d.is_ascii_digit() => {
                let mut n = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    n.push(bump(&mut chars));
                }
                let v = n.parse::<i64>().map_err(|_| {
                    ParseError::new(format!("integer '{n}' out of range"), start.clone())
                })?;
                out.push(simple(Tok::Int(v)));
            }
            d if ident_start(d) => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if !ident_continue(d) {
                        break;
                    }
                    s.push(bump(&mut chars));
                }
                out.push(simple(Tok::Ident(s)));
            }
            other => {
                return Err(ParseError::new(
                    format!("unexpected character '{other}'"),
                    start,
                ))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<Tok> {
        lex("t", text).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn primed_identifiers_and_symbol_literals_are_distinct() {
        assert_eq!(
            toks("PRE' 'k0"),
            vec![Tok::Ident("PRE'".into()), Tok::Sym("k0".into())]
        );
    }

    #[test]
    fn arrows_and_negative_integers_share_the_dash() {
        assert_eq!(
            toks("-> -3"),
            vec![Tok::Arrow, Tok::Int(-3)]
        );
    }

    #[test]
    fn comments_run_to_end_of_line() {
        assert_eq!(toks("a # b c\nd"), vec![Tok::Ident("a".into()), Tok::Ident("d".into())]);
    }

    #[test]
    fn spans_point_at_the_token() {
        let ts = lex("t", "ab\n  cd").unwrap();
        assert_eq!((ts[1].span.line, ts[1].span.column), (2, 3));
    }

    #[test]
    fn stray_characters_are_errors_with_spans() {
        let e = lex("t", "a $").unwrap_err();
        assert_eq!((e.span.line, e.span.column), (1, 3));
    }
}
