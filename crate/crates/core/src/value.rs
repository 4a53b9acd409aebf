//! Message values and finite alphabets.
//!
//! Every channel carries messages drawn from a declared finite alphabet.
//! Keeping alphabets finite and explicit is what makes exhaustive bounded
//! enumeration possible everywhere else in the engine.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A structured value: message payloads, register contents, guard literals.
///
/// Messages on channels are `Value`s constrained to the channel's alphabet.
/// Registers may additionally hold sequences and maps (e.g. a database
/// register mapping keys to data).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Sym(String),
    Pair(Box<Value>, Box<Value>),
    Seq(Vec<Value>),
    Map(BTreeMap<Value, Value>),
}

impl Value {
    pub fn sym(s: &str) -> Value {
        Value::Sym(s.to_string())
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn empty_seq() -> Value {
        Value::Seq(Vec::new())
    }

    pub fn empty_map() -> Value {
        Value::Map(BTreeMap::new())
    }

    pub fn as_seq(&self) -> Result<&[Value]> {
        match self {
            Value::Seq(v) => Ok(v),
            other => Err(Error::Eval(format!("expected a sequence, got {other}"))),
        }
    }

    pub fn as_map(&self) -> Result<&BTreeMap<Value, Value>> {
        match self {
            Value::Map(m) => Ok(m),
            other => Err(Error::Eval(format!("expected a map, got {other}"))),
        }
    }

    pub fn as_int(&self) -> Result<i64> {
        match self {
            Value::Int(i) => Ok(*i),
            other => Err(Error::Eval(format!("expected an integer, got {other}"))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) => write!(f, "{s}"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::Seq(vs) => {
                write!(f, "<")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ">")
            }
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k} -> {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// A named finite set of message values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetDef {
    pub name: String,
    /// Declaration order; also the enumeration order used by bounded checks.
    pub values: Vec<Value>,
}

/// Shared handle to an alphabet definition.
#[derive(Debug, Clone)]
pub struct Alphabet(Arc<AlphabetDef>);

impl Alphabet {
    pub fn new(name: &str, values: Vec<Value>) -> Alphabet {
        Alphabet(Arc::new(AlphabetDef {
            name: name.to_string(),
            values,
        }))
    }

    /// Cartesian product alphabet of pair messages, in row-major order.
    pub fn product(name: &str, left: &Alphabet, right: &Alphabet) -> Alphabet {
        let mut values = Vec::with_capacity(left.len() * right.len());
        for a in left.values() {
            for b in right.values() {
                values.push(Value::pair(a.clone(), b.clone()));
            }
        }
        Alphabet::new(name, values)
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn values(&self) -> &[Value] {
        &self.0.values
    }

    pub fn len(&self) -> usize {
        self.0.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.values.is_empty()
    }

    pub fn contains(&self, v: &Value) -> bool {
        self.0.values.contains(v)
    }
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.0.name == other.0.name && self.0.values == other.0.values
    }
}

impl Eq for Alphabet {}
