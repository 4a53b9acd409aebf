//! Expressions used in machine definitions for register updates and
//! interval emission.
//!
//! Expressions are plain data so that machine definitions can be compared,
//! serialized, and round-tripped through the surface syntax. Evaluation is
//! dynamically typed over [`Value`]; type errors surface as
//! [`Error::Eval`](crate::error::Error::Eval).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::corpus::{delta, rho};
use crate::error::{Error, Result};
use crate::stream::{Chan, Interval};
use crate::value::Value;

/// Built-in interval and database transformers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Builtin {
    /// `concat(a, b)`: sequence concatenation.
    Concat,
    /// `inc_all(xs, n)`: add 1 mod n to every integer message; for key/data
    /// pairs, to the data component.
    IncAll,
    /// `db_store(db, xs)`: fold key/data pairs into a map, left to right.
    DbStore,
    /// `db_answers(db, keys)`: look up each key; unknown keys produce no
    /// message.
    DbAnswers,
    /// `delta_out(db, xs, n)`: difference-encode key/data pairs against the
    /// database, threading stores through the sequence.
    DeltaOut,
    /// `rho_out(db, xs, n)`: decode key/difference pairs against the
    /// database, threading decoded values through the sequence.
    RhoOut,
    /// `rho_db(db, xs, n)`: the database after decoding `xs`.
    RhoDb,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Concat => "concat",
            Builtin::IncAll => "inc_all",
            Builtin::DbStore => "db_store",
            Builtin::DbAnswers => "db_answers",
            Builtin::DeltaOut => "delta_out",
            Builtin::RhoOut => "rho_out",
            Builtin::RhoDb => "rho_db",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "concat" => Builtin::Concat,
            "inc_all" => Builtin::IncAll,
            "db_store" => Builtin::DbStore,
            "db_answers" => Builtin::DbAnswers,
            "delta_out" => Builtin::DeltaOut,
            "rho_out" => Builtin::RhoOut,
            "rho_db" => Builtin::RhoDb,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Concat | Builtin::DbStore | Builtin::DbAnswers => 2,
            Builtin::IncAll => 2,
            Builtin::DeltaOut | Builtin::RhoOut | Builtin::RhoDb => 3,
        }
    }
}

/// A machine-definition expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    /// A literal value.
    Lit(Value),
    /// The content of a register.
    Reg(String),
    /// The current input interval on a channel, as a sequence.
    Input(Chan),
    /// A built-in application.
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    /// Literal message sequence.
    pub fn interval(msgs: Vec<Value>) -> Expr {
        Expr::Lit(Value::Seq(msgs))
    }

    pub fn empty_interval() -> Expr {
        Expr::Lit(Value::empty_seq())
    }

    pub fn call(builtin: Builtin, args: Vec<Expr>) -> Expr {
        Expr::Call(builtin, args)
    }

    /// True if the expression mentions any input channel.
    pub fn mentions_input(&self) -> bool {
        match self {
            Expr::Lit(_) | Expr::Reg(_) => false,
            Expr::Input(_) => true,
            Expr::Call(_, args) => args.iter().any(Expr::mentions_input),
        }
    }

    /// All input channels mentioned, by name.
    pub fn input_names(&self, into: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) | Expr::Reg(_) => {}
            Expr::Input(c) => {
                into.insert(c.name().to_string());
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.input_names(into);
                }
            }
        }
    }

    /// All register names mentioned.
    pub fn reg_names(&self, into: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) | Expr::Input(_) => {}
            Expr::Reg(r) => {
                into.insert(r.clone());
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.reg_names(into);
                }
            }
        }
    }

    /// Rename every mention of input channel `old` to `new`.
    pub fn rename_input(&mut self, old: &str, new: &Chan) {
        match self {
            Expr::Lit(_) | Expr::Reg(_) => {}
            Expr::Input(c) => {
                if c.name() == old {
                    *c = new.clone();
                }
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.rename_input(old, new);
                }
            }
        }
    }

    /// Replace every mention of input channel `name` with the empty
    /// interval, severing the expression's dependence on it.
    pub fn freeze_input(&mut self, name: &str) {
        match self {
            Expr::Lit(_) | Expr::Reg(_) => {}
            Expr::Input(c) => {
                if c.name() == name {
                    *self = Expr::Lit(Value::empty_seq());
                }
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.freeze_input(name);
                }
            }
        }
    }

    /// Evaluate against register contents and (optionally) the current
    /// input valuation. Input mentions with `inputs = None` are an error;
    /// input mentions of channels absent from the valuation read as empty.
    pub fn eval(
        &self,
        regs: &BTreeMap<String, Value>,
        inputs: Option<&BTreeMap<Chan, Interval>>,
    ) -> Result<Value> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Reg(r) => regs
                .get(r)
                .cloned()
                .ok_or_else(|| Error::Eval(format!("unknown register '{r}'"))),
            Expr::Input(c) => match inputs {
                None => Err(Error::Eval(format!(
                    "input '{c}' referenced where no inputs are in scope"
                ))),
                Some(m) => Ok(Value::Seq(
                    m.get(c).map(|iv| iv.0.clone()).unwrap_or_default(),
                )),
            },
            Expr::Call(b, args) => {
                if args.len() != b.arity() {
                    return Err(Error::Eval(format!(
                        "{} expects {} arguments, got {}",
                        b.name(),
                        b.arity(),
                        args.len()
                    )));
                }
                let vals = args
                    .iter()
                    .map(|a| a.eval(regs, inputs))
                    .collect::<Result<Vec<_>>>()?;
                apply_builtin(*b, &vals)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write_value_literal(f, v),
            Expr::Reg(r) => write!(f, "{r}"),
            Expr::Input(c) => write!(f, "in({c})"),
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Write a value in expression syntax: symbols are quoted so they are not
/// mistaken for register names when read back.
pub fn write_value_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Int(i) => write!(f, "{i}"),
        Value::Sym(s) => write!(f, "'{s}"),
        Value::Pair(a, b) => {
            write!(f, "(")?;
            write_value_literal(f, a)?;
            write!(f, ", ")?;
            write_value_literal(f, b)?;
            write!(f, ")")
        }
        Value::Seq(xs) => {
            write!(f, "<")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, " ")?;
                }
                write_value_literal(f, x)?;
            }
            write!(f, ">")
        }
        Value::Map(m) => {
            write!(f, "{{")?;
            for (i, (k, val)) in m.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_value_literal(f, k)?;
                write!(f, " -> ")?;
                write_value_literal(f, val)?;
            }
            write!(f, "}}")
        }
    }
}

fn apply_builtin(b: Builtin, vals: &[Value]) -> Result<Value> {
    match b {
        Builtin::Concat => {
            let mut xs = vals[0].as_seq()?.to_vec();
            xs.extend(vals[1].as_seq()?.iter().cloned());
            Ok(Value::Seq(xs))
        }
        Builtin::IncAll => {
            let n = vals[1].as_int()?;
            let xs = vals[0].as_seq()?;
            let out = xs
                .iter()
                .map(|m| match m {
                    Value::Int(d) => Ok(Value::Int((d + 1).rem_euclid(n))),
                    Value::Pair(k, d) => Ok(Value::pair(
                        (**k).clone(),
                        Value::Int((d.as_int()? + 1).rem_euclid(n)),
                    )),
                    other => Err(Error::Eval(format!(
                        "inc_all expects integers or key/data pairs, got {other}"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Value::Seq(out))
        }
        Builtin::DbStore => {
            let mut db = vals[0].as_map()?.clone();
            for m in vals[1].as_seq()? {
                let (k, d) = split_pair(m)?;
                db.insert(k, d);
            }
            Ok(Value::Map(db))
        }
        Builtin::DbAnswers => {
            let db = vals[0].as_map()?;
            let mut out = Vec::new();
            for k in vals[1].as_seq()? {
                if let Some(d) = db.get(k) {
                    out.push(d.clone());
                }
            }
            Ok(Value::Seq(out))
        }
        Builtin::DeltaOut => {
            let (out, _) = delta_fold(vals)?;
            Ok(Value::Seq(out))
        }
        Builtin::RhoOut => {
            let (out, _) = rho_fold(vals)?;
            Ok(Value::Seq(out))
        }
        Builtin::RhoDb => {
            let (_, db) = rho_fold(vals)?;
            Ok(Value::Map(db))
        }
    }
}

fn split_pair(m: &Value) -> Result<(Value, Value)> {
    match m {
        Value::Pair(k, d) => Ok(((**k).clone(), (**d).clone())),
        other => Err(Error::Eval(format!("expected key/data pair, got {other}"))),
    }
}

/// Difference-encode a pair sequence against a database, threading the
/// stored values from left to right.
fn delta_fold(vals: &[Value]) -> Result<(Vec<Value>, BTreeMap<Value, Value>)> {
    let mut db = vals[0].as_map()?.clone();
    let n = vals[2].as_int()?;
    let mut out = Vec::new();
    for m in vals[1].as_seq()? {
        let (k, d) = split_pair(m)?;
        let old = db.get(&k).map(|v| v.as_int()).transpose()?;
        let diff = delta(old, d.as_int()?, n);
        out.push(Value::pair(k.clone(), Value::Int(diff)));
        db.insert(k, d);
    }
    Ok((out, db))
}

/// Decode a pair sequence of differences against a database, threading the
/// decoded values from left to right.
fn rho_fold(vals: &[Value]) -> Result<(Vec<Value>, BTreeMap<Value, Value>)> {
    let mut db = vals[0].as_map()?.clone();
    let n = vals[2].as_int()?;
    let mut out = Vec::new();
    for m in vals[1].as_seq()? {
        let (k, diff) = split_pair(m)?;
        let old = db.get(&k).map(|v| v.as_int()).transpose()?;
        let d = rho(old, diff.as_int()?, n);
        out.push(Value::pair(k.clone(), Value::Int(d)));
        db.insert(k, Value::Int(d));
    }
    Ok((out, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Alphabet;

    fn pair(k: &str, d: i64) -> Value {
        Value::pair(Value::sym(k), Value::Int(d))
    }

    fn eval(e: &Expr) -> Value {
        e.eval(&BTreeMap::new(), None).unwrap()
    }

    #[test]
    fn concat_and_inc_all() {
        let e = Expr::call(
            Builtin::Concat,
            vec![
                Expr::interval(vec![Value::Int(1)]),
                Expr::interval(vec![Value::Int(2)]),
            ],
        );
        assert_eq!(eval(&e), Value::Seq(vec![Value::Int(1), Value::Int(2)]));

        let e = Expr::call(
            Builtin::IncAll,
            vec![
                Expr::interval(vec![Value::Int(3), pair("k0", 3)]),
                Expr::Lit(Value::Int(4)),
            ],
        );
        assert_eq!(eval(&e), Value::Seq(vec![Value::Int(0), pair("k0", 0)]));
    }

    #[test]
    fn db_store_then_answers() {
        let store = Expr::call(
            Builtin::DbStore,
            vec![
                Expr::Lit(Value::empty_map()),
                Expr::interval(vec![pair("k0", 2), pair("k0", 3), pair("k1", 1)]),
            ],
        );
        let answers = Expr::call(
            Builtin::DbAnswers,
            vec![
                store,
                Expr::interval(vec![Value::sym("k0"), Value::sym("k1"), Value::sym("kx")]),
            ],
        );
        // later store wins; unknown key answers nothing
        assert_eq!(eval(&answers), Value::Seq(vec![Value::Int(3), Value::Int(1)]));
    }

    #[test]
    fn delta_then_rho_roundtrips_within_one_interval() {
        let msgs = vec![pair("k0", 2), pair("k0", 1), pair("k1", 3)];
        let enc = Expr::call(
            Builtin::DeltaOut,
            vec![
                Expr::Lit(Value::empty_map()),
                Expr::interval(msgs.clone()),
                Expr::Lit(Value::Int(4)),
            ],
        );
        // first store of k0 passes through unchanged, second is (1-2) mod 4
        assert_eq!(
            eval(&enc),
            Value::Seq(vec![pair("k0", 2), pair("k0", 3), pair("k1", 3)])
        );
        let dec = Expr::call(
            Builtin::RhoOut,
            vec![
                Expr::Lit(Value::empty_map()),
                Expr::Lit(eval(&enc)),
                Expr::Lit(Value::Int(4)),
            ],
        );
        assert_eq!(eval(&dec), Value::Seq(msgs));
    }

    #[test]
    fn input_reference_requires_scope() {
        let c = Chan::new("I", Alphabet::new("D", vec![Value::Int(0)]));
        let e = Expr::Input(c.clone());
        assert!(e.eval(&BTreeMap::new(), None).is_err());

        let mut iv = BTreeMap::new();
        iv.insert(c, Interval::of(vec![Value::Int(0)]));
        assert_eq!(
            e.eval(&BTreeMap::new(), Some(&iv)).unwrap(),
            Value::Seq(vec![Value::Int(0)])
        );
    }

    #[test]
    fn display_round_trip_shapes() {
        let e = Expr::call(
            Builtin::DeltaOut,
            vec![
                Expr::Reg("m".into()),
                Expr::Input(Chan::new("I", Alphabet::new("D", vec![Value::Int(0)]))),
                Expr::Lit(Value::Int(4)),
            ],
        );
        assert_eq!(e.to_string(), "delta_out(m, in(I), 4)");
        assert_eq!(
            Expr::interval(vec![Value::sym("a"), Value::Int(1)]).to_string(),
            "<'a 1>"
        );
        assert_eq!(Expr::Lit(Value::empty_map()).to_string(), "{}");
    }
}
