//! The worked example: a keyed store whose transport is refactored into a
//! difference-encoding pipeline, step by step.
//!
//! The math lives here as plain functions so tests can check machine runs
//! against direct computation: `delta`/`rho` encode and decode one value
//! against a database entry, and `delta_star`/`rho_star` thread a database
//! through a whole message sequence. Everything is mod `n`; an absent entry
//! encodes and decodes as the value itself.
//!
//! On top of the math sit the example's machines ([`build_machines`]), the
//! store before and after the refactoring ([`db_initial`], [`db_final`]),
//! the invariants relating the encoded channels, and the rule script that
//! carries one system to the other ([`refactoring_script`]). A few broken
//! variants are provided for tests that need something to catch.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::behavior::{Control, EmitRule, Guard, Machine, Register, TableDef, TransRule};
use crate::expr::{Builtin, Expr};
use crate::oracle::{FoldKind, Invariant, StreamEquation};
use crate::rules::{Definitions, ScriptStep};
use crate::stream::{Chan, ChannelSet, NamedStreamTuple};
use crate::system::{Component, System};
use crate::value::{Alphabet, Value};

/// Difference of a new value against the stored one, mod `modulus`.
/// With no stored value the new value passes through unchanged.
pub fn delta(old: Option<i64>, new: i64, modulus: i64) -> i64 {
    match old {
        None => new.rem_euclid(modulus),
        Some(a) => (new - a).rem_euclid(modulus),
    }
}

/// Recover a value from a stored one and a difference, mod `modulus`.
/// With no stored value the difference passes through unchanged.
pub fn rho(old: Option<i64>, diff: i64, modulus: i64) -> i64 {
    match old {
        None => diff.rem_euclid(modulus),
        Some(a) => (a + diff).rem_euclid(modulus),
    }
}

/// Difference-encode a sequence of key/value messages against `db`,
/// storing each new value as it goes. Returns the encoded sequence;
/// `db` is left holding the stored (plain) values.
pub fn delta_star<K, I>(db: &mut BTreeMap<K, i64>, msgs: I, modulus: i64) -> Vec<(K, i64)>
where
    K: Ord + Clone,
    I: IntoIterator<Item = (K, i64)>,
{
    let mut out = Vec::new();
    for (k, d) in msgs {
        let diff = delta(db.get(&k).copied(), d, modulus);
        db.insert(k.clone(), d);
        out.push((k, diff));
    }
    out
}

/// Decode a sequence of key/difference messages against `db`, storing each
/// decoded value as it goes. Returns the decoded sequence; `db` is left
/// holding the decoded (plain) values.
pub fn rho_star<K, I>(db: &mut BTreeMap<K, i64>, msgs: I, modulus: i64) -> Vec<(K, i64)>
where
    K: Ord + Clone,
    I: IntoIterator<Item = (K, i64)>,
{
    let mut out = Vec::new();
    for (k, diff) in msgs {
        let d = rho(db.get(&k).copied(), diff, modulus);
        db.insert(k.clone(), d);
        out.push((k, d));
    }
    out
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Every datum lives in 0..MODULUS, as do the differences.
pub const MODULUS: i64 = 4;

/// The key space. Two keys keep exhaustive exploration affordable while
/// still exercising per-key database threading.
pub fn key_alphabet() -> Alphabet {
    Alphabet::new("Key", vec![Value::sym("k0"), Value::sym("k1")])
}

/// The datum space 0..MODULUS.
pub fn data_alphabet() -> Alphabet {
    Alphabet::new("Data", (0..MODULUS).map(Value::Int).collect())
}

/// Key/datum pairs; also the alphabet of encoded differences, since a
/// difference is again a value in 0..MODULUS.
pub fn entry_alphabet() -> Alphabet {
    Alphabet::product("Entry", &key_alphabet(), &data_alphabet())
}

/// Raw store requests from the environment.
pub fn chan_in() -> Chan {
    Chan::new("In", entry_alphabet())
}

/// Preprocessed store requests.
pub fn chan_i() -> Chan {
    Chan::new("I", entry_alphabet())
}

/// Difference-encoded store requests.
pub fn chan_d() -> Chan {
    Chan::new("D", entry_alphabet())
}

/// Decoded store requests, reconstructed from the differences.
pub fn chan_r() -> Chan {
    Chan::new("R", entry_alphabet())
}

/// Queries from the environment.
pub fn chan_key() -> Chan {
    Chan::new("Key", key_alphabet())
}

/// Answers to queries.
pub fn chan_data() -> Chan {
    Chan::new("Data", data_alphabet())
}

// ---------------------------------------------------------------------------
// Machines
// ---------------------------------------------------------------------------

fn reg_seq(name: &str) -> Register {
    Register {
        name: name.to_string(),
        init: Value::empty_seq(),
    }
}

fn reg_map(name: &str) -> Register {
    Register {
        name: name.to_string(),
        init: Value::empty_map(),
    }
}

fn modulus() -> Expr {
    Expr::Lit(Value::Int(MODULUS))
}

fn single_control(
    name: &str,
    emits: Vec<EmitRule>,
    updates: Vec<(&str, Expr)>,
) -> Vec<Control> {
    vec![Control {
        name: name.to_string(),
        emits,
        rules: vec![TransRule {
            guard: Guard::always(),
            updates: updates
                .into_iter()
                .map(|(r, e)| (r.to_string(), e))
                .collect(),
            target: 0,
        }],
    }]
}

fn emit(chan: Chan, e: Expr) -> EmitRule {
    EmitRule {
        outputs: [(chan, e)].into_iter().collect(),
    }
}

/// The preprocessor: applies the successor mod [`MODULUS`] to every datum
/// arriving on `In` and forwards the result on `I` one tick later.
pub fn pre_machine() -> Machine {
    Machine::table(TableDef {
        name: "pre".to_string(),
        inputs: vec![chan_in()],
        outputs: vec![chan_i()],
        registers: vec![reg_seq("pending")],
        controls: single_control(
            "run",
            vec![emit(chan_i(), Expr::Reg("pending".to_string()))],
            vec![(
                "pending",
                Expr::call(
                    Builtin::IncAll,
                    vec![Expr::Input(chan_in()), modulus()],
                ),
            )],
        ),
        init: 0,
    })
    .expect("the preprocessor definition is well formed")
}

/// The store: keeps a key-indexed database, answers each query on `Key`
/// with the stored datum (silence for unknown keys). Store requests pass
/// through a two-stage buffer before they land in the database, so a
/// request on `I` becomes queryable two ticks later — the same end-to-end
/// latency the encoded pipeline will have.
pub fn rdb_machine() -> Machine {
    let stored = Expr::call(
        Builtin::DbStore,
        vec![Expr::Reg("m".to_string()), Expr::Reg("buf2".to_string())],
    );
    Machine::table(TableDef {
        name: "rdb".to_string(),
        inputs: vec![chan_i(), chan_key()],
        outputs: vec![chan_data()],
        registers: vec![reg_map("m"), reg_seq("buf1"), reg_seq("buf2"), reg_seq("ans")],
        controls: single_control(
            "run",
            vec![emit(chan_data(), Expr::Reg("ans".to_string()))],
            vec![
                ("m", stored.clone()),
                (
                    "ans",
                    Expr::call(Builtin::DbAnswers, vec![stored, Expr::Input(chan_key())]),
                ),
                ("buf2", Expr::Reg("buf1".to_string())),
                ("buf1", Expr::Input(chan_i())),
            ],
        ),
        init: 0,
    })
    .expect("the store definition is well formed")
}

/// The encoder: difference-encodes each entry on `I` against its own
/// database of previously seen values and emits the encoded entry on `D`
/// one tick later.
pub fn enc_machine() -> Machine {
    Machine::table(TableDef {
        name: "enc".to_string(),
        inputs: vec![chan_i()],
        outputs: vec![chan_d()],
        registers: vec![reg_map("m"), reg_seq("pend")],
        controls: single_control(
            "run",
            vec![emit(chan_d(), Expr::Reg("pend".to_string()))],
            vec![
                (
                    "pend",
                    Expr::call(
                        Builtin::DeltaOut,
                        vec![Expr::Reg("m".to_string()), Expr::Input(chan_i()), modulus()],
                    ),
                ),
                (
                    "m",
                    Expr::call(
                        Builtin::DbStore,
                        vec![Expr::Reg("m".to_string()), Expr::Input(chan_i())],
                    ),
                ),
            ],
        ),
        init: 0,
    })
    .expect("the encoder definition is well formed")
}

/// The decoder: reverses the encoder, reconstructing plain entries on `R`
/// from the differences on `D`, again with one tick of latency.
pub fn dec_machine() -> Machine {
    Machine::table(TableDef {
        name: "dec".to_string(),
        inputs: vec![chan_d()],
        outputs: vec![chan_r()],
        registers: vec![reg_map("m"), reg_seq("pend")],
        controls: single_control(
            "run",
            vec![emit(chan_r(), Expr::Reg("pend".to_string()))],
            vec![
                (
                    "pend",
                    Expr::call(
                        Builtin::RhoOut,
                        vec![Expr::Reg("m".to_string()), Expr::Input(chan_d()), modulus()],
                    ),
                ),
                (
                    "m",
                    Expr::call(
                        Builtin::RhoDb,
                        vec![Expr::Reg("m".to_string()), Expr::Input(chan_d()), modulus()],
                    ),
                ),
            ],
        ),
        init: 0,
    })
    .expect("the decoder definition is well formed")
}

/// The store rebuilt to feed on reconstructed entries: requests arrive on
/// `R` already two ticks late, so they go straight into the database with
/// no buffering. `I` is declared but never consulted — the refactoring
/// script drops it once this behavior is in place.
pub fn rdb_r_machine() -> Machine {
    let stored = Expr::call(
        Builtin::DbStore,
        vec![Expr::Reg("m".to_string()), Expr::Input(chan_r())],
    );
    Machine::table(TableDef {
        name: "rdb_r".to_string(),
        inputs: vec![chan_i(), chan_key(), chan_r()],
        outputs: vec![chan_data()],
        registers: vec![reg_map("m"), reg_seq("ans")],
        controls: single_control(
            "run",
            vec![emit(chan_data(), Expr::Reg("ans".to_string()))],
            vec![
                ("m", stored.clone()),
                (
                    "ans",
                    Expr::call(Builtin::DbAnswers, vec![stored, Expr::Input(chan_key())]),
                ),
            ],
        ),
        init: 0,
    })
    .expect("the rebuilt store definition is well formed")
}

/// All machines of the example, keyed by the names scripts refer to.
pub fn build_machines() -> BTreeMap<String, Machine> {
    [
        ("PRE".to_string(), pre_machine()),
        ("RDB".to_string(), rdb_machine()),
        ("ENC".to_string(), enc_machine()),
        ("DEC".to_string(), dec_machine()),
        ("RDB_R".to_string(), rdb_r_machine()),
    ]
    .into_iter()
    .collect()
}

// ---------------------------------------------------------------------------
// Broken variants, for tests that need something to catch
// ---------------------------------------------------------------------------

/// A decoder that wraps its arithmetic one short: any difference of
/// [`MODULUS`] - 1 decodes wrongly, which a bounded check catches as soon
/// as such a value reaches a query.
pub fn dec_machine_skewed() -> Machine {
    let wrong = Expr::Lit(Value::Int(MODULUS - 1));
    Machine::table(TableDef {
        name: "dec_skewed".to_string(),
        inputs: vec![chan_d()],
        outputs: vec![chan_r()],
        registers: vec![reg_map("m"), reg_seq("pend")],
        controls: single_control(
            "run",
            vec![emit(chan_r(), Expr::Reg("pend".to_string()))],
            vec![
                (
                    "pend",
                    Expr::call(
                        Builtin::RhoOut,
                        vec![
                            Expr::Reg("m".to_string()),
                            Expr::Input(chan_d()),
                            wrong.clone(),
                        ],
                    ),
                ),
                (
                    "m",
                    Expr::call(
                        Builtin::RhoDb,
                        vec![Expr::Reg("m".to_string()), Expr::Input(chan_d()), wrong],
                    ),
                ),
            ],
        ),
        init: 0,
    })
    .expect("the skewed decoder definition is well formed")
}

/// A preprocessor that may spontaneously append a stray entry to its
/// output — it emits strictly more behaviors than [`pre_machine`], so it
/// is not a refinement of it.
pub fn pre_machine_noisy() -> Machine {
    let stray = Value::Seq(vec![Value::pair(Value::sym("k0"), Value::Int(0))]);
    Machine::table(TableDef {
        name: "pre_noisy".to_string(),
        inputs: vec![chan_in()],
        outputs: vec![chan_i()],
        registers: vec![reg_seq("pending")],
        controls: vec![Control {
            name: "run".to_string(),
            emits: vec![
                emit(chan_i(), Expr::Reg("pending".to_string())),
                emit(
                    chan_i(),
                    Expr::call(
                        Builtin::Concat,
                        vec![Expr::Reg("pending".to_string()), Expr::Lit(stray)],
                    ),
                ),
            ],
            rules: vec![TransRule {
                guard: Guard::always(),
                updates: vec![(
                    "pending".to_string(),
                    Expr::call(Builtin::IncAll, vec![Expr::Input(chan_in()), modulus()]),
                )],
                target: 0,
            }],
        }],
        init: 0,
    })
    .expect("the noisy preprocessor definition is well formed")
}

/// A store that freely interleaves its per-tick work: each tick it either
/// lands buffered requests before answering queries (like [`rdb_machine`])
/// or answers against the database as it stood at the start of the tick.
/// The deterministic store picks one of these options always, so it
/// refines this one.
pub fn rdb_machine_interleaving() -> Machine {
    let stored = Expr::call(
        Builtin::DbStore,
        vec![Expr::Reg("m".to_string()), Expr::Reg("buf2".to_string())],
    );
    Machine::table(TableDef {
        name: "rdb_any_order".to_string(),
        inputs: vec![chan_i(), chan_key()],
        outputs: vec![chan_data()],
        registers: vec![reg_map("m"), reg_seq("buf1"), reg_seq("buf2"), reg_seq("ans")],
        controls: vec![Control {
            name: "run".to_string(),
            emits: vec![emit(chan_data(), Expr::Reg("ans".to_string()))],
            rules: vec![
                TransRule {
                    guard: Guard::always(),
                    updates: vec![
                        ("m".to_string(), stored.clone()),
                        (
                            "ans".to_string(),
                            Expr::call(
                                Builtin::DbAnswers,
                                vec![stored.clone(), Expr::Input(chan_key())],
                            ),
                        ),
                        ("buf2".to_string(), Expr::Reg("buf1".to_string())),
                        ("buf1".to_string(), Expr::Input(chan_i())),
                    ],
                    target: 0,
                },
                TransRule {
                    guard: Guard::always(),
                    updates: vec![
                        ("m".to_string(), stored),
                        (
                            "ans".to_string(),
                            Expr::call(
                                Builtin::DbAnswers,
                                vec![Expr::Reg("m".to_string()), Expr::Input(chan_key())],
                            ),
                        ),
                        ("buf2".to_string(), Expr::Reg("buf1".to_string())),
                        ("buf1".to_string(), Expr::Input(chan_i())),
                    ],
                    target: 0,
                },
            ],
        }],
        init: 0,
    })
    .expect("the interleaving store definition is well formed")
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

fn chans(cs: &[Chan]) -> ChannelSet {
    cs.iter().cloned().collect()
}

/// The store as shipped: a preprocessor feeding a buffered keyed store.
/// Environment interface: requests on `In`, queries on `Key`, answers on
/// `Data`; `I` is internal.
pub fn db_initial() -> System {
    System {
        name: "db".to_string(),
        inputs: chans(&[chan_in(), chan_key()]),
        outputs: chans(&[chan_data()]),
        components: vec![
            Component::new("PRE", pre_machine()),
            Component::new("RDB", rdb_machine()),
        ],
    }
}

/// The store after the refactoring: the preprocessor and encoder folded
/// into one component, the decoder and the rebuilt store into another,
/// with only the encoded channel `D` between them. Exactly what
/// [`refactoring_script`] produces from [`db_initial`].
pub fn db_final() -> System {
    db_final_with_decoder(dec_machine())
}

/// [`db_final`] with the decoder swapped out — with [`dec_machine_skewed`]
/// this yields a system whose answers drift from the original's.
pub fn db_final_with_decoder(dec: Machine) -> System {
    let rdb_r_narrowed = rdb_r_machine()
        .with_removed_input(&chan_i())
        .expect("the rebuilt store declares 'I'");

    let front_sub = System {
        name: "PRE'".to_string(),
        inputs: chans(&[chan_in()]),
        outputs: chans(&[chan_d()]),
        components: vec![
            Component::new("PRE", pre_machine()),
            Component::new("ENC", enc_machine()),
        ],
    };
    let front = Component {
        name: "PRE'".to_string(),
        machine: Machine::compose(
            vec![pre_machine(), enc_machine()],
            front_sub.inputs.clone(),
            front_sub.outputs.clone(),
            1,
        )
        .expect("preprocessor and encoder compose"),
        sub: Some(Box::new(front_sub)),
    };

    let back_sub = System {
        name: "RDB'".to_string(),
        inputs: chans(&[chan_d(), chan_key()]),
        outputs: chans(&[chan_data()]),
        components: vec![
            Component::new("DEC", dec.clone()),
            Component::new("RDB", rdb_r_narrowed.clone()),
        ],
    };
    let back = Component {
        name: "RDB'".to_string(),
        machine: Machine::compose(
            vec![dec, rdb_r_narrowed],
            back_sub.inputs.clone(),
            back_sub.outputs.clone(),
            1,
        )
        .expect("decoder and rebuilt store compose"),
        sub: Some(Box::new(back_sub)),
    };

    System {
        name: "db".to_string(),
        inputs: chans(&[chan_in(), chan_key()]),
        outputs: chans(&[chan_data()]),
        components: vec![front, back],
    }
}

// ---------------------------------------------------------------------------
// Invariants
// ---------------------------------------------------------------------------

/// The stream relationship the encoded pipeline maintains: `D` carries the
/// running difference encoding of `I`, and `R` its decoding, each one tick
/// behind its source.
pub fn roundtrip_invariant() -> Invariant {
    Invariant::equations(
        "roundtrip",
        vec![
            StreamEquation {
                target: chan_d(),
                source: chan_i(),
                delay: 1,
                fold: FoldKind::DeltaStar { modulus: MODULUS },
            },
            StreamEquation {
                target: chan_r(),
                source: chan_d(),
                delay: 1,
                fold: FoldKind::RhoStar { modulus: MODULUS },
            },
        ],
    )
}

/// An opaque predicate form of the encode/decode cancellation: flattening
/// `I`, encoding it and decoding it from empty databases gives `I` back.
/// By the inverse law this holds of every stream whatsoever — it pins no
/// channel down, which is exactly why the script uses
/// [`roundtrip_invariant`] instead.
pub fn psi_invariant() -> Invariant {
    let i = chan_i();
    let domain = chans(&[i.clone()]);
    Invariant::predicate(
        "psi",
        domain,
        Rc::new(move |tuple: &NamedStreamTuple| {
            let Ok(stream) = tuple.get(&i) else {
                return true;
            };
            let flat: Vec<(Value, i64)> = stream
                .flatten()
                .iter()
                .filter_map(|v| match v {
                    Value::Pair(k, d) => Some(((**k).clone(), d.as_int().ok()?)),
                    _ => None,
                })
                .collect();
            let mut enc_db = BTreeMap::new();
            let mut dec_db = BTreeMap::new();
            let encoded = delta_star(&mut enc_db, flat.iter().cloned(), MODULUS);
            rho_star(&mut dec_db, encoded, MODULUS) == flat
        }),
    )
}

// ---------------------------------------------------------------------------
// The refactoring script
// ---------------------------------------------------------------------------

/// Everything the script refers to by name.
pub fn definitions() -> Definitions {
    Definitions {
        channels: [
            ("D".to_string(), chan_d()),
            ("R".to_string(), chan_r()),
        ]
        .into_iter()
        .collect(),
        machines: build_machines(),
        invariants: [
            ("roundtrip".to_string(), roundtrip_invariant()),
            ("psi".to_string(), psi_invariant()),
        ]
        .into_iter()
        .collect(),
    }
}

/// The rule applications that refactor [`db_initial`] into [`db_final`]:
/// grow empty encoder and decoder shells, wire them up, give them their
/// behaviors, switch the store over to the reconstructed channel (the one
/// step that leans on [`roundtrip_invariant`]), retire the direct channel,
/// and fold the halves.
pub fn refactoring_script() -> Vec<ScriptStep> {
    let s = |x: &str| x.to_string();
    vec![
        ScriptStep::AddComponent { name: s("ENC") },
        ScriptStep::AddComponent { name: s("DEC") },
        ScriptStep::AddOutputChannel { comp: s("ENC"), chan: s("D") },
        ScriptStep::AddOutputChannel { comp: s("DEC"), chan: s("R") },
        ScriptStep::AddInputChannel { comp: s("ENC"), chan: s("I") },
        ScriptStep::AddInputChannel { comp: s("DEC"), chan: s("D") },
        ScriptStep::RefineBehavior { comp: s("ENC"), machine: s("ENC"), mode: None },
        ScriptStep::RefineBehavior { comp: s("DEC"), machine: s("DEC"), mode: None },
        ScriptStep::AddInputChannel { comp: s("RDB"), chan: s("R") },
        ScriptStep::RefineBehaviorWithInvariant {
            comp: s("RDB"),
            machine: s("RDB_R"),
            invariant: s("roundtrip"),
            mode: None,
        },
        ScriptStep::RemoveInputChannel { comp: s("RDB"), chan: s("I"), mode: None },
        ScriptStep::Fold {
            comps: vec![s("PRE"), s("ENC")],
            name: s("PRE'"),
            inputs: None,
            outputs: None,
        },
        ScriptStep::Fold {
            comps: vec![s("DEC"), s("RDB")],
            name: s("RDB'"),
            inputs: None,
            outputs: None,
        },
    ]
}

#[cfg(test)]
mod math_tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delta_and_rho_base_cases() {
        assert_eq!(delta(None, 3, 4), 3);
        assert_eq!(delta(Some(1), 3, 4), 2);
        assert_eq!(delta(Some(3), 1, 4), 2);
        assert_eq!(rho(None, 3, 4), 3);
        assert_eq!(rho(Some(1), 2, 4), 3);
        assert_eq!(rho(Some(3), 2, 4), 1);
    }

    proptest! {
        // decoding a difference against the same stored value recovers the
        // new value
        #[test]
        fn rho_inverts_delta(old in proptest::option::of(0i64..4), new in 0i64..4) {
            prop_assert_eq!(rho(old, delta(old, new, 4), 4), new);
        }

        // decode-then-encode is also the identity on differences
        #[test]
        fn delta_inverts_rho(old in proptest::option::of(0i64..4), diff in 0i64..4) {
            prop_assert_eq!(delta(old, rho(old, diff, 4), 4), diff);
        }

        // whole-sequence roundtrip with both databases threaded from empty
        #[test]
        fn rho_star_inverts_delta_star(msgs in proptest::collection::vec((0u8..2, 0i64..4), 0..64)) {
            let mut enc_db = BTreeMap::new();
            let mut dec_db = BTreeMap::new();
            let encoded = delta_star(&mut enc_db, msgs.iter().copied(), 4);
            let decoded = rho_star(&mut dec_db, encoded, 4);
            prop_assert_eq!(decoded, msgs);
            // and both databases agree afterwards
            prop_assert_eq!(enc_db, dec_db);
        }
    }
}
