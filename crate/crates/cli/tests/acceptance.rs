//! The acceptance gate: one numbered criterion per shipped guarantee,
//! each with a hard time budget, run back to back so the report reads as
//! a single ten-line scorecard (visible with `--nocapture`). Every
//! criterion that can fail does so with a concrete counterexample, never
//! just a boolean.

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use pafr_cli::dot::{emit_dot, validate_dot};
use pafr_cli::emit::emit_canonical;
use pafr_cli::parser::{parse_architecture, Architecture};
use pafr_core::behavior::{Control, EmitRule, Guard, Machine, Register, TableDef, TransRule};
use pafr_core::corpus;
use pafr_core::expr::Expr;
use pafr_core::oracle::{
    check_time_guardedness_sampled, check_trace_equality, check_trace_inclusion,
    enumerate_inputs, EnumerationBudget, Verdict,
};
use pafr_core::random::{random_machine, random_system, GeneratorConfig};
use pafr_core::rules::{
    add_component, add_input_channel, add_output_channel, apply_script, expand, fold,
    refine_behavior, remove_component, remove_input_channel, remove_output_channel,
    rename_channel, CheckMode, ObligationVerdict, RuleApplication,
};
use pafr_core::stream::{Chan, ChannelSet, NamedStreamTuple};
use pafr_core::system::{Component, System};
use pafr_core::value::{Alphabet, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Scorecard plumbing
// ---------------------------------------------------------------------------

struct Scorecard {
    failures: Vec<String>,
}

impl Scorecard {
    fn new() -> Scorecard {
        Scorecard { failures: Vec::new() }
    }

    /// Run one criterion, print its pass/fail line, remember failures.
    fn criterion<F>(&mut self, number: usize, name: &str, limit: Duration, body: F)
    where
        F: FnOnce(),
    {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
        let elapsed = start.elapsed();
        let verdict = match (&outcome, elapsed <= limit) {
            (Ok(()), true) => "PASS".to_string(),
            (Ok(()), false) => format!("FAIL (overran {limit:?})"),
            (Err(_), _) => "FAIL".to_string(),
        };
        println!(
            "criterion {number:>2}  {name:<52} {verdict} in {:>8.2?} (limit {limit:?})",
            elapsed
        );
        if !verdict.starts_with("PASS") {
            let detail = match outcome {
                Ok(()) => format!("overran its time budget: {elapsed:?} > {limit:?}"),
                Err(payload) => payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".to_string()),
            };
            self.failures.push(format!("criterion {number} ({name}): {detail}"));
        }
    }
}

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn fixture(name: &str) -> String {
    let path = fixture_path(name);
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn parse_fixture(name: &str) -> Architecture {
    parse_architecture(name, &fixture(name)).unwrap_or_else(|e| panic!("{e}"))
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pafr"))
        .args(args)
        .output()
        .expect("the pafr binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn applied(app: RuleApplication) -> System {
    for o in &app.obligations {
        assert_ne!(
            o.verdict,
            ObligationVerdict::Failed,
            "premise unexpectedly failed: {o}"
        );
    }
    app.system.expect("the rule application goes through")
}

fn equal_traces(left: &System, right: &System, budget: &EnumerationBudget) {
    let verdict = check_trace_equality(left, right, budget).expect("the equality check runs");
    assert!(
        verdict.holds(),
        "'{}' and '{}' differ: {verdict}",
        left.name,
        right.name
    );
}

fn channel_names(system: &System) -> Vec<String> {
    system
        .all_channels()
        .iter()
        .map(|c| c.name().to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// Machines used by the behavioral criteria: a chooser that freely picks
// one of its emission options each tick, and a latch that repeats its
// input one tick later.
// ---------------------------------------------------------------------------

fn ab_alphabet() -> Alphabet {
    Alphabet::new("AB", vec![Value::sym("a"), Value::sym("b")])
}

fn ab_chan(name: &str) -> Chan {
    Chan::new(name, ab_alphabet())
}

/// No inputs, one output: each tick, emit any one of `options` (`None`
/// is the empty interval).
fn chooser(out: &Chan, options: &[Option<&str>]) -> Machine {
    let emits = options
        .iter()
        .map(|o| match o {
            None => EmitRule::default(),
            Some(sym) => EmitRule {
                outputs: [(out.clone(), Expr::interval(vec![Value::sym(sym)]))]
                    .into_iter()
                    .collect(),
            },
        })
        .collect();
    Machine::table(TableDef {
        name: "chooser".to_string(),
        inputs: vec![],
        outputs: vec![out.clone()],
        registers: vec![],
        controls: vec![Control {
            name: "run".to_string(),
            emits,
            rules: vec![],
        }],
        init: 0,
    })
    .expect("the chooser definition is well formed")
}

/// One input, one output: repeats the input with a one-tick delay.
fn latch(name: &str, from: &Chan, to: &Chan) -> Machine {
    Machine::table(TableDef {
        name: name.to_string(),
        inputs: vec![from.clone()],
        outputs: vec![to.clone()],
        registers: vec![Register {
            name: "held".to_string(),
            init: Value::empty_seq(),
        }],
        controls: vec![Control {
            name: "run".to_string(),
            emits: vec![EmitRule {
                outputs: [(to.clone(), Expr::Reg("held".to_string()))]
                    .into_iter()
                    .collect(),
            }],
            rules: vec![TransRule {
                guard: Guard::always(),
                updates: vec![("held".to_string(), Expr::Input(from.clone()))],
                target: 0,
            }],
        }],
        init: 0,
    })
    .expect("the latch definition is well formed")
}

/// A chooser feeding a latch; only the latch's output is observable.
fn chooser_system(options: &[Option<&str>]) -> System {
    let m = ab_chan("M");
    let o = ab_chan("O");
    System {
        name: "chooser_pipe".to_string(),
        inputs: ChannelSet::new(),
        outputs: [o.clone()].into_iter().collect(),
        components: vec![
            Component::new("pick", chooser(&m, options)),
            Component::new("out", latch("out", &m, &o)),
        ],
    }
}

// ---------------------------------------------------------------------------
// The criteria
// ---------------------------------------------------------------------------

/// 1. The five well-formedness conditions, through the CLI: each broken
/// fixture is flagged with exactly its own condition number and each
/// repaired twin passes.
fn consistency_conditions_flag_exactly_their_number() {
    for n in 1..=5u8 {
        let broken = fixture_path(&format!("cond{n}_broken.arch"));
        let out = cli(&["check", broken.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(1),
            "cond{n}_broken should exit 1; stderr:\n{}",
            stderr_of(&out)
        );
        let err = stderr_of(&out);
        assert_eq!(
            err.matches("condition ").count(),
            1,
            "cond{n}_broken should be flagged exactly once:\n{err}"
        );
        assert!(
            err.contains(&format!("condition {n}")),
            "cond{n}_broken should name condition {n}:\n{err}"
        );

        let repaired = fixture_path(&format!("cond{n}_repaired.arch"));
        let out = cli(&["check", repaired.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "cond{n}_repaired should exit 0; stderr:\n{}",
            stderr_of(&out)
        );
        assert!(stdout_of(&out).contains("consistent"));
    }
}

/// 2. The network executor against the independent per-tick enumeration:
/// on at least a hundred generated systems, every enumerable input (four
/// ticks, at most one message per interval) produces identical output
/// sets from both.
fn executor_agrees_with_the_reference_enumeration() {
    let cfg = GeneratorConfig::default();
    let budget = EnumerationBudget::exhaustive(4, 1);
    let mut systems = 0u32;
    let mut histories = 0u64;
    for seed in 0..100 {
        let sys = random_system(seed, &cfg);
        let inputs = enumerate_inputs(&sys.inputs, &budget).expect("the input space is small");
        for input in &inputs {
            let network = sys.simulate(input).expect("the network runs");
            let reference = sys
                .blackbox_oracle(input, cfg.interval_bound)
                .expect("the reference enumeration runs");
            assert_eq!(
                network, reference,
                "seed {seed} disagrees on input:\n{input}"
            );
        }
        systems += 1;
        histories += inputs.len() as u64;
    }
    assert!(systems >= 100);
    assert!(
        histories >= 100,
        "the enumeration covered only {histories} histories"
    );
}

/// 3. Every machine in the shipped example and a batch of generated ones
/// delay their reaction by one tick (outputs through tick i+1 agree on
/// inputs that agree through tick i); the deliberately non-causal double
/// is caught.
fn machines_react_one_tick_late() {
    let mut machines: Vec<(String, Machine)> = corpus::build_machines()
        .into_iter()
        .map(|(n, m)| (n, m))
        .collect();
    machines.push(("dec_skewed".to_string(), corpus::dec_machine_skewed()));
    machines.push(("pre_noisy".to_string(), corpus::pre_machine_noisy()));
    machines.push((
        "rdb_interleaving".to_string(),
        corpus::rdb_machine_interleaving(),
    ));
    let cfg = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a7d);
    for i in 0..20 {
        let inputs: ChannelSet = [Chan::new("X0", cfg.alphabet()), Chan::new("X1", cfg.alphabet())]
            .into_iter()
            .collect();
        let outputs: ChannelSet = [Chan::new("Y0", cfg.alphabet())].into_iter().collect();
        machines.push((
            format!("generated_{i}"),
            random_machine(&mut rng, &cfg, inputs, outputs),
        ));
    }
    for (name, machine) in &machines {
        let verdict = check_time_guardedness_sampled(machine, 4, 1, 200, 0xfeed)
            .expect("the sampled check runs");
        assert!(verdict.holds(), "machine '{name}' reacted too early: {verdict}");
    }

    let bad = Machine::non_causal_echo(corpus::chan_i(), corpus::chan_d());
    let verdict =
        check_time_guardedness_sampled(&bad, 4, 1, 200, 0xfeed).expect("the sampled check runs");
    assert!(
        verdict.failed(),
        "the non-causal echo should be caught, got {verdict}"
    );
}

/// 4. Every structural rewrite preserves the bounded trace set exactly,
/// chaotic placeholder outputs included.
fn structural_rewrites_preserve_traces_exactly() {
    let budget = EnumerationBudget::exhaustive(5, 1);

    // Interface edits on the one-echo system: cheap, complete coverage.
    let small = parse_fixture("minimal.arch").system;
    let fresh = Chan::new("C", small.chan("A").unwrap().alphabet().clone());

    let with_out = applied(add_output_channel(&small, "X", fresh.clone()).unwrap());
    equal_traces(&small, &with_out, &budget);

    let without_out = applied(remove_output_channel(&with_out, "X", "C").unwrap());
    equal_traces(&small, &without_out, &budget);

    let with_in = applied(add_input_channel(&small, "X", "B").unwrap());
    equal_traces(&small, &with_in, &budget);

    let without_in = applied(remove_input_channel(
        &with_in,
        "X",
        "B",
        &CheckMode::Bounded(budget.clone()),
    )
    .unwrap());
    equal_traces(&small, &without_in, &budget);

    let with_aux = applied(add_component(&small, "AUX").unwrap());
    equal_traces(&small, &with_aux, &budget);

    let without_aux = applied(remove_component(&with_aux, "AUX").unwrap());
    equal_traces(&small, &without_aux, &budget);

    // Renaming, folding and expanding on the two-stage store.
    let store = corpus::db_initial();

    let renamed = applied(rename_channel(&store, "I", "J").unwrap());
    equal_traces(&store, &renamed, &budget);

    let folded = applied(fold(
        &store,
        &["PRE".to_string(), "RDB".to_string()],
        "STORE",
        None,
        None,
    )
    .unwrap());
    assert_eq!(folded.components.len(), 1);
    equal_traces(&store, &folded, &budget);

    let expanded = applied(expand(&folded, "STORE").unwrap());
    assert_eq!(
        expanded, store,
        "expanding the fold should reproduce the original system"
    );
    equal_traces(&folded, &expanded, &budget);
}

/// 5. Swapping in a machine that only narrows the emission choices is
/// accepted and the refined system's traces stay inside the original's;
/// a swap that widens them is rejected with a short replayable witness.
fn behavior_swaps_accept_narrowing_and_reject_widening() {
    let original = chooser_system(&[None, Some("a")]);
    let narrowed = chooser(&ab_chan("M"), &[Some("a")]);
    let app = refine_behavior(
        &original,
        "pick",
        &narrowed,
        &CheckMode::Bounded(EnumerationBudget::exhaustive(2, 1)),
    )
    .unwrap();
    let refined = applied(app);
    let verdict = check_trace_inclusion(&original, &refined, &EnumerationBudget::exhaustive(5, 1))
        .expect("the inclusion check runs");
    assert!(verdict.holds(), "narrowing was not accepted: {verdict}");

    // The widening mutant adds a 'b emission the original never allows.
    let widened = chooser(&ab_chan("M"), &[None, Some("a"), Some("b")]);
    let app = refine_behavior(
        &original,
        "pick",
        &widened,
        &CheckMode::Bounded(EnumerationBudget::exhaustive(2, 1)),
    )
    .unwrap();
    assert!(app.system.is_none(), "the widening mutant must be rejected");
    let failed = app
        .obligations
        .iter()
        .find(|o| o.verdict == ObligationVerdict::Failed)
        .expect("a failed premise");
    let w = failed
        .counterexample
        .as_ref()
        .expect("the failure carries a witness");
    assert!(
        w.input.tick_len() <= 2,
        "the witness should be at most two ticks, got {}",
        w.input.tick_len()
    );
    // Replay it: the mutant produces the offending output, the original
    // machine cannot.
    let old_runs = chooser(&ab_chan("M"), &[None, Some("a")])
        .run(&w.input)
        .expect("the original chooser runs");
    let new_runs = widened.run(&w.input).expect("the mutant runs");
    assert!(
        new_runs.contains(&w.output),
        "the witness output should replay on the mutant"
    );
    assert!(
        !old_runs.contains(&w.output),
        "the witness output should be impossible for the original"
    );
}

/// 6. The encode/decode pair is the identity: exhaustively for every
/// message sequence up to length six, and for a thousand random starting
/// databases shared by both ends.
fn encode_then_decode_recovers_every_sequence() {
    const MODULUS: i64 = 4;
    let keys = 2u64;
    let data = 4u64;
    let symbols = keys * data; // 8 distinct (key, datum) messages

    let mut checked = 0u64;
    for len in 0..=6usize {
        let space = symbols.pow(len as u32);
        for code in 0..space {
            let mut c = code;
            let mut msgs = Vec::with_capacity(len);
            for _ in 0..len {
                let sym = c % symbols;
                c /= symbols;
                msgs.push(((sym / data) as u8, (sym % data) as i64));
            }
            let mut enc_db = BTreeMap::new();
            let mut dec_db = BTreeMap::new();
            let encoded = corpus::delta_star(&mut enc_db, msgs.iter().copied(), MODULUS);
            let decoded = corpus::rho_star(&mut dec_db, encoded, MODULUS);
            assert_eq!(decoded, msgs, "roundtrip failed on {msgs:?}");
            assert_eq!(enc_db, dec_db, "databases diverged on {msgs:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 299_593, "1 + 8 + ... + 8^6 sequences");

    // Random starting databases, shared by encoder and decoder.
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1ce);
    for _ in 0..1000 {
        let mut shared: BTreeMap<u8, i64> = BTreeMap::new();
        for key in 0..keys as u8 {
            if rng.gen_bool(0.5) {
                shared.insert(key, rng.gen_range(0..MODULUS));
            }
        }
        let len = rng.gen_range(0..=32);
        let msgs: Vec<(u8, i64)> = (0..len)
            .map(|_| (rng.gen_range(0..keys as u8), rng.gen_range(0..MODULUS)))
            .collect();
        let mut enc_db = shared.clone();
        let mut dec_db = shared.clone();
        let encoded = corpus::delta_star(&mut enc_db, msgs.iter().copied(), MODULUS);
        let decoded = corpus::rho_star(&mut dec_db, encoded, MODULUS);
        assert_eq!(decoded, msgs, "roundtrip failed from database {shared:?}");
        assert_eq!(enc_db, dec_db);
    }
}

/// 7. The whole store refactoring replays through the CLI at depth six
/// with every premise discharged — the invariant step by bounded
/// exploration, everything else syntactically — and the intermediate
/// systems pass through exactly the expected channel sets.
fn store_refactoring_replays_through_the_cli() {
    let arch = fixture_path("db_initial.arch");
    let script = fixture_path("delta_refactor.script");
    let out = cli(&[
        "refine",
        arch.to_str().unwrap(),
        script.to_str().unwrap(),
        "--mode",
        "bounded",
        "--depth",
        "6",
    ]);
    let stdout = stdout_of(&out);
    assert_eq!(
        out.status.code(),
        Some(0),
        "refine should exit 0; stdout:\n{stdout}\nstderr:\n{}",
        stderr_of(&out)
    );
    assert!(
        stdout.contains("refinement holds: every obligation discharged"),
        "missing the all-discharged summary:\n{stdout}"
    );
    let ledger: Vec<&str> = stdout.lines().filter(|l| l.starts_with("step ")).collect();
    assert_eq!(ledger.len(), 21, "expected 21 premises:\n{stdout}");
    assert!(ledger.iter().all(|l| l.contains("discharged")));
    let bounded: Vec<&&str> = ledger.iter().filter(|l| l.contains("[bounded")).collect();
    assert_eq!(
        bounded.len(),
        2,
        "exactly the two invariant premises are semantic:\n{stdout}"
    );
    assert!(bounded.iter().all(|l| l.contains("depth=6") && l.contains("invariant")));
    assert!(ledger.iter().filter(|l| l.contains("[syntactic]")).count() == 19);

    // The same script in code, stage by stage: the channels in play grow
    // by D and R, then the folds hide I and R again.
    let outcome = apply_script(
        &corpus::db_initial(),
        &corpus::refactoring_script(),
        &corpus::definitions(),
        &CheckMode::Bounded(EnumerationBudget::exhaustive(3, 1)),
    )
    .expect("the script applies");
    assert!(outcome.ledger.all_discharged());
    let expected: [&[&str]; 14] = [
        &["Data", "I", "In", "Key"],          // the shipped store
        &["Data", "I", "In", "Key"],          // + empty ENC
        &["Data", "I", "In", "Key"],          // + empty DEC
        &["D", "Data", "I", "In", "Key"],     // ENC writes D
        &["D", "Data", "I", "In", "Key", "R"], // DEC writes R
        &["D", "Data", "I", "In", "Key", "R"], // ENC reads I
        &["D", "Data", "I", "In", "Key", "R"], // DEC reads D
        &["D", "Data", "I", "In", "Key", "R"], // ENC behaves
        &["D", "Data", "I", "In", "Key", "R"], // DEC behaves
        &["D", "Data", "I", "In", "Key", "R"], // RDB also reads R
        &["D", "Data", "I", "In", "Key", "R"], // RDB switches to R
        &["D", "Data", "I", "In", "Key", "R"], // RDB stops reading I
        &["D", "Data", "In", "Key", "R"],     // fold hides I
        &["D", "Data", "In", "Key"],          // fold hides R
    ];
    assert_eq!(outcome.stages.len(), expected.len());
    for (i, (stage, want)) in outcome.stages.iter().zip(expected).enumerate() {
        assert_eq!(
            channel_names(stage),
            want,
            "stage {i} passes through the wrong channels"
        );
    }
    assert_eq!(outcome.result.unwrap(), corpus::db_final());
}

/// 8. End to end, the refactored store's traces stay within the shipped
/// store's over every input history five ticks deep; corrupting the
/// decoder breaks the inclusion with a replayable witness.
fn refactored_store_stays_within_the_original() {
    let initial = corpus::db_initial();
    let final_sys = corpus::db_final();
    let budget = EnumerationBudget::exhaustive(5, 1);
    let verdict =
        check_trace_inclusion(&initial, &final_sys, &budget).expect("the inclusion check runs");
    assert!(verdict.holds(), "the refactored store escaped: {verdict}");

    let skewed = corpus::db_final_with_decoder(corpus::dec_machine_skewed());
    let verdict =
        check_trace_inclusion(&initial, &skewed, &budget).expect("the inclusion check runs");
    let w = verdict
        .witness()
        .unwrap_or_else(|| panic!("the skewed decoder should break inclusion, got {verdict}"));
    // Replay the witness on both systems.
    let bad_outputs = skewed.simulate(&w.input).expect("the skewed system runs");
    assert!(
        bad_outputs.contains(&w.output),
        "the witness output should replay on the skewed system"
    );
    let good_outputs = initial.simulate(&w.input).expect("the shipped system runs");
    assert!(
        !good_outputs.contains(&w.output),
        "the witness output should be impossible for the shipped system"
    );
}

/// 9. Two accepted narrowing swaps chain: the twice-refined system still
/// sits inside the original, verified directly end to end.
fn accepted_refinements_chain() {
    let sys0 = chooser_system(&[None, Some("a"), Some("b")]);
    let mode = CheckMode::Bounded(EnumerationBudget::exhaustive(3, 1));

    let step1 = applied(refine_behavior(&sys0, "pick", &chooser(&ab_chan("M"), &[None, Some("a")]), &mode).unwrap());
    let step2 = applied(refine_behavior(&step1, "pick", &chooser(&ab_chan("M"), &[Some("a")]), &mode).unwrap());

    let budget = EnumerationBudget::exhaustive(5, 1);
    let first = check_trace_inclusion(&sys0, &step1, &budget).expect("the inclusion check runs");
    assert!(first.holds(), "the first swap escaped: {first}");
    let second = check_trace_inclusion(&step1, &step2, &budget).expect("the inclusion check runs");
    assert!(second.holds(), "the second swap escaped: {second}");
    let chained = check_trace_inclusion(&sys0, &step2, &budget).expect("the inclusion check runs");
    assert!(chained.holds(), "the chain escaped: {chained}");
}

/// 10. Parsing the canonical rendering gives back the same system for
/// every fixture, and every exported graph is well-formed DOT.
fn canonical_text_and_graphs_round_trip() {
    let fixtures = [
        "db_initial.arch",
        "minimal.arch",
        "cond1_broken.arch",
        "cond1_repaired.arch",
        "cond2_broken.arch",
        "cond2_repaired.arch",
        "cond3_broken.arch",
        "cond3_repaired.arch",
        "cond4_broken.arch",
        "cond4_repaired.arch",
        "cond5_broken.arch",
        "cond5_repaired.arch",
    ];
    for name in fixtures {
        let arch = parse_fixture(name);
        let text = emit_canonical(&arch.system);
        let reparsed = parse_architecture(name, &text)
            .unwrap_or_else(|e| panic!("{name}: canonical text fails to parse: {e}"));
        assert_eq!(
            reparsed.system, arch.system,
            "{name}: canonical text changed the system"
        );
        assert_eq!(
            emit_canonical(&reparsed.system),
            text,
            "{name}: canonical text is not a fixed point"
        );

        let dot = emit_dot(&arch.system);
        validate_dot(&dot).unwrap_or_else(|e| panic!("{name}: bad DOT: {e}\n{dot}"));
    }
}

// ---------------------------------------------------------------------------
// The gate
// ---------------------------------------------------------------------------

#[test]
fn acceptance_gate() {
    let mut card = Scorecard::new();
    let s = Duration::from_secs;
    card.criterion(1, "well-formedness conditions flagged by number", s(1), || {
        consistency_conditions_flag_exactly_their_number()
    });
    card.criterion(2, "executor agrees with the reference enumeration", s(300), || {
        executor_agrees_with_the_reference_enumeration()
    });
    card.criterion(3, "machines react one tick late", s(30), || {
        machines_react_one_tick_late()
    });
    card.criterion(4, "structural rewrites preserve traces exactly", s(120), || {
        structural_rewrites_preserve_traces_exactly()
    });
    card.criterion(5, "behavior swaps only narrow, never widen", s(60), || {
        behavior_swaps_accept_narrowing_and_reject_widening()
    });
    card.criterion(6, "encode/decode identity, exhaustive and random", s(120), || {
        encode_then_decode_recovers_every_sequence()
    });
    card.criterion(7, "store refactoring replays through the CLI", s(600), || {
        store_refactoring_replays_through_the_cli()
    });
    card.criterion(8, "refactored store stays within the original", s(600), || {
        refactored_store_stays_within_the_original()
    });
    card.criterion(9, "accepted refinements chain", s(60), || {
        accepted_refinements_chain()
    });
    card.criterion(10, "canonical text and graphs round-trip", s(10), || {
        canonical_text_and_graphs_round_trip()
    });
    assert!(
        card.failures.is_empty(),
        "acceptance criteria failed:\n{}",
        card.failures.join("\n")
    );
}
