//! The frontend against the library's own model of the store example:
//! the fixture files must parse to exactly the systems, machines, and
//! scripts the library builds in code, and both serializations must
//! round-trip losslessly.

use std::path::PathBuf;

use pafr_cli::dot::{emit_dot, validate_dot};
use pafr_cli::emit::emit_canonical;
use pafr_cli::json::{architecture_from_json, architecture_to_json};
use pafr_cli::parser::{parse_architecture, Architecture};
use pafr_core::corpus;
use pafr_core::oracle::InvariantKind;
use pafr_core::random::{random_system, GeneratorConfig};
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name);
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn parse_fixture(name: &str) -> Architecture {
    parse_architecture(name, &fixture(name)).unwrap_or_else(|e| panic!("{e}"))
}

const ARCH_FIXTURES: &[&str] = &[
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

// ---------------------------------------------------------------------------
// The store fixture against the in-code model
// ---------------------------------------------------------------------------

#[test]
fn store_fixture_matches_the_library_model() {
    let arch = parse_fixture("db_initial.arch");
    assert_eq!(arch.system, corpus::db_initial());
    assert_eq!(arch.defs.machines, corpus::build_machines());
    assert_eq!(arch.defs.channels["D"], corpus::chan_d());
    assert_eq!(arch.defs.channels["R"], corpus::chan_r());

    let parsed = &arch.defs.invariants["roundtrip"];
    let model = corpus::roundtrip_invariant();
    match (&parsed.kind, &model.kind) {
        (InvariantKind::Equations(got), InvariantKind::Equations(want)) => {
            assert_eq!(got, want)
        }
        other => panic!("expected equation invariants, got {other:?}"),
    }
}

#[test]
fn refactor_script_fixture_matches_the_library_model() {
    let steps =
        pafr_cli::script::parse_script("delta_refactor.script", &fixture("delta_refactor.script"))
            .expect("the script fixture parses");
    assert_eq!(steps, corpus::refactoring_script());
}

#[test]
fn minimal_file_infers_its_boundary() {
    let arch = parse_fixture("minimal.arch");
    assert_eq!(arch.system.name, "main");
    assert_eq!(arch.system.components.len(), 1);
    assert_eq!(arch.system.components[0].name, "X");
    let names = |s: &pafr_core::stream::ChannelSet| {
        s.iter().map(|c| c.name().to_string()).collect::<Vec<_>>()
    };
    assert_eq!(names(&arch.system.inputs), ["A"]);
    assert_eq!(names(&arch.system.outputs), ["B"]);
    assert!(arch.system.check_consistency().is_empty());
}

#[test]
fn condition_fixtures_break_and_repair_as_labelled() {
    for n in 1..=5u8 {
        let broken = parse_fixture(&format!("cond{n}_broken.arch"));
        let violations = broken.system.check_consistency();
        assert_eq!(
            violations.len(),
            1,
            "cond{n}_broken should breach exactly one condition, got {violations:?}"
        );
        assert_eq!(violations[0].condition(), n);

        let repaired = parse_fixture(&format!("cond{n}_repaired.arch"));
        assert!(
            repaired.system.check_consistency().is_empty(),
            "cond{n}_repaired should be consistent"
        );
    }
}

#[test]
fn a_second_system_block_is_rejected() {
    let text = "alphabet Bit { 0 1 }\n\
                channel A : Bit\n\
                channel B : Bit\n\
                machine Copy { echo A -> B }\n\
                component X : Copy\n\
                system s { inputs: A outputs: B }\n\
                system t { inputs: A outputs: B }\n";
    let e = parse_architecture("two.arch", text).unwrap_err();
    assert!(e.message.contains("multiple systems"), "{e}");
    assert_eq!(e.span.line, 7);
}

#[test]
fn parse_errors_point_at_the_offending_token() {
    let text = "alphabet Bit { 0 1 }\n\
                channel A : Bit\n\
                machine M {\n\
                  inputs: A Missing\n\
                }\n";
    let e = parse_architecture("bad.arch", text).unwrap_err();
    assert!(e.message.contains("unknown channel 'Missing'"), "{e}");
    assert_eq!((e.span.line, e.span.column), (4, 11));
}

// ---------------------------------------------------------------------------
// Round trips
// ---------------------------------------------------------------------------

#[test]
fn canonical_text_is_a_fixed_point() {
    for name in ARCH_FIXTURES {
        let first = parse_fixture(name);
        let text1 = emit_canonical(&first.system);
        let second = parse_architecture(name, &text1)
            .unwrap_or_else(|e| panic!("{name} canonical text reparses: {e}"));
        assert_eq!(first.system, second.system, "{name} round-trips");
        let text2 = emit_canonical(&second.system);
        assert_eq!(text1, text2, "{name} reaches a fixed point in one round");
    }
}

#[test]
fn folded_store_round_trips_with_sub_systems() {
    let sys = corpus::db_final();
    let text = emit_canonical(&sys);
    let back = parse_architecture("db_final.arch", &text).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(back.system, sys);
    assert_eq!(emit_canonical(&back.system), text);
}

#[test]
fn canonical_json_round_trips_the_fixtures() {
    for name in ARCH_FIXTURES {
        let first = parse_fixture(name);
        let doc = architecture_to_json(&first);
        let back = architecture_from_json(&doc)
            .unwrap_or_else(|e| panic!("{name} JSON reloads: {e}"));
        assert_eq!(first.system, back.system, "{name} system survives JSON");
        assert_eq!(
            first.defs.machines, back.defs.machines,
            "{name} machines survive JSON"
        );
        assert_eq!(
            first.defs.channels, back.defs.channels,
            "{name} channels survive JSON"
        );
    }
}

#[test]
fn folded_store_round_trips_through_json() {
    let arch = Architecture {
        alphabets: Default::default(),
        defs: corpus::definitions(),
        system: corpus::db_final(),
    };
    let doc = architecture_to_json(&arch);
    let back = architecture_from_json(&doc).expect("reloads");
    assert_eq!(back.system, arch.system);
    // The opaque psi predicate has no JSON form and is dropped; the
    // equation invariant survives.
    assert!(back.defs.invariants.contains_key("roundtrip"));
    assert!(!back.defs.invariants.contains_key("psi"));
}

#[test]
fn dot_export_is_well_formed_for_every_fixture() {
    for name in ARCH_FIXTURES {
        let arch = parse_fixture(name);
        let dot = emit_dot(&arch.system);
        validate_dot(&dot).unwrap_or_else(|e| panic!("{name}: {e}\n{dot}"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Generated systems — several components, registers, guards, multiple
    // emission options — survive a text round trip exactly.
    #[test]
    fn canonical_text_round_trips_generated_systems(seed in 0u64..500) {
        let sys = random_system(seed, &GeneratorConfig::default());
        let text = emit_canonical(&sys);
        let back = parse_architecture("gen.arch", &text)
            .unwrap_or_else(|e| panic!("generated system reparses: {e}\n{text}"));
        prop_assert_eq!(&back.system, &sys);
        prop_assert_eq!(emit_canonical(&back.system), text);
    }

    #[test]
    fn canonical_json_round_trips_generated_systems(seed in 0u64..500) {
        let sys = random_system(seed, &GeneratorConfig::default());
        let arch = Architecture {
            alphabets: Default::default(),
            defs: Default::default(),
            system: sys,
        };
        let doc = architecture_to_json(&arch);
        let back = architecture_from_json(&doc).expect("generated system reloads");
        prop_assert_eq!(back.system, arch.system);
    }
}
