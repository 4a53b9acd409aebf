//! Command-line entry points. Exit codes are part of the interface so
//! the tool can gate CI jobs:
//!
//! * `check` — 0 consistent, 1 violations
//! * `refine` — 0 all obligations discharged, 2 discharged-with-assumptions,
//!   1 a premise failed
//! * `verify-refinement` — 0 holds, 1 fails (witness written), 3 inconclusive
//! * anything — 2 on usage, I/O, or parse errors
//!
//! The `PAFR_BUDGET_CEILING` environment variable overrides the default
//! exploration ceiling of every bounded check that does not set one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pafr_core::oracle::{check_trace_inclusion, EnumerationBudget, Verdict};
use pafr_core::rules::{apply_script, CheckMode, ScriptStep};
use pafr_core::stream::{Interval, NamedStreamTuple, TimedStreamPrefix};
use pafr_core::system::System;

use crate::diag::{Diagnostic, Severity, SourceSpan};
use crate::dot::emit_dot;
use crate::emit::emit_canonical;
use crate::json;
use crate::parser::{parse_architecture, Architecture};
use crate::script::{parse_script, ModeSpec};

pub const CEILING_VAR: &str = "PAFR_BUDGET_CEILING";

#[derive(Parser)]
#[command(
    name = "pafr",
    version,
    about = "Execute pipe-and-filter architectures and check refinements between them"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse an architecture and check the five well-formedness conditions.
    Check {
        /// Architecture file (.arch or .json)
        arch: PathBuf,
    },
    /// Run a system on an input trace and print every possible output trace.
    Simulate {
        /// Architecture file (.arch or .json)
        arch: PathBuf,
        /// Input trace file (.json); omitted channels stay silent
        #[arg(long)]
        input: Option<PathBuf>,
        /// Number of ticks to run (defaults to the input trace's length)
        #[arg(long)]
        ticks: Option<usize>,
        /// How many messages per interval chaotic channels may carry
        #[arg(long, default_value_t = 1)]
        bound: usize,
    },
    /// Apply a refinement script and report every proof obligation.
    Refine {
        /// Architecture file (.arch or .json)
        arch: PathBuf,
        /// Script file (.script)
        script: PathBuf,
        /// Default check mode: syntactic, bounded, sampled, or assumed
        #[arg(long)]
        mode: Option<String>,
        /// Ticks to explore in bounded checks
        #[arg(long)]
        depth: Option<usize>,
        /// Messages per interval in bounded checks
        #[arg(long)]
        bound: Option<usize>,
        /// Input histories to draw in sampled mode
        #[arg(long)]
        samples: Option<u64>,
        /// Seed for sampled mode
        #[arg(long)]
        seed: Option<u64>,
        /// Write the refined architecture here (.arch or .json)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a refined system's traces stay within an original's.
    VerifyRefinement {
        /// The original (coarser) architecture
        old: PathBuf,
        /// The refined architecture; must have the same external interface
        new: PathBuf,
        /// Ticks to explore
        #[arg(long)]
        depth: Option<usize>,
        /// Messages per interval
        #[arg(long)]
        bound: Option<usize>,
        /// Sample input histories instead of exhausting them
        #[arg(long)]
        sampled: bool,
        /// Input histories to draw when sampling
        #[arg(long)]
        samples: Option<u64>,
        /// Seed for sampling
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the counterexample if the check fails
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Write the system's data flow as a Graphviz digraph.
    ExportDot {
        /// Architecture file (.arch or .json)
        arch: PathBuf,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the architecture as a canonical JSON document.
    ExportJson {
        /// Architecture file (.arch or .json)
        arch: PathBuf,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Errors on this path all exit 2; they are reported, not returned.
type CmdResult = Result<i32, String>;

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Also handles --help/--version, which exit 0.
        Err(e) => e.exit(),
    };
    let outcome = match cli.cmd {
        Cmd::Check { arch } => check(&arch),
        Cmd::Simulate {
            arch,
            input,
            ticks,
            bound,
        } => simulate(&arch, input.as_deref(), ticks, bound),
        Cmd::Refine {
            arch,
            script,
            mode,
            depth,
            bound,
            samples,
            seed,
            out,
        } => refine(
            &arch,
            &script,
            ModeSpec {
                mode,
                depth,
                bound,
                samples,
                seed,
            },
            out.as_deref(),
        ),
        Cmd::VerifyRefinement {
            old,
            new,
            depth,
            bound,
            sampled,
            samples,
            seed,
            witness,
        } => verify_refinement(
            &old,
            &new,
            depth,
            bound,
            sampled,
            samples,
            seed,
            witness.as_deref(),
        ),
        Cmd::ExportDot { arch, out } => export_dot(&arch, out.as_deref()),
        Cmd::ExportJson { arch, out } => export_json(&arch, out.as_deref()),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_out(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn load_architecture(path: &Path) -> Result<Architecture, String> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        json::architecture_from_json(&doc).map_err(|e| format!("{}: {e}", path.display()))
    } else {
        parse_architecture(&path.display().to_string(), &text).map_err(|e| e.to_string())
    }
}

fn ceiling_from_env() -> Result<Option<u128>, String> {
    match std::env::var(CEILING_VAR) {
        Ok(v) => v
            .trim()
            .parse::<u128>()
            .map(Some)
            .map_err(|_| format!("{CEILING_VAR} must be a nonnegative integer, found '{v}'")),
        Err(_) => Ok(None),
    }
}

fn with_env_ceiling(mode: CheckMode, ceiling: Option<u128>) -> CheckMode {
    match (mode, ceiling) {
        (CheckMode::Bounded(b), Some(c)) => CheckMode::Bounded(b.with_ceiling(c)),
        (m, _) => m,
    }
}

fn interface_line(stage: usize, label: &str, s: &System) -> String {
    let names = |set: &pafr_core::stream::ChannelSet| {
        set.iter().map(|c| c.name().to_string()).collect::<Vec<_>>().join(", ")
    };
    let comps = s
        .components
        .iter()
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "stage {stage:>2} {label:<35} inputs {{{}}} outputs {{{}}} components {{{}}}",
        names(&s.inputs),
        names(&s.outputs),
        comps
    )
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn check(arch: &Path) -> CmdResult {
    let arch_doc = load_architecture(arch)?;
    let violations = arch_doc.system.check_consistency();
    if violations.is_empty() {
        println!("{}: consistent", arch.display());
        return Ok(0);
    }
    for v in &violations {
        let n = v.condition();
        let text = v.to_string();
        // The rendering already names the condition; carry the number in
        // the reference slot instead of twice in the message.
        let message = text
            .strip_prefix(&format!("condition {n}: "))
            .unwrap_or(&text)
            .to_string();
        let d = Diagnostic {
            severity: Severity::Error,
            message,
            span: SourceSpan::point(&arch.display().to_string(), 1, 1),
            reference: Some(format!("condition {n}")),
        };
        eprintln!("{d}");
    }
    Ok(1)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn resize_trace(t: &NamedStreamTuple, ticks: usize) -> Result<NamedStreamTuple, String> {
    let mut entries = BTreeMap::new();
    for (c, stream) in t.entries() {
        let mut ivs = stream.intervals().to_vec();
        ivs.resize(ticks, Interval::empty());
        entries.insert(c.clone(), TimedStreamPrefix::new(ivs));
    }
    NamedStreamTuple::new(entries).map_err(|e| e.to_string())
}

fn simulate(
    arch: &Path,
    input: Option<&Path>,
    ticks: Option<usize>,
    bound: usize,
) -> CmdResult {
    let arch_doc = load_architecture(arch)?;
    let sys = &arch_doc.system;
    let trace = match input {
        Some(path) => {
            let text = read(path)?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let t = json::trace_from_json(&doc, &sys.inputs)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            match ticks {
                Some(n) => resize_trace(&t, n)?,
                None => t,
            }
        }
        None => {
            let n = ticks.ok_or_else(|| {
                "simulate needs --input, --ticks, or both".to_string()
            })?;
            NamedStreamTuple::silent(&sys.inputs, n)
        }
    };
    let machine = sys.blackbox_with_bound(bound).map_err(|e| e.to_string())?;
    let outputs = machine.run(&trace).map_err(|e| e.to_string())?;
    let doc = serde_json::json!({
        "traces": outputs.iter().map(json::trace_to_json).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(0)
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

fn refine(
    arch: &Path,
    script: &Path,
    spec: ModeSpec,
    out: Option<&Path>,
) -> CmdResult {
    let arch_doc = load_architecture(arch)?;
    let script_text = read(script)?;
    let mut steps = parse_script(&script.display().to_string(), &script_text)
        .map_err(|e| e.to_string())?;
    let ceiling = ceiling_from_env()?;
    let default_mode = with_env_ceiling(
        spec.resolve()?.unwrap_or_else(CheckMode::default_bounded),
        ceiling,
    );
    if let Some(c) = ceiling {
        for step in &mut steps {
            let own = match step {
                ScriptStep::RemoveInputChannel { mode, .. }
                | ScriptStep::RefineBehavior { mode, .. }
                | ScriptStep::RefineBehaviorWithInvariant { mode, .. } => mode,
                _ => continue,
            };
            if let Some(m) = own.take() {
                *own = Some(with_env_ceiling(m, Some(c)));
            }
        }
    }
    let outcome = apply_script(&arch_doc.system, &steps, &arch_doc.defs, &default_mode)
        .map_err(|e| e.to_string())?;

    println!("{}", interface_line(0, "(initial)", &outcome.stages[0]));
    for (i, stage) in outcome.stages.iter().enumerate().skip(1) {
        let label = format!("after {}", steps[i - 1].rule_name());
        println!("{}", interface_line(i, &label, stage));
    }
    if !outcome.ledger.obligations.is_empty() {
        println!("{}", outcome.ledger.render());
    }
    match (&outcome.result, outcome.ledger.exit_code()) {
        (Some(_), 0) => println!("refinement holds: every obligation discharged"),
        (Some(_), _) => println!("refinement holds under assumptions"),
        (None, _) => println!(
            "refinement rejected at step {} of {}",
            outcome.stages.len(),
            steps.len()
        ),
    }
    if let Some(path) = out {
        match &outcome.result {
            Some(sys) => {
                let rendered = if path.extension().is_some_and(|e| e == "json") {
                    let arch_out = Architecture {
                        alphabets: arch_doc.alphabets.clone(),
                        defs: arch_doc.defs.clone(),
                        system: sys.clone(),
                    };
                    let mut s = serde_json::to_string_pretty(&json::architecture_to_json(
                        &arch_out,
                    ))
                    .expect("serializable");
                    s.push('\n');
                    s
                } else {
                    emit_canonical(sys)
                };
                write_out(path, &rendered)?;
            }
            None => eprintln!(
                "note: not writing {}; the script did not go through",
                path.display()
            ),
        }
    }
    Ok(outcome.ledger.exit_code())
}

// ---------------------------------------------------------------------------
// verify-refinement
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn verify_refinement(
    old: &Path,
    new: &Path,
    depth: Option<usize>,
    bound: Option<usize>,
    sampled: bool,
    samples: Option<u64>,
    seed: Option<u64>,
    witness: Option<&Path>,
) -> CmdResult {
    if !sampled && (samples.is_some() || seed.is_some()) {
        return Err("--samples/--seed need --sampled".to_string());
    }
    let old_doc = load_architecture(old)?;
    let new_doc = load_architecture(new)?;
    let depth = depth.unwrap_or(5);
    let bound = bound.unwrap_or(1);
    let mut budget = if sampled {
        EnumerationBudget::sampled(depth, bound, samples.unwrap_or(256), seed.unwrap_or(0))
    } else {
        EnumerationBudget::exhaustive(depth, bound)
    };
    if let Some(c) = ceiling_from_env()? {
        budget = budget.with_ceiling(c);
    }
    let verdict = check_trace_inclusion(&old_doc.system, &new_doc.system, &budget)
        .map_err(|e| e.to_string())?;
    match verdict {
        Verdict::Holds { explored } => {
            println!(
                "refinement holds up to {depth} ticks, {bound} per interval \
                 ({explored} configurations explored)"
            );
            Ok(0)
        }
        Verdict::Fails(w) => {
            println!("refinement fails: {}", w.note);
            print!("{w}");
            let path = witness
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("witness.json"));
            let doc = json::witness_to_json(&w);
            write_out(
                &path,
                &format!(
                    "{}\n",
                    serde_json::to_string_pretty(&doc).expect("serializable")
                ),
            )?;
            println!("witness written to {}", path.display());
            Ok(1)
        }
        Verdict::Inconclusive { explored, reason } => {
            println!("inconclusive after {explored} configurations: {reason}");
            Ok(3)
        }
    }
}

// ---------------------------------------------------------------------------
// exports
// ---------------------------------------------------------------------------

fn export_dot(arch: &Path, out: Option<&Path>) -> CmdResult {
    let arch_doc = load_architecture(arch)?;
    let dot = emit_dot(&arch_doc.system);
    match out {
        Some(path) => write_out(path, &dot)?,
        None => print!("{dot}"),
    }
    Ok(0)
}

fn export_json(arch: &Path, out: Option<&Path>) -> CmdResult {
    let arch_doc = load_architecture(arch)?;
    let doc = json::architecture_to_json(&arch_doc);
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&doc).expect("serializable")
    );
    match out {
        Some(path) => write_out(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
