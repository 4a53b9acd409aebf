//! Seeded generators for machines, systems and input streams, for tests
//! that cross-check the engine against independent computations on bulk
//! random instances. Everything is deterministic in the seed.
//!
//! Generated systems are consistent by construction: component outputs
//! are fresh disjoint channels, inputs are drawn only from produced
//! channels and declared environment channels, and the system outputs are
//! a subset of what the components produce. All channels share one small
//! alphabet so register contents stay inside every channel's value space
//! no matter how messages are routed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::behavior::{Control, EmitRule, Guard, GuardCond, Machine, Register, TableDef, TransRule};
use crate::expr::Expr;
use crate::stream::{Chan, ChannelSet, Interval, NamedStreamTuple};
use crate::system::{Component, System};
use crate::value::{Alphabet, Value};

/// Size knobs for the generators. The defaults keep exhaustive
/// cross-checks affordable.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Components per system (at least 1).
    pub max_components: usize,
    /// Output channels per component (at least 1).
    pub max_outputs: usize,
    /// Environment channels the system may listen to.
    pub max_environment: usize,
    /// Control states per machine (at least 1).
    pub max_controls: usize,
    /// Registers per machine.
    pub max_registers: usize,
    /// Emission options per control state (at least 1).
    pub max_emit_options: usize,
    /// Transition rules per control state.
    pub max_rules: usize,
    /// Longest literal interval a machine emits or stores.
    pub interval_bound: usize,
    /// Values in the shared channel alphabet (at least 1).
    pub alphabet_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> GeneratorConfig {
        GeneratorConfig {
            max_components: 3,
            max_outputs: 2,
            max_environment: 2,
            max_controls: 3,
            max_registers: 2,
            max_emit_options: 2,
            max_rules: 2,
            interval_bound: 1,
            alphabet_size: 2,
        }
    }
}

impl GeneratorConfig {
    /// The one alphabet every generated channel uses.
    pub fn alphabet(&self) -> Alphabet {
        let names = ["a", "b", "c", "d", "e", "f"];
        let size = self.alphabet_size.clamp(1, names.len());
        Alphabet::new(
            "shared",
            names[..size].iter().map(|n| Value::sym(n)).collect(),
        )
    }
}

fn random_interval(rng: &mut ChaCha8Rng, alphabet: &Alphabet, bound: usize) -> Interval {
    let len = rng.gen_range(0..=bound);
    Interval::of(
        (0..len)
            .map(|_| alphabet.values()[rng.gen_range(0..alphabet.len())].clone())
            .collect(),
    )
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

/// A state-dependent expression: a register or a literal interval.
fn random_emit_expr(
    rng: &mut ChaCha8Rng,
    registers: &[Register],
    alphabet: &Alphabet,
    bound: usize,
) -> Expr {
    if !registers.is_empty() && rng.gen_bool(0.5) {
        Expr::Reg(pick(rng, registers).name.clone())
    } else {
        Expr::interval(random_interval(rng, alphabet, bound).0)
    }
}

/// An update expression: an input read, a register, or a literal.
fn random_update_expr(
    rng: &mut ChaCha8Rng,
    inputs: &[Chan],
    registers: &[Register],
    alphabet: &Alphabet,
    bound: usize,
) -> Expr {
    let mut options: Vec<u8> = vec![2];
    if !inputs.is_empty() {
        options.push(0);
    }
    if !registers.is_empty() {
        options.push(1);
    }
    match pick(rng, &options) {
        0 => Expr::Input(pick(rng, inputs).clone()),
        1 => Expr::Reg(pick(rng, registers).name.clone()),
        _ => Expr::interval(random_interval(rng, alphabet, bound).0),
    }
}

fn random_guard(rng: &mut ChaCha8Rng, inputs: &[Chan], alphabet: &Alphabet, bound: usize) -> Guard {
    if inputs.is_empty() || rng.gen_bool(0.4) {
        return Guard::always();
    }
    let conds = (0..rng.gen_range(1..=inputs.len().min(2)))
        .map(|_| {
            let c = pick(rng, inputs).clone();
            let cond = match rng.gen_range(0..4) {
                0 => GuardCond::Any,
                1 => GuardCond::Empty,
                2 => GuardCond::NonEmpty,
                _ => GuardCond::OneOf(
                    (0..rng.gen_range(1..=2))
                        .map(|_| random_interval(rng, alphabet, bound))
                        .collect(),
                ),
            };
            (c, cond)
        })
        .collect();
    Guard { conds }
}

/// A random machine over the given interface, following the
/// emit-then-step discipline by construction.
pub fn random_machine(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    inputs: ChannelSet,
    outputs: ChannelSet,
) -> Machine {
    let alphabet = cfg.alphabet();
    let input_vec: Vec<Chan> = inputs.iter().cloned().collect();
    let output_vec: Vec<Chan> = outputs.iter().cloned().collect();
    let registers: Vec<Register> = (0..rng.gen_range(0..=cfg.max_registers))
        .map(|i| Register {
            name: format!("r{i}"),
            init: Value::Seq(random_interval(rng, &alphabet, cfg.interval_bound).0),
        })
        .collect();
    let n_controls = rng.gen_range(1..=cfg.max_controls.max(1));
    let controls = (0..n_controls)
        .map(|i| {
            let emits = (0..rng.gen_range(1..=cfg.max_emit_options.max(1)))
                .map(|_| EmitRule {
                    outputs: output_vec
                        .iter()
                        .map(|c| {
                            (
                                c.clone(),
                                random_emit_expr(rng, &registers, &alphabet, cfg.interval_bound),
                            )
                        })
                        .collect(),
                })
                .collect();
            let rules = (0..rng.gen_range(0..=cfg.max_rules))
                .map(|_| {
                    let guard = random_guard(rng, &input_vec, &alphabet, cfg.interval_bound);
                    let mut updates = Vec::new();
                    for r in &registers {
                        if rng.gen_bool(0.7) {
                            updates.push((
                                r.name.clone(),
                                random_update_expr(
                                    rng,
                                    &input_vec,
                                    &registers,
                                    &alphabet,
                                    cfg.interval_bound,
                                ),
                            ));
                        }
                    }
                    TransRule {
                        guard,
                        updates,
                        target: rng.gen_range(0..n_controls),
                    }
                })
                .collect();
            Control {
                name: format!("s{i}"),
                emits,
                rules,
            }
        })
        .collect();
    Machine::table(TableDef {
        name: "generated".to_string(),
        inputs: input_vec,
        outputs: output_vec,
        registers,
        controls,
        init: 0,
    })
    .expect("generated definitions are well formed by construction")
}

/// A random consistent system: components with disjoint fresh outputs,
/// inputs wired to produced channels or environment channels (feedback
/// loops included), and a nonempty observable interface.
pub fn random_system(seed: u64, cfg: &GeneratorConfig) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = cfg.alphabet();
    let n = rng.gen_range(1..=cfg.max_components.max(1));

    let environment: Vec<Chan> = (0..rng.gen_range(1..=cfg.max_environment.max(1)))
        .map(|i| Chan::new(&format!("E{i}"), alphabet.clone()))
        .collect();
    let per_component: Vec<Vec<Chan>> = (0..n)
        .map(|i| {
            (0..rng.gen_range(1..=cfg.max_outputs.max(1)))
                .map(|j| Chan::new(&format!("C{i}_{j}"), alphabet.clone()))
                .collect()
        })
        .collect();
    let produced: Vec<Chan> = per_component.iter().flatten().cloned().collect();

    let mut used_env = ChannelSet::new();
    let components: Vec<Component> = (0..n)
        .map(|i| {
            let mut inputs = ChannelSet::new();
            // Listen to a few channels, produced or environmental.
            for _ in 0..rng.gen_range(0..=2) {
                if rng.gen_bool(0.5) && !produced.is_empty() {
                    inputs.insert(pick(&mut rng, &produced).clone());
                } else {
                    let c = pick(&mut rng, &environment).clone();
                    used_env.insert(c.clone());
                    inputs.insert(c);
                }
            }
            let outputs: ChannelSet = per_component[i].iter().cloned().collect();
            let machine = random_machine(&mut rng, cfg, inputs, outputs);
            Component::new(&format!("comp{i}"), machine)
        })
        .collect();

    // Observe at least one produced channel.
    let mut outputs = ChannelSet::new();
    outputs.insert(pick(&mut rng, &produced).clone());
    for c in &produced {
        if rng.gen_bool(0.3) {
            outputs.insert(c.clone());
        }
    }

    let system = System {
        name: format!("random_{seed}"),
        inputs: used_env,
        outputs,
        components,
    };
    system
        .ensure_consistent()
        .expect("generated systems are consistent by construction");
    system
}

/// A random input stream over the channels: `ticks` intervals per channel,
/// each at most `interval_bound` messages long.
pub fn random_input(
    rng: &mut ChaCha8Rng,
    channels: &ChannelSet,
    ticks: usize,
    interval_bound: usize,
) -> NamedStreamTuple {
    let mut tuple = NamedStreamTuple::silent(channels, 0);
    for _ in 0..ticks {
        let slice = channels
            .iter()
            .map(|c| {
                (
                    c.clone(),
                    random_interval(rng, c.alphabet(), interval_bound),
                )
            })
            .collect();
        tuple
            .push_slice(&slice)
            .expect("slices cover the domain by construction");
    }
    tuple
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let cfg = GeneratorConfig::default();
        assert_eq!(random_system(7, &cfg), random_system(7, &cfg));
        assert_ne!(random_system(7, &cfg), random_system(8, &cfg));
    }

    #[test]
    fn generated_systems_execute_under_the_network_semantics() {
        let cfg = GeneratorConfig::default();
        for seed in 0..20 {
            let system = random_system(seed, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
            let input = random_input(&mut rng, &system.inputs, 3, cfg.interval_bound);
            let runs = system.simulate(&input).unwrap();
            assert!(!runs.is_empty(), "seed {seed} produced no behavior");
            for out in runs {
                assert_eq!(out.tick_len(), 3);
            }
        }
    }

    #[test]
    fn generated_machines_are_time_guarded() {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let alphabet = cfg.alphabet();
        for i in 0..10 {
            let inputs: ChannelSet = [Chan::new("X", alphabet.clone())].into_iter().collect();
            let outputs: ChannelSet = [Chan::new(&format!("Y{i}"), alphabet.clone())]
                .into_iter()
                .collect();
            let m = random_machine(&mut rng, &cfg, inputs, outputs);
            let violation = m.check_time_guardedness(3, 1).unwrap();
            assert!(violation.is_none(), "machine {i} is not time guarded");
        }
    }
}
