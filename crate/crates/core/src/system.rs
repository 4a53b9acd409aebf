//! Systems: named components wired by channel name, with well-formedness
//! conditions and two independent ways to compute the composite behavior.

use std::collections::BTreeSet;
use std::fmt;

use crate::behavior::{InputValuation, MState, Machine};
use crate::error::{Error, Result};
use crate::stream::{intervals_up_to, Chan, ChannelSet, Interval, NamedStreamTuple};

/// A named component: a machine instance in a system.
///
/// `sub` remembers the component network a fold collapsed into this
/// component, so a later expand can unfold it again. Components built
/// directly carry no sub-structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub name: String,
    pub machine: Machine,
    pub sub: Option<Box<System>>,
}

impl Component {
    pub fn new(name: &str, machine: Machine) -> Component {
        Component {
            name: name.to_string(),
            machine,
            sub: None,
        }
    }

    pub fn inputs(&self) -> &ChannelSet {
        &self.machine.inputs
    }

    pub fn outputs(&self) -> &ChannelSet {
        &self.machine.outputs
    }
}

/// A component network with an external interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct System {
    pub name: String,
    pub inputs: ChannelSet,
    pub outputs: ChannelSet,
    pub components: Vec<Component>,
}

/// A broken well-formedness condition. The numbering is stable and shows
/// up in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// 1: two components share a name.
    DuplicateComponentName { name: String },
    /// 2: two components produce the same channel.
    OverlappingOutputs {
        chan: String,
        first: String,
        second: String,
    },
    /// 3: a system input is also produced internally.
    SystemInputProduced { chan: String, comp: String },
    /// 4: a component reads a channel nobody provides.
    UnsourcedInput { comp: String, chan: String },
    /// 5: a system output no component produces.
    UnsourcedSystemOutput { chan: String },
}

impl Violation {
    pub fn condition(&self) -> u8 {
        match self {
            Violation::DuplicateComponentName { .. } => 1,
            Violation::OverlappingOutputs { .. } => 2,
            Violation::SystemInputProduced { .. } => 3,
            Violation::UnsourcedInput { .. } => 4,
            Violation::UnsourcedSystemOutput { .. } => 5,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateComponentName { name } => {
                write!(f, "condition 1: component name '{name}' is declared twice")
            }
            Violation::OverlappingOutputs {
                chan,
                first,
                second,
            } => write!(
                f,
                "condition 2: channel '{chan}' is an output of both '{first}' and '{second}'"
            ),
            Violation::SystemInputProduced { chan, comp } => write!(
                f,
                "condition 3: system input '{chan}' is produced by component '{comp}'"
            ),
            Violation::UnsourcedInput { comp, chan } => write!(
                f,
                "condition 4: component '{comp}' reads '{chan}', which is neither a \
                 component output nor a system input"
            ),
            Violation::UnsourcedSystemOutput { chan } => write!(
                f,
                "condition 5: system output '{chan}' is not produced by any component"
            ),
        }
    }
}

impl System {
    pub fn component(&self, name: &str) -> Result<&Component> {
        self.components
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Interface(format!("no component named '{name}'")))
    }

    pub fn component_mut(&mut self, name: &str) -> Result<&mut Component> {
        self.components
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Interface(format!("no component named '{name}'")))
    }

    /// Union of all component outputs.
    pub fn component_outputs(&self) -> ChannelSet {
        self.components
            .iter()
            .flat_map(|c| c.outputs().clone())
            .collect()
    }

    /// Union of all component inputs.
    pub fn component_inputs(&self) -> ChannelSet {
        self.components
            .iter()
            .flat_map(|c| c.inputs().clone())
            .collect()
    }

    /// Every channel the system mentions anywhere.
    pub fn all_channels(&self) -> ChannelSet {
        let mut all = self.inputs.clone();
        all.extend(self.outputs.iter().cloned());
        all.extend(self.component_outputs());
        all.extend(self.component_inputs());
        all
    }

    pub fn chan(&self, name: &str) -> Result<Chan> {
        self.all_channels()
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    /// Check the five well-formedness conditions and report every breach.
    pub fn check_consistency(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for c in &self.components {
            if !names.insert(&c.name) {
                out.push(Violation::DuplicateComponentName {
                    name: c.name.clone(),
                });
            }
        }
        let mut producer: std::collections::BTreeMap<&Chan, &str> =
            std::collections::BTreeMap::new();
        for c in &self.components {
            for ch in c.outputs() {
                if let Some(first) = producer.get(ch) {
                    out.push(Violation::OverlappingOutputs {
                        chan: ch.name().to_string(),
                        first: first.to_string(),
                        second: c.name.clone(),
                    });
                } else {
                    producer.insert(ch, &c.name);
                }
            }
        }
        let produced = self.component_outputs();
        for ch in &self.inputs {
            if produced.contains(ch) {
                let comp = self
                    .components
                    .iter()
                    .find(|c| c.outputs().contains(ch))
                    .map(|c| c.name.clone())
                    .unwrap_or_default();
                out.push(Violation::SystemInputProduced {
                    chan: ch.name().to_string(),
                    comp,
                });
            }
        }
        for c in &self.components {
            for ch in c.inputs() {
                if !produced.contains(ch) && !self.inputs.contains(ch) {
                    out.push(Violation::UnsourcedInput {
                        comp: c.name.clone(),
                        chan: ch.name().to_string(),
                    });
                }
            }
        }
        for ch in &self.outputs {
            if !produced.contains(ch) {
                out.push(Violation::UnsourcedSystemOutput {
                    chan: ch.name().to_string(),
                });
            }
        }
        out
    }

    pub fn ensure_consistent(&self) -> Result<()> {
        let violations = self.check_consistency();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Inconsistent(violations))
        }
    }

    /// Output channels of the composite that stay symbolic: chaotic in
    /// their component and read by nobody.
    pub fn symbolic_outputs(&self) -> ChannelSet {
        let reads = self.component_inputs();
        self.components
            .iter()
            .flat_map(|c| c.machine.chaotic.clone())
            .filter(|ch| self.outputs.contains(ch) && !reads.contains(ch))
            .collect()
    }

    /// The composite behavior over the system interface.
    pub fn blackbox(&self) -> Result<Machine> {
        self.blackbox_with_bound(1)
    }

    pub fn blackbox_with_bound(&self, chaos_bound: usize) -> Result<Machine> {
        self.ensure_consistent()?;
        Machine::compose(
            self.components.iter().map(|c| c.machine.clone()).collect(),
            self.inputs.clone(),
            self.outputs.clone(),
            chaos_bound,
        )
    }

    /// Like `blackbox`, but observing every component output — used to
    /// check properties that mention internal channels.
    pub fn glassbox_with_bound(&self, chaos_bound: usize) -> Result<Machine> {
        self.ensure_consistent()?;
        Machine::compose(
            self.components.iter().map(|c| c.machine.clone()).collect(),
            self.inputs.clone(),
            self.component_outputs(),
            chaos_bound,
        )
    }

    /// Package the whole system as one component.
    pub fn as_component(&self, name: &str) -> Result<Component> {
        Ok(Component::new(name, self.blackbox()?))
    }

    /// Run the composite on an input history.
    pub fn simulate(&self, input: &NamedStreamTuple) -> Result<BTreeSet<NamedStreamTuple>> {
        self.blackbox()?.run(input)
    }

    /// Independent reference semantics for the composite: enumerate
    /// candidate valuations of every component output channel, tick by
    /// tick, and keep exactly those each component can actually produce on
    /// what it reads. Output intervals longer than `interval_bound` are
    /// outside this enumeration, so pick it at least as large as anything
    /// the machines can emit.
    ///
    /// This deliberately shares no code with the network execution in
    /// `blackbox`: it is the cross-check for it.
    pub fn blackbox_oracle(
        &self,
        input: &NamedStreamTuple,
        interval_bound: usize,
    ) -> Result<BTreeSet<NamedStreamTuple>> {
        self.ensure_consistent()?;
        if input.domain() != self.inputs {
            return Err(Error::Interface(
                "input channels do not match the system's inputs".to_string(),
            ));
        }
        let out_chans: Vec<Chan> = self.component_outputs().into_iter().collect();
        let choices: Vec<Vec<Interval>> = out_chans
            .iter()
            .map(|c| intervals_up_to(c.alphabet(), interval_bound))
            .collect();
        let machines: Vec<&Machine> = self.components.iter().map(|c| &c.machine).collect();

        // candidate = per-component state sets + committed output history
        let init: Vec<BTreeSet<MState>> = machines
            .iter()
            .map(|m| [m.init_state()].into_iter().collect())
            .collect();
        let empty_out = NamedStreamTuple::silent(&out_chans.iter().cloned().collect(), 0);
        let mut frontier: BTreeSet<(Vec<BTreeSet<MState>>, NamedStreamTuple)> =
            [(init, empty_out)].into_iter().collect();

        for tick in 0..input.tick_len() {
            let in_slice = input.slice(tick)?;
            let mut next = BTreeSet::new();
            for (states, history) in &frontier {
                // enumerate this tick's candidate intervals per channel
                let mut stack: Vec<(usize, InputValuation)> =
                    vec![(0, InputValuation::new())];
                while let Some((idx, assign)) = stack.pop() {
                    if idx < out_chans.len() {
                        for iv in &choices[idx] {
                            let mut assign = assign.clone();
                            assign.insert(out_chans[idx].clone(), iv.clone());
                            stack.push((idx + 1, assign));
                        }
                        continue;
                    }
                    // full candidate valuation for this tick
                    let mut full = in_slice.clone();
                    full.extend(assign.clone());
                    let mut new_states = Vec::with_capacity(machines.len());
                    let mut alive = true;
                    for (m, set) in machines.iter().zip(states) {
                        let mut comp_in = InputValuation::new();
                        for ch in &m.inputs {
                            if let Some(iv) = full.get(ch) {
                                comp_in.insert(ch.clone(), iv.clone());
                            }
                        }
                        let concrete = m.concrete_outputs();
                        let want: InputValuation = assign
                            .iter()
                            .filter(|(c, _)| concrete.contains(c))
                            .map(|(c, iv)| (c.clone(), iv.clone()))
                            .collect();
                        let mut surviving = BTreeSet::new();
                        for s in set {
                            for (o, s2) in m.tick_options(s, &comp_in)? {
                                if o == want {
                                    surviving.insert(s2);
                                }
                            }
                        }
                        if surviving.is_empty() {
                            alive = false;
                            break;
                        }
                        new_states.push(surviving);
                    }
                    if alive {
                        let mut history = history.clone();
                        history.push_slice(&assign)?;
                        next.insert((new_states, history));
                    }
                }
            }
            frontier = next;
        }

        // observe only the system outputs, dropping the symbolic ones
        let observable: ChannelSet = self
            .outputs
            .difference(&self.symbolic_outputs())
            .cloned()
            .collect();
        let mut out = BTreeSet::new();
        for (_, history) in frontier {
            out.insert(history.restrict(&observable)?);
        }
        Ok(out)
    }

    /// Rename a channel everywhere in the system.
    pub fn renamed_channel(&self, old: &str, new: &Chan) -> System {
        let rename_set = |s: &ChannelSet| -> ChannelSet {
            s.iter()
                .map(|c| if c.name() == old { new.clone() } else { c.clone() })
                .collect()
        };
        System {
            name: self.name.clone(),
            inputs: rename_set(&self.inputs),
            outputs: rename_set(&self.outputs),
            components: self
                .components
                .iter()
                .map(|c| Component {
                    name: c.name.clone(),
                    machine: c.machine.renamed_channel(old, new),
                    sub: c
                        .sub
                        .as_ref()
                        .map(|s| Box::new(s.renamed_channel(old, new))),
                })
                .collect(),
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "system {} ({} components, in: {}, out: {})",
            self.name,
            self.components.len(),
            self.inputs
                .iter()
                .map(|c| c.name().to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.outputs
                .iter()
                .map(|c| c.name().to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{Control, EmitRule, Guard, Register, TableDef, TransRule};
    use crate::expr::Expr;
    use crate::value::{Alphabet, Value};
    use std::collections::BTreeMap;

    fn ab() -> Alphabet {
        Alphabet::new("AB", vec![Value::sym("a"), Value::sym("b")])
    }

    fn chan(n: &str) -> Chan {
        Chan::new(n, ab())
    }

    fn latch(name: &str, input: &str, output: &str) -> Machine {
        Machine::table(TableDef {
            name: name.to_string(),
            inputs: vec![chan(input)],
            outputs: vec![chan(output)],
            registers: vec![Register {
                name: "held".to_string(),
                init: Value::empty_seq(),
            }],
            controls: vec![Control {
                name: "run".to_string(),
                emits: vec![EmitRule {
                    outputs: [(chan(output), Expr::Reg("held".to_string()))]
                        .into_iter()
                        .collect(),
                }],
                rules: vec![TransRule {
                    guard: Guard::always(),
                    updates: vec![("held".to_string(), Expr::Input(chan(input)))],
                    target: 0,
                }],
            }],
            init: 0,
        })
        .unwrap()
    }

    fn pipeline() -> System {
        System {
            name: "pipe".to_string(),
            inputs: [chan("I")].into_iter().collect(),
            outputs: [chan("O")].into_iter().collect(),
            components: vec![
                Component::new("first", latch("first", "I", "M")),
                Component::new("second", latch("second", "M", "O")),
            ],
        }
    }

    fn input(spec: &[&[&str]]) -> NamedStreamTuple {
        let mut m = BTreeMap::new();
        m.insert(
            chan("I"),
            crate::stream::TimedStreamPrefix::new(
                spec.iter()
                    .map(|ivs| Interval::of(ivs.iter().map(|s| Value::sym(s)).collect()))
                    .collect(),
            ),
        );
        NamedStreamTuple::new(m).unwrap()
    }

    #[test]
    fn consistent_system_reports_no_violations() {
        assert!(pipeline().check_consistency().is_empty());
    }

    #[test]
    fn each_condition_is_detected() {
        let mut s = pipeline();
        s.components.push(Component::new("first", latch("x", "I", "Z")));
        let v = s.check_consistency();
        assert!(v.iter().any(|v| v.condition() == 1));

        let mut s = pipeline();
        s.components.push(Component::new("third", latch("x", "I", "M")));
        assert!(s.check_consistency().iter().any(|v| v.condition() == 2));

        let mut s = pipeline();
        s.inputs.insert(chan("M"));
        assert!(s.check_consistency().iter().any(|v| v.condition() == 3));

        let mut s = pipeline();
        s.components[0].machine = s.components[0]
            .machine
            .with_added_input(chan("GHOST"))
            .unwrap();
        assert!(s.check_consistency().iter().any(|v| v.condition() == 4));

        let mut s = pipeline();
        s.outputs.insert(chan("Z"));
        assert!(s.check_consistency().iter().any(|v| v.condition() == 5));
    }

    #[test]
    fn blackbox_runs_the_network() {
        let s = pipeline();
        let outs = s.simulate(&input(&[&["a"], &["b"], &[], &[]])).unwrap();
        assert_eq!(outs.len(), 1);
        let got = outs.into_iter().next().unwrap();
        assert_eq!(
            got.get(&chan("O")).unwrap().intervals(),
            &[
                Interval::empty(),
                Interval::empty(),
                Interval::of(vec![Value::sym("a")]),
                Interval::of(vec![Value::sym("b")]),
            ]
        );
    }

    #[test]
    fn glassbox_exposes_internal_channels() {
        let s = pipeline();
        let g = s.glassbox_with_bound(1).unwrap();
        assert!(g.outputs.contains(&chan("M")));
        let outs = g.run(&input(&[&["a"], &[]])).unwrap();
        let got = outs.into_iter().next().unwrap();
        assert_eq!(
            got.get(&chan("M")).unwrap().intervals(),
            &[Interval::empty(), Interval::of(vec![Value::sym("a")])]
        );
    }

    #[test]
    fn oracle_agrees_with_the_network_on_a_deterministic_system() {
        let s = pipeline();
        for spec in [
            &[&["a"][..], &[][..]][..],
            &[&["b"][..], &["a"][..]][..],
            &[&[][..], &[][..]][..],
        ] {
            let i = input(spec);
            assert_eq!(s.simulate(&i).unwrap(), s.blackbox_oracle(&i, 1).unwrap());
        }
    }

    #[test]
    fn oracle_agrees_with_the_network_on_a_nondeterministic_system() {
        // one component nondeterministically emits "a" or nothing each tick,
        // a second latches it through
        let coin = Machine::table(TableDef {
            name: "coin".to_string(),
            inputs: vec![],
            outputs: vec![chan("M")],
            registers: vec![],
            controls: vec![Control {
                name: "s".to_string(),
                emits: vec![
                    EmitRule::default(),
                    EmitRule {
                        outputs: [(chan("M"), Expr::interval(vec![Value::sym("a")]))]
                            .into_iter()
                            .collect(),
                    },
                ],
                rules: vec![],
            }],
            init: 0,
        })
        .unwrap();
        let s = System {
            name: "coin_pipe".to_string(),
            inputs: ChannelSet::new(),
            outputs: [chan("O")].into_iter().collect(),
            components: vec![
                Component::new("coin", coin),
                Component::new("out", latch("out", "M", "O")),
            ],
        };
        let i = NamedStreamTuple::empty(3);
        let network = s.simulate(&i).unwrap();
        let oracle = s.blackbox_oracle(&i, 1).unwrap();
        assert_eq!(network, oracle);
        assert!(network.len() > 1);
    }

    #[test]
    fn as_component_wraps_the_blackbox() {
        let c = pipeline().as_component("pipe").unwrap();
        assert_eq!(c.inputs().clone(), [chan("I")].into_iter().collect::<ChannelSet>());
        assert_eq!(c.outputs().clone(), [chan("O")].into_iter().collect::<ChannelSet>());
    }

    #[test]
    fn rename_channel_everywhere() {
        let s = pipeline().renamed_channel("M", &chan("MID"));
        assert!(s.check_consistency().is_empty());
        assert!(s.component_outputs().contains(&chan("MID")));
        let outs = s.simulate(&input(&[&["a"], &[], &[]])).unwrap();
        let got = outs.into_iter().next().unwrap();
        assert_eq!(
            got.get(&chan("O")).unwrap().intervals()[2],
            Interval::of(vec![Value::sym("a")])
        );
    }
}
