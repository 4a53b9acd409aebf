//! Machine definitions and their interval-timed semantics.
//!
//! A machine works in ticks. At each tick it first emits one interval per
//! non-chaotic output channel, chosen from its current state alone, and
//! then steps on the tick's input intervals. Emission never sees the
//! current inputs, so the outputs through tick i+1 are already fixed by
//! the inputs through tick i. That one-tick delay is what keeps feedback
//! loops well-defined when machines are wired together: the combined
//! emissions of a network can be computed before any member consumes them.
//!
//! Chaotic output channels are declared but unconstrained: the machine
//! promises nothing about them, so runs leave them out entirely and
//! comparisons treat them as wildcards. They exist so an output channel
//! can be added to an interface first and given real behavior later.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::stream::{
    intervals_up_to, Chan, ChannelSet, Interval, NamedStreamTuple, TupleEnumerator,
};
use crate::value::Value;

/// Channel-indexed intervals for one tick of input.
pub type InputValuation = BTreeMap<Chan, Interval>;
/// Channel-indexed intervals for one tick of output.
pub type OutputValuation = BTreeMap<Chan, Interval>;

/// A named state register with its initial content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Register {
    pub name: String,
    pub init: Value,
}

/// One emission option: an interval expression per output channel.
/// Channels left out emit the empty interval.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmitRule {
    pub outputs: BTreeMap<Chan, Expr>,
}

/// A condition on one input channel's current interval.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GuardCond {
    /// Matches any interval.
    Any,
    /// Matches the empty interval.
    Empty,
    /// Matches any nonempty interval.
    NonEmpty,
    /// Matches exactly the listed intervals.
    OneOf(Vec<Interval>),
}

impl GuardCond {
    fn matches(&self, iv: &Interval) -> bool {
        match self {
            GuardCond::Any => true,
            GuardCond::Empty => iv.is_empty(),
            GuardCond::NonEmpty => !iv.is_empty(),
            GuardCond::OneOf(list) => list.contains(iv),
        }
    }
}

/// A conjunction of per-channel conditions. Channels missing from the
/// valuation are read as empty intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Guard {
    pub conds: Vec<(Chan, GuardCond)>,
}

impl Guard {
    /// The guard with no conditions, which matches every input.
    pub fn always() -> Guard {
        Guard::default()
    }

    pub fn matches(&self, input: &InputValuation) -> bool {
        static EMPTY: Interval = Interval(Vec::new());
        self.conds
            .iter()
            .all(|(c, cond)| cond.matches(input.get(c).unwrap_or(&EMPTY)))
    }
}

/// A guarded transition: when the guard matches, apply the register
/// updates (all right-hand sides read the pre-state) and move to `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransRule {
    pub guard: Guard,
    pub updates: Vec<(String, Expr)>,
    pub target: usize,
}

/// A control state: its emission options and outgoing transitions.
/// No emission option means "emit nothing"; no matching transition means
/// "stay put, registers unchanged".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Control {
    pub name: String,
    pub emits: Vec<EmitRule>,
    pub rules: Vec<TransRule>,
}

/// A finite machine definition: control states plus value registers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TableDef {
    pub name: String,
    pub inputs: Vec<Chan>,
    pub outputs: Vec<Chan>,
    pub registers: Vec<Register>,
    pub controls: Vec<Control>,
    pub init: usize,
}

impl TableDef {
    fn reg_index(&self, name: &str) -> Option<usize> {
        self.registers.iter().position(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::MachineDef(format!("machine '{}': {msg}", self.name)));
        if self.controls.is_empty() {
            return fail("no control states".into());
        }
        if self.init >= self.controls.len() {
            return fail(format!("initial state index {} out of range", self.init));
        }
        let mut names = BTreeSet::new();
        for r in &self.registers {
            if !names.insert(&r.name) {
                return fail(format!("duplicate register '{}'", r.name));
            }
        }
        let mut ctrl_names = BTreeSet::new();
        for c in &self.controls {
            if !ctrl_names.insert(&c.name) {
                return fail(format!("duplicate control state '{}'", c.name));
            }
        }
        let inputs: BTreeSet<&str> = self.inputs.iter().map(Chan::name).collect();
        if inputs.len() != self.inputs.len() {
            return fail("duplicate input channel".into());
        }
        let outputs: BTreeSet<&str> = self.outputs.iter().map(Chan::name).collect();
        if outputs.len() != self.outputs.len() {
            return fail("duplicate output channel".into());
        }
        for ctrl in &self.controls {
            for emit in &ctrl.emits {
                for (c, e) in &emit.outputs {
                    if !outputs.contains(c.name()) {
                        return fail(format!(
                            "state '{}' emits on undeclared channel '{c}'",
                            ctrl.name
                        ));
                    }
                    if e.mentions_input() {
                        return fail(format!(
                            "state '{}' emission on '{c}' reads an input; emissions \
                             may depend on state only",
                            ctrl.name
                        ));
                    }
                    self.check_refs(e, &ctrl.name)?;
                }
            }
            for rule in &ctrl.rules {
                for (c, _) in &rule.guard.conds {
                    if !inputs.contains(c.name()) {
                        return fail(format!(
                            "state '{}' guards on undeclared channel '{c}'",
                            ctrl.name
                        ));
                    }
                }
                if rule.target >= self.controls.len() {
                    return fail(format!(
                        "state '{}' transition targets state index {} out of range",
                        ctrl.name, rule.target
                    ));
                }
                for (reg, e) in &rule.updates {
                    if self.reg_index(reg).is_none() {
                        return fail(format!(
                            "state '{}' updates undeclared register '{reg}'",
                            ctrl.name
                        ));
                    }
                    self.check_refs(e, &ctrl.name)?;
                    let mut ins = BTreeSet::new();
                    e.input_names(&mut ins);
                    for i in &ins {
                        if !inputs.contains(i.as_str()) {
                            return fail(format!(
                                "state '{}' reads undeclared input '{i}'",
                                ctrl.name
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_refs(&self, e: &Expr, state: &str) -> Result<()> {
        let mut regs = BTreeSet::new();
        e.reg_names(&mut regs);
        for r in &regs {
            if self.reg_index(r).is_none() {
                return Err(Error::MachineDef(format!(
                    "machine '{}': state '{state}' references undeclared register '{r}'",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// True if any guard or update mentions the channel.
    pub fn references_input(&self, name: &str) -> bool {
        self.controls.iter().any(|ctrl| {
            ctrl.rules.iter().any(|rule| {
                rule.guard.conds.iter().any(|(c, _)| c.name() == name)
                    || rule.updates.iter().any(|(_, e)| {
                        let mut ins = BTreeSet::new();
                        e.input_names(&mut ins);
                        ins.contains(name)
                    })
            })
        })
    }

    /// Rewrite the definition so it no longer looks at input `name`:
    /// expression mentions read as permanently empty, guard conditions on
    /// the channel are resolved against the empty interval (conditions
    /// that cannot match drop their whole rule), and the channel leaves
    /// the declared inputs.
    pub fn freeze_input(&mut self, name: &str) {
        self.inputs.retain(|c| c.name() != name);
        for ctrl in &mut self.controls {
            for rule in &mut ctrl.rules {
                for (_, e) in &mut rule.updates {
                    e.freeze_input(name);
                }
            }
            ctrl.rules.retain_mut(|rule| {
                let mut alive = true;
                rule.guard.conds.retain(|(c, cond)| {
                    if c.name() != name {
                        return true;
                    }
                    if !cond.matches(&Interval::empty()) {
                        alive = false;
                    }
                    false
                });
                alive
            });
        }
    }

    fn rename_channel(&mut self, old: &str, new: &Chan) {
        for c in self.inputs.iter_mut().chain(self.outputs.iter_mut()) {
            if c.name() == old {
                *c = new.clone();
            }
        }
        for ctrl in &mut self.controls {
            for emit in &mut ctrl.emits {
                let renamed: BTreeMap<Chan, Expr> = std::mem::take(&mut emit.outputs)
                    .into_iter()
                    .map(|(c, e)| {
                        let c = if c.name() == old { new.clone() } else { c };
                        (c, e)
                    })
                    .collect();
                emit.outputs = renamed;
            }
            for rule in &mut ctrl.rules {
                for (c, _) in &mut rule.guard.conds {
                    if c.name() == old {
                        *c = new.clone();
                    }
                }
                for (_, e) in &mut rule.updates {
                    e.rename_input(old, new);
                }
            }
        }
    }
}

/// How a machine's behavior is given.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MachineKind {
    /// A finite control/register table.
    Table(TableDef),
    /// A wired-together network of member machines running in lockstep.
    /// `chaos_bound` caps the interval length used to materialize member
    /// chaotic channels that other members read.
    Product {
        members: Vec<Machine>,
        chaos_bound: usize,
    },
    /// A deliberately broken test double that copies this tick's input to
    /// this tick's output, violating the emit-then-step discipline.
    Echo { from: Chan, to: Chan },
}

/// A machine: a declared interface over some definition. The declared
/// interface may be wider than what the definition touches — extra inputs
/// are ignored, and chaotic outputs are unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Machine {
    pub inputs: ChannelSet,
    pub outputs: ChannelSet,
    pub chaotic: ChannelSet,
    pub kind: MachineKind,
}

/// A machine's run-time state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MState {
    Table { control: usize, regs: Vec<Value> },
    Product(Vec<MState>),
    Unit,
}

/// One resolved emission choice, kept so that stepping can replay the
/// exact internal valuation the choice produced (members of a network may
/// feed each other, and distinct internal choices can look identical from
/// outside).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum EmissionChoice {
    Table(OutputValuation),
    Product {
        members: Vec<EmissionChoice>,
        chaos: OutputValuation,
    },
}

impl Machine {
    /// Wrap a validated table definition; the declared interface starts out
    /// as exactly the definition's.
    pub fn table(def: TableDef) -> Result<Machine> {
        def.validate()?;
        Ok(Machine {
            inputs: def.inputs.iter().cloned().collect(),
            outputs: def.outputs.iter().cloned().collect(),
            chaotic: ChannelSet::new(),
            kind: MachineKind::Table(def),
        })
    }

    /// The machine with no channels that does nothing.
    pub fn trivial() -> Machine {
        Machine::table(TableDef {
            name: "idle".to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            registers: Vec::new(),
            controls: vec![Control {
                name: "idle".to_string(),
                emits: Vec::new(),
                rules: Vec::new(),
            }],
            init: 0,
        })
        .expect("the trivial definition is valid")
    }

    /// Test double that echoes the current input interval within the same
    /// tick. Useful as a negative case: it is not realizable under the
    /// emit-then-step discipline and fails the delay check.
    pub fn non_causal_echo(from: Chan, to: Chan) -> Machine {
        Machine {
            inputs: [from.clone()].into_iter().collect(),
            outputs: [to.clone()].into_iter().collect(),
            chaotic: ChannelSet::new(),
            kind: MachineKind::Echo { from, to },
        }
    }

    /// Wire machines together into one. Every member must follow the
    /// emit-then-step discipline; member outputs must be pairwise disjoint,
    /// must not collide with the network's input channels, and together
    /// must cover the declared outputs and every internally read channel
    /// that is not a network input.
    pub fn compose(
        members: Vec<Machine>,
        inputs: ChannelSet,
        outputs: ChannelSet,
        chaos_bound: usize,
    ) -> Result<Machine> {
        let mut produced = ChannelSet::new();
        for m in &members {
            if !m.is_moore() {
                return Err(Error::Composition(
                    "member emits within the tick of its input; only emit-then-step \
                     machines can be wired together"
                        .to_string(),
                ));
            }
            for c in &m.outputs {
                if !produced.insert(c.clone()) {
                    return Err(Error::Composition(format!(
                        "channel '{c}' is an output of two members"
                    )));
                }
            }
        }
        for c in &inputs {
            if produced.contains(c) {
                return Err(Error::Composition(format!(
                    "input channel '{c}' is also produced inside the network"
                )));
            }
        }
        for c in &outputs {
            if !produced.contains(c) {
                return Err(Error::Composition(format!(
                    "declared output '{c}' is not produced by any member"
                )));
            }
        }
        let reads: ChannelSet = members.iter().flat_map(|m| m.inputs.clone()).collect();
        for c in &reads {
            if !produced.contains(c) && !inputs.contains(c) {
                return Err(Error::Composition(format!(
                    "channel '{c}' is read but neither produced nor an input"
                )));
            }
        }
        // A member's chaotic channel stays symbolic only while nobody reads
        // it; read ones get materialized tick by tick up to chaos_bound.
        let chaotic: ChannelSet = members
            .iter()
            .flat_map(|m| m.chaotic.clone())
            .filter(|c| outputs.contains(c) && !reads.contains(c))
            .collect();
        Ok(Machine {
            inputs,
            outputs,
            chaotic,
            kind: MachineKind::Product {
                members,
                chaos_bound,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.chaotic.is_subset(&self.outputs) {
            return Err(Error::Interface(
                "chaotic channels must be declared outputs".to_string(),
            ));
        }
        match &self.kind {
            MachineKind::Table(def) => def.validate(),
            MachineKind::Product { members, .. } => {
                for m in members {
                    m.validate()?;
                }
                Ok(())
            }
            MachineKind::Echo { .. } => Ok(()),
        }
    }

    /// True if emissions depend on the state alone (never on the current
    /// tick's input).
    pub fn is_moore(&self) -> bool {
        match &self.kind {
            MachineKind::Table(_) => true,
            MachineKind::Product { members, .. } => members.iter().all(Machine::is_moore),
            MachineKind::Echo { .. } => false,
        }
    }

    /// Output channels the machine actually constrains.
    pub fn concrete_outputs(&self) -> ChannelSet {
        self.outputs.difference(&self.chaotic).cloned().collect()
    }

    pub fn init_state(&self) -> MState {
        match &self.kind {
            MachineKind::Table(def) => MState::Table {
                control: def.init,
                regs: def.registers.iter().map(|r| r.init.clone()).collect(),
            },
            MachineKind::Product { members, .. } => {
                MState::Product(members.iter().map(Machine::init_state).collect())
            }
            MachineKind::Echo { .. } => MState::Unit,
        }
    }

    /// True if the definition consults the named channel anywhere (guard
    /// or update). The declared interface does not matter here: this is
    /// the syntactic "could the behavior depend on it" test.
    pub fn reads(&self, name: &str) -> bool {
        match &self.kind {
            MachineKind::Table(def) => def.references_input(name),
            MachineKind::Product { members, .. } => members.iter().any(|m| m.reads(name)),
            MachineKind::Echo { from, .. } => from.name() == name,
        }
    }

    /// Widen the interface by an input the definition never sees.
    pub fn with_added_input(&self, c: Chan) -> Result<Machine> {
        if self.inputs.contains(&c) {
            return Err(Error::Adaption(format!("'{c}' is already an input")));
        }
        let mut m = self.clone();
        m.inputs.insert(c);
        Ok(m)
    }

    /// Narrow the interface by an input. Any definition references to it
    /// will from now on read empty intervals, so the caller must have
    /// established that the behavior does not depend on the channel.
    pub fn with_removed_input(&self, c: &Chan) -> Result<Machine> {
        if !self.inputs.contains(c) {
            return Err(Error::Adaption(format!("'{c}' is not an input")));
        }
        let mut m = self.clone();
        m.inputs.remove(c);
        // A table that never mentions the channel drops it from its
        // declared interface too; a referenced channel stays declared and
        // reads empty.
        if let MachineKind::Table(def) = &mut m.kind {
            if !def.references_input(c.name()) {
                def.inputs.retain(|i| i != c);
            }
        }
        Ok(m)
    }

    /// Narrow the interface by an input and rewrite the definition so the
    /// channel is gone for good: a later `with_added_input` of the same
    /// name is then guaranteed to be ignored.
    pub fn frozen_without_input(&self, c: &Chan) -> Result<Machine> {
        if !self.inputs.contains(c) {
            return Err(Error::Adaption(format!("'{c}' is not an input")));
        }
        let mut m = self.clone();
        m.inputs.remove(c);
        m.freeze_kind(c.name());
        Ok(m)
    }

    fn freeze_kind(&mut self, name: &str) {
        match &mut self.kind {
            MachineKind::Table(def) => def.freeze_input(name),
            MachineKind::Product { members, .. } => {
                for member in members {
                    if member.inputs.iter().any(|c| c.name() == name) {
                        member.inputs.retain(|c| c.name() != name);
                    }
                    member.freeze_kind(name);
                }
            }
            // An echo's output is its input; freezing it would change the
            // behavior, which the caller must rule out beforehand.
            MachineKind::Echo { .. } => {}
        }
    }

    /// Widen the interface by a chaotic (unconstrained) output.
    pub fn with_added_chaotic_output(&self, c: Chan) -> Result<Machine> {
        if self.outputs.contains(&c) {
            return Err(Error::Adaption(format!("'{c}' is already an output")));
        }
        let mut m = self.clone();
        m.outputs.insert(c.clone());
        m.chaotic.insert(c);
        Ok(m)
    }

    /// Narrow the interface by an output; its emissions are simply no
    /// longer observed.
    pub fn with_removed_output(&self, c: &Chan) -> Result<Machine> {
        if !self.outputs.contains(c) {
            return Err(Error::Adaption(format!("'{c}' is not an output")));
        }
        let mut m = self.clone();
        m.outputs.remove(c);
        m.chaotic.remove(c);
        match &mut m.kind {
            MachineKind::Table(def) => {
                def.outputs.retain(|o| o != c);
                for control in &mut def.controls {
                    for emit in &mut control.emits {
                        emit.outputs.remove(c);
                    }
                }
            }
            // Product emissions are already projected onto the declared
            // outputs at every tick.
            MachineKind::Product { .. } => {}
            MachineKind::Echo { to, .. } => {
                if to == c {
                    return Err(Error::Adaption(format!(
                        "'{c}' is the echo's only output"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Rename a channel throughout the interface and the definition.
    pub fn renamed_channel(&self, old: &str, new: &Chan) -> Machine {
        let rename_set = |s: &ChannelSet| -> ChannelSet {
            s.iter()
                .map(|c| if c.name() == old { new.clone() } else { c.clone() })
                .collect()
        };
        let kind = match &self.kind {
            MachineKind::Table(def) => {
                let mut def = def.clone();
                def.rename_channel(old, new);
                MachineKind::Table(def)
            }
            MachineKind::Product {
                members,
                chaos_bound,
            } => MachineKind::Product {
                members: members.iter().map(|m| m.renamed_channel(old, new)).collect(),
                chaos_bound: *chaos_bound,
            },
            MachineKind::Echo { from, to } => MachineKind::Echo {
                from: if from.name() == old { new.clone() } else { from.clone() },
                to: if to.name() == old { new.clone() } else { to.clone() },
            },
        };
        Machine {
            inputs: rename_set(&self.inputs),
            outputs: rename_set(&self.outputs),
            chaotic: rename_set(&self.chaotic),
            kind,
        }
    }

    fn table_def(&self) -> Option<&TableDef> {
        match &self.kind {
            MachineKind::Table(def) => Some(def),
            _ => None,
        }
    }

    fn normalized_emits(ctrl: &Control) -> Vec<EmitRule> {
        if ctrl.emits.is_empty() {
            vec![EmitRule::default()]
        } else {
            ctrl.emits.clone()
        }
    }

    /// All emission choices available in `state`. Only defined for
    /// emit-then-step machines.
    fn emission_choices(&self, state: &MState) -> Result<Vec<EmissionChoice>> {
        match (&self.kind, state) {
            (MachineKind::Table(def), MState::Table { control, regs }) => {
                let ctrl = def.controls.get(*control).ok_or_else(|| {
                    Error::Eval(format!("control state index {control} out of range"))
                })?;
                let reg_map: BTreeMap<String, Value> = def
                    .registers
                    .iter()
                    .zip(regs)
                    .map(|(r, v)| (r.name.clone(), v.clone()))
                    .collect();
                let mut out = Vec::new();
                for rule in Self::normalized_emits(ctrl) {
                    let mut val = OutputValuation::new();
                    for c in self.concrete_outputs() {
                        let iv = match rule.outputs.get(&c) {
                            None => Interval::empty(),
                            Some(e) => {
                                let v = e.eval(&reg_map, None)?;
                                let iv = Interval::of(v.as_seq()?.to_vec());
                                check_alphabet(&c, &iv)?;
                                iv
                            }
                        };
                        val.insert(c, iv);
                    }
                    out.push(EmissionChoice::Table(val));
                }
                Ok(out)
            }
            (
                MachineKind::Product {
                    members,
                    chaos_bound,
                },
                MState::Product(states),
            ) => {
                let reads: ChannelSet = members.iter().flat_map(|m| m.inputs.clone()).collect();
                let mut combos: Vec<Vec<EmissionChoice>> = vec![Vec::new()];
                for (m, s) in members.iter().zip(states) {
                    let choices = m.emission_choices(s)?;
                    let mut next = Vec::new();
                    for combo in &combos {
                        for c in &choices {
                            let mut combo = combo.clone();
                            combo.push(c.clone());
                            next.push(combo);
                        }
                    }
                    combos = next;
                }
                // materialize internally read chaotic channels
                let loose: Vec<Chan> = members
                    .iter()
                    .flat_map(|m| m.chaotic.clone())
                    .filter(|c| reads.contains(c))
                    .collect();
                let mut chaos_opts: Vec<OutputValuation> = vec![OutputValuation::new()];
                for c in &loose {
                    let mut next = Vec::new();
                    for opt in &chaos_opts {
                        for iv in intervals_up_to(c.alphabet(), *chaos_bound) {
                            let mut opt = opt.clone();
                            opt.insert(c.clone(), iv);
                            next.push(opt);
                        }
                    }
                    chaos_opts = next;
                }
                let mut out = Vec::new();
                for combo in combos {
                    for chaos in &chaos_opts {
                        out.push(EmissionChoice::Product {
                            members: combo.clone(),
                            chaos: chaos.clone(),
                        });
                    }
                }
                Ok(out)
            }
            (MachineKind::Echo { .. }, _) => Err(Error::Composition(
                "echo double has no input-independent emission".to_string(),
            )),
            _ => Err(Error::Eval("state does not match machine shape".to_string())),
        }
    }

    /// The externally visible valuation of a choice: exactly the
    /// non-chaotic declared outputs.
    fn choice_output(&self, choice: &EmissionChoice) -> OutputValuation {
        match (&self.kind, choice) {
            (MachineKind::Table(_), EmissionChoice::Table(val)) => val.clone(),
            (
                MachineKind::Product { members, .. },
                EmissionChoice::Product {
                    members: choices,
                    chaos,
                },
            ) => {
                let mut full: BTreeMap<Chan, Interval> = BTreeMap::new();
                for (m, c) in members.iter().zip(choices) {
                    full.extend(m.choice_output(c));
                }
                full.extend(chaos.clone());
                let keep = self.concrete_outputs();
                full.retain(|c, _| keep.contains(c));
                full
            }
            _ => OutputValuation::new(),
        }
    }

    /// Step under a fixed emission choice and this tick's external inputs.
    fn step_under(
        &self,
        state: &MState,
        choice: &EmissionChoice,
        input: &InputValuation,
    ) -> Result<Vec<MState>> {
        match (&self.kind, state, choice) {
            (MachineKind::Table(def), MState::Table { control, regs }, _) => {
                let ctrl = &def.controls[*control];
                let reg_map: BTreeMap<String, Value> = def
                    .registers
                    .iter()
                    .zip(regs)
                    .map(|(r, v)| (r.name.clone(), v.clone()))
                    .collect();
                let matching: Vec<&TransRule> = ctrl
                    .rules
                    .iter()
                    .filter(|r| r.guard.matches(input))
                    .collect();
                if matching.is_empty() {
                    return Ok(vec![state.clone()]);
                }
                let mut out = Vec::new();
                for rule in matching {
                    let mut new_regs = regs.clone();
                    // all right-hand sides see the pre-state
                    let mut assigns = Vec::new();
                    for (reg, e) in &rule.updates {
                        let idx = def.reg_index(reg).expect("validated");
                        assigns.push((idx, e.eval(&reg_map, Some(input))?));
                    }
                    for (idx, v) in assigns {
                        new_regs[idx] = v;
                    }
                    out.push(MState::Table {
                        control: rule.target,
                        regs: new_regs,
                    });
                }
                Ok(out)
            }
            (
                MachineKind::Product { members, .. },
                MState::Product(states),
                EmissionChoice::Product {
                    members: choices,
                    chaos,
                },
            ) => {
                // the full valuation every member sees this tick
                let mut v: BTreeMap<Chan, Interval> = input.clone();
                for (m, c) in members.iter().zip(choices) {
                    // feed everything a member emits, not just what the
                    // network exposes
                    v.extend(member_feed(m, c));
                }
                v.extend(chaos.clone());
                let mut state_sets: Vec<Vec<MState>> = Vec::new();
                for ((m, s), c) in members.iter().zip(states).zip(choices) {
                    let mut vi = InputValuation::new();
                    for ch in &m.inputs {
                        if let Some(iv) = v.get(ch) {
                            vi.insert(ch.clone(), iv.clone());
                        }
                    }
                    state_sets.push(m.step_under(s, c, &vi)?);
                }
                let mut combos: Vec<Vec<MState>> = vec![Vec::new()];
                for set in &state_sets {
                    let mut next = Vec::new();
                    for combo in &combos {
                        for s in set {
                            let mut combo = combo.clone();
                            combo.push(s.clone());
                            next.push(combo);
                        }
                    }
                    combos = next;
                }
                Ok(combos.into_iter().map(MState::Product).collect())
            }
            _ => Err(Error::Eval("state does not match machine shape".to_string())),
        }
    }

    /// All (emitted valuation, successor state) options for one tick.
    pub fn tick_options(
        &self,
        state: &MState,
        input: &InputValuation,
    ) -> Result<Vec<(OutputValuation, MState)>> {
        if let MachineKind::Echo { from, to } = &self.kind {
            static EMPTY: Interval = Interval(Vec::new());
            let iv = input.get(from).unwrap_or(&EMPTY).clone();
            check_alphabet(to, &iv)?;
            let mut out = OutputValuation::new();
            out.insert(to.clone(), iv);
            return Ok(vec![(out, MState::Unit)]);
        }
        let mut options = BTreeSet::new();
        for choice in self.emission_choices(state)? {
            let o = self.choice_output(&choice);
            for s in self.step_under(state, &choice, input)? {
                options.insert((o.clone(), s));
            }
        }
        Ok(options.into_iter().collect())
    }

    /// Every output history the machine can produce on the given input
    /// history, over the non-chaotic outputs. The input's domain must be
    /// exactly the declared inputs.
    pub fn run(&self, input: &NamedStreamTuple) -> Result<BTreeSet<NamedStreamTuple>> {
        if input.domain() != self.inputs {
            return Err(Error::Interface(format!(
                "input channels {:?} do not match the machine's inputs {:?}",
                names(&input.domain()),
                names(&self.inputs)
            )));
        }
        // check against the machine's declared alphabets, not whatever
        // alphabet the tuple's channels happen to carry
        for c in &self.inputs {
            for iv in input.get(c)?.intervals() {
                check_alphabet(c, iv)?;
            }
        }
        let concrete = self.concrete_outputs();
        let mut frontier: BTreeSet<(MState, NamedStreamTuple)> =
            [(self.init_state(), NamedStreamTuple::silent(&concrete, 0))]
                .into_iter()
                .collect();
        for tick in 0..input.tick_len() {
            let slice = input.slice(tick)?;
            let mut next = BTreeSet::new();
            for (state, out) in &frontier {
                for (o, s) in self.tick_options(state, &slice)? {
                    let mut out = out.clone();
                    out.push_slice(&o)?;
                    next.insert((s, out));
                }
            }
            frontier = next;
        }
        Ok(frontier.into_iter().map(|(_, out)| out).collect())
    }

    /// Can the machine produce `output` on `input`? The output tuple may
    /// carry extra channels (say, chaotic ones); only the non-chaotic
    /// declared outputs are compared.
    pub fn membership(&self, input: &NamedStreamTuple, output: &NamedStreamTuple) -> Result<bool> {
        if input.domain() != self.inputs {
            return Err(Error::Interface(
                "input channels do not match the machine's inputs".to_string(),
            ));
        }
        if input.tick_len() != output.tick_len() {
            return Err(Error::Interface(
                "input and output histories have different lengths".to_string(),
            ));
        }
        let target = output.restrict(&self.concrete_outputs())?;
        let mut frontier: BTreeSet<MState> = [self.init_state()].into_iter().collect();
        for tick in 0..input.tick_len() {
            let slice = input.slice(tick)?;
            let want = target.slice(tick)?;
            let mut next = BTreeSet::new();
            for state in &frontier {
                for (o, s) in self.tick_options(state, &slice)? {
                    if o == want {
                        next.insert(s);
                    }
                }
            }
            if next.is_empty() {
                return Ok(false);
            }
            frontier = next;
        }
        Ok(true)
    }

    /// Check the one-tick delay property on all inputs up to the given
    /// depth and interval bound: inputs that agree through tick i must
    /// allow exactly the same outputs through tick i+1. Returns a violating
    /// input pair if found.
    pub fn check_time_guardedness(
        &self,
        ticks: usize,
        interval_bound: usize,
    ) -> Result<Option<(NamedStreamTuple, NamedStreamTuple)>> {
        let mut runs: Vec<(NamedStreamTuple, BTreeSet<NamedStreamTuple>)> = Vec::new();
        for x in TupleEnumerator::new(&self.inputs, ticks, interval_bound) {
            let outs = match &self.kind {
                // the echo double bypasses run(); execute it directly
                MachineKind::Echo { .. } => self.run_any(&x)?,
                _ => self.run(&x)?,
            };
            runs.push((x, outs));
        }
        for i in 0..ticks {
            let mut seen: BTreeMap<NamedStreamTuple, (BTreeSet<NamedStreamTuple>, usize)> =
                BTreeMap::new();
            for (idx, (x, outs)) in runs.iter().enumerate() {
                let key = x.truncate(i)?;
                let val: BTreeSet<NamedStreamTuple> = outs
                    .iter()
                    .map(|o| o.truncate(i + 1))
                    .collect::<Result<_>>()?;
                match seen.get(&key) {
                    None => {
                        seen.insert(key, (val, idx));
                    }
                    Some((stored, first)) => {
                        if *stored != val {
                            return Ok(Some((runs[*first].0.clone(), x.clone())));
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    // run() for shapes that need no emit/step factorization (echo double)
    fn run_any(&self, input: &NamedStreamTuple) -> Result<BTreeSet<NamedStreamTuple>> {
        let concrete = self.concrete_outputs();
        let mut frontier: BTreeSet<(MState, NamedStreamTuple)> =
            [(self.init_state(), NamedStreamTuple::silent(&concrete, 0))]
                .into_iter()
                .collect();
        for tick in 0..input.tick_len() {
            let slice = input.slice(tick)?;
            let mut next = BTreeSet::new();
            for (state, out) in &frontier {
                for (o, s) in self.tick_options(state, &slice)? {
                    let mut out = out.clone();
                    out.push_slice(&o)?;
                    next.insert((s, out));
                }
            }
            frontier = next;
        }
        Ok(frontier.into_iter().map(|(_, out)| out).collect())
    }
}

fn names(s: &ChannelSet) -> Vec<String> {
    s.iter().map(|c| c.name().to_string()).collect()
}

/// Everything a member contributes to the tick valuation of its network:
/// its non-chaotic declared outputs.
fn member_feed(m: &Machine, choice: &EmissionChoice) -> OutputValuation {
    m.choice_output(choice)
}

fn check_alphabet(c: &Chan, iv: &Interval) -> Result<()> {
    for m in iv.messages() {
        if !c.alphabet().contains(m) {
            return Err(Error::AlphabetViolation {
                channel: c.name().to_string(),
                alphabet: c.alphabet().name().to_string(),
                message: m.to_string(),
            });
        }
    }
    Ok(())
}

/// A sound, deliberately incomplete syntactic check that `fine` allows at
/// most the behaviors of `coarse`: equal interfaces, no new chaos, and
/// either nothing of `coarse` is constrained, or the definitions agree up
/// to a control-state mapping with pointwise-contained emissions.
pub fn submachine_refines(fine: &Machine, coarse: &Machine) -> bool {
    if fine.inputs != coarse.inputs
        || fine.outputs != coarse.outputs
        || !fine.chaotic.is_subset(&coarse.chaotic)
    {
        return false;
    }
    let constrained = coarse.concrete_outputs();
    // a fully chaotic coarse machine is refined by anything with the
    // same interface
    if constrained.is_empty() {
        return true;
    }
    if fine.kind == coarse.kind {
        return true;
    }
    let (Some(f), Some(c)) = (fine.table_def(), coarse.table_def()) else {
        return false;
    };
    if f.registers != c.registers {
        return false;
    }
    // search for a control-state mapping that makes `fine` a pointwise
    // restriction of `coarse`
    let fm = f.controls.len();
    let cn = c.controls.len();
    if cn.checked_pow(fm as u32).map_or(true, |n| n > 4096) {
        return false;
    }
    let mut phi = vec![0usize; fm];
    loop {
        if phi[f.init] == c.init && mapping_refines(f, c, &phi, &constrained) {
            return true;
        }
        // next mapping
        let mut pos = 0;
        loop {
            if pos == fm {
                return false;
            }
            phi[pos] += 1;
            if phi[pos] < cn {
                break;
            }
            phi[pos] = 0;
            pos += 1;
        }
    }
}

fn mapping_refines(f: &TableDef, c: &TableDef, phi: &[usize], constrained: &ChannelSet) -> bool {
    for (s, fc) in f.controls.iter().enumerate() {
        let cc = &c.controls[phi[s]];
        // every fine emission option must appear among the coarse ones,
        // channel by channel on the constrained outputs
        let f_emits = Machine::normalized_emits(fc);
        let c_emits = Machine::normalized_emits(cc);
        for fe in &f_emits {
            let covered = c_emits.iter().any(|ce| {
                constrained.iter().all(|ch| {
                    let def = Expr::empty_interval();
                    let fx = fe.outputs.get(ch).unwrap_or(&def);
                    let cx = ce.outputs.get(ch).unwrap_or(&def);
                    fx == cx
                })
            });
            if !covered {
                return false;
            }
        }
        // transitions must match one-for-one (with targets mapped), so the
        // two machines walk the same register states and fall back to the
        // same implicit self-loops
        let mut f_rules: Vec<(Guard, Vec<(String, Expr)>, usize)> = fc
            .rules
            .iter()
            .map(|r| (r.guard.clone(), r.updates.clone(), phi[r.target]))
            .collect();
        let mut c_rules: Vec<(Guard, Vec<(String, Expr)>, usize)> = cc
            .rules
            .iter()
            .map(|r| (r.guard.clone(), r.updates.clone(), r.target))
            .collect();
        f_rules.sort();
        c_rules.sort();
        if f_rules != c_rules {
            return false;
        }
    }
    true
}
