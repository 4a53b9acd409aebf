//! The refinement rules: structural edits and behavioral replacements
//! whose premises guarantee that the edited system's observable behavior
//! stays within the original's. Structural rules preserve the bounded
//! blackbox trace set exactly; behavioral rules may shrink it.
//!
//! Every application records one obligation per premise. A premise is
//! either discharged syntactically, discharged by a bounded exploration,
//! recorded as an assumption, or failed with a replayable witness — a
//! failed premise rejects the application.

use std::collections::BTreeMap;
use std::fmt;

use crate::behavior::{submachine_refines, Machine, MachineKind};
use crate::error::{Error, Result};
use crate::oracle::{
    check_invariant_validity, check_machine_inclusion, check_refinement_under_invariant,
    EnumMode, EnumerationBudget, Invariant, InvariantKind, Verdict, Witness,
};
use crate::stream::{Chan, ChannelSet};
use crate::system::{Component, System};

/// How a rule's semantic premises are handled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckMode {
    /// Only syntactic reasoning; premises needing semantic evidence are
    /// recorded as assumptions.
    Syntactic,
    /// Syntactic reasoning where it suffices, bounded exploration where
    /// it does not.
    Bounded(EnumerationBudget),
    /// Record semantic premises as assumptions without checking them.
    Assumed,
}

impl CheckMode {
    /// The default premise budget: five ticks, one message per interval,
    /// exhaustive.
    pub fn default_bounded() -> CheckMode {
        CheckMode::Bounded(EnumerationBudget::exhaustive(5, 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObligationVerdict {
    Discharged,
    Assumed,
    Failed,
}

impl fmt::Display for ObligationVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObligationVerdict::Discharged => "discharged",
            ObligationVerdict::Assumed => "assumed",
            ObligationVerdict::Failed => "failed",
        })
    }
}

/// One premise of one rule application and how it fared.
#[derive(Debug, Clone)]
pub struct Obligation {
    /// 1-based script step index; 0 for a direct rule call.
    pub step: usize,
    pub rule: &'static str,
    pub premise: String,
    /// The discharge mode actually used, not the one merely requested.
    pub mode: String,
    pub verdict: ObligationVerdict,
    pub counterexample: Option<Witness>,
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {:>2} {:<30} {:<9} [{}] {}",
            self.step, self.rule, self.verdict, self.mode, self.premise
        )
    }
}

/// Every obligation a script (or single rule) produced, in order.
#[derive(Debug, Clone, Default)]
pub struct ObligationLedger {
    pub obligations: Vec<Obligation>,
}

impl ObligationLedger {
    pub fn all_discharged(&self) -> bool {
        self.obligations
            .iter()
            .all(|o| o.verdict == ObligationVerdict::Discharged)
    }

    pub fn any_failed(&self) -> bool {
        self.obligations
            .iter()
            .any(|o| o.verdict == ObligationVerdict::Failed)
    }

    pub fn any_assumed(&self) -> bool {
        self.obligations
            .iter()
            .any(|o| o.verdict == ObligationVerdict::Assumed)
    }

    /// Process exit code convention: 0 all discharged, 2 clean but with
    /// assumptions, 1 contains a failure.
    pub fn exit_code(&self) -> i32 {
        if self.any_failed() {
            1
        } else if self.any_assumed() {
            2
        } else {
            0
        }
    }

    /// One line per premise.
    pub fn render(&self) -> String {
        self.obligations
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// The result of trying one rule: the successor system (absent when a
/// premise failed) plus the obligations checked along the way.
#[derive(Debug, Clone)]
pub struct RuleApplication {
    pub system: Option<System>,
    pub obligations: Vec<Obligation>,
}

fn ob(
    rule: &'static str,
    premise: String,
    mode: &str,
    verdict: ObligationVerdict,
    counterexample: Option<Witness>,
) -> Obligation {
    Obligation {
        step: 0,
        rule,
        premise,
        mode: mode.to_string(),
        verdict,
        counterexample,
    }
}

fn syntactic(rule: &'static str, premise: String, holds: bool) -> Obligation {
    let verdict = if holds {
        ObligationVerdict::Discharged
    } else {
        ObligationVerdict::Failed
    };
    ob(rule, premise, "syntactic", verdict, None)
}

fn budget_desc(budget: &EnumerationBudget) -> String {
    match &budget.mode {
        EnumMode::Exhaustive => format!(
            "bounded(depth={}, intervals<={}, exhaustive)",
            budget.depth, budget.interval_bound
        ),
        EnumMode::Sampled { count, seed } => format!(
            "bounded(depth={}, intervals<={}, sampled {count} seed {seed})",
            budget.depth, budget.interval_bound
        ),
    }
}

/// Turn a bounded check into an obligation, following the requested mode:
/// assumed modes record the premise, bounded mode runs the check and maps
/// holds/fails/inconclusive to discharged/failed/assumed.
fn semantic<F>(
    rule: &'static str,
    premise: String,
    mode: &CheckMode,
    check: F,
) -> Result<Obligation>
where
    F: FnOnce(&EnumerationBudget) -> Result<Verdict>,
{
    match mode {
        CheckMode::Assumed => Ok(ob(rule, premise, "assumed", ObligationVerdict::Assumed, None)),
        CheckMode::Syntactic => Ok(ob(
            rule,
            premise,
            "assumed (not syntactically dischargeable)",
            ObligationVerdict::Assumed,
            None,
        )),
        CheckMode::Bounded(budget) => match check(budget)? {
            Verdict::Holds { .. } => Ok(ob(
                rule,
                premise,
                &budget_desc(budget),
                ObligationVerdict::Discharged,
                None,
            )),
            Verdict::Fails(w) => Ok(ob(
                rule,
                premise,
                &budget_desc(budget),
                ObligationVerdict::Failed,
                Some(*w),
            )),
            Verdict::Inconclusive { reason, .. } => Ok(ob(
                rule,
                premise,
                &format!("assumed ({}; {reason})", budget_desc(budget)),
                ObligationVerdict::Assumed,
                None,
            )),
        },
    }
}

fn finish(system: System, obligations: Vec<Obligation>) -> Result<RuleApplication> {
    if obligations
        .iter()
        .any(|o| o.verdict == ObligationVerdict::Failed)
    {
        return Ok(RuleApplication {
            system: None,
            obligations,
        });
    }
    system.ensure_consistent()?;
    Ok(RuleApplication {
        system: Some(system),
        obligations,
    })
}

fn every_channel_name(system: &System) -> std::collections::BTreeSet<String> {
    system
        .all_channels()
        .iter()
        .map(|c| c.name().to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// Structural rules
// ---------------------------------------------------------------------------

/// Add a fresh component with the trivial behavior (no channels at all),
/// which cannot affect anything observable.
pub fn add_component(system: &System, name: &str) -> Result<RuleApplication> {
    let rule = "add-component";
    let fresh = system.components.iter().all(|c| c.name != name);
    let obs = vec![syntactic(
        rule,
        format!("component name '{name}' is not already in use"),
        fresh,
    )];
    let mut s = system.clone();
    if fresh {
        s.components.push(Component::new(name, Machine::trivial()));
    }
    finish(s, obs)
}

/// Remove a component whose outputs nobody observes: no other component
/// reads them and none is a system output.
pub fn remove_component(system: &System, name: &str) -> Result<RuleApplication> {
    let rule = "remove-component";
    let comp = system.component(name)?;
    let mut obs = Vec::new();
    let mut readers: ChannelSet = ChannelSet::new();
    for other in &system.components {
        if other.name != name {
            readers.extend(other.inputs().iter().cloned());
        }
    }
    for out in comp.outputs() {
        obs.push(syntactic(
            rule,
            format!("output channel '{}' of '{name}' feeds no other component", out.name()),
            !readers.contains(out),
        ));
        obs.push(syntactic(
            rule,
            format!("output channel '{}' of '{name}' is not a system output", out.name()),
            !system.outputs.contains(out),
        ));
    }
    let mut s = system.clone();
    s.components.retain(|c| c.name != name);
    finish(s, obs)
}

/// Give a component a fresh output channel, initially unconstrained
/// (chaotic). The system interface is untouched, so nothing observable
/// changes.
pub fn add_output_channel(system: &System, comp: &str, chan: Chan) -> Result<RuleApplication> {
    let rule = "add-output-channel";
    system.component(comp)?;
    let produced = system.component_outputs();
    let fresh = !produced.contains(&chan) && !system.inputs.contains(&chan);
    let obs = vec![syntactic(
        rule,
        format!(
            "channel '{}' is not produced elsewhere and is not a system input",
            chan.name()
        ),
        fresh,
    )];
    let mut s = system.clone();
    if fresh {
        let c = s.component_mut(comp)?;
        c.machine = c.machine.with_added_chaotic_output(chan)?;
    }
    finish(s, obs)
}

/// Take an output channel away from a component; legal when nobody reads
/// it and it is not part of the system interface.
pub fn remove_output_channel(system: &System, comp: &str, chan: &str) -> Result<RuleApplication> {
    let rule = "remove-output-channel";
    let target = system.component(comp)?;
    let chan = target
        .outputs()
        .iter()
        .find(|c| c.name() == chan)
        .cloned()
        .ok_or_else(|| {
            Error::Composition(format!("remove-output-channel: '{comp}' has no output '{chan}'"))
        })?;
    let read = system.component_inputs().contains(&chan);
    let obs = vec![
        syntactic(
            rule,
            format!("no component reads channel '{}'", chan.name()),
            !read,
        ),
        syntactic(
            rule,
            format!("channel '{}' is not a system output", chan.name()),
            !system.outputs.contains(&chan),
        ),
    ];
    let mut s = system.clone();
    if !read && !system.outputs.contains(&chan) {
        let c = s.component_mut(comp)?;
        c.machine = c.machine.with_removed_output(&chan)?;
    }
    finish(s, obs)
}

/// Let a component see one more channel that already exists in the
/// system. The behavior must ignore it, so the trace set is unchanged.
pub fn add_input_channel(system: &System, comp: &str, chan: &str) -> Result<RuleApplication> {
    let rule = "add-input-channel";
    system.component(comp)?;
    let resolved = system.chan(chan)?;
    let sourced = system.component_outputs().contains(&resolved)
        || system.inputs.contains(&resolved);
    let machine = &system.component(comp)?.machine;
    let ignored = !machine.reads(chan);
    let obs = vec![
        syntactic(
            rule,
            format!("channel '{chan}' is produced by a component or arrives as a system input"),
            sourced,
        ),
        syntactic(
            rule,
            format!("the behavior of '{comp}' ignores '{chan}'"),
            ignored,
        ),
    ];
    let mut s = system.clone();
    if sourced && ignored {
        let c = s.component_mut(comp)?;
        c.machine = c.machine.with_added_input(resolved)?;
    }
    finish(s, obs)
}

/// Take an input channel away from a component. Dischargeable
/// syntactically when the definition never looks at the channel;
/// otherwise the premise is that behavior is unchanged with the channel
/// silenced, checked by bounded equivalence of the machine against its
/// frozen copy.
pub fn remove_input_channel(
    system: &System,
    comp: &str,
    chan: &str,
    mode: &CheckMode,
) -> Result<RuleApplication> {
    let rule = "remove-input-channel";
    let target = system.component(comp)?;
    let resolved = target
        .inputs()
        .iter()
        .find(|c| c.name() == chan)
        .cloned()
        .ok_or_else(|| {
            Error::Composition(format!("remove-input-channel: '{comp}' has no input '{chan}'"))
        })?;
    let machine = &target.machine;
    let premise = format!("the behavior of '{comp}' does not depend on '{chan}'");
    let mut obs = Vec::new();
    if !machine.reads(chan) {
        obs.push(syntactic(rule, premise, true));
    } else {
        // Sever the dependence and ask whether anything observable moved.
        let frozen = machine.frozen_without_input(&resolved)?;
        if frozen.reads(chan) {
            // The definition cannot be severed from the channel (a test
            // double echoing it, say) — dependence is structural.
            obs.push(syntactic(rule, premise, false));
        } else {
            let widened = frozen.with_added_input(resolved.clone())?;
            obs.push(semantic(rule, premise, mode, |budget| {
                let forward = check_machine_inclusion(machine, &widened, budget)?;
                if !forward.holds() {
                    return Ok(forward);
                }
                check_machine_inclusion(&widened, machine, budget)
            })?);
        }
    }
    let mut s = system.clone();
    if obs.iter().all(|o| o.verdict != ObligationVerdict::Failed) {
        let c = s.component_mut(comp)?;
        c.machine = if c.machine.reads(chan) {
            c.machine.frozen_without_input(&resolved)?
        } else {
            c.machine.with_removed_input(&resolved)?
        };
    }
    finish(s, obs)
}

/// Rename an internal channel everywhere it occurs. The external
/// interface must not contain it, so observability is untouched.
pub fn rename_channel(system: &System, old: &str, new: &str) -> Result<RuleApplication> {
    let rule = "rename-channel";
    let old_chan = system.chan(old)?;
    let names = every_channel_name(system);
    let obs = vec![
        syntactic(
            rule,
            format!("channel '{old}' is internal (not part of the system interface)"),
            !system.inputs.contains(&old_chan) && !system.outputs.contains(&old_chan),
        ),
        syntactic(
            rule,
            format!("channel name '{new}' is not already in use"),
            !names.contains(new),
        ),
    ];
    let renamed = system.renamed_channel(old, &Chan::new(new, old_chan.alphabet().clone()));
    finish(renamed, obs)
}

// ---------------------------------------------------------------------------
// Behavioral rules
// ---------------------------------------------------------------------------

/// Replace a component's behavior with one whose trace set is contained
/// in the current one, over the same interface.
pub fn refine_behavior(
    system: &System,
    comp: &str,
    replacement: &Machine,
    mode: &CheckMode,
) -> Result<RuleApplication> {
    let rule = "refine-behavior";
    let current = &system.component(comp)?.machine;
    ensure_same_interface(comp, replacement, current)?;
    let premise = format!("every behavior of the new '{comp}' is a behavior of the old one");
    let inclusion = if submachine_refines(replacement, current) {
        ob(rule, premise, "syntactic", ObligationVerdict::Discharged, None)
    } else {
        semantic(rule, premise, mode, |budget| {
            check_machine_inclusion(replacement, current, budget)
        })?
    };
    let obs = vec![inclusion];
    let mut s = system.clone();
    if obs.iter().all(|o| o.verdict != ObligationVerdict::Failed) {
        s.component_mut(comp)?.machine = replacement.clone();
    }
    finish(s, obs)
}

/// Replace a component's behavior with one that agrees with the current
/// one on all histories satisfying the invariant. Two premises: the
/// invariant actually holds on the system, and the replacement refines
/// the current behavior on invariant-satisfying histories.
pub fn refine_behavior_with_invariant(
    system: &System,
    comp: &str,
    replacement: &Machine,
    invariant: &Invariant,
    mode: &CheckMode,
) -> Result<RuleApplication> {
    let rule = "refine-behavior-with-invariant";
    let current = &system.component(comp)?.machine;
    ensure_same_interface(comp, replacement, current)?;
    let validity_premise = format!(
        "invariant '{}' holds on every behavior of the system",
        invariant.name
    );
    let validity = if matches!(invariant.kind, InvariantKind::True) {
        ob(
            rule,
            validity_premise,
            "syntactic",
            ObligationVerdict::Discharged,
            None,
        )
    } else {
        semantic(rule, validity_premise, mode, |budget| {
            check_invariant_validity(system, invariant, budget)
        })?
    };
    let inclusion_premise = format!(
        "under invariant '{}', every behavior of the new '{comp}' is a behavior of the old one",
        invariant.name
    );
    let inclusion = if submachine_refines(replacement, current) {
        ob(
            rule,
            inclusion_premise,
            "syntactic",
            ObligationVerdict::Discharged,
            None,
        )
    } else {
        semantic(rule, inclusion_premise, mode, |budget| {
            check_refinement_under_invariant(system, comp, replacement, invariant, budget)
        })?
    };
    let obs = vec![validity, inclusion];
    let mut s = system.clone();
    if obs.iter().all(|o| o.verdict != ObligationVerdict::Failed) {
        s.component_mut(comp)?.machine = replacement.clone();
    }
    finish(s, obs)
}

fn ensure_same_interface(comp: &str, replacement: &Machine, current: &Machine) -> Result<()> {
    if replacement.inputs != current.inputs {
        return Err(Error::Interface(format!(
            "replacement for '{comp}' changes its input channels"
        )));
    }
    if replacement.outputs != current.outputs {
        return Err(Error::Interface(format!(
            "replacement for '{comp}' changes its output channels"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fold and expand
// ---------------------------------------------------------------------------

/// Collapse a set of components into one whose machine runs them in
/// lockstep. The folded interface may hide channels that are only used
/// inside the group, but must keep everything the rest of the system or
/// the environment observes; `inputs`/`outputs` default to the smallest
/// legal sets. The grouped network is remembered for a later `expand`.
pub fn fold(
    system: &System,
    names: &[String],
    new_name: &str,
    inputs: Option<ChannelSet>,
    outputs: Option<ChannelSet>,
) -> Result<RuleApplication> {
    let rule = "fold";
    if names.is_empty() {
        return Err(Error::Composition("fold: no components named".to_string()));
    }
    let mut group = Vec::new();
    for n in names {
        group.push(system.component(n)?.clone());
    }
    let rest: Vec<&Component> = system
        .components
        .iter()
        .filter(|c| !names.contains(&c.name))
        .collect();

    let group_in: ChannelSet = group.iter().flat_map(|c| c.inputs().iter().cloned()).collect();
    let group_out: ChannelSet = group.iter().flat_map(|c| c.outputs().iter().cloned()).collect();
    let rest_in: ChannelSet = rest.iter().flat_map(|c| c.inputs().iter().cloned()).collect();
    let all_out = system.component_outputs();

    // Smallest and largest legal interfaces for the folded component.
    let lower_in: ChannelSet = group_in.difference(&group_out).cloned().collect();
    let upper_in: ChannelSet = system
        .inputs
        .union(&all_out)
        .filter(|c| !group_out.contains(*c))
        .cloned()
        .collect();
    let observed: ChannelSet = system.outputs.union(&rest_in).cloned().collect();
    let lower_out: ChannelSet = group_out.intersection(&observed).cloned().collect();
    let upper_out = group_out.clone();

    let folded_in = inputs.unwrap_or_else(|| lower_in.clone());
    let folded_out = outputs.unwrap_or_else(|| lower_out.clone());

    let fresh = rest.iter().all(|c| c.name != new_name);
    let obs = vec![
        syntactic(
            rule,
            format!("component name '{new_name}' is not already in use"),
            fresh,
        ),
        syntactic(
            rule,
            format!(
                "folded inputs keep every externally fed channel: {:?} within [{:?} .. {:?}]",
                names_of(&folded_in),
                names_of(&lower_in),
                names_of(&upper_in)
            ),
            lower_in.is_subset(&folded_in) && folded_in.is_subset(&upper_in),
        ),
        syntactic(
            rule,
            format!(
                "folded outputs keep every externally observed channel: {:?} within [{:?} .. {:?}]",
                names_of(&folded_out),
                names_of(&lower_out),
                names_of(&upper_out)
            ),
            lower_out.is_subset(&folded_out) && folded_out.is_subset(&upper_out),
        ),
    ];
    if obs.iter().any(|o| o.verdict == ObligationVerdict::Failed) {
        return Ok(RuleApplication {
            system: None,
            obligations: obs,
        });
    }

    let machine = Machine::compose(
        group.iter().map(|c| c.machine.clone()).collect(),
        folded_in.clone(),
        folded_out.clone(),
        1,
    )?;
    let sub = System {
        name: new_name.to_string(),
        inputs: folded_in,
        outputs: folded_out,
        components: group,
    };
    let folded = Component {
        name: new_name.to_string(),
        machine,
        sub: Some(Box::new(sub)),
    };

    let mut s = system.clone();
    let first = s
        .components
        .iter()
        .position(|c| names.contains(&c.name))
        .expect("the group is nonempty");
    s.components.retain(|c| !names.contains(&c.name));
    s.components.insert(first.min(s.components.len()), folded);
    finish(s, obs)
}

/// Undo a fold: replace a component by the network it was folded from.
pub fn expand(system: &System, comp: &str) -> Result<RuleApplication> {
    let rule = "expand";
    let target = system.component(comp)?;
    let sub = target.sub.as_deref().ok_or_else(|| {
        Error::Composition(format!("expand: component '{comp}' has no recorded sub-structure"))
    })?;

    let mut obs = Vec::new();
    for inner in &sub.components {
        obs.push(syntactic(
            rule,
            format!("unfolded component name '{}' is not already in use", inner.name),
            system
                .components
                .iter()
                .all(|c| c.name == comp || c.name != inner.name),
        ));
    }
    // Channels that were hidden inside the fold come back into scope; they
    // must not collide with anything the rest of the system uses.
    let sub_channels: ChannelSet = sub
        .components
        .iter()
        .flat_map(|c| c.inputs().iter().chain(c.outputs().iter()).cloned())
        .collect();
    let hidden: ChannelSet = sub_channels
        .iter()
        .filter(|c| !sub.inputs.contains(*c) && !sub.outputs.contains(*c))
        .cloned()
        .collect();
    let mut outside: ChannelSet = system.inputs.iter().chain(system.outputs.iter()).cloned().collect();
    for c in &system.components {
        if c.name != comp {
            outside.extend(c.inputs().iter().cloned());
            outside.extend(c.outputs().iter().cloned());
        }
    }
    for c in &hidden {
        obs.push(syntactic(
            rule,
            format!("unfolded internal channel '{}' does not collide outside the fold", c.name()),
            !outside.contains(c),
        ));
    }
    // The folded machine must really be the lockstep product of the
    // recorded network; rebuilt composition is compared structurally.
    let chaos_bound = match &target.machine.kind {
        MachineKind::Product { chaos_bound, .. } => *chaos_bound,
        _ => 1,
    };
    let rebuilt = Machine::compose(
        sub.components.iter().map(|c| c.machine.clone()).collect(),
        sub.inputs.clone(),
        sub.outputs.clone(),
        chaos_bound,
    )?;
    obs.push(syntactic(
        rule,
        format!("'{comp}' still runs exactly the folded network"),
        rebuilt == target.machine,
    ));

    let mut s = system.clone();
    if obs.iter().all(|o| o.verdict != ObligationVerdict::Failed) {
        let at = s
            .components
            .iter()
            .position(|c| c.name == comp)
            .expect("component was looked up above");
        s.components.splice(at..=at, sub.components.iter().cloned());
    }
    finish(s, obs)
}

fn names_of(channels: &ChannelSet) -> Vec<String> {
    channels.iter().map(|c| c.name().to_string()).collect()
}

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

/// Name-based context a script resolves against: channel declarations
/// (for alphabets of newly added channels) and machine/invariant
/// definitions referenced by refinement steps.
#[derive(Debug, Clone, Default)]
pub struct Definitions {
    pub channels: BTreeMap<String, Chan>,
    pub machines: BTreeMap<String, Machine>,
    pub invariants: BTreeMap<String, Invariant>,
}

impl Definitions {
    pub fn channel(&self, name: &str) -> Result<Chan> {
        self.channels
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn machine(&self, name: &str) -> Result<&Machine> {
        self.machines
            .get(name)
            .ok_or_else(|| Error::MachineDef(format!("no machine named '{name}'")))
    }

    pub fn invariant(&self, name: &str) -> Result<&Invariant> {
        self.invariants
            .get(name)
            .ok_or_else(|| Error::Invariant(format!("no invariant named '{name}'")))
    }
}

/// One parsed script step. Steps that check semantic premises may carry
/// their own mode override.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptStep {
    AddComponent { name: String },
    RemoveComponent { name: String },
    AddOutputChannel { comp: String, chan: String },
    RemoveOutputChannel { comp: String, chan: String },
    AddInputChannel { comp: String, chan: String },
    RemoveInputChannel { comp: String, chan: String, mode: Option<CheckMode> },
    RefineBehavior { comp: String, machine: String, mode: Option<CheckMode> },
    RefineBehaviorWithInvariant {
        comp: String,
        machine: String,
        invariant: String,
        mode: Option<CheckMode>,
    },
    Expand { comp: String },
    Fold {
        comps: Vec<String>,
        name: String,
        inputs: Option<Vec<String>>,
        outputs: Option<Vec<String>>,
    },
    RenameChannel { old: String, new: String },
}

impl ScriptStep {
    pub fn rule_name(&self) -> &'static str {
        match self {
            ScriptStep::AddComponent { .. } => "add-component",
            ScriptStep::RemoveComponent { .. } => "remove-component",
            ScriptStep::AddOutputChannel { .. } => "add-output-channel",
            ScriptStep::RemoveOutputChannel { .. } => "remove-output-channel",
            ScriptStep::AddInputChannel { .. } => "add-input-channel",
            ScriptStep::RemoveInputChannel { .. } => "remove-input-channel",
            ScriptStep::RefineBehavior { .. } => "refine-behavior",
            ScriptStep::RefineBehaviorWithInvariant { .. } => "refine-behavior-with-invariant",
            ScriptStep::Expand { .. } => "expand",
            ScriptStep::Fold { .. } => "fold",
            ScriptStep::RenameChannel { .. } => "rename-channel",
        }
    }
}

/// Apply a single resolved step.
pub fn apply_step(
    system: &System,
    step: &ScriptStep,
    defs: &Definitions,
    default_mode: &CheckMode,
) -> Result<RuleApplication> {
    let mode_for = |own: &Option<CheckMode>| own.clone().unwrap_or_else(|| default_mode.clone());
    match step {
        ScriptStep::AddComponent { name } => add_component(system, name),
        ScriptStep::RemoveComponent { name } => remove_component(system, name),
        ScriptStep::AddOutputChannel { comp, chan } => {
            add_output_channel(system, comp, defs.channel(chan)?)
        }
        ScriptStep::RemoveOutputChannel { comp, chan } => {
            remove_output_channel(system, comp, chan)
        }
        ScriptStep::AddInputChannel { comp, chan } => add_input_channel(system, comp, chan),
        ScriptStep::RemoveInputChannel { comp, chan, mode } => {
            remove_input_channel(system, comp, chan, &mode_for(mode))
        }
        ScriptStep::RefineBehavior { comp, machine, mode } => {
            refine_behavior(system, comp, defs.machine(machine)?, &mode_for(mode))
        }
        ScriptStep::RefineBehaviorWithInvariant {
            comp,
            machine,
            invariant,
            mode,
        } => refine_behavior_with_invariant(
            system,
            comp,
            defs.machine(machine)?,
            defs.invariant(invariant)?,
            &mode_for(mode),
        ),
        ScriptStep::Expand { comp } => expand(system, comp),
        ScriptStep::Fold {
            comps,
            name,
            inputs,
            outputs,
        } => {
            let resolve = |names: &Option<Vec<String>>| -> Result<Option<ChannelSet>> {
                match names {
                    None => Ok(None),
                    Some(ns) => {
                        let mut set = ChannelSet::new();
                        for n in ns {
                            set.insert(system.chan(n)?);
                        }
                        Ok(Some(set))
                    }
                }
            };
            fold(system, comps, name, resolve(inputs)?, resolve(outputs)?)
        }
        ScriptStep::RenameChannel { old, new } => rename_channel(system, old, new),
    }
}

/// The result of running a script: the obligation ledger, the system
/// after every applied step (starting with the initial one), and the
/// final system unless a failed premise aborted the run.
#[derive(Debug, Clone)]
pub struct ScriptOutcome {
    pub ledger: ObligationLedger,
    pub stages: Vec<System>,
    pub result: Option<System>,
}

/// Run a script, stopping at the first failed premise (the ledger keeps
/// everything checked up to and including the failing step).
pub fn apply_script(
    initial: &System,
    steps: &[ScriptStep],
    defs: &Definitions,
    default_mode: &CheckMode,
) -> Result<ScriptOutcome> {
    initial.ensure_consistent()?;
    let mut ledger = ObligationLedger::default();
    let mut stages = vec![initial.clone()];
    let mut current = initial.clone();
    for (i, step) in steps.iter().enumerate() {
        let app = apply_step(&current, step, defs, default_mode)?;
        for mut o in app.obligations {
            o.step = i + 1;
            ledger.obligations.push(o);
        }
        match app.system {
            Some(next) => {
                current = next;
                stages.push(current.clone());
            }
            None => {
                return Ok(ScriptOutcome {
                    ledger,
                    stages,
                    result: None,
                })
            }
        }
    }
    Ok(ScriptOutcome {
        ledger,
        stages,
        result: Some(current),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{Control, EmitRule, Guard, GuardCond, Register, TableDef, TransRule};
    use crate::expr::Expr;
    use crate::oracle::check_trace_equality;
    use crate::stream::Interval;
    use crate::value::{Alphabet, Value};

    fn ab() -> Alphabet {
        Alphabet::new("AB", vec![Value::sym("a"), Value::sym("b")])
    }

    fn chan(n: &str) -> Chan {
        Chan::new(n, ab())
    }

    /// Copies `read` to `output` with one tick of delay, declaring all of
    /// `inputs`; extra guard conditions can watch further channels.
    fn latch_with(
        inputs: &[&str],
        read: &str,
        output: &str,
        extra_conds: Vec<(Chan, GuardCond)>,
    ) -> Machine {
        let mut conds = extra_conds;
        conds.insert(0, (chan(read), GuardCond::Any));
        Machine::table(TableDef {
            name: format!("latch_{read}_{output}"),
            inputs: inputs.iter().map(|n| chan(n)).collect(),
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
                    guard: Guard { conds },
                    updates: vec![("held".to_string(), Expr::Input(chan(read)))],
                    target: 0,
                }],
            }],
            init: 0,
        })
        .unwrap()
    }

    fn latch(input: &str, output: &str) -> Machine {
        latch_with(&[input], input, output, vec![])
    }

    /// In --P--> Mid --Q--> Out, with Mid internal.
    fn pipe() -> System {
        System {
            name: "pipe".to_string(),
            inputs: [chan("In")].into_iter().collect(),
            outputs: [chan("Out")].into_iter().collect(),
            components: vec![
                Component::new("P", latch("In", "Mid")),
                Component::new("Q", latch("Mid", "Out")),
            ],
        }
    }

    /// No inputs; every tick freely emits one of `options` on `output`.
    fn emitter(output: &str, options: &[&[&str]]) -> Machine {
        Machine::table(TableDef {
            name: format!("emit_{output}"),
            inputs: vec![],
            outputs: vec![chan(output)],
            registers: vec![],
            controls: vec![Control {
                name: "run".to_string(),
                emits: options
                    .iter()
                    .map(|msgs| EmitRule {
                        outputs: [(
                            chan(output),
                            Expr::interval(
                                Interval::of(msgs.iter().map(|m| Value::sym(m)).collect()).0,
                            ),
                        )]
                        .into_iter()
                        .collect(),
                    })
                    .collect(),
                rules: vec![],
            }],
            init: 0,
        })
        .unwrap()
    }

    fn budget() -> EnumerationBudget {
        EnumerationBudget::exhaustive(3, 1)
    }

    fn assert_equal_traces(a: &System, b: &System) {
        let verdict = check_trace_equality(a, b, &budget()).unwrap();
        assert!(verdict.holds(), "expected equal traces, got {verdict}");
    }

    #[test]
    fn structural_rules_preserve_the_blackbox_traces() {
        let original = pipe();
        let grown = add_component(&original, "probe").unwrap().system.unwrap();
        assert_equal_traces(&original, &grown);

        let tapped = add_output_channel(&grown, "probe", chan("Tap"))
            .unwrap()
            .system
            .unwrap();
        assert_equal_traces(&original, &tapped);

        let watching = add_input_channel(&tapped, "probe", "Mid")
            .unwrap()
            .system
            .unwrap();
        assert_equal_traces(&original, &watching);

        let renamed = rename_channel(&watching, "Mid", "Wire")
            .unwrap()
            .system
            .unwrap();
        assert_equal_traces(&original, &renamed);
    }

    #[test]
    fn add_component_rejects_a_duplicate_name() {
        let app = add_component(&pipe(), "Q").unwrap();
        assert!(app.system.is_none());
        assert_eq!(app.obligations[0].verdict, ObligationVerdict::Failed);
    }

    #[test]
    fn remove_component_requires_unobserved_outputs() {
        let s = pipe();
        // Mid feeds Q, so P must stay.
        let app = remove_component(&s, "P").unwrap();
        assert!(app.system.is_none());
        // A fresh silent component can go.
        let grown = add_component(&s, "probe").unwrap().system.unwrap();
        let shrunk = remove_component(&grown, "probe").unwrap().system.unwrap();
        assert_eq!(shrunk, s);
    }

    #[test]
    fn output_channel_rules_enforce_their_premises() {
        let s = pipe();
        // 'Mid' is already produced, 'In' arrives from outside.
        assert!(add_output_channel(&s, "Q", chan("Mid")).unwrap().system.is_none());
        assert!(add_output_channel(&s, "Q", chan("In")).unwrap().system.is_none());
        // Mid is read by Q; Out is a system output.
        assert!(remove_output_channel(&s, "P", "Mid").unwrap().system.is_none());
        assert!(remove_output_channel(&s, "Q", "Out").unwrap().system.is_none());
        // A fresh tap can be added and taken away again.
        let tapped = add_output_channel(&s, "P", chan("Tap")).unwrap().system.unwrap();
        let back = remove_output_channel(&tapped, "P", "Tap").unwrap().system.unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn input_channel_rules_enforce_their_premises() {
        let s = pipe();
        // Q ignores 'In', which the environment supplies.
        let grown = add_input_channel(&s, "Q", "In").unwrap().system.unwrap();
        assert!(grown.component("Q").unwrap().inputs().contains(&chan("In")));
        // Unknown channels are a hard error, not a failed premise.
        assert!(add_input_channel(&s, "Q", "Nowhere").is_err());
        // Removing the ignored channel again is purely syntactic.
        let app = remove_input_channel(&grown, "Q", "In", &CheckMode::Syntactic).unwrap();
        assert_eq!(app.obligations[0].mode, "syntactic");
        assert_eq!(app.system.unwrap(), s);
    }

    #[test]
    fn remove_input_channel_checks_a_watched_but_harmless_channel() {
        // P watches 'Extra' in a guard that always fires, so behavior
        // does not depend on it — but only a semantic check can tell.
        let p = latch_with(&["In", "Extra"], "In", "Mid", vec![(chan("Extra"), GuardCond::Any)]);
        let s = System {
            name: "pipe".to_string(),
            inputs: [chan("In"), chan("Extra")].into_iter().collect(),
            outputs: [chan("Out")].into_iter().collect(),
            components: vec![
                Component::new("P", p),
                Component::new("Q", latch("Mid", "Out")),
            ],
        };
        let app =
            remove_input_channel(&s, "P", "Extra", &CheckMode::Bounded(budget())).unwrap();
        assert_eq!(app.obligations[0].verdict, ObligationVerdict::Discharged);
        assert!(app.obligations[0].mode.starts_with("bounded"));
        let after = app.system.unwrap();
        assert!(!after.component("P").unwrap().machine.reads("Extra"));

        // In syntactic mode the same premise is only an assumption.
        let assumed =
            remove_input_channel(&s, "P", "Extra", &CheckMode::Syntactic).unwrap();
        assert_eq!(assumed.obligations[0].verdict, ObligationVerdict::Assumed);
    }

    #[test]
    fn remove_input_channel_fails_when_behavior_depends_on_it() {
        let s = pipe();
        let app = remove_input_channel(&s, "P", "In", &CheckMode::Bounded(budget())).unwrap();
        assert!(app.system.is_none());
        let o = &app.obligations[0];
        assert_eq!(o.verdict, ObligationVerdict::Failed);
        assert!(o.counterexample.is_some(), "a failed bounded premise carries a witness");
    }

    #[test]
    fn rename_channel_round_trips_and_guards_the_interface() {
        let s = pipe();
        let renamed = rename_channel(&s, "Mid", "Wire").unwrap().system.unwrap();
        assert!(renamed.chan("Wire").is_ok());
        assert!(renamed.chan("Mid").is_err());
        let back = rename_channel(&renamed, "Wire", "Mid").unwrap().system.unwrap();
        assert_eq!(back, s);

        // Interface channels and occupied names are rejected.
        assert!(rename_channel(&s, "In", "X").unwrap().system.is_none());
        assert!(rename_channel(&s, "Mid", "Out").unwrap().system.is_none());
    }

    #[test]
    fn refine_behavior_narrows_nondeterminism() {
        let free = emitter("Out", &[&["a"], &["b"]]);
        let s = System {
            name: "chooser".to_string(),
            inputs: ChannelSet::new(),
            outputs: [chan("Out")].into_iter().collect(),
            components: vec![Component::new("E", free)],
        };
        // Dropping an option is a refinement, visible syntactically.
        let narrowed = emitter("Out", &[&["a"]]);
        let app = refine_behavior(&s, "E", &narrowed, &CheckMode::Syntactic).unwrap();
        assert_eq!(app.obligations[0].mode, "syntactic");
        assert_eq!(app.obligations[0].verdict, ObligationVerdict::Discharged);
        assert_eq!(app.system.unwrap().component("E").unwrap().machine, narrowed);

        // Adding an option is not; the bounded check produces a witness.
        let widened = emitter("Out", &[&["a"], &["b"], &["a", "a"]]);
        let app = refine_behavior(&s, "E", &widened, &CheckMode::Bounded(budget())).unwrap();
        assert!(app.system.is_none());
        assert_eq!(app.obligations[0].verdict, ObligationVerdict::Failed);
        assert!(app.obligations[0].counterexample.is_some());

        // A replacement over a different interface is misuse, not a premise.
        assert!(refine_behavior(&s, "E", &emitter("Other", &[&["a"]]), &CheckMode::Syntactic)
            .is_err());
    }

    #[test]
    fn refine_behavior_with_invariant_tracks_both_premises() {
        let s = pipe();
        let inv = Invariant::trivially_true("anything");
        let app = refine_behavior_with_invariant(
            &s,
            "Q",
            &latch("Mid", "Out"),
            &inv,
            &CheckMode::Bounded(budget()),
        )
        .unwrap();
        assert_eq!(app.obligations.len(), 2);
        assert!(app.obligations.iter().all(|o| o.verdict == ObligationVerdict::Discharged));
        assert!(app.system.is_some());
    }

    #[test]
    fn fold_and_expand_round_trip() {
        let s = pipe();
        let folded = fold(&s, &["P".to_string(), "Q".to_string()], "PQ", None, None)
            .unwrap()
            .system
            .unwrap();
        assert_eq!(folded.components.len(), 1);
        let pq = folded.component("PQ").unwrap();
        // Defaults: the smallest legal interface hides 'Mid'.
        assert_eq!(names_of(pq.inputs()), vec!["In"]);
        assert_eq!(names_of(pq.outputs()), vec!["Out"]);
        assert!(pq.sub.is_some());
        assert_equal_traces(&s, &folded);

        let expanded = expand(&folded, "PQ").unwrap().system.unwrap();
        assert_eq!(expanded, s);
    }

    #[test]
    fn fold_rejects_interfaces_outside_the_legal_bounds() {
        let s = pipe();
        let members = vec!["P".to_string(), "Q".to_string()];
        // Dropping the observed output 'Out' undercuts the lower bound.
        let app = fold(&s, &members, "PQ", None, Some(ChannelSet::new())).unwrap();
        assert!(app.system.is_none());
        // 'Mid' is produced inside the group, so it cannot stay an input.
        let wide: ChannelSet = [chan("In"), chan("Mid")].into_iter().collect();
        let app = fold(&s, &members, "PQ", Some(wide), None).unwrap();
        assert!(app.system.is_none());
    }

    #[test]
    fn expand_requires_recorded_substructure() {
        assert!(expand(&pipe(), "P").is_err());
    }

    #[test]
    fn scripts_stop_at_the_first_failed_premise() {
        let s = pipe();
        let defs = Definitions {
            channels: [("Tap".to_string(), chan("Tap"))].into_iter().collect(),
            machines: Default::default(),
            invariants: Default::default(),
        };
        let steps = vec![
            ScriptStep::AddComponent { name: "probe".to_string() },
            ScriptStep::AddOutputChannel { comp: "probe".to_string(), chan: "Tap".to_string() },
            ScriptStep::RemoveComponent { name: "probe".to_string() },
            // Fails: Q reads 'Mid'.
            ScriptStep::RemoveComponent { name: "P".to_string() },
            ScriptStep::RenameChannel { old: "Mid".to_string(), new: "Wire".to_string() },
        ];
        let out = apply_script(&s, &steps, &defs, &CheckMode::default_bounded()).unwrap();
        assert!(out.result.is_none());
        // Initial stage plus the three applied steps; the failing step
        // contributes obligations but no successor system.
        assert_eq!(out.stages.len(), 4);
        assert_eq!(out.ledger.exit_code(), 1);
        assert!(out.ledger.obligations.iter().any(|o| o.step == 4));
        assert!(out.ledger.obligations.iter().all(|o| o.step <= 4));

        // Without the bad step the script completes cleanly.
        let good: Vec<ScriptStep> = steps
            .iter()
            .filter(|st| !matches!(st, ScriptStep::RemoveComponent { name } if name == "P"))
            .cloned()
            .collect();
        let out = apply_script(&s, &good, &defs, &CheckMode::default_bounded()).unwrap();
        assert_eq!(out.ledger.exit_code(), 0);
        let end = out.result.unwrap();
        assert!(end.chan("Wire").is_ok());
        assert_equal_traces(&s, &end);
    }

    #[test]
    fn assumptions_show_up_in_the_exit_code() {
        let s = pipe();
        let app = remove_input_channel(
            &pipe_with_watched_extra(&s),
            "P",
            "Extra",
            &CheckMode::Assumed,
        )
        .unwrap();
        let mut ledger = ObligationLedger::default();
        ledger.obligations = app.obligations;
        assert_eq!(ledger.exit_code(), 2);
        assert!(ledger.render().contains("assumed"));
    }

    /// A pipe whose P also watches an 'Extra' input it does not use.
    fn pipe_with_watched_extra(base: &System) -> System {
        let mut s = base.clone();
        s.inputs.insert(chan("Extra"));
        s.component_mut("P").unwrap().machine =
            latch_with(&["In", "Extra"], "In", "Mid", vec![(chan("Extra"), GuardCond::Any)]);
        s
    }
}

