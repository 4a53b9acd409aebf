//! Bounded checking of behavioral claims: input enumeration, trace
//! inclusion and equality between systems, stream invariants, and
//! behavioral refinement of one component under an invariant.
//!
//! The exhaustive checks do not materialize the input space. They walk it
//! one tick at a time, carrying a frontier of reachable configurations
//! and deduplicating configurations that different prefixes lead to, so
//! the cost is governed by the number of reachable machine states rather
//! than by the number of input histories. Every input history up to the
//! budgeted depth is still covered. Sampled mode instead replays randomly
//! drawn input histories one by one.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::behavior::{InputValuation, MState, Machine, OutputValuation};
use crate::corpus::{delta, rho};
use crate::error::{Error, Result};
use crate::stream::{intervals_up_to, Chan, ChannelSet, Interval, NamedStreamTuple};
use crate::system::System;
use crate::value::Value;

/// Hard default on how much a single check may explore (input histories in
/// sampled or materialized enumeration, frontier configurations in the
/// tick-walking checks) before giving up as inconclusive.
pub const DEFAULT_CEILING: u128 = 2_000_000;

/// How the bounded input space is covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnumMode {
    /// Every input history up to the depth and interval bound.
    Exhaustive,
    /// `count` histories drawn from a seeded generator; deterministic for
    /// a given seed, but only a spot check.
    Sampled { count: u64, seed: u64 },
}

/// Exploration budget for a bounded check: how many ticks deep, how many
/// messages per interval, and how the space is covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumerationBudget {
    /// Number of ticks to explore.
    pub depth: usize,
    /// Maximum number of messages per channel per tick.
    pub interval_bound: usize,
    pub mode: EnumMode,
    /// Exploration ceiling; crossing it makes a check inconclusive.
    pub ceiling: u128,
}

impl EnumerationBudget {
    pub fn exhaustive(depth: usize, interval_bound: usize) -> EnumerationBudget {
        EnumerationBudget {
            depth,
            interval_bound,
            mode: EnumMode::Exhaustive,
            ceiling: DEFAULT_CEILING,
        }
    }

    pub fn sampled(depth: usize, interval_bound: usize, count: u64, seed: u64) -> EnumerationBudget {
        EnumerationBudget {
            depth,
            interval_bound,
            mode: EnumMode::Sampled { count, seed },
            ceiling: DEFAULT_CEILING,
        }
    }

    pub fn with_ceiling(mut self, ceiling: u128) -> EnumerationBudget {
        self.ceiling = ceiling;
        self
    }
}

/// A replayable counterexample: the input history that exposes the
/// problem and the offending output history observed on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub input: NamedStreamTuple,
    pub output: NamedStreamTuple,
    pub note: String,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.note)?;
        writeln!(f, "input:\n{}", self.input)?;
        write!(f, "observed output:\n{}", self.output)
    }
}

/// Outcome of a bounded check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// No violation anywhere within the budget. `explored` counts input
    /// histories or frontier configurations, depending on the check.
    Holds { explored: u128 },
    /// A concrete violation, with a replayable witness.
    Fails(Box<Witness>),
    /// The check gave up before covering the budgeted space.
    Inconclusive { explored: u128, reason: String },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }

    pub fn failed(&self) -> bool {
        matches!(self, Verdict::Fails(_))
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Fails(w) => Some(w),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds { explored } => write!(f, "holds (explored {explored})"),
            Verdict::Fails(w) => write!(f, "fails: {}", w.note),
            Verdict::Inconclusive { explored, reason } => {
                write!(f, "inconclusive after {explored}: {reason}")
            }
        }
    }
}

/// All input histories over `channels` allowed by the budget, materialized.
///
/// In exhaustive mode this is every tuple of `depth` ticks with per-tick
/// intervals of at most `interval_bound` messages; if that space is larger
/// than the ceiling the call fails with a budget error. In sampled mode it
/// is `count` tuples drawn from a generator seeded with `seed`.
pub fn enumerate_inputs(
    channels: &ChannelSet,
    budget: &EnumerationBudget,
) -> Result<Vec<NamedStreamTuple>> {
    match &budget.mode {
        EnumMode::Exhaustive => {
            let space = crate::stream::TupleEnumerator::count(
                channels,
                budget.depth,
                budget.interval_bound,
            )
            .unwrap_or(u128::MAX);
            if space > budget.ceiling {
                return Err(Error::Budget(format!(
                    "input space has {space} histories, above the ceiling of {}",
                    budget.ceiling
                )));
            }
            Ok(
                crate::stream::TupleEnumerator::new(channels, budget.depth, budget.interval_bound)
                    .collect(),
            )
        }
        EnumMode::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut out = Vec::with_capacity(*count as usize);
            for _ in 0..*count {
                out.push(random_tuple(&mut rng, channels, budget.depth, budget.interval_bound));
            }
            Ok(out)
        }
    }
}

/// Every per-tick input valuation over `channels` with intervals of at
/// most `interval_bound` messages, in a fixed deterministic order.
pub fn slice_options(channels: &ChannelSet, interval_bound: usize) -> Vec<InputValuation> {
    let mut acc: Vec<InputValuation> = vec![InputValuation::new()];
    for c in channels {
        let choices = intervals_up_to(c.alphabet(), interval_bound);
        let mut next = Vec::with_capacity(acc.len() * choices.len());
        for base in &acc {
            for iv in &choices {
                let mut v = base.clone();
                v.insert(c.clone(), iv.clone());
                next.push(v);
            }
        }
        acc = next;
    }
    acc
}

fn random_interval<R: Rng>(rng: &mut R, chan: &Chan, interval_bound: usize) -> Interval {
    let len = rng.gen_range(0..=interval_bound);
    let values = chan.alphabet().values();
    Interval::of(
        (0..len)
            .map(|_| values[rng.gen_range(0..values.len())].clone())
            .collect(),
    )
}

fn random_slice<R: Rng>(rng: &mut R, channels: &ChannelSet, interval_bound: usize) -> InputValuation {
    channels
        .iter()
        .map(|c| (c.clone(), random_interval(rng, c, interval_bound)))
        .collect()
}

fn random_tuple<R: Rng>(
    rng: &mut R,
    channels: &ChannelSet,
    ticks: usize,
    interval_bound: usize,
) -> NamedStreamTuple {
    let mut t = NamedStreamTuple::silent(channels, 0);
    for _ in 0..ticks {
        let slice = random_slice(rng, channels, interval_bound);
        t.push_slice(&slice).expect("slice covers the domain");
    }
    t
}

/// One tick along an explored input history; a reverse-linked list so
/// frontier configurations can share their common past.
struct PathNode {
    parent: Option<Rc<PathNode>>,
    input: InputValuation,
    output: OutputValuation,
}

type Path = Option<Rc<PathNode>>;

fn extend(path: &Path, input: InputValuation, output: OutputValuation) -> Path {
    Some(Rc::new(PathNode {
        parent: path.clone(),
        input,
        output,
    }))
}

/// Rebuild the (input, output) histories a path encodes.
fn unwind(path: &Path, inputs: &ChannelSet, outputs: &ChannelSet) -> (NamedStreamTuple, NamedStreamTuple) {
    let mut ticks = Vec::new();
    let mut cur = path.clone();
    while let Some(node) = cur {
        ticks.push((node.input.clone(), node.output.clone()));
        cur = node.parent.clone();
    }
    ticks.reverse();
    let mut input = NamedStreamTuple::silent(inputs, 0);
    let mut output = NamedStreamTuple::silent(outputs, 0);
    for (i, o) in ticks {
        input.push_slice(&i).expect("path slice covers the inputs");
        output.push_slice(&o).expect("path slice covers the outputs");
    }
    (input, output)
}

fn restrict_valuation(v: &OutputValuation, channels: &ChannelSet) -> OutputValuation {
    v.iter()
        .filter(|(c, _)| channels.contains(c))
        .map(|(c, iv)| (c.clone(), iv.clone()))
        .collect()
}

fn channel_names(channels: &ChannelSet) -> Vec<String> {
    channels.iter().map(|c| c.name().to_string()).collect()
}

/// Do two channel sets agree by name *and* alphabet? Channel identity is
/// by name alone, so interface checks must compare alphabets explicitly.
fn same_channels(a: &ChannelSet, b: &ChannelSet) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|(x, y)| {
            x.name() == y.name() && x.alphabet().values() == y.alphabet().values()
        })
}

/// Check that every output history `fine` can produce (on any input up to
/// the budget) is one `coarse` can produce on the same input, compared
/// over the channels `coarse` constrains. Channels `coarse` leaves
/// chaotic admit anything and are skipped.
///
/// Both machines must have the same input and output interface. If `fine`
/// leaves a channel chaotic that `coarse` constrains, no finite check can
/// certify inclusion, so the verdict is inconclusive.
pub fn check_machine_inclusion(
    fine: &Machine,
    coarse: &Machine,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    if !same_channels(&fine.inputs, &coarse.inputs) {
        return Err(Error::Interface(format!(
            "input interfaces differ: {:?} vs {:?}",
            channel_names(&fine.inputs),
            channel_names(&coarse.inputs)
        )));
    }
    if !same_channels(&fine.outputs, &coarse.outputs) {
        return Err(Error::Interface(format!(
            "output interfaces differ: {:?} vs {:?}",
            channel_names(&fine.outputs),
            channel_names(&coarse.outputs)
        )));
    }
    if !fine.chaotic.is_subset(&coarse.chaotic) {
        let loose: ChannelSet = fine.chaotic.difference(&coarse.chaotic).cloned().collect();
        return Ok(Verdict::Inconclusive {
            explored: 0,
            reason: format!(
                "refined side leaves {:?} unconstrained where the original constrains them",
                channel_names(&loose)
            ),
        });
    }
    let compare = coarse.concrete_outputs();
    if compare.is_empty() {
        // Everything is included in chaos.
        return Ok(Verdict::Holds { explored: 0 });
    }
    match &budget.mode {
        EnumMode::Exhaustive => inclusion_walk_exhaustive(fine, coarse, &compare, budget),
        EnumMode::Sampled { count, seed } => {
            inclusion_walk_sampled(fine, coarse, &compare, budget, *count, *seed)
        }
    }
}

/// One frontier configuration of the inclusion walk: a state the fine
/// machine may be in, paired with every state the coarse machine can be
/// in after producing the same observable output history.
struct InclusionNode {
    fine: MState,
    coarse: BTreeSet<MState>,
    path: Path,
}

fn inclusion_walk_exhaustive(
    fine: &Machine,
    coarse: &Machine,
    compare: &ChannelSet,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    let slices = slice_options(&fine.inputs, budget.interval_bound);
    let mut frontier = vec![InclusionNode {
        fine: fine.init_state(),
        coarse: [coarse.init_state()].into_iter().collect(),
        path: None,
    }];
    let mut explored: u128 = 1;
    for tick in 0..budget.depth {
        let mut next: Vec<InclusionNode> = Vec::new();
        let mut seen: BTreeSet<(MState, Vec<MState>)> = BTreeSet::new();
        for node in &frontier {
            for slice in &slices {
                let fine_options = fine.tick_options(&node.fine, slice)?;
                if fine_options.is_empty() {
                    continue;
                }
                let mut coarse_options: Vec<(OutputValuation, MState)> = Vec::new();
                for cs in &node.coarse {
                    coarse_options.extend(coarse.tick_options(cs, slice)?);
                }
                for (fout, fnext) in fine_options {
                    let fobs = restrict_valuation(&fout, compare);
                    let matching: BTreeSet<MState> = coarse_options
                        .iter()
                        .filter(|(cout, _)| restrict_valuation(cout, compare) == fobs)
                        .map(|(_, cs)| cs.clone())
                        .collect();
                    if matching.is_empty() {
                        let path = extend(&node.path, slice.clone(), fobs);
                        let (input, output) = unwind(&path, &fine.inputs, compare);
                        return Ok(Verdict::Fails(Box::new(Witness {
                            input,
                            output,
                            note: format!(
                                "output at tick {tick} is producible by the refined \
                                 behavior but not by the original"
                            ),
                        })));
                    }
                    let key = (fnext.clone(), matching.iter().cloned().collect::<Vec<_>>());
                    if seen.insert(key) {
                        explored += 1;
                        if explored > budget.ceiling {
                            return Ok(Verdict::Inconclusive {
                                explored,
                                reason: format!(
                                    "more than {} frontier configurations",
                                    budget.ceiling
                                ),
                            });
                        }
                        next.push(InclusionNode {
                            fine: fnext,
                            coarse: matching,
                            path: extend(&node.path, slice.clone(), fobs),
                        });
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(Verdict::Holds { explored })
}

fn inclusion_walk_sampled(
    fine: &Machine,
    coarse: &Machine,
    compare: &ChannelSet,
    budget: &EnumerationBudget,
    count: u64,
    seed: u64,
) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let mut nodes = vec![InclusionNode {
            fine: fine.init_state(),
            coarse: [coarse.init_state()].into_iter().collect(),
            path: None,
        }];
        for tick in 0..budget.depth {
            let slice = random_slice(&mut rng, &fine.inputs, budget.interval_bound);
            let mut next: Vec<InclusionNode> = Vec::new();
            let mut seen: BTreeSet<(MState, Vec<MState>)> = BTreeSet::new();
            for n in &nodes {
                let mut coarse_options: Vec<(OutputValuation, MState)> = Vec::new();
                for cs in &n.coarse {
                    coarse_options.extend(coarse.tick_options(cs, &slice)?);
                }
                for (fout, fnext) in fine.tick_options(&n.fine, &slice)? {
                    let fobs = restrict_valuation(&fout, compare);
                    let matching: BTreeSet<MState> = coarse_options
                        .iter()
                        .filter(|(cout, _)| restrict_valuation(cout, compare) == fobs)
                        .map(|(_, cs)| cs.clone())
                        .collect();
                    if matching.is_empty() {
                        let path = extend(&n.path, slice.clone(), fobs);
                        let (input, output) = unwind(&path, &fine.inputs, compare);
                        return Ok(Verdict::Fails(Box::new(Witness {
                            input,
                            output,
                            note: format!(
                                "output at tick {tick} is producible by the refined \
                                 behavior but not by the original (sampled)"
                            ),
                        })));
                    }
                    let key = (fnext.clone(), matching.iter().cloned().collect::<Vec<_>>());
                    if seen.insert(key) {
                        next.push(InclusionNode {
                            fine: fnext,
                            coarse: matching,
                            path: extend(&n.path, slice.clone(), fobs),
                        });
                    }
                }
            }
            nodes = next;
        }
    }
    Ok(Verdict::Holds { explored: count as u128 })
}

/// Bounded trace inclusion between systems: every observable behavior of
/// `refined` is one of `original`, over all external inputs up to the
/// budget. Both systems must be consistent and share the same external
/// interface.
pub fn check_trace_inclusion(
    original: &System,
    refined: &System,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    original.ensure_consistent()?;
    refined.ensure_consistent()?;
    if !same_channels(&original.inputs, &refined.inputs)
        || !same_channels(&original.outputs, &refined.outputs)
    {
        return Err(Error::Interface(
            "systems have different external interfaces".to_string(),
        ));
    }
    let coarse = original.blackbox_with_bound(budget.interval_bound)?;
    let fine = refined.blackbox_with_bound(budget.interval_bound)?;
    check_machine_inclusion(&fine, &coarse, budget)
}

/// Bounded trace equality between systems: inclusion in both directions.
pub fn check_trace_equality(
    left: &System,
    right: &System,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    let forward = check_trace_inclusion(left, right, budget)?;
    let Verdict::Holds { explored: fwd } = forward else {
        if let Verdict::Fails(w) = forward {
            return Ok(Verdict::Fails(Box::new(Witness {
                note: format!("{} (extra behavior in '{}')", w.note, right.name),
                ..*w
            })));
        }
        return Ok(forward);
    };
    let backward = check_trace_inclusion(right, left, budget)?;
    match backward {
        Verdict::Holds { explored } => Ok(Verdict::Holds {
            explored: fwd + explored,
        }),
        Verdict::Fails(w) => Ok(Verdict::Fails(Box::new(Witness {
            note: format!("{} (extra behavior in '{}')", w.note, left.name),
            ..*w
        }))),
        other => Ok(other),
    }
}

/// Sampled spot check of the one-tick delay property: draw pairs of input
/// histories that agree up to some tick `i` and differ afterwards, and
/// require the sets of output histories to agree through tick `i + 1`.
pub fn check_time_guardedness_sampled(
    machine: &Machine,
    ticks: usize,
    interval_bound: usize,
    pairs: usize,
    seed: u64,
) -> Result<Verdict> {
    if ticks == 0 {
        return Ok(Verdict::Holds { explored: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..pairs {
        let shared = rng.gen_range(0..ticks);
        let mut x = NamedStreamTuple::silent(&machine.inputs, 0);
        for _ in 0..shared {
            x.push_slice(&random_slice(&mut rng, &machine.inputs, interval_bound))?;
        }
        let mut y = x.clone();
        for _ in shared..ticks {
            x.push_slice(&random_slice(&mut rng, &machine.inputs, interval_bound))?;
            y.push_slice(&random_slice(&mut rng, &machine.inputs, interval_bound))?;
        }
        let outs_x: BTreeSet<NamedStreamTuple> = machine
            .run(&x)?
            .into_iter()
            .map(|o| o.truncate(shared + 1))
            .collect::<Result<_>>()?;
        let outs_y: BTreeSet<NamedStreamTuple> = machine
            .run(&y)?
            .into_iter()
            .map(|o| o.truncate(shared + 1))
            .collect::<Result<_>>()?;
        if outs_x != outs_y {
            let offending = outs_x
                .symmetric_difference(&outs_y)
                .next()
                .cloned()
                .unwrap_or_else(|| NamedStreamTuple::empty(shared + 1));
            return Ok(Verdict::Fails(Box::new(Witness {
                input: x,
                output: offending,
                note: format!(
                    "pair {n}: inputs agree through tick {shared} but outputs \
                     already differ at tick {}",
                    shared + 1
                ),
            })));
        }
    }
    Ok(Verdict::Holds {
        explored: pairs as u128,
    })
}

// ---------------------------------------------------------------------------
// Invariants
// ---------------------------------------------------------------------------

/// Per-message transformation a stream equation applies to its source,
/// threading a key-indexed accumulator across the whole history where the
/// transformation is stateful.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FoldKind {
    /// Target repeats the source verbatim.
    Identity,
    /// (k, d) becomes (k, (d + 1) mod n).
    IncAll { modulus: i64 },
    /// Running difference encoding: each (k, d) becomes (k, Δ(M(k), d))
    /// while the accumulator records the raw datum.
    DeltaStar { modulus: i64 },
    /// Running difference decoding: each (k, δ) becomes (k, ρ(M(k), δ))
    /// while the accumulator records the decoded datum.
    RhoStar { modulus: i64 },
}

/// One timed equation: `target(t) = fold(source)(t - delay)`, with the
/// fold's accumulator threaded across all ticks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StreamEquation {
    pub target: Chan,
    pub source: Chan,
    pub delay: usize,
    pub fold: FoldKind,
}

/// An opaque predicate over stream prefixes, with the channels it reads
/// declared up front.
#[derive(Clone)]
pub struct Predicate {
    pub domain: ChannelSet,
    pub eval: Rc<dyn Fn(&NamedStreamTuple) -> bool>,
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predicate")
            .field("domain", &channel_names(&self.domain))
            .finish_non_exhaustive()
    }
}

/// The shape of an invariant over a system's streams.
#[derive(Debug, Clone)]
pub enum InvariantKind {
    /// Trivially true everywhere.
    True,
    /// A conjunction of timed stream equations, checkable and derivable
    /// one tick at a time.
    Equations(Vec<StreamEquation>),
    /// An opaque prefix predicate; checkable only by evaluating it.
    Predicate(Predicate),
}

/// A named invariant over the streams of a system.
#[derive(Debug, Clone)]
pub struct Invariant {
    pub name: String,
    pub kind: InvariantKind,
}

impl Invariant {
    pub fn trivially_true(name: &str) -> Invariant {
        Invariant {
            name: name.to_string(),
            kind: InvariantKind::True,
        }
    }

    pub fn equations(name: &str, eqs: Vec<StreamEquation>) -> Invariant {
        Invariant {
            name: name.to_string(),
            kind: InvariantKind::Equations(eqs),
        }
    }

    pub fn predicate(name: &str, domain: ChannelSet, eval: Rc<dyn Fn(&NamedStreamTuple) -> bool>) -> Invariant {
        Invariant {
            name: name.to_string(),
            kind: InvariantKind::Predicate(Predicate { domain, eval }),
        }
    }

    /// Every channel the invariant mentions.
    pub fn channels(&self) -> ChannelSet {
        match &self.kind {
            InvariantKind::True => ChannelSet::new(),
            InvariantKind::Equations(eqs) => eqs
                .iter()
                .flat_map(|e| [e.target.clone(), e.source.clone()])
                .collect(),
            InvariantKind::Predicate(p) => p.domain.clone(),
        }
    }

    /// The channels the invariant pins down (equation targets). For an
    /// opaque predicate every mentioned channel counts as constrained.
    pub fn constrained(&self) -> ChannelSet {
        match &self.kind {
            InvariantKind::True => ChannelSet::new(),
            InvariantKind::Equations(eqs) => eqs.iter().map(|e| e.target.clone()).collect(),
            InvariantKind::Predicate(p) => p.domain.clone(),
        }
    }

    /// Declaration-time guard: the invariant may only mention channels the
    /// system actually has, and must not constrain an external input —
    /// an invariant restricting the environment would make every premise
    /// it guards vacuously easier, not sound.
    pub fn check_against(&self, system: &System) -> Result<()> {
        let known: ChannelSet = system
            .inputs
            .iter()
            .cloned()
            .chain(system.component_outputs())
            .collect();
        for c in self.channels() {
            if !known.contains(&c) {
                return Err(Error::Invariant(format!(
                    "invariant '{}' mentions channel '{}' which is neither a system \
                     input nor a component output",
                    self.name,
                    c.name()
                )));
            }
        }
        for c in self.constrained() {
            if system.inputs.contains(&c) {
                return Err(Error::Invariant(format!(
                    "invariant '{}' restricts external input channel '{}'",
                    self.name,
                    c.name()
                )));
            }
        }
        if let InvariantKind::Equations(eqs) = &self.kind {
            let mut targets = BTreeSet::new();
            for e in eqs {
                if !targets.insert(e.target.clone()) {
                    return Err(Error::Invariant(format!(
                        "invariant '{}' constrains channel '{}' twice",
                        self.name,
                        e.target.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The running state of one equation while walking a history tick by
/// tick: the fold accumulator and the queue of already-transformed source
/// intervals still waiting out the delay.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct EquationMonitor {
    equation: StreamEquation,
    pending: VecDeque<Interval>,
    accumulator: BTreeMap<Value, i64>,
}

fn pair_parts(v: &Value) -> std::result::Result<(Value, i64), String> {
    match v {
        Value::Pair(k, d) => match d.as_ref() {
            Value::Int(n) => Ok((k.as_ref().clone(), *n)),
            other => Err(format!("pair datum {other} is not an integer")),
        },
        other => Err(format!("message {other} is not a (key, datum) pair")),
    }
}

impl EquationMonitor {
    fn new(equation: &StreamEquation) -> EquationMonitor {
        EquationMonitor {
            equation: equation.clone(),
            pending: (0..equation.delay).map(|_| Interval::empty()).collect(),
            accumulator: BTreeMap::new(),
        }
    }

    /// Apply the fold to one source interval, updating the accumulator.
    fn transform(&mut self, iv: &Interval) -> std::result::Result<Interval, String> {
        match self.equation.fold {
            FoldKind::Identity => Ok(iv.clone()),
            FoldKind::IncAll { modulus } => {
                let mut out = Vec::with_capacity(iv.len());
                for m in iv.messages() {
                    let (k, d) = pair_parts(m)?;
                    out.push(Value::pair(k, Value::Int((d + 1).rem_euclid(modulus))));
                }
                Ok(Interval::of(out))
            }
            FoldKind::DeltaStar { modulus } => {
                let mut out = Vec::with_capacity(iv.len());
                for m in iv.messages() {
                    let (k, d) = pair_parts(m)?;
                    let diff = delta(self.accumulator.get(&k).copied(), d, modulus);
                    self.accumulator.insert(k.clone(), d);
                    out.push(Value::pair(k, Value::Int(diff)));
                }
                Ok(Interval::of(out))
            }
            FoldKind::RhoStar { modulus } => {
                let mut out = Vec::with_capacity(iv.len());
                for m in iv.messages() {
                    let (k, diff) = pair_parts(m)?;
                    let d = rho(self.accumulator.get(&k).copied(), diff, modulus);
                    self.accumulator.insert(k.clone(), d);
                    out.push(Value::pair(k, Value::Int(d)));
                }
                Ok(Interval::of(out))
            }
        }
    }

    /// Push this tick's source interval through the fold and return the
    /// interval the target must carry this tick.
    fn advance(&mut self, source: &Interval) -> std::result::Result<Interval, String> {
        let transformed = self.transform(source)?;
        self.pending.push_back(transformed);
        Ok(self.pending.pop_front().expect("queue holds at least one interval"))
    }
}

/// Check a set of equation monitors against one tick's full valuation.
fn step_monitors(
    monitors: &mut [EquationMonitor],
    valuation: &BTreeMap<Chan, Interval>,
    tick: usize,
) -> std::result::Result<(), String> {
    static EMPTY: Interval = Interval(Vec::new());
    for m in monitors.iter_mut() {
        let source = valuation.get(&m.equation.source).unwrap_or(&EMPTY);
        let target = valuation.get(&m.equation.target).unwrap_or(&EMPTY);
        let expected = m.advance(source)?;
        if *target != expected {
            return Err(format!(
                "equation {} = {:?}({}) delayed {} breaks at tick {tick}: \
                 expected {expected}, saw {target}",
                m.equation.target.name(),
                m.equation.fold,
                m.equation.source.name(),
                m.equation.delay,
            ));
        }
    }
    Ok(())
}

/// Does the invariant hold on every behavior the system can exhibit,
/// observed on all internal and external channels, for every input up to
/// the budget?
pub fn check_invariant_validity(
    system: &System,
    invariant: &Invariant,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    system.ensure_consistent()?;
    invariant.check_against(system)?;
    match &invariant.kind {
        InvariantKind::True => Ok(Verdict::Holds { explored: 0 }),
        InvariantKind::Equations(eqs) => {
            let glass = system.glassbox_with_bound(budget.interval_bound)?;
            let symbolic: ChannelSet = invariant
                .channels()
                .intersection(&glass.chaotic)
                .cloned()
                .collect();
            if !symbolic.is_empty() {
                return Ok(Verdict::Inconclusive {
                    explored: 0,
                    reason: format!(
                        "invariant mentions {:?}, which the system leaves unconstrained",
                        channel_names(&symbolic)
                    ),
                });
            }
            validity_walk(&glass, eqs, budget)
        }
        InvariantKind::Predicate(p) => validity_predicate(system, p, budget),
    }
}

struct ValidityNode {
    state: MState,
    monitors: Vec<EquationMonitor>,
    path: Path,
}

fn validity_walk(
    glass: &Machine,
    eqs: &[StreamEquation],
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    let monitors: Vec<EquationMonitor> = eqs.iter().map(EquationMonitor::new).collect();
    let observed = glass.concrete_outputs();
    let sampled = match &budget.mode {
        EnumMode::Exhaustive => None,
        EnumMode::Sampled { count, seed } => Some((*count, *seed)),
    };
    let runs = sampled.map(|(c, _)| c).unwrap_or(1);
    let mut rng = sampled.map(|(_, s)| ChaCha8Rng::seed_from_u64(s));
    let slices = if sampled.is_none() {
        slice_options(&glass.inputs, budget.interval_bound)
    } else {
        Vec::new()
    };
    let mut explored: u128 = 0;
    for _ in 0..runs {
        let mut frontier = vec![ValidityNode {
            state: glass.init_state(),
            monitors: monitors.clone(),
            path: None,
        }];
        explored += 1;
        for tick in 0..budget.depth {
            let sampled_slice = rng
                .as_mut()
                .map(|r| random_slice(r, &glass.inputs, budget.interval_bound));
            let tick_slices: &[InputValuation] = match &sampled_slice {
                Some(s) => std::slice::from_ref(s),
                None => &slices,
            };
            let mut next: Vec<ValidityNode> = Vec::new();
            let mut seen: BTreeSet<(MState, Vec<EquationMonitor>)> = BTreeSet::new();
            for node in &frontier {
                for slice in tick_slices {
                    for (out, state) in glass.tick_options(&node.state, slice)? {
                        let mut valuation = slice.clone();
                        for (c, iv) in &out {
                            valuation.insert(c.clone(), iv.clone());
                        }
                        let mut ms = node.monitors.clone();
                        if let Err(why) = step_monitors(&mut ms, &valuation, tick) {
                            let path = extend(&node.path, slice.clone(), out);
                            let (input, output) = unwind(&path, &glass.inputs, &observed);
                            return Ok(Verdict::Fails(Box::new(Witness {
                                input,
                                output,
                                note: why,
                            })));
                        }
                        let key = (state.clone(), ms.clone());
                        if seen.insert(key) {
                            explored += 1;
                            if explored > budget.ceiling {
                                return Ok(Verdict::Inconclusive {
                                    explored,
                                    reason: format!(
                                        "more than {} frontier configurations",
                                        budget.ceiling
                                    ),
                                });
                            }
                            next.push(ValidityNode {
                                state,
                                monitors: ms,
                                path: extend(&node.path, slice.clone(), out.clone()),
                            });
                        }
                    }
                }
            }
            frontier = next;
        }
    }
    Ok(Verdict::Holds { explored })
}

fn validity_predicate(
    system: &System,
    p: &Predicate,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    let glass = system.glassbox_with_bound(budget.interval_bound)?;
    let inputs = enumerate_inputs(&glass.inputs, budget)?;
    let mut explored: u128 = 0;
    for input in &inputs {
        for trace in glass.run(input)? {
            explored += 1;
            if explored > budget.ceiling {
                return Ok(Verdict::Inconclusive {
                    explored,
                    reason: format!("more than {} histories", budget.ceiling),
                });
            }
            let full = input.join(&trace)?;
            for t in 1..=full.tick_len() {
                let prefix = full.truncate(t)?.restrict(&p.domain)?;
                if !(p.eval)(&prefix) {
                    return Ok(Verdict::Fails(Box::new(Witness {
                        input: input.truncate(t)?,
                        output: trace.truncate(t)?,
                        note: format!("predicate fails on the prefix of length {t}"),
                    })));
                }
            }
        }
    }
    Ok(Verdict::Holds { explored })
}

/// Order equations so that each one's source is available before the
/// equation fires: sources that are themselves targets come later. `None`
/// if the dependencies are cyclic.
fn derivation_order(eqs: &[StreamEquation]) -> Option<Vec<usize>> {
    let targets: BTreeMap<&Chan, usize> = eqs.iter().enumerate().map(|(i, e)| (&e.target, i)).collect();
    let mut order = Vec::with_capacity(eqs.len());
    let mut done: BTreeSet<usize> = BTreeSet::new();
    while order.len() < eqs.len() {
        let mut progressed = false;
        for (i, e) in eqs.iter().enumerate() {
            if done.contains(&i) {
                continue;
            }
            let ready = match targets.get(&e.source) {
                Some(&j) if j != i => done.contains(&j),
                Some(_) => false, // self-cycle
                None => true,
            };
            if ready {
                done.insert(i);
                order.push(i);
                progressed = true;
            }
        }
        if !progressed {
            return None;
        }
    }
    Some(order)
}

/// Does `replacement` refine component `name`'s current behavior on every
/// history that satisfies the invariant? The quantification runs over the
/// component's inputs together with every channel the invariant mentions;
/// channels the invariant pins down are derived from their sources
/// instead of enumerated, which covers exactly the invariant-satisfying
/// histories.
pub fn check_refinement_under_invariant(
    system: &System,
    name: &str,
    replacement: &Machine,
    invariant: &Invariant,
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    system.ensure_consistent()?;
    invariant.check_against(system)?;
    let current = &system.component(name)?.machine;
    if !same_channels(&replacement.inputs, &current.inputs) {
        return Err(Error::Interface(format!(
            "replacement for '{name}' changes its input channels"
        )));
    }
    if !same_channels(&replacement.outputs, &current.outputs) {
        return Err(Error::Interface(format!(
            "replacement for '{name}' changes its output channels"
        )));
    }
    if !replacement.chaotic.is_subset(&current.chaotic) {
        let loose: ChannelSet = replacement
            .chaotic
            .difference(&current.chaotic)
            .cloned()
            .collect();
        return Ok(Verdict::Inconclusive {
            explored: 0,
            reason: format!(
                "replacement leaves {:?} unconstrained where the current behavior \
                 constrains them",
                channel_names(&loose)
            ),
        });
    }
    let compare = current.concrete_outputs();
    let universe: ChannelSet = current
        .inputs
        .iter()
        .cloned()
        .chain(invariant.channels())
        .collect();
    match &invariant.kind {
        InvariantKind::True => check_machine_inclusion(replacement, current, budget),
        InvariantKind::Equations(eqs) => match derivation_order(eqs) {
            Some(order) => under_invariant_derived(
                replacement,
                current,
                &compare,
                &universe,
                eqs,
                &order,
                budget,
            ),
            None => under_invariant_filtered(
                replacement,
                current,
                &compare,
                &universe,
                |full| {
                    let mut ms: Vec<EquationMonitor> = eqs.iter().map(EquationMonitor::new).collect();
                    move_filter_equations(&mut ms, full)
                },
                budget,
            ),
        },
        InvariantKind::Predicate(p) => {
            let domain = p.domain.clone();
            let eval = p.eval.clone();
            under_invariant_filtered(
                replacement,
                current,
                &compare,
                &universe,
                move |full|

                {
                    // The premise only cares about prefixes on which the
                    // invariant holds; report for each prefix length
                    // whether it does.
                    (1..=full.tick_len())
                        .map(|t| {
                            full.truncate(t)
                                .and_then(|p| p.restrict(&domain))
                                .map(|p| (eval)(&p))
                                .unwrap_or(false)
                        })
                        .collect()
                },
                budget,
            )
        }
    }
}

fn move_filter_equations(monitors: &mut [EquationMonitor], full: &NamedStreamTuple) -> Vec<bool> {
    let mut ok = Vec::with_capacity(full.tick_len());
    let mut alive = true;
    for tick in 0..full.tick_len() {
        if alive {
            let slice = full.slice(tick).unwrap_or_default();
            alive = step_monitors(monitors, &slice, tick).is_ok();
        }
        ok.push(alive);
    }
    ok
}

struct UnderInvariantNode {
    fine: MState,
    coarse: BTreeSet<MState>,
    monitors: Vec<EquationMonitor>,
    path: Path,
}

/// Exhaustive walk where the invariant's target channels are derived from
/// the enumerated free channels tick by tick.
fn under_invariant_derived(
    fine: &Machine,
    coarse: &Machine,
    compare: &ChannelSet,
    universe: &ChannelSet,
    eqs: &[StreamEquation],
    order: &[usize],
    budget: &EnumerationBudget,
) -> Result<Verdict> {
    let targets: ChannelSet = eqs.iter().map(|e| e.target.clone()).collect();
    let free: ChannelSet = universe.difference(&targets).cloned().collect();
    let monitors: Vec<EquationMonitor> = eqs.iter().map(EquationMonitor::new).collect();
    let sampled = match &budget.mode {
        EnumMode::Exhaustive => None,
        EnumMode::Sampled { count, seed } => Some((*count, *seed)),
    };
    let runs = sampled.map(|(c, _)| c).unwrap_or(1);
    let mut rng = sampled.map(|(_, s)| ChaCha8Rng::seed_from_u64(s));
    let free_slices = if sampled.is_none() {
        slice_options(&free, budget.interval_bound)
    } else {
        Vec::new()
    };
    let mut explored: u128 = 0;
    for _ in 0..runs {
        let mut frontier = vec![UnderInvariantNode {
            fine: fine.init_state(),
            coarse: [coarse.init_state()].into_iter().collect(),
            monitors: monitors.clone(),
            path: None,
        }];
        explored += 1;
        for tick in 0..budget.depth {
            let sampled_slice = rng
                .as_mut()
                .map(|r| random_slice(r, &free, budget.interval_bound));
            let tick_slices: &[InputValuation] = match &sampled_slice {
                Some(s) => std::slice::from_ref(s),
                None => &free_slices,
            };
            let mut next: Vec<UnderInvariantNode> = Vec::new();
            let mut seen: BTreeSet<(MState, Vec<MState>, Vec<EquationMonitor>)> = BTreeSet::new();
            for node in &frontier {
                for free_slice in tick_slices {
                    let mut ms = node.monitors.clone();
                    let mut full = free_slice.clone();
                    for &i in order {
                        static EMPTY: Interval = Interval(Vec::new());
                        let source = full.get(&ms[i].equation.source).unwrap_or(&EMPTY).clone();
                        let derived = match ms[i].advance(&source) {
                            Ok(iv) => iv,
                            Err(why) => {
                                return Ok(Verdict::Inconclusive {
                                    explored,
                                    reason: format!("cannot derive invariant channel: {why}"),
                                })
                            }
                        };
                        full.insert(ms[i].equation.target.clone(), derived);
                    }
                    let local: InputValuation = full
                        .iter()
                        .filter(|(c, _)| fine.inputs.contains(c))
                        .map(|(c, iv)| (c.clone(), iv.clone()))
                        .collect();
                    let mut coarse_options: Vec<(OutputValuation, MState)> = Vec::new();
                    for cs in &node.coarse {
                        coarse_options.extend(coarse.tick_options(cs, &local)?);
                    }
                    for (fout, fnext) in fine.tick_options(&node.fine, &local)? {
                        let fobs = restrict_valuation(&fout, compare);
                        let matching: BTreeSet<MState> = coarse_options
                            .iter()
                            .filter(|(cout, _)| restrict_valuation(cout, compare) == fobs)
                            .map(|(_, cs)| cs.clone())
                            .collect();
                        if matching.is_empty() {
                            let path = extend(&node.path, full.clone(), fobs);
                            let (input, output) = unwind(&path, universe, compare);
                            return Ok(Verdict::Fails(Box::new(Witness {
                                input,
                                output,
                                note: format!(
                                    "under the invariant, the replacement produces an \
                                     output at tick {tick} the current behavior cannot"
                                ),
                            })));
                        }
                        let key = (
                            fnext.clone(),
                            matching.iter().cloned().collect::<Vec<_>>(),
                            ms.clone(),
                        );
                        if seen.insert(key) {
                            explored += 1;
                            if explored > budget.ceiling {
                                return Ok(Verdict::Inconclusive {
                                    explored,
                                    reason: format!(
                                        "more than {} frontier configurations",
                                        budget.ceiling
                                    ),
                                });
                            }
                            next.push(UnderInvariantNode {
                                fine: fnext,
                                coarse: matching,
                                monitors: ms.clone(),
                                path: extend(&node.path, full.clone(), fobs),
                            });
                        }
                    }
                }
            }
            frontier = next;
        }
    }
    Ok(Verdict::Holds { explored })
}

/// Fallback walk for invariants that cannot be derived: enumerate whole
/// histories over the universe, ask the invariant which prefix lengths it
/// accepts, and require inclusion on exactly those.
fn under_invariant_filtered<F>(
    fine: &Machine,
    coarse: &Machine,
    compare: &ChannelSet,
    universe: &ChannelSet,
    accepts: F,
    budget: &EnumerationBudget,
) -> Result<Verdict>
where
    F: Fn(&NamedStreamTuple) -> Vec<bool>,
{
    let inputs = enumerate_inputs(universe, budget)?;
    let mut explored: u128 = 0;
    for full in &inputs {
        explored += 1;
        if explored > budget.ceiling {
            return Ok(Verdict::Inconclusive {
                explored,
                reason: format!("more than {} histories", budget.ceiling),
            });
        }
        // ok_prefix[t - 1] says whether the invariant accepts the length-t
        // prefix; a branch that breaks inclusion at tick `tick` violates
        // the premise only if some accepted prefix reaches past that tick.
        let ok_prefix = accepts(full);
        let last_accepted = ok_prefix.iter().rposition(|&b| b).map(|i| i + 1).unwrap_or(0);
        if last_accepted == 0 {
            continue;
        }
        let local = full.restrict(&fine.inputs)?;
        let mut nodes: Vec<(MState, BTreeSet<MState>, Path)> = vec![(
            fine.init_state(),
            [coarse.init_state()].into_iter().collect(),
            None,
        )];
        for tick in 0..full.tick_len() {
            if tick + 1 > last_accepted {
                break;
            }
            let slice = local.slice(tick)?;
            let mut next: Vec<(MState, BTreeSet<MState>, Path)> = Vec::new();
            let mut seen: BTreeSet<(MState, Vec<MState>)> = BTreeSet::new();
            let mut escape: Option<(Path, MState)> = None;
            for (fs, css, path) in &nodes {
                let mut coarse_options: Vec<(OutputValuation, MState)> = Vec::new();
                for cs in css {
                    coarse_options.extend(coarse.tick_options(cs, &slice)?);
                }
                for (fout, fnext) in fine.tick_options(fs, &slice)? {
                    let fobs = restrict_valuation(&fout, compare);
                    let matching: BTreeSet<MState> = coarse_options
                        .iter()
                        .filter(|(cout, _)| restrict_valuation(cout, compare) == fobs)
                        .map(|(_, cs)| cs.clone())
                        .collect();
                    if matching.is_empty() {
                        if escape.is_none() {
                            escape = Some((
                                extend(path, full.slice(tick)?, fobs),
                                fnext.clone(),
                            ));
                        }
                        continue;
                    }
                    let key = (fnext.clone(), matching.iter().cloned().collect::<Vec<_>>());
                    if seen.insert(key) {
                        next.push((
                            fnext,
                            matching,
                            extend(path, full.slice(tick)?, fobs),
                        ));
                    }
                }
            }
            if let Some((mut path, mut state)) = escape {
                // Guarded by the loop bound above, some accepted prefix
                // length >= tick + 1 exists; pick the first and pad the
                // offending trace out to it (any continuation keeps the
                // violation, since the broken output prefix is shared).
                let p = (tick + 1..=last_accepted)
                    .find(|&p| ok_prefix[p - 1])
                    .expect("an accepted prefix past the break exists");
                for t2 in tick + 1..p {
                    let s2 = local.slice(t2)?;
                    let (o2, n2) = fine
                        .tick_options(&state, &s2)?
                        .into_iter()
                        .next()
                        .ok_or_else(|| Error::Eval("machine offers no step".to_string()))?;
                    path = extend(&path, full.slice(t2)?, restrict_valuation(&o2, compare));
                    state = n2;
                }
                let (input, output) = unwind(&path, universe, compare);
                return Ok(Verdict::Fails(Box::new(Witness {
                    input,
                    output,
                    note: format!(
                        "on an invariant-satisfying history, the replacement \
                         produces an output at tick {tick} the current behavior \
                         cannot"
                    ),
                })));
            }
            nodes = next;
            if nodes.is_empty() {
                break;
            }
        }
    }
    Ok(Verdict::Holds { explored })
}
