//! Finite prefixes of timed streams and named stream tuples.
//!
//! A communication history divides time into discrete intervals (ticks);
//! each interval carries a finite message sequence. The engine never
//! materializes infinite streams: every value here is a finite prefix of
//! explicit tick length, and all semantic checks are bounded in depth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::value::{Alphabet, Value};

/// A channel identifier together with its message alphabet.
///
/// Identity (equality, ordering, hashing) is by name only; names are unique
/// within one declaration scope and the frontend rejects redeclarations.
#[derive(Debug, Clone)]
pub struct Chan {
    name: String,
    alphabet: Alphabet,
}

impl Chan {
    pub fn new(name: &str, alphabet: Alphabet) -> Chan {
        assert!(!name.is_empty(), "channel names must be nonempty");
        Chan {
            name: name.to_string(),
            alphabet,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }
}

impl PartialEq for Chan {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Chan {}

impl PartialOrd for Chan {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Chan {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name.cmp(&other.name)
    }
}

impl std::hash::Hash for Chan {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
    }
}

impl fmt::Display for Chan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// An ordered set of channels.
pub type ChannelSet = BTreeSet<Chan>;

/// The messages transmitted within one time interval, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval(pub Vec<Value>);

impl Interval {
    pub fn empty() -> Interval {
        Interval(Vec::new())
    }

    pub fn of(msgs: Vec<Value>) -> Interval {
        Interval(msgs)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn messages(&self) -> &[Value] {
        &self.0
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, ">")
    }
}

/// A finite prefix of a timed stream: one interval per tick, ticks from 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimedStreamPrefix {
    intervals: Vec<Interval>,
}

impl TimedStreamPrefix {
    pub fn new(intervals: Vec<Interval>) -> TimedStreamPrefix {
        TimedStreamPrefix { intervals }
    }

    /// Prefix of `len` empty intervals.
    pub fn silent(len: usize) -> TimedStreamPrefix {
        TimedStreamPrefix {
            intervals: vec![Interval::empty(); len],
        }
    }

    pub fn tick_len(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn interval(&self, tick: usize) -> Result<&Interval> {
        self.intervals.get(tick).ok_or(Error::OutOfRange {
            index: tick,
            len: self.intervals.len(),
        })
    }

    pub fn push(&mut self, interval: Interval) {
        self.intervals.push(interval);
    }

    /// The first `ticks` intervals of this prefix.
    pub fn truncate(&self, ticks: usize) -> Result<TimedStreamPrefix> {
        if ticks > self.intervals.len() {
            return Err(Error::OutOfRange {
                index: ticks,
                len: self.intervals.len(),
            });
        }
        Ok(TimedStreamPrefix {
            intervals: self.intervals[..ticks].to_vec(),
        })
    }

    /// Concatenation of all intervals into one untimed message sequence.
    pub fn flatten(&self) -> Vec<Value> {
        self.intervals
            .iter()
            .flat_map(|iv| iv.0.iter().cloned())
            .collect()
    }

    /// Interval-sequence concatenation.
    pub fn concat(&self, other: &TimedStreamPrefix) -> TimedStreamPrefix {
        let mut intervals = self.intervals.clone();
        intervals.extend(other.intervals.iter().cloned());
        TimedStreamPrefix { intervals }
    }
}

impl fmt::Display for TimedStreamPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

/// An assignment of equal-length stream prefixes to a finite channel set.
///
/// The tick length is tracked separately so that tuples with an empty
/// channel domain still have a well-defined length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NamedStreamTuple {
    tick_len: usize,
    entries: BTreeMap<Chan, TimedStreamPrefix>,
}

impl NamedStreamTuple {
    /// Tuple with an empty channel domain.
    pub fn empty(tick_len: usize) -> NamedStreamTuple {
        NamedStreamTuple {
            tick_len,
            entries: BTreeMap::new(),
        }
    }

    /// Tuple of all-empty intervals over `channels`.
    pub fn silent(channels: &ChannelSet, tick_len: usize) -> NamedStreamTuple {
        let entries = channels
            .iter()
            .map(|c| (c.clone(), TimedStreamPrefix::silent(tick_len)))
            .collect();
        NamedStreamTuple { tick_len, entries }
    }

    pub fn new(entries: BTreeMap<Chan, TimedStreamPrefix>) -> Result<NamedStreamTuple> {
        let mut tick_len = None;
        for (c, p) in &entries {
            match tick_len {
                None => tick_len = Some(p.tick_len()),
                Some(t) if t != p.tick_len() => {
                    return Err(Error::Join(format!(
                        "channel '{c}' has {} intervals, expected {t}",
                        p.tick_len()
                    )))
                }
                _ => {}
            }
        }
        Ok(NamedStreamTuple {
            tick_len: tick_len.unwrap_or(0),
            entries,
        })
    }

    pub fn tick_len(&self) -> usize {
        self.tick_len
    }

    pub fn domain(&self) -> ChannelSet {
        self.entries.keys().cloned().collect()
    }

    pub fn entries(&self) -> &BTreeMap<Chan, TimedStreamPrefix> {
        &self.entries
    }

    pub fn get(&self, channel: &Chan) -> Result<&TimedStreamPrefix> {
        self.entries
            .get(channel)
            .ok_or_else(|| Error::UnknownChannel(channel.name().to_string()))
    }

    /// One tick's slice: channel -> interval at `tick`.
    pub fn slice(&self, tick: usize) -> Result<BTreeMap<Chan, Interval>> {
        let mut out = BTreeMap::new();
        for (c, p) in &self.entries {
            out.insert(c.clone(), p.interval(tick)?.clone());
        }
        Ok(out)
    }

    /// Append one tick's intervals; `slice` must cover exactly the domain.
    pub fn push_slice(&mut self, slice: &BTreeMap<Chan, Interval>) -> Result<()> {
        if slice.len() != self.entries.len() || !slice.keys().all(|c| self.entries.contains_key(c))
        {
            return Err(Error::Interface(
                "tick slice does not match tuple domain".to_string(),
            ));
        }
        for (c, iv) in slice {
            self.entries.get_mut(c).unwrap().push(iv.clone());
        }
        self.tick_len += 1;
        Ok(())
    }

    /// The first `ticks` intervals of every channel.
    pub fn truncate(&self, ticks: usize) -> Result<NamedStreamTuple> {
        if ticks > self.tick_len {
            return Err(Error::OutOfRange {
                index: ticks,
                len: self.tick_len,
            });
        }
        let entries = self
            .entries
            .iter()
            .map(|(c, p)| Ok((c.clone(), p.truncate(ticks)?)))
            .collect::<Result<_>>()?;
        Ok(NamedStreamTuple {
            tick_len: ticks,
            entries,
        })
    }

    /// Restriction of the tuple to the channels in `channels`.
    pub fn restrict(&self, channels: &ChannelSet) -> Result<NamedStreamTuple> {
        for c in channels {
            if !self.entries.contains_key(c) {
                return Err(Error::UnknownChannel(c.name().to_string()));
            }
        }
        let entries = self
            .entries
            .iter()
            .filter(|(c, _)| channels.contains(c))
            .map(|(c, p)| (c.clone(), p.clone()))
            .collect();
        Ok(NamedStreamTuple {
            tick_len: self.tick_len,
            entries,
        })
    }

    /// Disjoint union of two tuples of equal tick length.
    pub fn join(&self, other: &NamedStreamTuple) -> Result<NamedStreamTuple> {
        if self.tick_len != other.tick_len {
            return Err(Error::Join(format!(
                "tick lengths differ: {} vs {}",
                self.tick_len, other.tick_len
            )));
        }
        let mut entries = self.entries.clone();
        for (c, p) in &other.entries {
            if entries.insert(c.clone(), p.clone()).is_some() {
                return Err(Error::Join(format!("channel '{c}' present in both tuples")));
            }
        }
        Ok(NamedStreamTuple {
            tick_len: self.tick_len,
            entries,
        })
    }
}

/// All intervals over `alphabet` with at most `max_len` messages, in
/// length-lexicographic order.
pub fn intervals_up_to(alphabet: &Alphabet, max_len: usize) -> Vec<Interval> {
    let mut out = vec![Interval::empty()];
    let mut layer: Vec<Vec<Value>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for stem in &layer {
            for m in alphabet.values() {
                let mut xs = stem.clone();
                xs.push(m.clone());
                next.push(xs);
            }
        }
        out.extend(next.iter().cloned().map(Interval::of));
        layer = next;
    }
    out
}

/// Number of intervals `intervals_up_to` yields, if it fits in u128.
pub fn interval_count(alphabet_size: usize, max_len: usize) -> Option<u128> {
    let a = alphabet_size as u128;
    let mut total: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..=max_len {
        total = total.checked_add(pow)?;
        pow = pow.checked_mul(a)?;
    }
    Some(total)
}

/// Enumerates every named stream tuple over a channel set with a fixed tick
/// count and a per-interval message bound, in a deterministic order.
///
/// The empty channel set yields exactly one tuple (of the requested tick
/// length).
pub struct TupleEnumerator {
    channels: Vec<Chan>,
    choices: Vec<Vec<Interval>>,
    ticks: usize,
    // odometer over ticks * channels positions; None once exhausted
    digits: Option<Vec<usize>>,
}

impl TupleEnumerator {
    pub fn new(channels: &ChannelSet, ticks: usize, max_len: usize) -> TupleEnumerator {
        let channels: Vec<Chan> = channels.iter().cloned().collect();
        let choices = channels
            .iter()
            .map(|c| intervals_up_to(c.alphabet(), max_len))
            .collect::<Vec<_>>();
        let digits = if choices.iter().any(|c| c.is_empty()) && ticks > 0 {
            None
        } else {
            Some(vec![0; channels.len() * ticks])
        };
        TupleEnumerator {
            channels,
            choices,
            ticks,
            digits,
        }
    }

    /// Closed-form count of tuples this enumerator yields, if it fits in
    /// u128: (product over channels of the interval count)^ticks.
    pub fn count(channels: &ChannelSet, ticks: usize, max_len: usize) -> Option<u128> {
        let mut per_tick: u128 = 1;
        for c in channels {
            let n = interval_count(c.alphabet().len(), max_len)?;
            per_tick = per_tick.checked_mul(n)?;
        }
        let mut total: u128 = 1;
        for _ in 0..ticks {
            total = total.checked_mul(per_tick)?;
        }
        Some(total)
    }

    fn build(&self, digits: &[usize]) -> NamedStreamTuple {
        let mut entries = BTreeMap::new();
        for (j, c) in self.channels.iter().enumerate() {
            let intervals = (0..self.ticks)
                .map(|t| self.choices[j][digits[t * self.channels.len() + j]].clone())
                .collect();
            entries.insert(c.clone(), TimedStreamPrefix::new(intervals));
        }
        let mut tuple = NamedStreamTuple::new(entries).expect("equal lengths by construction");
        if self.channels.is_empty() {
            tuple = NamedStreamTuple::empty(self.ticks);
        }
        tuple
    }
}

impl Iterator for TupleEnumerator {
    type Item = NamedStreamTuple;

    fn next(&mut self) -> Option<NamedStreamTuple> {
        let mut digits = self.digits.take()?;
        let item = self.build(&digits);
        // advance the odometer; drop it once every position has wrapped
        let per_chan = self.channels.len();
        let mut pos = 0;
        while pos < digits.len() {
            digits[pos] += 1;
            if digits[pos] < self.choices[pos % per_chan].len() {
                self.digits = Some(digits);
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        Some(item)
    }
}

impl fmt::Display for NamedStreamTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            return write!(f, "{{}} ({} ticks)", self.tick_len);
        }
        for (i, (c, p)) in self.entries.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{c}: {p}")?;
        }
        Ok(())
    }
}
