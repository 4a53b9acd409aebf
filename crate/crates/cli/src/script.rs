//! Parser for refinement scripts: one rule application per line.
//!
//! ```text
//! # comments run to end of line
//! add-component ENC
//! refine-behavior ENC machine=ENC
//! refine-behavior-with-invariant RDB machine=RDB_R invariant=roundtrip mode=bounded depth=6
//! fold PRE ENC name=PRE'
//! ```
//!
//! A line is whitespace-separated tokens: the rule name, then positional
//! arguments (component and channel names), then `key=value` settings.
//! List-valued settings separate items with commas.

use pafr_core::oracle::EnumerationBudget;
use pafr_core::rules::{CheckMode, ScriptStep};

use crate::diag::{ParseError, SourceSpan};

/// Check-mode settings gathered from `key=value` pairs (or from command
/// line flags, which share the resolution rules).
#[derive(Debug, Default, Clone)]
pub struct ModeSpec {
    pub mode: Option<String>,
    pub depth: Option<usize>,
    pub bound: Option<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
}

impl ModeSpec {
    pub fn is_empty(&self) -> bool {
        self.mode.is_none()
            && self.depth.is_none()
            && self.bound.is_none()
            && self.samples.is_none()
            && self.seed.is_none()
    }

    /// Resolve to a concrete mode, or `None` when nothing was given (the
    /// step then inherits the run-wide default). Budget settings without
    /// an explicit mode imply one: `depth`/`bound` imply `bounded`,
    /// `samples`/`seed` imply `sampled`.
    pub fn resolve(&self) -> Result<Option<CheckMode>, String> {
        if self.is_empty() {
            return Ok(None);
        }
        let mode = match self.mode.as_deref() {
            Some(m) => m,
            None if self.samples.is_some() || self.seed.is_some() => "sampled",
            None => "bounded",
        };
        let depth = self.depth.unwrap_or(5);
        let bound = self.bound.unwrap_or(1);
        match mode {
            "syntactic" | "assumed" => {
                if self.depth.is_some()
                    || self.bound.is_some()
                    || self.samples.is_some()
                    || self.seed.is_some()
                {
                    return Err(format!("mode '{mode}' takes no enumeration settings"));
                }
                Ok(Some(if mode == "syntactic" {
                    CheckMode::Syntactic
                } else {
                    CheckMode::Assumed
                }))
            }
            "bounded" => {
                if self.samples.is_some() || self.seed.is_some() {
                    return Err("samples/seed apply to mode 'sampled'".to_string());
                }
                Ok(Some(CheckMode::Bounded(EnumerationBudget::exhaustive(
                    depth, bound,
                ))))
            }
            "sampled" => Ok(Some(CheckMode::Bounded(EnumerationBudget::sampled(
                depth,
                bound,
                self.samples.unwrap_or(256),
                self.seed.unwrap_or(0),
            )))),
            other => Err(format!(
                "unknown mode '{other}' (expected syntactic, bounded, sampled, or assumed)"
            )),
        }
    }
}

struct Tok {
    text: String,
    span: SourceSpan,
}

fn split_line(file: &str, lineno: usize, line: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut col = 0usize;
    let mut cur = String::new();
    let mut start = 0usize;
    for ch in line.chars().chain(std::iter::once(' ')) {
        col += 1;
        if ch == '#' {
            break;
        }
        if ch.is_whitespace() {
            if !cur.is_empty() {
                toks.push(Tok {
                    text: std::mem::take(&mut cur),
                    span: SourceSpan {
                        file: file.to_string(),
                        line: lineno,
                        column: start,
                        end_line: lineno,
                        end_column: col,
                    },
                });
            }
        } else {
            if cur.is_empty() {
                start = col;
            }
            cur.push(ch);
        }
    }
    toks
}

struct Line<'a> {
    rule: &'a Tok,
    positional: Vec<&'a Tok>,
    keyed: Vec<(&'a str, &'a str, &'a Tok)>,
}

impl<'a> Line<'a> {
    fn split(toks: &'a [Tok]) -> Line<'a> {
        let mut positional = Vec::new();
        let mut keyed = Vec::new();
        for t in &toks[1..] {
            match t.text.split_once('=') {
                Some((k, v)) => keyed.push((k, v, t)),
                None => positional.push(t),
            }
        }
        Line {
            rule: &toks[0],
            positional,
            keyed,
        }
    }

    fn args(&self, n: usize) -> Result<Vec<String>, ParseError> {
        if self.positional.len() != n {
            return Err(ParseError::new(
                format!(
                    "'{}' takes {n} positional argument{}, found {}",
                    self.rule.text,
                    if n == 1 { "" } else { "s" },
                    self.positional.len()
                ),
                self.rule.span.clone(),
            ));
        }
        Ok(self.positional.iter().map(|t| t.text.clone()).collect())
    }

    /// Consume the keyed settings: required/optional names plus the
    /// shared check-mode keys when `with_mode` is set.
    fn settings(
        &self,
        required: &[&str],
        optional: &[&str],
        with_mode: bool,
    ) -> Result<(Vec<String>, Vec<Option<String>>, Option<CheckMode>), ParseError> {
        let mode_keys = ["mode", "depth", "bound", "samples", "seed"];
        let mut spec = ModeSpec::default();
        let mut req: Vec<Option<String>> = vec![None; required.len()];
        let mut opt: Vec<Option<String>> = vec![None; optional.len()];
        for (k, v, t) in &self.keyed {
            let dup = |slot: &Option<String>| -> Result<(), ParseError> {
                if slot.is_some() {
                    Err(ParseError::new(
                        format!("duplicate setting '{k}'"),
                        t.span.clone(),
                    ))
                } else {
                    Ok(())
                }
            };
            if let Some(i) = required.iter().position(|r| r == k) {
                dup(&req[i])?;
                req[i] = Some(v.to_string());
            } else if let Some(i) = optional.iter().position(|o| o == k) {
                dup(&opt[i])?;
                opt[i] = Some(v.to_string());
            } else if with_mode && mode_keys.contains(k) {
                let numeric = |what: &str| -> Result<u64, ParseError> {
                    v.parse::<u64>().map_err(|_| {
                        ParseError::new(
                            format!("'{what}' needs a nonnegative integer, found '{v}'"),
                            t.span.clone(),
                        )
                    })
                };
                match *k {
                    "mode" => spec.mode = Some(v.to_string()),
                    "depth" => spec.depth = Some(numeric("depth")? as usize),
                    "bound" => spec.bound = Some(numeric("bound")? as usize),
                    "samples" => spec.samples = Some(numeric("samples")?),
                    "seed" => spec.seed = Some(numeric("seed")?),
                    _ => unreachable!(),
                }
            } else {
                return Err(ParseError::new(
                    format!("unknown setting '{k}' for '{}'", self.rule.text),
                    t.span.clone(),
                ));
            }
        }
        for (i, r) in req.iter().enumerate() {
            if r.is_none() {
                return Err(ParseError::new(
                    format!("'{}' needs {}=...", self.rule.text, required[i]),
                    self.rule.span.clone(),
                ));
            }
        }
        let mode = spec
            .resolve()
            .map_err(|m| ParseError::new(m, self.rule.span.clone()))?;
        Ok((req.into_iter().map(Option::unwrap).collect(), opt, mode))
    }
}

fn comma_list(v: &str) -> Vec<String> {
    v.split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parse a script file into rule applications.
pub fn parse_script(file: &str, text: &str) -> Result<Vec<ScriptStep>, ParseError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let toks = split_line(file, i + 1, raw);
        if toks.is_empty() {
            continue;
        }
        let line = Line::split(&toks);
        let one = |l: &Line| l.args(1).map(|mut a| a.remove(0));
        let step = match line.rule.text.as_str() {
            "add-component" => {
                line.settings(&[], &[], false)?;
                ScriptStep::AddComponent { name: one(&line)? }
            }
            "remove-component" => {
                line.settings(&[], &[], false)?;
                ScriptStep::RemoveComponent { name: one(&line)? }
            }
            "add-output-channel" => {
                line.settings(&[], &[], false)?;
                let a = line.args(2)?;
                ScriptStep::AddOutputChannel {
                    comp: a[0].clone(),
                    chan: a[1].clone(),
                }
            }
            "remove-output-channel" => {
                line.settings(&[], &[], false)?;
                let a = line.args(2)?;
                ScriptStep::RemoveOutputChannel {
                    comp: a[0].clone(),
                    chan: a[1].clone(),
                }
            }
            "add-input-channel" => {
                line.settings(&[], &[], false)?;
                let a = line.args(2)?;
                ScriptStep::AddInputChannel {
                    comp: a[0].clone(),
                    chan: a[1].clone(),
                }
            }
            "remove-input-channel" => {
                let (_, _, mode) = line.settings(&[], &[], true)?;
                let a = line.args(2)?;
                ScriptStep::RemoveInputChannel {
                    comp: a[0].clone(),
                    chan: a[1].clone(),
                    mode,
                }
            }
            "refine-behavior" => {
                let (req, _, mode) = line.settings(&["machine"], &[], true)?;
                ScriptStep::RefineBehavior {
                    comp: one(&line)?,
                    machine: req[0].clone(),
                    mode,
                }
            }
            "refine-behavior-with-invariant" => {
                let (req, _, mode) =
                    line.settings(&["machine", "invariant"], &[], true)?;
                ScriptStep::RefineBehaviorWithInvariant {
                    comp: one(&line)?,
                    machine: req[0].clone(),
                    invariant: req[1].clone(),
                    mode,
                }
            }
            "expand" => {
                line.settings(&[], &[], false)?;
                ScriptStep::Expand { comp: one(&line)? }
            }
            "fold" => {
                let (req, opt, _) =
                    line.settings(&["name"], &["inputs", "outputs"], false)?;
                if line.positional.is_empty() {
                    return Err(ParseError::new(
                        "'fold' needs the components to fold".to_string(),
                        line.rule.span.clone(),
                    ));
                }
                ScriptStep::Fold {
                    comps: line.positional.iter().map(|t| t.text.clone()).collect(),
                    name: req[0].clone(),
                    inputs: opt[0].as_deref().map(comma_list),
                    outputs: opt[1].as_deref().map(comma_list),
                }
            }
            "rename-channel" => {
                line.settings(&[], &[], false)?;
                let a = line.args(2)?;
                ScriptStep::RenameChannel {
                    old: a[0].clone(),
                    new: a[1].clone(),
                }
            }
            other => {
                return Err(ParseError::new(
                    format!("unknown rule '{other}'"),
                    line.rule.span.clone(),
                ));
            }
        };
        steps.push(step);
    }
    Ok(steps)
}
