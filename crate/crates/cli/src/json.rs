//! JSON interchange: a canonical document mirroring the type model
//! (alphabets, channels, machines, components, system) so other tools can
//! generate architectures, plus the trace format used for `simulate`
//! inputs and counterexample witnesses.
//!
//! Messages encode by shape: integers as numbers, symbols as strings,
//! pairs/sequences/maps as single-key objects. A trace is per-channel,
//! per-tick message lists:
//!
//! ```json
//! { "ticks": 2, "channels": { "In": [[{"pair": ["k0", 3]}], []] } }
//! ```

use std::collections::BTreeMap;

use pafr_core::behavior::{
    Control, EmitRule, Guard, GuardCond, Machine, MachineKind, Register, TableDef, TransRule,
};
use pafr_core::expr::{Builtin, Expr};
use pafr_core::stream::{Chan, ChannelSet, Interval, NamedStreamTuple, TimedStreamPrefix};
use pafr_core::system::{Component, System};
use pafr_core::value::{Alphabet, Value};
use serde_json::{json, Map as JMap, Value as J};

use crate::parser::{assemble_product, Architecture};
use pafr_core::oracle::{FoldKind, Invariant, InvariantKind, StreamEquation, Witness};
use pafr_core::rules::Definitions;

/// Errors carry a JSON-pointer-ish path instead of a source span.
pub type JsonError = String;

fn err<T>(path: &str, msg: impl std::fmt::Display) -> Result<T, JsonError> {
    Err(format!("{path}: {msg}"))
}

// ---------------------------------------------------------------------------
// Values
// ---------------------------------------------------------------------------

pub fn value_to_json(v: &Value) -> J {
    match v {
        Value::Int(n) => json!(n),
        Value::Sym(s) => json!(s),
        Value::Pair(a, b) => json!({ "pair": [value_to_json(a), value_to_json(b)] }),
        Value::Seq(items) => json!({ "seq": items.iter().map(value_to_json).collect::<Vec<_>>() }),
        Value::Map(map) => json!({
            "map": map
                .iter()
                .map(|(k, v)| json!([value_to_json(k), value_to_json(v)]))
                .collect::<Vec<_>>()
        }),
    }
}

pub fn value_from_json(j: &J, path: &str) -> Result<Value, JsonError> {
    match j {
        J::Number(n) => match n.as_i64() {
            Some(v) => Ok(Value::Int(v)),
            None => err(path, "expected an integer"),
        },
        J::String(s) => Ok(Value::Sym(s.clone())),
        J::Object(o) if o.len() == 1 => {
            if let Some(p) = o.get("pair") {
                let items = as_array(p, path)?;
                if items.len() != 2 {
                    return err(path, "a pair has exactly two elements");
                }
                Ok(Value::pair(
                    value_from_json(&items[0], path)?,
                    value_from_json(&items[1], path)?,
                ))
            } else if let Some(s) = o.get("seq") {
                let items = as_array(s, path)?;
                Ok(Value::Seq(
                    items
                        .iter()
                        .map(|i| value_from_json(i, path))
                        .collect::<Result<_, _>>()?,
                ))
            } else if let Some(m) = o.get("map") {
                let items = as_array(m, path)?;
                let mut map = BTreeMap::new();
                for entry in items {
                    let kv = as_array(entry, path)?;
                    if kv.len() != 2 {
                        return err(path, "a map entry is a [key, value] pair");
                    }
                    map.insert(value_from_json(&kv[0], path)?, value_from_json(&kv[1], path)?);
                }
                Ok(Value::Map(map))
            } else {
                err(path, "expected a value object keyed 'pair', 'seq', or 'map'")
            }
        }
        _ => err(path, "expected a message value"),
    }
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

pub fn architecture_to_json(arch: &Architecture) -> J {
    // Derive the channel and alphabet sections from what the document
    // actually mentions (system wiring, machine interfaces, invariant
    // equations) so an architecture assembled in code serializes to a
    // self-contained document, not just one that came from a parse.
    let mut chans: BTreeMap<String, Chan> = BTreeMap::new();
    crate::emit::collect_system_chans(&arch.system, &mut chans);
    for m in arch.defs.machines.values() {
        crate::emit::collect_machine_chans(m, &mut chans);
    }
    for inv in arch.defs.invariants.values() {
        for c in inv.channels().iter() {
            chans.entry(c.name().to_string()).or_insert_with(|| c.clone());
        }
    }
    for (name, c) in &arch.defs.channels {
        chans.entry(name.clone()).or_insert_with(|| c.clone());
    }
    let mut alpha: BTreeMap<String, Alphabet> = arch
        .alphabets
        .iter()
        .map(|(n, a)| (n.clone(), a.clone()))
        .collect();
    for c in chans.values() {
        let a = c.alphabet();
        alpha.entry(a.name().to_string()).or_insert_with(|| a.clone());
    }
    let alphabets: Vec<J> = alpha
        .values()
        .map(|a| {
            json!({
                "name": a.name(),
                "values": a.values().iter().map(value_to_json).collect::<Vec<_>>()
            })
        })
        .collect();
    let channels: Vec<J> = chans
        .iter()
        .map(|(name, c)| json!({ "name": name, "alphabet": c.alphabet().name() }))
        .collect();
    let machines: JMap<String, J> = arch
        .defs
        .machines
        .iter()
        .map(|(name, m)| (name.clone(), machine_to_json(m)))
        .collect();
    let invariants: JMap<String, J> = arch
        .defs
        .invariants
        .iter()
        .filter_map(|(name, inv)| invariant_to_json(inv).map(|j| (name.clone(), j)))
        .collect();
    json!({
        "alphabets": alphabets,
        "channels": channels,
        "machines": machines,
        "invariants": invariants,
        "system": system_to_json(&arch.system),
    })
}

pub fn system_to_json(s: &System) -> J {
    json!({
        "name": s.name,
        "inputs": names(&s.inputs),
        "outputs": names(&s.outputs),
        "components": s
            .components
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "machine": machine_to_json(&c.machine),
                    "sub": c.sub.as_ref().map(|s| system_to_json(s)),
                })
            })
            .collect::<Vec<_>>(),
    })
}

fn names(set: &ChannelSet) -> Vec<String> {
    set.iter().map(|c| c.name().to_string()).collect()
}

pub fn machine_to_json(m: &Machine) -> J {
    match &m.kind {
        MachineKind::Table(def) => {
            // Definition order first, then wrapper-added inputs; reading the
            // document back treats the whole list as the definition's inputs.
            let mut inputs: Vec<&str> = def.inputs.iter().map(|c| c.name()).collect();
            for c in &m.inputs {
                if !def.inputs.contains(c) {
                    inputs.push(c.name());
                }
            }
            json!({
            "kind": "table",
            "name": def.name,
            "inputs": inputs,
            "outputs": def.outputs.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "chaotic": names(&m.chaotic),
            "registers": def
                .registers
                .iter()
                .map(|r| json!({ "name": r.name, "init": value_to_json(&r.init) }))
                .collect::<Vec<_>>(),
            "init": def.controls[def.init].name,
            "states": def.controls.iter().map(|c| control_to_json(c, def)).collect::<Vec<_>>(),
            })
        }
        MachineKind::Product {
            members,
            chaos_bound,
        } => json!({
            "kind": "product",
            "inputs": names(&m.inputs),
            "outputs": names(&m.outputs),
            "chaotic": names(&m.chaotic),
            "bound": chaos_bound,
            "members": members.iter().map(machine_to_json).collect::<Vec<_>>(),
        }),
        MachineKind::Echo { from, to } => json!({
            "kind": "echo",
            "from": from.name(),
            "to": to.name(),
        }),
    }
}

fn control_to_json(c: &Control, def: &TableDef) -> J {
    json!({
        "name": c.name,
        "emits": c
            .emits
            .iter()
            .map(|rule| {
                rule.outputs
                    .iter()
                    .map(|(ch, e)| (ch.name().to_string(), expr_to_json(e)))
                    .collect::<JMap<_, _>>()
            })
            .collect::<Vec<_>>(),
        "rules": c
            .rules
            .iter()
            .map(|r| {
                json!({
                    "guard": r
                        .guard
                        .conds
                        .iter()
                        .map(|(ch, cond)| json!([ch.name(), guard_to_json(cond)]))
                        .collect::<Vec<_>>(),
                    "updates": r
                        .updates
                        .iter()
                        .map(|(reg, e)| json!([reg, expr_to_json(e)]))
                        .collect::<Vec<_>>(),
                    "target": def.controls[r.target].name,
                })
            })
            .collect::<Vec<_>>(),
    })
}

fn guard_to_json(g: &GuardCond) -> J {
    match g {
        GuardCond::Any => json!("any"),
        GuardCond::Empty => json!("empty"),
        GuardCond::NonEmpty => json!("nonempty"),
        GuardCond::OneOf(ivs) => json!({
            "one_of": ivs
                .iter()
                .map(|iv| iv.0.iter().map(value_to_json).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        }),
    }
}

fn expr_to_json(e: &Expr) -> J {
    match e {
        Expr::Lit(v) => json!({ "lit": value_to_json(v) }),
        Expr::Reg(r) => json!({ "reg": r }),
        Expr::Input(c) => json!({ "in": c.name() }),
        Expr::Call(b, args) => json!({
            "call": [b.name(), args.iter().map(expr_to_json).collect::<Vec<_>>()]
        }),
    }
}

fn invariant_to_json(inv: &Invariant) -> Option<J> {
    // Opaque predicates have no interchange form; equation invariants do.
    match &inv.kind {
        InvariantKind::True => Some(json!({ "kind": "true" })),
        InvariantKind::Equations(eqs) => Some(json!({
            "kind": "equations",
            "equations": eqs
                .iter()
                .map(|e| {
                    json!({
                        "target": e.target.name(),
                        "source": e.source.name(),
                        "delay": e.delay,
                        "fold": fold_to_json(&e.fold),
                    })
                })
                .collect::<Vec<_>>(),
        })),
        InvariantKind::Predicate(_) => None,
    }
}

fn fold_to_json(f: &FoldKind) -> J {
    match f {
        FoldKind::Identity => json!(["identity"]),
        FoldKind::IncAll { modulus } => json!(["inc_all", modulus]),
        FoldKind::DeltaStar { modulus } => json!(["delta_star", modulus]),
        FoldKind::RhoStar { modulus } => json!(["rho_star", modulus]),
    }
}

// ---------------------------------------------------------------------------
// Reading architectures back
// ---------------------------------------------------------------------------

struct Resolver {
    channels: BTreeMap<String, Chan>,
}

impl Resolver {
    fn chan(&self, name: &str, path: &str) -> Result<Chan, JsonError> {
        match self.channels.get(name) {
            Some(c) => Ok(c.clone()),
            None => err(path, format!("unknown channel '{name}'")),
        }
    }

    fn chans(&self, j: &J, path: &str) -> Result<Vec<Chan>, JsonError> {
        as_array(j, path)?
            .iter()
            .map(|v| self.chan(as_str(v, path)?, path))
            .collect()
    }
}

pub fn architecture_from_json(j: &J) -> Result<Architecture, JsonError> {
    let root = as_object(j, "$")?;
    let mut alphabets = BTreeMap::new();
    for a in as_array(field(root, "alphabets", "$")?, "$.alphabets")? {
        let o = as_object(a, "$.alphabets[]")?;
        let name = as_str(field(o, "name", "$.alphabets[]")?, "$.alphabets[].name")?;
        let values = as_array(field(o, "values", "$.alphabets[]")?, "$.alphabets[].values")?
            .iter()
            .map(|v| value_from_json(v, "$.alphabets[].values"))
            .collect::<Result<Vec<_>, _>>()?;
        alphabets.insert(name.to_string(), Alphabet::new(name, values));
    }
    let mut channels = BTreeMap::new();
    for c in as_array(field(root, "channels", "$")?, "$.channels")? {
        let o = as_object(c, "$.channels[]")?;
        let name = as_str(field(o, "name", "$.channels[]")?, "$.channels[].name")?;
        let aname = as_str(field(o, "alphabet", "$.channels[]")?, "$.channels[].alphabet")?;
        let alphabet = alphabets
            .get(aname)
            .ok_or_else(|| format!("$.channels[]: unknown alphabet '{aname}'"))?;
        channels.insert(name.to_string(), Chan::new(name, alphabet.clone()));
    }
    let resolver = Resolver { channels };
    let mut machines = BTreeMap::new();
    if let Some(ms) = root.get("machines") {
        for (name, mj) in as_object(ms, "$.machines")? {
            machines.insert(
                name.clone(),
                machine_from_json(mj, &resolver, &format!("$.machines.{name}"))?,
            );
        }
    }
    let mut invariants = BTreeMap::new();
    if let Some(is) = root.get("invariants") {
        for (name, ij) in as_object(is, "$.invariants")? {
            invariants.insert(
                name.clone(),
                invariant_from_json(name, ij, &resolver, &format!("$.invariants.{name}"))?,
            );
        }
    }
    let system = system_from_json_inner(
        field(root, "system", "$")?,
        &resolver,
        "$.system",
    )?;
    Ok(Architecture {
        alphabets,
        defs: Definitions {
            channels: resolver.channels,
            machines,
            invariants,
        },
        system,
    })
}

fn system_from_json_inner(j: &J, r: &Resolver, path: &str) -> Result<System, JsonError> {
    let o = as_object(j, path)?;
    let name = as_str(field(o, "name", path)?, path)?.to_string();
    let inputs: ChannelSet = r
        .chans(field(o, "inputs", path)?, path)?
        .into_iter()
        .collect();
    let outputs: ChannelSet = r
        .chans(field(o, "outputs", path)?, path)?
        .into_iter()
        .collect();
    let mut components = Vec::new();
    for (i, cj) in as_array(field(o, "components", path)?, path)?.iter().enumerate() {
        let cp = format!("{path}.components[{i}]");
        let co = as_object(cj, &cp)?;
        let cname = as_str(field(co, "name", &cp)?, &cp)?.to_string();
        let machine = machine_from_json(field(co, "machine", &cp)?, r, &cp)?;
        let sub = match co.get("sub") {
            None | Some(J::Null) => None,
            Some(sj) => Some(Box::new(system_from_json_inner(sj, r, &format!("{cp}.sub"))?)),
        };
        components.push(Component {
            name: cname,
            machine,
            sub,
        });
    }
    Ok(System {
        name,
        inputs,
        outputs,
        components,
    })
}

fn machine_from_json(j: &J, r: &Resolver, path: &str) -> Result<Machine, JsonError> {
    let o = as_object(j, path)?;
    let kind = as_str(field(o, "kind", path)?, path)?;
    match kind {
        "table" => {
            let inputs = r.chans(field(o, "inputs", path)?, path)?;
            let outputs = r.chans(field(o, "outputs", path)?, path)?;
            let chaotic = r.chans(field(o, "chaotic", path)?, path)?;
            let mut registers = Vec::new();
            for rj in as_array(field(o, "registers", path)?, path)? {
                let ro = as_object(rj, path)?;
                registers.push(Register {
                    name: as_str(field(ro, "name", path)?, path)?.to_string(),
                    init: value_from_json(field(ro, "init", path)?, path)?,
                });
            }
            let mut controls = Vec::new();
            let mut state_names = Vec::new();
            let states = as_array(field(o, "states", path)?, path)?;
            for sj in states {
                state_names.push(
                    as_str(field(as_object(sj, path)?, "name", path)?, path)?.to_string(),
                );
            }
            for sj in states {
                controls.push(control_from_json(sj, r, &state_names, path)?);
            }
            let init_name = as_str(field(o, "init", path)?, path)?;
            let init = state_names
                .iter()
                .position(|n| n == init_name)
                .ok_or_else(|| format!("{path}: unknown initial state '{init_name}'"))?;
            let def = TableDef {
                name: as_str(field(o, "name", path)?, path)?.to_string(),
                inputs,
                outputs,
                registers,
                controls,
                init,
            };
            let mut m = Machine::table(def).map_err(|e| format!("{path}: {e}"))?;
            for c in chaotic {
                m = m
                    .with_added_chaotic_output(c)
                    .map_err(|e| format!("{path}: {e}"))?;
            }
            Ok(m)
        }
        "product" => {
            let inputs = r.chans(field(o, "inputs", path)?, path)?;
            let outputs = r.chans(field(o, "outputs", path)?, path)?;
            let chaotic = r.chans(field(o, "chaotic", path)?, path)?;
            let bound = field(o, "bound", path)?
                .as_u64()
                .ok_or_else(|| format!("{path}: bound must be a nonnegative integer"))?;
            let mut members = Vec::new();
            for (i, mj) in as_array(field(o, "members", path)?, path)?.iter().enumerate() {
                members.push(machine_from_json(mj, r, &format!("{path}.members[{i}]"))?);
            }
            assemble_product(members, inputs, outputs, chaotic, bound as usize)
                .map_err(|e| format!("{path}: {e}"))
        }
        "echo" => {
            let from = r.chan(as_str(field(o, "from", path)?, path)?, path)?;
            let to = r.chan(as_str(field(o, "to", path)?, path)?, path)?;
            Ok(Machine::non_causal_echo(from, to))
        }
        other => err(path, format!("unknown machine kind '{other}'")),
    }
}

fn control_from_json(
    j: &J,
    r: &Resolver,
    state_names: &[String],
    path: &str,
) -> Result<Control, JsonError> {
    let o = as_object(j, path)?;
    let name = as_str(field(o, "name", path)?, path)?.to_string();
    let mut emits = Vec::new();
    for ej in as_array(field(o, "emits", path)?, path)? {
        let eo = as_object(ej, path)?;
        let mut outputs = BTreeMap::new();
        for (cname, xj) in eo {
            outputs.insert(r.chan(cname, path)?, expr_from_json(xj, r, path)?);
        }
        emits.push(EmitRule { outputs });
    }
    let mut rules = Vec::new();
    for rj in as_array(field(o, "rules", path)?, path)? {
        let ro = as_object(rj, path)?;
        let mut conds = Vec::new();
        for gj in as_array(field(ro, "guard", path)?, path)? {
            let pair = as_array(gj, path)?;
            if pair.len() != 2 {
                return err(path, "a guard entry is [channel, condition]");
            }
            conds.push((
                r.chan(as_str(&pair[0], path)?, path)?,
                guard_from_json(&pair[1], path)?,
            ));
        }
        let mut updates = Vec::new();
        for uj in as_array(field(ro, "updates", path)?, path)? {
            let pair = as_array(uj, path)?;
            if pair.len() != 2 {
                return err(path, "an update entry is [register, expression]");
            }
            updates.push((
                as_str(&pair[0], path)?.to_string(),
                expr_from_json(&pair[1], r, path)?,
            ));
        }
        let tname = as_str(field(ro, "target", path)?, path)?;
        let target = state_names
            .iter()
            .position(|n| n == tname)
            .ok_or_else(|| format!("{path}: unknown target state '{tname}'"))?;
        rules.push(TransRule {
            guard: Guard { conds },
            updates,
            target,
        });
    }
    Ok(Control { name, emits, rules })
}

fn guard_from_json(j: &J, path: &str) -> Result<GuardCond, JsonError> {
    match j {
        J::String(s) => match s.as_str() {
            "any" => Ok(GuardCond::Any),
            "empty" => Ok(GuardCond::Empty),
            "nonempty" => Ok(GuardCond::NonEmpty),
            other => err(path, format!("unknown guard condition '{other}'")),
        },
        J::Object(o) => {
            let ivs = as_array(
                o.get("one_of")
                    .ok_or_else(|| format!("{path}: expected a 'one_of' guard"))?,
                path,
            )?;
            let mut out = Vec::new();
            for iv in ivs {
                out.push(Interval(
                    as_array(iv, path)?
                        .iter()
                        .map(|v| value_from_json(v, path))
                        .collect::<Result<_, _>>()?,
                ));
            }
            Ok(GuardCond::OneOf(out))
        }
        _ => err(path, "expected a guard condition"),
    }
}

fn expr_from_json(j: &J, r: &Resolver, path: &str) -> Result<Expr, JsonError> {
    let o = as_object(j, path)?;
    if let Some(v) = o.get("lit") {
        Ok(Expr::Lit(value_from_json(v, path)?))
    } else if let Some(v) = o.get("reg") {
        Ok(Expr::Reg(as_str(v, path)?.to_string()))
    } else if let Some(v) = o.get("in") {
        Ok(Expr::Input(r.chan(as_str(v, path)?, path)?))
    } else if let Some(v) = o.get("call") {
        let pair = as_array(v, path)?;
        if pair.len() != 2 {
            return err(path, "a call is [function, arguments]");
        }
        let fname = as_str(&pair[0], path)?;
        let b = Builtin::from_name(fname)
            .ok_or_else(|| format!("{path}: unknown function '{fname}'"))?;
        let args = as_array(&pair[1], path)?
            .iter()
            .map(|a| expr_from_json(a, r, path))
            .collect::<Result<Vec<_>, _>>()?;
        if args.len() != b.arity() {
            return err(
                path,
                format!("'{fname}' takes {} arguments, found {}", b.arity(), args.len()),
            );
        }
        Ok(Expr::call(b, args))
    } else {
        err(path, "expected an expression keyed 'lit', 'reg', 'in', or 'call'")
    }
}

fn invariant_from_json(
    name: &str,
    j: &J,
    r: &Resolver,
    path: &str,
) -> Result<Invariant, JsonError> {
    let o = as_object(j, path)?;
    match as_str(field(o, "kind", path)?, path)? {
        "true" => Ok(Invariant::trivially_true(name)),
        "equations" => {
            let mut eqs = Vec::new();
            for ej in as_array(field(o, "equations", path)?, path)? {
                let eo = as_object(ej, path)?;
                let target = r.chan(as_str(field(eo, "target", path)?, path)?, path)?;
                let source = r.chan(as_str(field(eo, "source", path)?, path)?, path)?;
                let delay = field(eo, "delay", path)?
                    .as_u64()
                    .ok_or_else(|| format!("{path}: delay must be a nonnegative integer"))?;
                let fold = fold_from_json(field(eo, "fold", path)?, path)?;
                eqs.push(StreamEquation {
                    target,
                    source,
                    delay: delay as usize,
                    fold,
                });
            }
            Ok(Invariant::equations(name, eqs))
        }
        other => err(path, format!("unknown invariant kind '{other}'")),
    }
}

fn fold_from_json(j: &J, path: &str) -> Result<FoldKind, JsonError> {
    let parts = as_array(j, path)?;
    let name = as_str(
        parts
            .first()
            .ok_or_else(|| format!("{path}: empty fold"))?,
        path,
    )?;
    let modulus = || -> Result<i64, JsonError> {
        parts
            .get(1)
            .and_then(|m| m.as_i64())
            .ok_or_else(|| format!("{path}: fold '{name}' needs a modulus"))
    };
    match name {
        "identity" => Ok(FoldKind::Identity),
        "inc_all" => Ok(FoldKind::IncAll { modulus: modulus()? }),
        "delta_star" => Ok(FoldKind::DeltaStar { modulus: modulus()? }),
        "rho_star" => Ok(FoldKind::RhoStar { modulus: modulus()? }),
        other => err(path, format!("unknown fold '{other}'")),
    }
}

// ---------------------------------------------------------------------------
// Traces and witnesses
// ---------------------------------------------------------------------------

pub fn trace_to_json(t: &NamedStreamTuple) -> J {
    let mut channels = JMap::new();
    for c in &t.domain() {
        let stream = t.get(c).expect("domain channels are present");
        let ticks: Vec<J> = stream
            .intervals()
            .iter()
            .map(|iv| J::Array(iv.0.iter().map(value_to_json).collect()))
            .collect();
        channels.insert(c.name().to_string(), J::Array(ticks));
    }
    json!({ "ticks": t.tick_len(), "channels": channels })
}

/// Read a trace whose channels come from `resolve` (typically the
/// system's input interface). Every channel in the domain must be listed;
/// extra keys in the file are an error, stray keys elsewhere are ignored.
pub fn trace_from_json(
    j: &J,
    domain: &ChannelSet,
) -> Result<NamedStreamTuple, JsonError> {
    let o = as_object(j, "$")?;
    let ticks = field(o, "ticks", "$")?
        .as_u64()
        .ok_or_else(|| "$.ticks: expected a nonnegative integer".to_string())?
        as usize;
    let channels = as_object(field(o, "channels", "$")?, "$.channels")?;
    for name in channels.keys() {
        if !domain.iter().any(|c| c.name() == name) {
            return err("$.channels", format!("'{name}' is not an input channel"));
        }
    }
    let mut entries = BTreeMap::new();
    for c in domain {
        let path = format!("$.channels.{}", c.name());
        let stream = match channels.get(c.name()) {
            // Channels left out are silent.
            None => TimedStreamPrefix::silent(ticks),
            Some(tj) => {
                let tick_list = as_array(tj, &path)?;
                if tick_list.len() != ticks {
                    return err(&path, format!("expected {ticks} ticks, found {}", tick_list.len()));
                }
                let mut ivs = Vec::new();
                for iv in tick_list {
                    ivs.push(Interval(
                        as_array(iv, &path)?
                            .iter()
                            .map(|v| value_from_json(v, &path))
                            .collect::<Result<_, _>>()?,
                    ));
                }
                TimedStreamPrefix::new(ivs)
            }
        };
        entries.insert(c.clone(), stream);
    }
    NamedStreamTuple::new(entries).map_err(|e| format!("$.channels: {e}"))
}

/// A witness file is a replayable input trace with the note and the
/// offending output attached.
pub fn witness_to_json(w: &Witness) -> J {
    let mut j = trace_to_json(&w.input);
    let o = j.as_object_mut().expect("traces serialize as objects");
    o.insert("note".to_string(), json!(w.note));
    o.insert("output".to_string(), trace_to_json(&w.output));
    json!(o)
}

// ---------------------------------------------------------------------------
// Shape helpers
// ---------------------------------------------------------------------------

fn as_object<'a>(j: &'a J, path: &str) -> Result<&'a JMap<String, J>, JsonError> {
    j.as_object()
        .ok_or_else(|| format!("{path}: expected an object"))
}

fn as_array<'a>(j: &'a J, path: &str) -> Result<&'a Vec<J>, JsonError> {
    j.as_array()
        .ok_or_else(|| format!("{path}: expected an array"))
}

fn as_str<'a>(j: &'a J, path: &str) -> Result<&'a str, JsonError> {
    j.as_str()
        .ok_or_else(|| format!("{path}: expected a string"))
}

fn field<'a>(
    o: &'a JMap<String, J>,
    key: &str,
    path: &str,
) -> Result<&'a J, JsonError> {
    o.get(key)
        .ok_or_else(|| format!("{path}: missing field '{key}'"))
}
