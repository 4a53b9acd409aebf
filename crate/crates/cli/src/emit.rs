//! Canonical text form of a system: deterministic, sorted where order
//! carries no meaning, order-preserving where it does (register lists,
//! state lists, transition rules, component order).
//!
//! `parse(emit_canonical(s))` yields a system structurally equal to `s`.
//! Machines are emitted under generated declaration names — tables under
//! their own definition name (suffixed on collision, with a `name` clause
//! preserving the definition name), compositions as `net_<k>`. One
//! normalization applies: a table's declared input list is written from
//! the machine interface, so an input added after the fact is folded into
//! the definition's declaration list on reparse (it stays unread, which
//! is behaviorally invisible).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pafr_core::behavior::{Control, GuardCond, Machine, MachineKind, TableDef};
use pafr_core::expr::Expr;
use pafr_core::stream::{Chan, Interval};
use pafr_core::system::System;
use pafr_core::value::{Alphabet, Value};

pub fn emit_canonical(system: &System) -> String {
    let mut channels: BTreeMap<String, Chan> = BTreeMap::new();
    collect_system_chans(system, &mut channels);
    let mut alphabets: BTreeMap<String, Alphabet> = BTreeMap::new();
    for c in channels.values() {
        alphabets
            .entry(c.alphabet().name().to_string())
            .or_insert_with(|| c.alphabet().clone());
    }
    let mut table = MachineTable::default();
    visit_system_machines(system, &mut table);

    let mut out = String::new();
    for (name, a) in &alphabets {
        let _ = write!(out, "alphabet {name} {{");
        for v in a.values() {
            out.push(' ');
            write_value(v, &mut out);
        }
        out.push_str(" }\n");
    }
    out.push('\n');
    for (name, c) in &channels {
        let _ = writeln!(out, "channel {name} : {}", c.alphabet().name());
    }
    for (machine, name) in &table.entries {
        out.push('\n');
        write_machine(machine, name, &table, &mut out);
    }
    out.push('\n');
    for comp in &system.components {
        write_component(&comp.name, &comp.machine, comp.sub.as_deref(), &table, 0, &mut out);
    }
    out.push('\n');
    let _ = writeln!(out, "system {} {{", system.name);
    let _ = writeln!(out, "  inputs:{}", chan_list(system.inputs.iter()));
    let _ = writeln!(out, "  outputs:{}", chan_list(system.outputs.iter()));
    out.push_str("}\n");
    out
}

fn chan_list<'a>(chans: impl Iterator<Item = &'a Chan>) -> String {
    let mut s = String::new();
    for c in chans {
        s.push(' ');
        s.push_str(c.name());
    }
    s
}

// ---------------------------------------------------------------------------
// Collection passes
// ---------------------------------------------------------------------------

pub(crate) fn collect_system_chans(system: &System, out: &mut BTreeMap<String, Chan>) {
    for c in system.inputs.iter().chain(system.outputs.iter()) {
        out.entry(c.name().to_string()).or_insert_with(|| c.clone());
    }
    for comp in &system.components {
        collect_machine_chans(&comp.machine, out);
        if let Some(sub) = &comp.sub {
            collect_system_chans(sub, out);
        }
    }
}

pub(crate) fn collect_machine_chans(m: &Machine, out: &mut BTreeMap<String, Chan>) {
    for c in m.inputs.iter().chain(m.outputs.iter()) {
        out.entry(c.name().to_string()).or_insert_with(|| c.clone());
    }
    match &m.kind {
        MachineKind::Table(def) => {
            for c in def.inputs.iter().chain(def.outputs.iter()) {
                out.entry(c.name().to_string()).or_insert_with(|| c.clone());
            }
        }
        MachineKind::Product { members, .. } => {
            for member in members {
                collect_machine_chans(member, out);
            }
        }
        MachineKind::Echo { from, to } => {
            for c in [from, to] {
                out.entry(c.name().to_string()).or_insert_with(|| c.clone());
            }
        }
    }
}

/// Distinct machines in first-encounter order, members before the
/// compositions that contain them so every reference points backwards.
#[derive(Default)]
struct MachineTable {
    entries: Vec<(Machine, String)>,
    nets: usize,
    echoes: usize,
}

impl MachineTable {
    fn name_of(&self, m: &Machine) -> &str {
        &self
            .entries
            .iter()
            .find(|(e, _)| e == m)
            .expect("every component machine is visited before emission")
            .1
    }

    fn unique(&self, base: String) -> String {
        if !self.entries.iter().any(|(_, n)| *n == base) {
            return base;
        }
        let mut k = 2;
        loop {
            let candidate = format!("{base}_{k}");
            if !self.entries.iter().any(|(_, n)| *n == candidate) {
                return candidate;
            }
            k += 1;
        }
    }

    fn visit(&mut self, m: &Machine) {
        if self.entries.iter().any(|(e, _)| e == m) {
            return;
        }
        if let MachineKind::Product { members, .. } = &m.kind {
            for member in members {
                self.visit(member);
            }
            if self.entries.iter().any(|(e, _)| e == m) {
                return;
            }
        }
        let name = match &m.kind {
            MachineKind::Table(def) => self.unique(def.name.clone()),
            MachineKind::Product { .. } => {
                self.nets += 1;
                self.unique(format!("net_{}", self.nets))
            }
            MachineKind::Echo { .. } => {
                self.echoes += 1;
                self.unique(format!("echo_{}", self.echoes))
            }
        };
        self.entries.push((m.clone(), name));
    }
}

fn visit_system_machines(system: &System, table: &mut MachineTable) {
    for comp in &system.components {
        table.visit(&comp.machine);
        if let Some(sub) = &comp.sub {
            visit_system_machines(sub, table);
        }
    }
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

pub(crate) fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Value::Sym(s) => {
            let _ = write!(out, "'{s}");
        }
        Value::Pair(a, b) => {
            out.push('(');
            write_value(a, out);
            out.push_str(", ");
            write_value(b, out);
            out.push(')');
        }
        Value::Seq(items) => {
            out.push('<');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(item, out);
            }
            out.push('>');
        }
        Value::Map(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(k, out);
                out.push_str(" -> ");
                write_value(v, out);
            }
            out.push('}');
        }
    }
}

pub(crate) fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Lit(v) => write_value(v, out),
        Expr::Reg(r) => out.push_str(r),
        Expr::Input(c) => {
            let _ = write!(out, "in({})", c.name());
        }
        Expr::Call(b, args) => {
            out.push_str(b.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, out);
            }
            out.push(')');
        }
    }
}

fn write_interval(iv: &Interval, out: &mut String) {
    out.push('<');
    for (i, v) in iv.0.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_value(v, out);
    }
    out.push('>');
}

fn write_machine(m: &Machine, name: &str, table: &MachineTable, out: &mut String) {
    let _ = writeln!(out, "machine {name} {{");
    match &m.kind {
        MachineKind::Table(def) => write_table(m, name, def, out),
        MachineKind::Product {
            members,
            chaos_bound,
        } => {
            let _ = writeln!(out, "  product bound {chaos_bound} {{");
            let _ = writeln!(out, "    inputs:{}", chan_list(m.inputs.iter()));
            let _ = writeln!(out, "    outputs:{}", chan_list(m.outputs.iter()));
            if !m.chaotic.is_empty() {
                let _ = writeln!(out, "    chaotic:{}", chan_list(m.chaotic.iter()));
            }
            // Member names exist: members are visited before their
            // composition.
            for member in members {
                let _ = writeln!(out, "    member {}", table.name_of(member));
            }
            out.push_str("  }\n");
        }
        MachineKind::Echo { from, to } => {
            let _ = writeln!(out, "  echo {} -> {}", from.name(), to.name());
        }
    }
    out.push_str("}\n");
}

fn write_table(m: &Machine, decl_name: &str, def: &TableDef, out: &mut String) {
    if def.name != decl_name {
        let _ = writeln!(out, "  name {}", def.name);
    }
    // Input order follows the definition; interface-only additions come
    // after (sorted, as the set iterates).
    let mut inputs: Vec<&Chan> = def.inputs.iter().collect();
    for c in &m.inputs {
        if !def.inputs.contains(c) {
            inputs.push(c);
        }
    }
    let _ = writeln!(out, "  inputs:{}", chan_list(inputs.into_iter()));
    let mut outputs: Vec<&Chan> = def.outputs.iter().collect();
    for c in &m.chaotic {
        outputs.push(c);
    }
    let _ = writeln!(out, "  outputs:{}", chan_list(outputs.into_iter()));
    if !m.chaotic.is_empty() {
        let _ = writeln!(out, "  chaotic:{}", chan_list(m.chaotic.iter()));
    }
    for r in &def.registers {
        let mut v = String::new();
        write_value(&r.init, &mut v);
        let _ = writeln!(out, "  register {} = {v}", r.name);
    }
    let _ = writeln!(out, "  init {}", def.controls[def.init].name);
    for ctrl in &def.controls {
        write_control(ctrl, def, out);
    }
}

fn write_control(ctrl: &Control, def: &TableDef, out: &mut String) {
    let _ = writeln!(out, "  state {} {{", ctrl.name);
    for rule in &ctrl.emits {
        if rule.outputs.is_empty() {
            out.push_str("    emit\n");
            continue;
        }
        out.push_str("    emit ");
        for (i, (c, e)) in rule.outputs.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{} = ", c.name());
            write_expr(e, out);
        }
        out.push('\n');
    }
    for rule in &ctrl.rules {
        out.push_str("    on ");
        if rule.guard.conds.is_empty() {
            out.push_str("any");
        } else {
            for (i, (c, cond)) in rule.guard.conds.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{} ", c.name());
                match cond {
                    GuardCond::Any => out.push_str("any"),
                    GuardCond::Empty => out.push_str("empty"),
                    GuardCond::NonEmpty => out.push_str("nonempty"),
                    GuardCond::OneOf(ivs) => {
                        out.push_str("one_of ");
                        for (j, iv) in ivs.iter().enumerate() {
                            if j > 0 {
                                out.push('|');
                            }
                            write_interval(iv, out);
                        }
                    }
                }
            }
        }
        let _ = write!(out, " -> {}", def.controls[rule.target].name);
        if rule.updates.is_empty() {
            out.push('\n');
        } else {
            out.push_str(" {\n");
            for (r, e) in &rule.updates {
                let _ = write!(out, "      {r} = ");
                write_expr(e, out);
                out.push('\n');
            }
            out.push_str("    }\n");
        }
    }
    out.push_str("  }\n");
}

fn write_component(
    name: &str,
    machine: &Machine,
    sub: Option<&System>,
    table: &MachineTable,
    depth: usize,
    out: &mut String,
) {
    let pad = "  ".repeat(depth);
    let _ = write!(out, "{pad}component {name} : {}", table.name_of(machine));
    match sub {
        None => out.push('\n'),
        Some(s) => {
            out.push_str(" {\n");
            let _ = writeln!(out, "{pad}  sub {} {{", s.name);
            let _ = writeln!(out, "{pad}    inputs:{}", chan_list(s.inputs.iter()));
            let _ = writeln!(out, "{pad}    outputs:{}", chan_list(s.outputs.iter()));
            for comp in &s.components {
                write_component(
                    &comp.name,
                    &comp.machine,
                    comp.sub.as_deref(),
                    table,
                    depth + 2,
                    out,
                );
            }
            let _ = writeln!(out, "{pad}  }}");
            let _ = writeln!(out, "{pad}}}");
        }
    }
}
