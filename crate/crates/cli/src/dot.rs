//! Graphviz export: components as nodes, channels as labelled edges, the
//! environment as a dashed box. Readers of a channel that nobody in the
//! system writes get an edge from the environment; channels the system
//! exports get an edge back to it.

use std::collections::BTreeMap;

use pafr_core::system::System;

/// Quote a DOT identifier, escaping embedded quotes and backslashes.
fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

const ENV: &str = "__env__";

/// Render the system's data flow as a DOT digraph. Every channel
/// contributes one edge per (writer, reader) pair; the pseudo-node
/// `__env__` stands in for the environment on the system boundary.
pub fn emit_dot(system: &System) -> String {
    // writer of each channel: the producing component, or the environment
    // for system inputs.
    let mut writers: BTreeMap<String, String> = BTreeMap::new();
    for c in &system.inputs {
        writers.insert(c.name().to_string(), ENV.to_string());
    }
    for comp in &system.components {
        for c in &comp.machine.outputs {
            writers.insert(c.name().to_string(), comp.name.clone());
        }
    }
    // readers of each channel: consuming components, plus the environment
    // for system outputs.
    let mut readers: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for comp in &system.components {
        for c in &comp.machine.inputs {
            readers
                .entry(c.name().to_string())
                .or_default()
                .push(comp.name.clone());
        }
    }
    for c in &system.outputs {
        readers
            .entry(c.name().to_string())
            .or_default()
            .push(ENV.to_string());
    }

    let mut out = String::new();
    out.push_str(&format!("digraph {} {{\n", quote(&system.name)));
    out.push_str("  rankdir=LR;\n");
    out.push_str(&format!(
        "  {} [shape=box, style=dashed, label=\"env\"];\n",
        quote(ENV)
    ));
    for comp in &system.components {
        out.push_str(&format!("  {} [shape=box];\n", quote(&comp.name)));
    }
    for (chan, readers) in &readers {
        let Some(writer) = writers.get(chan) else {
            continue; // nobody writes it and it is not a system input
        };
        for reader in readers {
            out.push_str(&format!(
                "  {} -> {} [label={}];\n",
                quote(writer),
                quote(reader),
                quote(chan)
            ));
        }
    }
    out.push_str("}\n");
    out
}

/// A structural check used by tests: the output is one digraph whose
/// statements are well-formed node/edge declarations with balanced
/// braces, quoted names, and closed attribute lists.
pub fn validate_dot(text: &str) -> Result<(), String> {
    let mut rest = text.trim();
    let Some(after) = rest.strip_prefix("digraph ") else {
        return Err("expected 'digraph <name> {'".to_string());
    };
    rest = after;
    let name_end = rest
        .find('{')
        .ok_or_else(|| "missing '{' after the graph name".to_string())?;
    check_name(rest[..name_end].trim())?;
    rest = &rest[name_end + 1..];
    let body_end = rest
        .rfind('}')
        .ok_or_else(|| "missing closing '}'".to_string())?;
    if !rest[body_end + 1..].trim().is_empty() {
        return Err("text after the closing '}'".to_string());
    }
    for raw in rest[..body_end].lines() {
        let stmt = raw.trim();
        if stmt.is_empty() {
            continue;
        }
        let stmt = stmt
            .strip_suffix(';')
            .ok_or_else(|| format!("statement missing ';': {stmt}"))?;
        check_statement(stmt.trim())?;
    }
    Ok(())
}

fn check_name(s: &str) -> Result<(), String> {
    if s.starts_with('"') {
        if s.len() < 2 || !s.ends_with('"') {
            return Err(format!("unterminated quoted name: {s}"));
        }
        // no unescaped quotes inside
        let inner = &s[1..s.len() - 1];
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => {
                    chars.next();
                }
                '"' => return Err(format!("unescaped quote in name: {s}")),
                _ => {}
            }
        }
        Ok(())
    } else if !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_') {
        Ok(())
    } else {
        Err(format!("malformed name: {s}"))
    }
}

fn check_statement(stmt: &str) -> Result<(), String> {
    // Split off an optional [attr=value, ...] tail.
    let (head, attrs) = match stmt.find('[') {
        Some(i) => {
            let tail = stmt[i..].trim();
            if !tail.ends_with(']') {
                return Err(format!("unclosed attribute list: {stmt}"));
            }
            (stmt[..i].trim(), Some(&tail[1..tail.len() - 1]))
        }
        None => (stmt, None),
    };
    if let Some(attrs) = attrs {
        for attr in split_attrs(attrs) {
            let (k, v) = attr
                .split_once('=')
                .ok_or_else(|| format!("attribute without '=': {attr}"))?;
            check_name(k.trim())?;
            check_name(v.trim())?;
        }
    }
    if head.starts_with("rankdir") {
        return Ok(());
    }
    match head.split_once("->") {
        Some((from, to)) => {
            check_name(from.trim())?;
            check_name(to.trim())
        }
        None => check_name(head),
    }
}

/// Split an attribute list on commas that sit outside quotes.
fn split_attrs(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth_quote = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '"' => depth_quote = !depth_quote,
            ',' if !depth_quote => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = s[start..].trim();
    if !last.is_empty() {
        parts.push(last);
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use pafr_core::corpus;

    #[test]
    fn initial_database_system_graph() {
        let dot = emit_dot(&corpus::db_initial());
        validate_dot(&dot).expect("well-formed DOT");
        assert!(dot.contains("\"PRE\" -> \"RDB\" [label=\"I\"];"));
        assert!(dot.contains("\"__env__\" -> \"PRE\" [label=\"In\"];"));
        assert!(dot.contains("\"__env__\" -> \"RDB\" [label=\"Key\"];"));
        assert!(dot.contains("\"RDB\" -> \"__env__\" [label=\"Data\"];"));
        // One edge per writer/reader pair and nothing else.
        assert_eq!(dot.matches(" -> ").count(), 4);
    }

    #[test]
    fn final_system_fans_out_shared_channels() {
        let dot = emit_dot(&corpus::db_final());
        validate_dot(&dot).expect("well-formed DOT");
        // D is written by PRE' and read by RDB'.
        assert!(dot.contains("\"PRE'\" -> \"RDB'\" [label=\"D\"];"));
    }

    #[test]
    fn empty_system_is_just_the_environment() {
        let sys = System {
            name: "empty".to_string(),
            inputs: Default::default(),
            outputs: Default::default(),
            components: Vec::new(),
        };
        let dot = emit_dot(&sys);
        validate_dot(&dot).expect("well-formed DOT");
        assert!(dot.contains("__env__"));
        assert_eq!(dot.matches(" -> ").count(), 0);
    }

    #[test]
    fn validator_rejects_malformed_graphs() {
        assert!(validate_dot("graph g { }").is_err());
        assert!(validate_dot("digraph g { a -> b").is_err());
        assert!(validate_dot("digraph g {\n  a -> b\n}").is_err()); // missing ';'
        assert!(validate_dot("digraph g {\n  \"a -> b [label=\"x\"];\n}").is_err());
        assert!(validate_dot("digraph \"g\" {\n  \"a\" -> \"b\" [label=\"x\"];\n}").is_ok());
    }
}
