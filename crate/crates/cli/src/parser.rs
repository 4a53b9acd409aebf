//! The `.arch` surface language: alphabets, channels, machines,
//! invariants, components, and a single system block.
//!
//! Parsing is purely syntactic resolution — it builds the system and the
//! named definitions but deliberately does not run the consistency check;
//! that is the `check` command's job, so that deliberately broken
//! architectures can be written down and examined.

use std::collections::BTreeMap;

use pafr_core::behavior::{
    Control, EmitRule, Guard, GuardCond, Machine, Register, TableDef, TransRule,
};
use pafr_core::expr::{Builtin, Expr};
use pafr_core::oracle::{FoldKind, Invariant, StreamEquation};
use pafr_core::rules::Definitions;
use pafr_core::stream::{Chan, ChannelSet, Interval};
use pafr_core::system::{Component, System};
use pafr_core::value::{Alphabet, Value};

use crate::diag::{ParseError, SourceSpan};
use crate::lex::{lex, Tok, Token};

/// Everything a `.arch` file declares: the system itself plus the named
/// definitions refinement scripts refer to.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub alphabets: BTreeMap<String, Alphabet>,
    pub defs: Definitions,
    pub system: System,
}

pub fn parse_architecture(file: &str, text: &str) -> Result<Architecture, ParseError> {
    let tokens = lex(file, text)?;
    Parser::new(file, tokens).architecture()
}

/// A parsed state whose transition targets are still names.
struct RawControl {
    control: Control,
    targets: Vec<(String, SourceSpan)>,
}

struct Parser {
    file: String,
    tokens: Vec<Token>,
    pos: usize,
    alphabets: BTreeMap<String, Alphabet>,
    channels: BTreeMap<String, Chan>,
    machines: BTreeMap<String, Machine>,
    invariants: BTreeMap<String, Invariant>,
    components: Vec<Component>,
    // name, inputs, outputs of the one system block seen so far
    system: Option<(String, ChannelSet, ChannelSet)>,
}

impl Parser {
    fn new(file: &str, tokens: Vec<Token>) -> Parser {
        Parser {
            file: file.to_string(),
            tokens,
            pos: 0,
            alphabets: BTreeMap::new(),
            channels: BTreeMap::new(),
            machines: BTreeMap::new(),
            invariants: BTreeMap::new(),
            components: Vec::new(),
            system: None,
        }
    }

    // ----- token plumbing -------------------------------------------------

    fn here(&self) -> SourceSpan {
        match self.tokens.get(self.pos) {
            Some(t) => t.span.clone(),
            None => match self.tokens.last() {
                Some(t) => t.span.clone(),
                None => SourceSpan::point(&self.file, 1, 1),
            },
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::new(msg, self.here()))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self, what: &str) -> Result<Token, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.err(format!("expected {what}, found end of file")),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<SourceSpan, ParseError> {
        let t = self.next(&tok.to_string())?;
        if t.tok == tok {
            Ok(t.span)
        } else {
            Err(ParseError::new(
                format!("expected {tok}, found {}", t.tok),
                t.span,
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan), ParseError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.span)),
            other => Err(ParseError::new(
                format!("expected {what}, found {other}"),
                t.span,
            )),
        }
    }

    /// Is the next token the identifier `kw`? Keywords are contextual, so
    /// this never consumes on mismatch.
    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<SourceSpan, ParseError> {
        let t = self.next(&format!("'{kw}'"))?;
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(t.span),
            other => Err(ParseError::new(
                format!("expected '{kw}', found {other}"),
                t.span,
            )),
        }
    }

    /// Optional `:` after list-introducing keywords.
    fn eat_colon(&mut self) {
        if matches!(self.peek(), Some(Tok::Colon)) {
            self.pos += 1;
        }
    }

    // ----- name resolution -------------------------------------------------

    fn alphabet(&self, name: &str, span: &SourceSpan) -> Result<Alphabet, ParseError> {
        self.alphabets.get(name).cloned().ok_or_else(|| {
            ParseError::new(format!("unknown alphabet '{name}'"), span.clone())
        })
    }

    fn channel(&self, name: &str, span: &SourceSpan) -> Result<Chan, ParseError> {
        self.channels.get(name).cloned().ok_or_else(|| {
            ParseError::new(format!("unknown channel '{name}'"), span.clone())
        })
    }

    fn machine(&self, name: &str, span: &SourceSpan) -> Result<Machine, ParseError> {
        self.machines.get(name).cloned().ok_or_else(|| {
            ParseError::new(format!("unknown machine '{name}'"), span.clone())
        })
    }

    /// A whitespace-separated channel-name list, ended by whatever token
    /// is not an identifier (typically the next clause keyword).
    fn channel_list(&mut self, stops: &[&str]) -> Result<Vec<Chan>, ParseError> {
        self.eat_colon();
        let mut out = Vec::new();
        while let Some(Tok::Ident(s)) = self.peek() {
            if stops.contains(&s.as_str()) {
                break;
            }
            let (name, span) = self.ident("channel name")?;
            out.push(self.channel(&name, &span)?);
        }
        Ok(out)
    }

    // ----- top level -------------------------------------------------------

    fn architecture(mut self) -> Result<Architecture, ParseError> {
        while self.peek().is_some() {
            let (kw, span) = self.ident("a declaration")?;
            match kw.as_str() {
                "alphabet" => self.alphabet_decl()?,
                "channel" => self.channel_decl()?,
                "machine" => self.machine_decl()?,
                "invariant" => self.invariant_decl()?,
                "component" => self.component_decl()?,
                "system" => self.system_decl(&span)?,
                other => {
                    return Err(ParseError::new(
                        format!(
                            "expected 'alphabet', 'channel', 'machine', 'invariant', \
                             'component', or 'system', found '{other}'"
                        ),
                        span,
                    ))
                }
            }
        }
        let components = std::mem::take(&mut self.components);
        let system = match self.system.take() {
            Some((name, inputs, outputs)) => System {
                name,
                inputs,
                outputs,
                components,
            },
            // No system block: infer the boundary from the components —
            // everything read but not produced comes from the environment,
            // everything produced is observable.
            None => {
                let produced: ChannelSet = components
                    .iter()
                    .flat_map(|c| c.outputs().iter().cloned())
                    .collect();
                let inputs: ChannelSet = components
                    .iter()
                    .flat_map(|c| c.inputs().iter().cloned())
                    .filter(|c| !produced.contains(c))
                    .collect();
                System {
                    name: "main".to_string(),
                    inputs,
                    outputs: produced,
                    components,
                }
            }
        };
        Ok(Architecture {
            alphabets: self.alphabets,
            defs: Definitions {
                channels: self.channels,
                machines: self.machines,
                invariants: self.invariants,
            },
            system,
        })
    }

    // ----- alphabets and channels -------------------------------------------

    /// `alphabet N { v... }` or `alphabet N = A * B`.
    fn alphabet_decl(&mut self) -> Result<(), ParseError> {
        let (name, span) = self.ident("alphabet name")?;
        if self.alphabets.contains_key(&name) {
            return Err(ParseError::new(
                format!("duplicate alphabet '{name}'"),
                span,
            ));
        }
        let alphabet = match self.peek() {
            Some(Tok::Equals) => {
                self.pos += 1;
                let (l, lspan) = self.ident("alphabet name")?;
                let left = self.alphabet(&l, &lspan)?;
                self.expect(Tok::Star)?;
                let (r, rspan) = self.ident("alphabet name")?;
                let right = self.alphabet(&r, &rspan)?;
                Alphabet::product(&name, &left, &right)
            }
            _ => {
                self.expect(Tok::LBrace)?;
                let mut values = Vec::new();
                while !matches!(self.peek(), Some(Tok::RBrace)) {
                    values.push(self.value()?);
                }
                self.expect(Tok::RBrace)?;
                Alphabet::new(&name, values)
            }
        };
        self.alphabets.insert(name, alphabet);
        Ok(())
    }

    /// `channel N : A`.
    fn channel_decl(&mut self) -> Result<(), ParseError> {
        let (name, span) = self.ident("channel name")?;
        if self.channels.contains_key(&name) {
            return Err(ParseError::new(format!("duplicate channel '{name}'"), span));
        }
        self.expect(Tok::Colon)?;
        let (a, aspan) = self.ident("alphabet name")?;
        let alphabet = self.alphabet(&a, &aspan)?;
        self.channels.insert(name.clone(), Chan::new(&name, alphabet));
        Ok(())
    }

    // ----- values and expressions --------------------------------------------

    /// Literal values: `3`, `'k0`, `(a, b)`, `<a, b>`, `{k -> v, ...}`.
    fn value(&mut self) -> Result<Value, ParseError> {
        let t = self.next("a value")?;
        match t.tok {
            Tok::Int(n) => Ok(Value::Int(n)),
            Tok::Sym(s) => Ok(Value::Sym(s)),
            Tok::LParen => {
                let a = self.value()?;
                self.expect(Tok::Comma)?;
                let b = self.value()?;
                self.expect(Tok::RParen)?;
                Ok(Value::pair(a, b))
            }
            Tok::Lt => {
                let mut items = Vec::new();
                if !matches!(self.peek(), Some(Tok::Gt)) {
                    loop {
                        items.push(self.value()?);
                        if matches!(self.peek(), Some(Tok::Comma)) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::Gt)?;
                Ok(Value::Seq(items))
            }
            Tok::LBrace => {
                let mut map = BTreeMap::new();
                if !matches!(self.peek(), Some(Tok::RBrace)) {
                    loop {
                        let k = self.value()?;
                        self.expect(Tok::Arrow)?;
                        let v = self.value()?;
                        map.insert(k, v);
                        if matches!(self.peek(), Some(Tok::Comma)) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBrace)?;
                Ok(Value::Map(map))
            }
            other => Err(ParseError::new(
                format!("expected a value, found {other}"),
                t.span,
            )),
        }
    }

    /// Machine expressions: a value literal, a register name, `in(C)`, or
    /// a built-in application.
    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let (name, span) = self.ident("an expression")?;
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !matches!(self.peek(), Some(Tok::RParen)) {
                        loop {
                            if name == "in" {
                                // in(C) takes a channel name, not an expression
                                let (c, cspan) = self.ident("channel name")?;
                                args.push(Expr::Input(self.channel(&c, &cspan)?));
                            } else {
                                args.push(self.expr()?);
                            }
                            if matches!(self.peek(), Some(Tok::Comma)) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    if name == "in" {
                        if args.len() != 1 {
                            return Err(ParseError::new(
                                "in(...) takes exactly one channel name",
                                span,
                            ));
                        }
                        return Ok(args.into_iter().next().unwrap());
                    }
                    let b = Builtin::from_name(&name).ok_or_else(|| {
                        ParseError::new(format!("unknown function '{name}'"), span.clone())
                    })?;
                    if args.len() != b.arity() {
                        return Err(ParseError::new(
                            format!(
                                "'{name}' takes {} argument{}, found {}",
                                b.arity(),
                                if b.arity() == 1 { "" } else { "s" },
                                args.len()
                            ),
                            span,
                        ));
                    }
                    Ok(Expr::call(b, args))
                } else {
                    Ok(Expr::Reg(name))
                }
            }
            _ => Ok(Expr::Lit(self.value()?)),
        }
    }

    // ----- machines -----------------------------------------------------------

    /// `machine NAME { ... }` — a state table, a `product` composition, or
    /// an `echo` test double. The written name is how components and
    /// scripts refer to it; an optional `name` clause sets the table's own
    /// name when it differs.
    fn machine_decl(&mut self) -> Result<(), ParseError> {
        let (name, span) = self.ident("machine name")?;
        if self.machines.contains_key(&name) {
            return Err(ParseError::new(format!("duplicate machine '{name}'"), span));
        }
        self.expect(Tok::LBrace)?;
        let machine = if self.at_kw("product") {
            self.pos += 1;
            self.product_body(&span)?
        } else if self.at_kw("echo") {
            self.pos += 1;
            let (f, fspan) = self.ident("channel name")?;
            let from = self.channel(&f, &fspan)?;
            self.expect(Tok::Arrow)?;
            let (t, tspan) = self.ident("channel name")?;
            let to = self.channel(&t, &tspan)?;
            Machine::non_causal_echo(from, to)
        } else {
            self.table_body(&name, &span)?
        };
        self.expect(Tok::RBrace)?;
        self.machines.insert(name, machine);
        Ok(())
    }

    /// The clauses of a state table, in any order: `name`, `inputs`,
    /// `outputs`, `chaotic`, `register`, `init`, `state`.
    fn table_body(&mut self, decl_name: &str, decl_span: &SourceSpan) -> Result<Machine, ParseError> {
        let stops = [
            "name", "inputs", "outputs", "chaotic", "register", "init", "state",
        ];
        let mut name = decl_name.to_string();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut chaotic = Vec::new();
        let mut registers = Vec::new();
        let mut raw: Vec<RawControl> = Vec::new();
        let mut init_name: Option<(String, SourceSpan)> = None;
        while !matches!(self.peek(), Some(Tok::RBrace) | None) {
            let (kw, span) = self.ident("a machine clause")?;
            match kw.as_str() {
                "name" => name = self.ident("table name")?.0,
                "inputs" => inputs = self.channel_list(&stops)?,
                "outputs" => outputs = self.channel_list(&stops)?,
                "chaotic" => chaotic = self.channel_list(&stops)?,
                "register" => {
                    let (r, _) = self.ident("register name")?;
                    self.expect(Tok::Equals)?;
                    let init = self.value()?;
                    registers.push(Register { name: r, init });
                }
                "init" => init_name = Some((self.ident("state name")?.0, span)),
                "state" => raw.push(self.state_block()?),
                other => {
                    return Err(ParseError::new(
                        format!("unknown machine clause '{other}'"),
                        span,
                    ))
                }
            }
        }
        let state_names: Vec<String> = raw.iter().map(|r| r.control.name.clone()).collect();
        let mut controls = Vec::new();
        for mut r in raw {
            for (rule, (target, tspan)) in r.control.rules.iter_mut().zip(&r.targets) {
                rule.target = state_names
                    .iter()
                    .position(|n| n == target)
                    .ok_or_else(|| {
                        ParseError::new(format!("unknown target state '{target}'"), tspan.clone())
                    })?;
            }
            controls.push(r.control);
        }
        let init = match init_name {
            Some((n, nspan)) => controls
                .iter()
                .position(|c| c.name == n)
                .ok_or_else(|| ParseError::new(format!("unknown initial state '{n}'"), nspan))?,
            None => 0,
        };
        // The chaotic clause widens the interface beyond what the table
        // itself produces.
        let def_outputs: Vec<Chan> = outputs
            .iter()
            .filter(|c| !chaotic.contains(c))
            .cloned()
            .collect();
        let def = TableDef {
            name,
            inputs,
            outputs: def_outputs,
            registers,
            controls,
            init,
        };
        let mut machine = Machine::table(def)
            .map_err(|e| ParseError::new(e.to_string(), decl_span.clone()))?;
        for c in chaotic {
            if !outputs.contains(&c) {
                return Err(ParseError::new(
                    format!("chaotic channel '{c}' is not listed among the outputs"),
                    decl_span.clone(),
                ));
            }
            machine = machine
                .with_added_chaotic_output(c)
                .map_err(|e| ParseError::new(e.to_string(), decl_span.clone()))?;
        }
        Ok(machine)
    }

    /// `state NAME { emit ...  on ... }`. Transition targets are kept by
    /// name until the whole table is parsed, so states can point forward.
    fn state_block(&mut self) -> Result<RawControl, ParseError> {
        let (name, _) = self.ident("state name")?;
        self.expect(Tok::LBrace)?;
        let mut emits = Vec::new();
        let mut rules = Vec::new();
        let mut targets = Vec::new();
        while !matches!(self.peek(), Some(Tok::RBrace)) {
            let (kw, span) = self.ident("'emit' or 'on'")?;
            match kw.as_str() {
                "emit" => emits.push(self.emit_rule()?),
                "on" => {
                    let (rule, target, tspan) = self.trans_rule()?;
                    rules.push(rule);
                    targets.push((target, tspan));
                }
                other => {
                    return Err(ParseError::new(
                        format!("expected 'emit' or 'on', found '{other}'"),
                        span,
                    ))
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(RawControl {
            control: Control { name, emits, rules },
            targets,
        })
    }

    /// `emit C = e, D = e2` — one emission option. A bare `emit` is the
    /// silent option.
    fn emit_rule(&mut self) -> Result<EmitRule, ParseError> {
        let mut outputs = BTreeMap::new();
        // A channel assignment starts with `Ident =`; anything else ends
        // the (possibly empty) rule.
        while let (Some(Tok::Ident(_)), Some(Tok::Equals)) = (
            self.peek(),
            self.tokens.get(self.pos + 1).map(|t| &t.tok),
        ) {
            let (c, cspan) = self.ident("channel name")?;
            let chan = self.channel(&c, &cspan)?;
            self.expect(Tok::Equals)?;
            let e = self.expr()?;
            outputs.insert(chan, e);
            if matches!(self.peek(), Some(Tok::Comma)) {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(EmitRule { outputs })
    }

    /// `on <conds> -> TARGET { r = e ... }`; conditions are `any` or a
    /// comma-separated list of `C any|empty|nonempty|one_of <iv>|<iv>`.
    /// Returns the rule plus the target state's name for later resolution.
    fn trans_rule(&mut self) -> Result<(TransRule, String, SourceSpan), ParseError> {
        let mut conds = Vec::new();
        if self.eat_kw("any") {
            // unconditional
        } else {
            loop {
                let (c, cspan) = self.ident("channel name")?;
                let chan = self.channel(&c, &cspan)?;
                let (kind, kspan) = self.ident("a guard condition")?;
                let cond = match kind.as_str() {
                    "any" => GuardCond::Any,
                    "empty" => GuardCond::Empty,
                    "nonempty" => GuardCond::NonEmpty,
                    "one_of" => {
                        let mut ivs = Vec::new();
                        loop {
                            ivs.push(self.interval_literal()?);
                            if matches!(self.peek(), Some(Tok::Pipe)) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                        GuardCond::OneOf(ivs)
                    }
                    other => {
                        return Err(ParseError::new(
                            format!(
                                "expected 'any', 'empty', 'nonempty', or 'one_of', \
                                 found '{other}'"
                            ),
                            kspan,
                        ))
                    }
                };
                conds.push((chan, cond));
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Arrow)?;
        let (target_name, tspan) = self.ident("target state name")?;
        let mut updates = Vec::new();
        if matches!(self.peek(), Some(Tok::LBrace)) {
            self.pos += 1;
            while !matches!(self.peek(), Some(Tok::RBrace)) {
                let (r, _) = self.ident("register name")?;
                self.expect(Tok::Equals)?;
                updates.push((r, self.expr()?));
            }
            self.expect(Tok::RBrace)?;
        }
        Ok((
            TransRule {
                guard: Guard { conds },
                updates,
                // Resolved to an index once all states are parsed.
                target: 0,
            },
            target_name,
            tspan,
        ))
    }

    /// `<v, v>` — an interval of messages.
    fn interval_literal(&mut self) -> Result<Interval, ParseError> {
        let t = self.next("an interval literal")?;
        if t.tok != Tok::Lt {
            return Err(ParseError::new(
                format!("expected an interval literal, found {}", t.tok),
                t.span,
            ));
        }
        let mut items = Vec::new();
        if !matches!(self.peek(), Some(Tok::Gt)) {
            loop {
                items.push(self.value()?);
                if matches!(self.peek(), Some(Tok::Comma)) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Gt)?;
        Ok(Interval(items))
    }

    /// `product [bound N] { inputs... outputs... chaotic... member M ... }`.
    fn product_body(&mut self, decl_span: &SourceSpan) -> Result<Machine, ParseError> {
        let mut bound = 1usize;
        if self.eat_kw("bound") {
            let t = self.next("an integer")?;
            match t.tok {
                Tok::Int(n) if n >= 0 => bound = n as usize,
                other => {
                    return Err(ParseError::new(
                        format!("expected a nonnegative bound, found {other}"),
                        t.span,
                    ))
                }
            }
        }
        self.expect(Tok::LBrace)?;
        let stops = ["inputs", "outputs", "chaotic", "member"];
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut chaotic = Vec::new();
        let mut members = Vec::new();
        while !matches!(self.peek(), Some(Tok::RBrace) | None) {
            let (kw, span) = self.ident("a product clause")?;
            match kw.as_str() {
                "inputs" => inputs = self.channel_list(&stops)?,
                "outputs" => outputs = self.channel_list(&stops)?,
                "chaotic" => chaotic = self.channel_list(&stops)?,
                "member" => {
                    let (m, mspan) = self.ident("machine name")?;
                    members.push(self.machine(&m, &mspan)?);
                }
                other => {
                    return Err(ParseError::new(
                        format!("unknown product clause '{other}'"),
                        span,
                    ))
                }
            }
        }
        self.expect(Tok::RBrace)?;
        assemble_product(members, inputs, outputs, chaotic, bound)
            .map_err(|msg| ParseError::new(msg, decl_span.clone()))
    }

    // ----- invariants ------------------------------------------------------------

    /// `invariant N { T = fold(S, n) delay d ... }`.
    fn invariant_decl(&mut self) -> Result<(), ParseError> {
        let (name, span) = self.ident("invariant name")?;
        if self.invariants.contains_key(&name) {
            return Err(ParseError::new(
                format!("duplicate invariant '{name}'"),
                span,
            ));
        }
        self.expect(Tok::LBrace)?;
        let mut eqs = Vec::new();
        while !matches!(self.peek(), Some(Tok::RBrace)) {
            let (t, tspan) = self.ident("target channel")?;
            let target = self.channel(&t, &tspan)?;
            self.expect(Tok::Equals)?;
            let (f, fspan) = self.ident("a fold name")?;
            self.expect(Tok::LParen)?;
            let (s, sspan) = self.ident("source channel")?;
            let source = self.channel(&s, &sspan)?;
            let modulus = if matches!(self.peek(), Some(Tok::Comma)) {
                self.pos += 1;
                let t = self.next("an integer")?;
                match t.tok {
                    Tok::Int(n) => Some(n),
                    other => {
                        return Err(ParseError::new(
                            format!("expected a modulus, found {other}"),
                            t.span,
                        ))
                    }
                }
            } else {
                None
            };
            self.expect(Tok::RParen)?;
            let fold = match (f.as_str(), modulus) {
                ("identity", None) => FoldKind::Identity,
                ("inc_all", Some(m)) => FoldKind::IncAll { modulus: m },
                ("delta_star", Some(m)) => FoldKind::DeltaStar { modulus: m },
                ("rho_star", Some(m)) => FoldKind::RhoStar { modulus: m },
                ("identity", Some(_)) => {
                    return Err(ParseError::new("identity takes no modulus", fspan))
                }
                ("inc_all" | "delta_star" | "rho_star", None) => {
                    return Err(ParseError::new(format!("'{f}' needs a modulus"), fspan))
                }
                (other, _) => {
                    return Err(ParseError::new(
                        format!(
                            "expected 'identity', 'inc_all', 'delta_star', or \
                             'rho_star', found '{other}'"
                        ),
                        fspan,
                    ))
                }
            };
            let mut delay = 0usize;
            if self.eat_kw("delay") {
                let t = self.next("an integer")?;
                match t.tok {
                    Tok::Int(n) if n >= 0 => delay = n as usize,
                    other => {
                        return Err(ParseError::new(
                            format!("expected a nonnegative delay, found {other}"),
                            t.span,
                        ))
                    }
                }
            }
            eqs.push(StreamEquation {
                target,
                source,
                delay,
                fold,
            });
        }
        self.expect(Tok::RBrace)?;
        self.invariants.insert(name.clone(), Invariant::equations(&name, eqs));
        Ok(())
    }

    // ----- components and the system block -------------------------------------------

    /// `component NAME : machine` with an optional `{ sub ... }` block for
    /// folded components. Duplicate component names parse fine — they are
    /// a consistency violation, and the consistency check is the one place
    /// that reports those.
    fn component_decl(&mut self) -> Result<(), ParseError> {
        let (name, _) = self.ident("component name")?;
        self.expect(Tok::Colon)?;
        let (m, mspan) = self.ident("machine name")?;
        let machine = self.machine(&m, &mspan)?;
        let mut sub = None;
        if matches!(self.peek(), Some(Tok::LBrace)) {
            self.pos += 1;
            self.expect_kw("sub")?;
            sub = Some(Box::new(self.sub_system()?));
            self.expect(Tok::RBrace)?;
        }
        self.components.push(Component {
            name,
            machine,
            sub,
        });
        Ok(())
    }

    /// `sub NAME { inputs... outputs... component ... }` — the remembered
    /// network a folded component can expand back into.
    fn sub_system(&mut self) -> Result<System, ParseError> {
        let (name, _) = self.ident("sub-system name")?;
        self.expect(Tok::LBrace)?;
        let stops = ["inputs", "outputs", "component"];
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut components = Vec::new();
        while !matches!(self.peek(), Some(Tok::RBrace) | None) {
            let (kw, span) = self.ident("a sub-system clause")?;
            match kw.as_str() {
                "inputs" => inputs = self.channel_list(&stops)?,
                "outputs" => outputs = self.channel_list(&stops)?,
                "component" => {
                    let (cname, _) = self.ident("component name")?;
                    self.expect(Tok::Colon)?;
                    let (m, mspan) = self.ident("machine name")?;
                    let machine = self.machine(&m, &mspan)?;
                    let mut sub = None;
                    if matches!(self.peek(), Some(Tok::LBrace)) {
                        self.pos += 1;
                        self.expect_kw("sub")?;
                        sub = Some(Box::new(self.sub_system()?));
                        self.expect(Tok::RBrace)?;
                    }
                    components.push(Component {
                        name: cname,
                        machine,
                        sub,
                    });
                }
                other => {
                    return Err(ParseError::new(
                        format!("unknown sub-system clause '{other}'"),
                        span,
                    ))
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(System {
            name,
            inputs: inputs.into_iter().collect(),
            outputs: outputs.into_iter().collect(),
            components,
        })
    }

    /// `system NAME { inputs: ... outputs: ... }` — exactly one per file.
    fn system_decl(&mut self, kw_span: &SourceSpan) -> Result<(), ParseError> {
        if self.system.is_some() {
            return Err(ParseError::new("multiple systems", kw_span.clone()));
        }
        let (name, _) = self.ident("system name")?;
        self.expect(Tok::LBrace)?;
        let stops = ["inputs", "outputs"];
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        while !matches!(self.peek(), Some(Tok::RBrace) | None) {
            let (kw, span) = self.ident("'inputs' or 'outputs'")?;
            match kw.as_str() {
                "inputs" => inputs = self.channel_list(&stops)?,
                "outputs" => outputs = self.channel_list(&stops)?,
                other => {
                    return Err(ParseError::new(
                        format!("expected 'inputs' or 'outputs', found '{other}'"),
                        span,
                    ))
                }
            }
        }
        self.expect(Tok::RBrace)?;
        self.system = Some((
            name,
            inputs.into_iter().collect(),
            outputs.into_iter().collect(),
        ));
        Ok(())
    }
}

/// Build a product machine from parsed members and an explicit interface.
/// Outputs the members do not produce are treated as chaotic extensions
/// (the add-output rule's freshly grown channels); the declared chaotic
/// set must then agree with what the composition yields.
pub(crate) fn assemble_product(
    members: Vec<Machine>,
    inputs: Vec<Chan>,
    outputs: Vec<Chan>,
    chaotic: Vec<Chan>,
    bound: usize,
) -> Result<Machine, String> {
    let produced: ChannelSet = members
        .iter()
        .flat_map(|m| m.outputs.iter().cloned())
        .collect();
    let composed: ChannelSet = outputs
        .iter()
        .filter(|c| produced.contains(*c))
        .cloned()
        .collect();
    let extras: Vec<Chan> = outputs
        .iter()
        .filter(|c| !produced.contains(*c))
        .cloned()
        .collect();
    let mut machine = Machine::compose(
        members,
        inputs.into_iter().collect(),
        composed,
        bound,
    )
    .map_err(|e| e.to_string())?;
    for c in extras {
        machine = machine.with_added_chaotic_output(c).map_err(|e| e.to_string())?;
    }
    let declared: ChannelSet = chaotic.into_iter().collect();
    if declared != machine.chaotic {
        return Err(format!(
            "declared chaotic channels {:?} do not match the composition's {:?}",
            declared.iter().map(|c| c.name()).collect::<Vec<_>>(),
            machine.chaotic.iter().map(|c| c.name()).collect::<Vec<_>>()
        ));
    }
    Ok(machine)
}
