// SPDX-License-Identifier: Apache-2.0

//! Algebraic-model text export of a pragma-selection problem, and a reader
//! that evaluates exported models with exact rational arithmetic.
//!
//! The format follows AMPL conventions: `var` declarations with finite
//! domains, defined variables (`var x = expr;`), tabulated `param`s,
//! `subject to` constraints and one `minimize` objective. Every
//! data-dependent quantity (region bounds, transfer costs, footprints) is
//! tabulated over the variable values it depends on, so the file is
//! self-contained.

use super::NlpProblem;
use crate::analysis::FootprintQuery;
use crate::config::{ConstraintTag, PragmaConfig};
use crate::ir::{ArrayIdx, KernelIr, LoopIdx, Node, OpKind, StmtIdx};
use crate::resources;
use num_integer::Integer;
use num_rational::Ratio;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

type Q = Ratio<i128>;

fn uf(k: &KernelIr, l: LoopIdx) -> String {
    format!("uf_{}", k.loops[l].iterator)
}
fn pip(k: &KernelIr, l: LoopIdx) -> String {
    format!("pip_{}", k.loops[l].iterator)
}
fn tile(k: &KernelIr, l: LoopIdx) -> String {
    format!("tile_{}", k.loops[l].iterator)
}
fn cache(k: &KernelIr, l: LoopIdx, a: ArrayIdx) -> String {
    format!("cache_{}_{}", k.loops[l].iterator, k.arrays[a].name)
}

fn sum(terms: Vec<String>) -> String {
    if terms.is_empty() {
        "0".into()
    } else {
        format!("({})", terms.join(" + "))
    }
}

fn max(terms: Vec<String>) -> String {
    match terms.len() {
        0 => "0".into(),
        1 => terms.into_iter().next().unwrap(),
        _ => format!("max({})", terms.join(", ")),
    }
}

fn product(terms: Vec<String>) -> String {
    if terms.is_empty() {
        "1".into()
    } else {
        terms.join(" * ")
    }
}

fn table(entries: impl IntoIterator<Item = (u64, u64)>) -> String {
    let body: Vec<String> = entries.into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("{{{}}}", body.join(", "))
}

struct Writer<'p, 'a> {
    p: &'p NlpProblem<'a>,
    out: String,
    /// Op kinds the kernel uses that cost DSPs.
    kinds: Vec<OpKind>,
    counter: BTreeMap<ConstraintTag, usize>,
}

impl Writer<'_, '_> {
    fn line(&mut self, s: impl AsRef<str>) {
        self.out.push_str(s.as_ref());
        self.out.push('\n');
    }

    fn constraint(&mut self, tag: ConstraintTag, expr: String) {
        let n = self.counter.entry(tag).or_insert(0);
        *n += 1;
        let name = format!("{}_{}", tag.label().replace('-', "_"), n);
        self.line(format!("subject to {name}: {expr};  # [{}]", tag.label()));
    }

    fn domain(&self, l: LoopIdx) -> Vec<u64> {
        let t = &self.p.a.trip[l];
        if t.is_constant() {
            t.divisors.clone()
        } else {
            vec![1]
        }
    }

    fn cache_vars(&self, a: ArrayIdx) -> Vec<LoopIdx> {
        let k = self.p.k;
        (0..k.loops.len()).filter(|&l| k.arrays_under(l).contains(&a)).collect()
    }

    fn declare(&mut self) {
        let k = self.p.k;
        self.line("# variables");
        for l in 0..k.loops.len() {
            let d: Vec<String> = self.domain(l).iter().map(u64::to_string).collect();
            let d = d.join(", ");
            self.line(format!("var {} integer in {{{d}}};", uf(k, l)));
            self.line(format!("var {} integer in {{{d}}};", tile(k, l)));
            self.line(format!("var {} binary;", pip(k, l)));
        }
        for a in k.arrays_used() {
            for l in self.cache_vars(a) {
                self.line(format!("var {} binary;", cache(k, l, a)));
            }
        }
    }

    fn rb_params(&mut self) {
        let k = self.p.k;
        self.line("# region bounds per unroll factor (missing entries are undefined)");
        for l in 0..k.loops.len() {
            let entries: Vec<(u64, u64)> =
                self.domain(l).into_iter().filter_map(|d| self.p.model.region_bound(l, d).ok().map(|(v, _)| (d, v))).collect();
            self.line(format!("param rb_{} := {};", k.loops[l].iterator, table(entries)));
        }
        self.line("# 1 when every inner loop is fully unrolled");
        for l in 0..k.loops.len() {
            let sl = self.straight_line(l);
            self.line(format!("var sl_{} = {sl};", k.loops[l].iterator));
        }
    }

    /// `1` when every loop strictly below `l` is fully unrolled and not
    /// pipelined.
    fn straight_line(&self, l: LoopIdx) -> String {
        let k = self.p.k;
        let mut parts = Vec::new();
        for m in k.loops_under(l) {
            let t = &self.p.a.trip[m];
            if !t.is_constant() {
                return "0".into();
            }
            parts.push(format!("{} == 0", pip(k, m)));
            if t.tc_max > 0 {
                parts.push(format!("{} == {}", uf(k, m), t.tc_max));
            }
        }
        if parts.is_empty() {
            "1".into()
        } else {
            format!("({})", parts.join(" and "))
        }
    }

    fn stmt_latency(&self, s: StmtIdx) -> String {
        match self.p.model.stmt_bound(s) {
            Ok(v) => v.to_string(),
            Err(_) => "undefined".into(),
        }
    }

    /// Defines `lat_<l>` for every loop below `body`, innermost first, and
    /// returns the composed expression of `body`.
    fn body_latency(&mut self, body: &[Node]) -> String {
        let (k, a) = (self.p.k, self.p.a);
        let mut terms: Vec<String> = Vec::with_capacity(body.len());
        for n in body {
            terms.push(match n {
                Node::Stmt(s) => self.stmt_latency(*s),
                Node::Loop { id, body } => {
                    self.loop_latency(*id, body);
                    format!("lat_{}", k.loops[*id].iterator)
                }
            });
        }
        let groups = a.components(k, body);
        max(groups.iter().map(|g| sum(g.iter().map(|&i| terms[i].clone()).collect())).collect())
    }

    fn loop_latency(&mut self, l: LoopIdx, body: &[Node]) {
        let (k, a) = (self.p.k, self.p.a);
        let inner = self.body_latency(body);
        let t = &a.trip[l];
        let name = &k.loops[l].iterator;
        let (p, q) = t.tc_avg;
        let (u, pp) = (uf(k, l), pip(k, l));
        let expr = if t.tc_max == 0 {
            "0".to_string()
        } else {
            let ii = a.min_ii[l].max(1);
            let rb = format!("rb_{name}[{u}]");
            let piped = if t.tc_min == 0 {
                format!("floor({p} * min({ii}, {rb}) / ({q} * {u}))")
            } else {
                format!("max(0, {rb} + floor({ii} * ({p} - {q} * {u}) / ({q} * {u})))")
            };
            let unrolled = format!("floor({p} * {rb} / ({q} * {u}))");
            let coarse = if a.is_reduction(l) {
                format!("floor({p} * {inner} / {q})")
            } else {
                format!("floor({p} * {inner} / ({q} * {u}))")
            };
            format!("if {pp} == 1 then {piped} else if sl_{name} == 1 then {unrolled} else {coarse}")
        };
        self.line(format!("var lat_{name} = {expr};"));
    }

    /// Statement op counts replicated by the unroll factors strictly below
    /// `l`, for one op kind.
    fn replicated(&self, l: LoopIdx, op: OpKind) -> String {
        let k = self.p.k;
        let mut terms = Vec::new();
        for s in k.stmts_under(l) {
            let n = k.statements[s].ops().iter().filter(|&&o| o == op).count();
            if n == 0 {
                continue;
            }
            let mut f = vec![n.to_string()];
            f.extend(k.statements[s].loops.iter().filter(|&&m| k.encloses(l, m)).map(|&m| uf(k, m)));
            terms.push(product(f));
        }
        sum(terms)
    }

    fn body_units(&mut self, body: &[Node], op: OpKind) -> String {
        let (k, a) = (self.p.k, self.p.a);
        let mut terms = Vec::with_capacity(body.len());
        for n in body {
            terms.push(match n {
                Node::Stmt(s) => k.statements[*s].ops().iter().filter(|&&o| o == op).count().to_string(),
                Node::Loop { id, body } => {
                    self.loop_units(*id, body, op);
                    format!("units_{}_{}", op.name(), k.loops[*id].iterator)
                }
            });
        }
        let groups = a.components(k, body);
        sum(groups.iter().map(|g| max(g.iter().map(|&i| terms[i].clone()).collect())).collect())
    }

    fn loop_units(&mut self, l: LoopIdx, body: &[Node], op: OpKind) {
        let (k, a) = (self.p.k, self.p.a);
        let inner = self.body_units(body, op);
        let name = &k.loops[l].iterator;
        let rep = self.replicated(l, op);
        let (u, pp) = (uf(k, l), pip(k, l));
        let ii = a.min_ii[l].max(1);
        let coarse = if a.is_reduction(l) { inner } else { format!("{inner} * {u}") };
        self.line(format!(
            "var units_{}_{name} = if {pp} == 1 then {rep} * {u} / {ii} else if sl_{name} == 1 then {rep} * {u} else {coarse};",
            op.name()
        ));
    }

    fn structural(&mut self) {
        let (k, a) = (self.p.k, self.p.a);
        self.line("# structural rules");
        for l in 0..k.loops.len() {
            let t = &a.trip[l];
            for q in k.loops_above(l) {
                if !t.is_constant() {
                    self.constraint(ConstraintTag::FullUnrollUnderPipeline, format!("{} == 0", pip(k, q)));
                } else if t.tc_max > 0 {
                    self.constraint(
                        ConstraintTag::FullUnrollUnderPipeline,
                        format!("{} == 0 or {} == {}", pip(k, q), uf(k, l), t.tc_max),
                    );
                }
            }
        }
        for st in &k.statements {
            if st.loops.len() > 1 {
                let s = sum(st.loops.iter().map(|&l| pip(k, l)).collect());
                self.constraint(ConstraintTag::OnePipelinePerStatement, format!("{s} <= 1"));
            }
        }
        for arr in k.arrays_used() {
            let vars = self.cache_vars(arr);
            for &l in &vars {
                for q in k.loops_above(l) {
                    self.constraint(ConstraintTag::NoCacheUnderPipeline, format!("{} + {} <= 1", cache(k, l, arr), pip(k, q)));
                }
                for &m in &vars {
                    if k.encloses(l, m) {
                        self.constraint(ConstraintTag::CachePath, format!("{} + {} <= 1", cache(k, l, arr), cache(k, m, arr)));
                    }
                }
            }
        }
        for l in 0..k.loops.len() {
            if let Some(cap) = a.uf_cap[l] {
                if *self.domain(l).last().unwrap_or(&1) > cap {
                    let above: Vec<String> = k.loops_above(l).iter().map(|&q| pip(k, q)).collect();
                    let bound = format!("{} <= {cap}", uf(k, l));
                    let expr = if above.is_empty() { bound } else { format!("{} >= 1 or {bound}", sum(above)) };
                    self.constraint(ConstraintTag::DependenceDistance, expr);
                }
            }
        }
    }

    fn resources(&mut self) {
        let (k, p) = (self.p.k, self.p);
        self.line("# resources");
        let limit = p.max_partition();
        for arr in k.arrays_used() {
            let dims: Vec<String> = resources::partition_loops(k, arr)
                .iter()
                .filter(|ls| !ls.is_empty())
                .map(|ls| {
                    let v: Vec<String> = ls.iter().map(|&l| uf(k, l)).collect();
                    format!("lcm({})", v.join(", "))
                })
                .collect();
            if !dims.is_empty() && limit != u64::MAX {
                self.constraint(ConstraintTag::PartitionLimit, format!("{} <= {limit}", product(dims)));
            }
        }
        if p.opts.fine_grained_only {
            for l in 0..k.loops.len() {
                for q in k.loops_above(l) {
                    self.constraint(ConstraintTag::FineGrainedOnly, format!("{} == 0 or {} == 1", pip(k, l), uf(k, q)));
                }
            }
        }
        let kinds = self.kinds.clone();
        let mut dsp = Vec::new();
        for op in kinds {
            let root = self.body_units(&k.root, op);
            self.line(format!("var units_{} = {root};", op.name()));
            dsp.push(format!("{} * units_{}", p.cal.dsp(op), op.name()));
        }
        self.constraint(ConstraintTag::DspBudget, format!("{} <= {}", sum(dsp), p.cal.dsp_available));

        // On-chip bits: strips of cached blocks plus full program-level
        // footprints of uncovered statements.
        let mut bits = Vec::new();
        for arr in k.arrays_used() {
            let eb = k.arrays[arr].element_bits;
            for l in self.cache_vars(arr) {
                let t = &p.a.trip[l];
                let entries: Vec<(u64, u64)> = self
                    .domain(l)
                    .into_iter()
                    .map(|d| {
                        let strip = (d > 1).then(|| t.tc_max.div_ceil(d).max(1));
                        let q = FootprintQuery { array: arr, scope: Some(l), stmts: k.stmts_under(l), tile: strip };
                        (d, p.a.footprint(k, p.cal, &q).bits(eb))
                    })
                    .collect();
                let pname = format!("strip_bits_{}_{}", k.loops[l].iterator, k.arrays[arr].name);
                self.line(format!("param {pname} := {};", table(entries)));
                bits.push(format!("{} * {pname}[{}]", cache(k, l, arr), tile(k, l)));
            }
            let (mask, top_bits, _) = self.uncovered_tables(arr);
            let name = &k.arrays[arr].name;
            self.line(format!("var uncovered_{name} = {mask};"));
            self.line(format!("param top_bits_{name} := {};", table(top_bits)));
            bits.push(format!("top_bits_{name}[uncovered_{name}]"));
        }
        self.constraint(ConstraintTag::OnChipCapacity, format!("{} <= {}", sum(bits), p.cal.onchip_bits));
    }

    /// Bit mask over the statements touching `arr` that are not below a
    /// cache of it, with program-level on-chip bits and transfer cycles per
    /// mask value.
    fn uncovered_tables(&self, arr: ArrayIdx) -> (String, Vec<(u64, u64)>, Vec<(u64, u64)>) {
        let (k, p) = (self.p.k, self.p);
        let touching: Vec<StmtIdx> = (0..k.statements.len())
            .filter(|&s| {
                let st = &k.statements[s];
                st.lhs.array == arr || st.reads().iter().any(|r| r.array == arr)
            })
            .collect();
        let mut terms = Vec::new();
        for (i, &s) in touching.iter().enumerate() {
            let free: Vec<String> = k.statements[s].loops.iter().map(|&l| format!("(1 - {})", cache(k, l, arr))).collect();
            terms.push(format!("{} * {}", 1u64 << i, product(free)));
        }
        let mut bits = Vec::new();
        let mut cycles = Vec::new();
        for mask in 0..(1u64 << touching.len()) {
            let stmts: Vec<StmtIdx> = touching.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &s)| s).collect();
            if stmts.is_empty() {
                bits.push((mask, 0));
                cycles.push((mask, 0));
                continue;
            }
            let q = FootprintQuery { array: arr, scope: None, stmts, tile: None };
            let f = p.a.footprint(k, p.cal, &q);
            bits.push((mask, f.bits(k.arrays[arr].element_bits)));
            cycles.push((mask, f.transfer_cycles));
        }
        (sum(terms), bits, cycles)
    }

    fn objective(&mut self) {
        let (k, p) = (self.p.k, self.p);
        self.line("# computation");
        let comp = self.body_latency(&k.root);
        self.line(format!("var computation = {comp};"));
        self.line("# communication: per level, the largest transfer");
        let mut top = Vec::new();
        let mut levels: BTreeMap<LoopIdx, Vec<String>> = BTreeMap::new();
        for arr in k.arrays_used() {
            let name = &k.arrays[arr].name;
            let (_, _, cycles) = self.uncovered_tables(arr);
            self.line(format!("param top_cycles_{name} := {};", table(cycles)));
            top.push(format!("top_cycles_{name}[uncovered_{name}]"));
            for l in self.cache_vars(arr) {
                let q = FootprintQuery { array: arr, scope: None, stmts: k.stmts_under(l), tile: None };
                let c = p.a.footprint(k, p.cal, &q).transfer_cycles;
                levels.entry(l).or_default().push(format!("{c} * {}", cache(k, l, arr)));
            }
        }
        let mut mem = vec![max(top)];
        mem.extend(levels.into_values().map(max));
        self.line(format!("var communication = {};", sum(mem)));
        self.line("minimize latency: computation + communication;");
    }
}

/// Self-contained model text for `p`.
pub fn export_model(p: &NlpProblem) -> String {
    let k = p.k;
    let kinds = OpKind::ALL
        .into_iter()
        .filter(|&op| p.cal.dsp(op) > 0 && k.statements.iter().any(|s| s.ops().contains(&op)))
        .collect();
    let mut w = Writer { p, out: String::new(), kinds, counter: BTreeMap::new() };
    let _ = writeln!(w.out, "# pragma-selection model for kernel `{}`", k.name);
    let _ = writeln!(
        w.out,
        "# fine_grained_only = {}, max_partition = {}",
        p.opts.fine_grained_only,
        match p.max_partition() {
            u64::MAX => "inf".to_string(),
            v => v.to_string(),
        }
    );
    w.declare();
    w.rb_params();
    w.structural();
    w.resources();
    w.objective();
    w.out
}

/// Variable assignment of `c` under the exported naming scheme.
pub fn config_assignment(k: &KernelIr, c: &PragmaConfig) -> HashMap<String, i128> {
    let mut m = HashMap::new();
    for (l, lp) in c.loops.iter().enumerate() {
        m.insert(uf(k, l), lp.uf as i128);
        m.insert(tile(k, l), lp.tile as i128);
        m.insert(pip(k, l), lp.pip as i128);
    }
    for a in k.arrays_used() {
        for l in 0..k.loops.len() {
            if k.arrays_under(l).contains(&a) {
                m.insert(cache(k, l, a), c.cache.contains(&(l, a)) as i128);
            }
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Reader

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown name `{0}`")]
    Unknown(String),
    #[error("variable `{0}` has no value")]
    Unassigned(String),
    #[error("value {value} of `{name}` is outside its domain")]
    Domain { name: String, value: i128 },
    #[error("`{0}` has no entry for {1}")]
    MissingEntry(String, String),
    #[error("undefined quantity")]
    Undefined,
    #[error("division by zero")]
    DivisionByZero,
    #[error("`{0}` expects integer arguments")]
    NonInteger(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(Q),
    Undefined,
    Name(String),
    Index(String, Box<Expr>),
    Call(String, Vec<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(Box<Expr>, Op, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
enum Domain {
    Binary,
    Set(Vec<i128>),
}

#[derive(Debug, Clone, PartialEq)]
enum Param {
    Scalar(Q),
    Table(BTreeMap<i128, Q>),
}

/// A parsed model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    vars: Vec<(String, Domain)>,
    params: HashMap<String, Param>,
    defs: Vec<(String, Expr)>,
    /// `(name, expr)` of each constraint, in file order.
    constraints: Vec<(String, Expr)>,
    objective: Expr,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(i128),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ModelError> {
    const SYMS: [&str; 19] =
        [":=", "==", "!=", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "(", ")", "{", "}", "[", "]", ","];
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let b = line.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i] as char;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let j = (i..b.len()).find(|&j| !b[j].is_ascii_digit()).unwrap_or(b.len());
                let n = line[i..j].parse().map_err(|_| ModelError::Parse { line: ln + 1, msg: "number too large".into() })?;
                out.push((Tok::Num(n), ln + 1));
                i = j;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let j = (i..b.len()).find(|&j| !(b[j].is_ascii_alphanumeric() || b[j] == b'_')).unwrap_or(b.len());
                out.push((Tok::Ident(line[i..j].to_string()), ln + 1));
                i = j;
            } else if c == ';' || c == ':' {
                // `:` alone separates names from bodies and table keys.
                if line[i..].starts_with(":=") {
                    out.push((Tok::Sym(":="), ln + 1));
                    i += 2;
                } else {
                    out.push((Tok::Sym(if c == ';' { ";" } else { ":" }), ln + 1));
                    i += 1;
                }
            } else if let Some(s) = SYMS.iter().find(|s| line[i..].starts_with(**s)) {
                out.push((Tok::Sym(s), ln + 1));
                i += s.len();
            } else {
                return Err(ModelError::Parse { line: ln + 1, msg: format!("unexpected character `{c}`") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(0, |t| t.1)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ModelError> {
        Err(ModelError::Parse { line: self.line(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == s)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ModelError> {
        if self.is_sym(s) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> Result<(), ModelError> {
        if self.is_kw(s) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn ident(&mut self) -> Result<String, ModelError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected a name"),
        }
    }

    fn int(&mut self) -> Result<i128, ModelError> {
        let neg = self.is_sym("-");
        if neg {
            self.pos += 1;
        }
        match self.peek() {
            Some(Tok::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(if neg { -n } else { n })
            }
            _ => self.err("expected a number"),
        }
    }

    fn model(&mut self) -> Result<Model, ModelError> {
        let mut m = Model { vars: Vec::new(), params: HashMap::new(), defs: Vec::new(), constraints: Vec::new(), objective: Expr::Num(Q::from_integer(0)) };
        let mut have_objective = false;
        while self.peek().is_some() {
            if self.is_kw("var") {
                self.pos += 1;
                let name = self.ident()?;
                if self.is_sym("=") {
                    self.pos += 1;
                    let e = self.expr()?;
                    m.defs.push((name, e));
                } else if self.is_kw("binary") {
                    self.pos += 1;
                    m.vars.push((name, Domain::Binary));
                } else {
                    self.expect_kw("integer")?;
                    self.expect_kw("in")?;
                    self.expect_sym("{")?;
                    let mut set = vec![self.int()?];
                    while self.is_sym(",") {
                        self.pos += 1;
                        set.push(self.int()?);
                    }
                    self.expect_sym("}")?;
                    m.vars.push((name, Domain::Set(set)));
                }
            } else if self.is_kw("param") {
                self.pos += 1;
                let name = self.ident()?;
                self.expect_sym(":=")?;
                let p = if self.is_sym("{") {
                    self.pos += 1;
                    let mut t = BTreeMap::new();
                    while !self.is_sym("}") {
                        let key = self.int()?;
                        self.expect_sym(":")?;
                        t.insert(key, Q::from_integer(self.int()?));
                        if !self.is_sym("}") {
                            self.expect_sym(",")?;
                        }
                    }
                    self.pos += 1;
                    Param::Table(t)
                } else {
                    Param::Scalar(Q::from_integer(self.int()?))
                };
                m.params.insert(name, p);
            } else if self.is_kw("subject") {
                self.pos += 1;
                self.expect_kw("to")?;
                let name = self.ident()?;
                self.expect_sym(":")?;
                let e = self.expr()?;
                m.constraints.push((name, e));
            } else if self.is_kw("minimize") {
                self.pos += 1;
                self.ident()?;
                self.expect_sym(":")?;
                m.objective = self.expr()?;
                have_objective = true;
            } else {
                return self.err("expected `var`, `param`, `subject to` or `minimize`");
            }
            self.expect_sym(";")?;
        }
        if !have_objective {
            return self.err("model has no objective");
        }
        Ok(m)
    }

    fn expr(&mut self) -> Result<Expr, ModelError> {
        if self.is_kw("if") {
            self.pos += 1;
            let c = self.expr()?;
            self.expect_kw("then")?;
            let a = self.expr()?;
            self.expect_kw("else")?;
            let b = self.expr()?;
            return Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)));
        }
        self.or()
    }

    fn or(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.and()?;
        while self.is_kw("or") {
            self.pos += 1;
            e = Expr::Bin(Box::new(e), Op::Or, Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.cmp()?;
        while self.is_kw("and") {
            self.pos += 1;
            e = Expr::Bin(Box::new(e), Op::And, Box::new(self.cmp()?));
        }
        Ok(e)
    }

    fn cmp(&mut self) -> Result<Expr, ModelError> {
        let e = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Sym("==")) => Op::Eq,
            Some(Tok::Sym("!=")) => Op::Ne,
            Some(Tok::Sym("<=")) => Op::Le,
            Some(Tok::Sym("<")) => Op::Lt,
            Some(Tok::Sym(">=")) => Op::Ge,
            Some(Tok::Sym(">")) => Op::Gt,
            _ => return Ok(e),
        };
        self.pos += 1;
        Ok(Expr::Bin(Box::new(e), op, Box::new(self.sum()?)))
    }

    fn sum(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.term()?;
        loop {
            let op = if self.is_sym("+") {
                Op::Add
            } else if self.is_sym("-") {
                Op::Sub
            } else {
                return Ok(e);
            };
            self.pos += 1;
            e = Expr::Bin(Box::new(e), op, Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ModelError> {
        let mut e = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                Op::Mul
            } else if self.is_sym("/") {
                Op::Div
            } else {
                return Ok(e);
            };
            self.pos += 1;
            e = Expr::Bin(Box::new(e), op, Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        if self.is_sym("-") {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.is_kw("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ModelError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(Q::from_integer(n)))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "undefined" {
                    return Ok(Expr::Undefined);
                }
                if self.is_sym("(") {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.is_sym(",") {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect_sym(")")?;
                    return Ok(Expr::Call(name, args));
                }
                if self.is_sym("[") {
                    self.pos += 1;
                    let i = self.expr()?;
                    self.expect_sym("]")?;
                    return Ok(Expr::Index(name, Box::new(i)));
                }
                Ok(Expr::Name(name))
            }
            _ => self.err("expected an expression"),
        }
    }
}

struct Env<'m> {
    m: &'m Model,
    values: HashMap<&'m str, Q>,
}

fn truth(b: bool) -> Q {
    Q::from_integer(b as i128)
}

fn integer(name: &str, q: Q) -> Result<i128, ModelError> {
    if q.is_integer() {
        Ok(q.to_integer())
    } else {
        Err(ModelError::NonInteger(name.into()))
    }
}

impl Env<'_> {
    fn eval(&self, e: &Expr) -> Result<Q, ModelError> {
        Ok(match e {
            Expr::Num(q) => *q,
            Expr::Undefined => return Err(ModelError::Undefined),
            Expr::Name(n) => match self.values.get(n.as_str()) {
                Some(q) => *q,
                None => match self.m.params.get(n) {
                    Some(Param::Scalar(q)) => *q,
                    _ => return Err(ModelError::Unknown(n.clone())),
                },
            },
            Expr::Index(n, i) => {
                let key = integer(n, self.eval(i)?)?;
                match self.m.params.get(n) {
                    Some(Param::Table(t)) => *t.get(&key).ok_or_else(|| ModelError::MissingEntry(n.clone(), key.to_string()))?,
                    _ => return Err(ModelError::Unknown(n.clone())),
                }
            }
            Expr::Call(f, args) => {
                let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                match (f.as_str(), vals.as_slice()) {
                    ("floor", [x]) => x.floor(),
                    ("max", [first, rest @ ..]) => rest.iter().fold(*first, |a, &b| a.max(b)),
                    ("min", [first, rest @ ..]) => rest.iter().fold(*first, |a, &b| a.min(b)),
                    ("lcm", vals) => {
                        let mut acc = 1i128;
                        for &v in vals {
                            acc = acc.lcm(&integer("lcm", v)?);
                        }
                        Q::from_integer(acc)
                    }
                    _ => return Err(ModelError::Unknown(f.clone())),
                }
            }
            Expr::Neg(x) => -self.eval(x)?,
            Expr::Not(x) => truth(self.eval(x)? == Q::from_integer(0)),
            Expr::If(c, a, b) => {
                if self.eval(c)? != Q::from_integer(0) {
                    self.eval(a)?
                } else {
                    self.eval(b)?
                }
            }
            Expr::Bin(a, Op::And, b) => truth(self.eval(a)? != Q::from_integer(0) && self.eval(b)? != Q::from_integer(0)),
            Expr::Bin(a, Op::Or, b) => truth(self.eval(a)? != Q::from_integer(0) || self.eval(b)? != Q::from_integer(0)),
            Expr::Bin(a, op, b) => {
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    Op::Mul => x * y,
                    Op::Div => {
                        if y == Q::from_integer(0) {
                            return Err(ModelError::DivisionByZero);
                        }
                        x / y
                    }
                    Op::Eq => truth(x == y),
                    Op::Ne => truth(x != y),
                    Op::Le => truth(x <= y),
                    Op::Lt => truth(x < y),
                    Op::Ge => truth(x >= y),
                    Op::Gt => truth(x > y),
                    Op::And | Op::Or => unreachable!("handled above"),
                }
            }
        })
    }
}

impl Model {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        Parser { toks: tokenize(text)?, pos: 0 }.model()
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.0.as_str())
    }

    pub fn constraint_names(&self) -> impl Iterator<Item = &str> {
        self.constraints.iter().map(|c| c.0.as_str())
    }

    /// Bind the variables and every defined variable that evaluates.
    /// Defined variables that fail are left unbound and only surface when
    /// something uses them.
    fn bind<'m>(&'m self, assign: &HashMap<String, i128>) -> Result<Env<'m>, ModelError> {
        let mut env = Env { m: self, values: HashMap::new() };
        for (name, dom) in &self.vars {
            let v = *assign.get(name).ok_or_else(|| ModelError::Unassigned(name.clone()))?;
            let ok = match dom {
                Domain::Binary => v == 0 || v == 1,
                Domain::Set(s) => s.contains(&v),
            };
            if !ok {
                return Err(ModelError::Domain { name: name.clone(), value: v });
            }
            env.values.insert(name, Q::from_integer(v));
        }
        for (name, e) in &self.defs {
            if let Ok(v) = env.eval(e) {
                env.values.insert(name, v);
            }
        }
        Ok(env)
    }

    fn eval_def(&self, env: &Env, e: &Expr) -> Result<Q, ModelError> {
        env.eval(e).map_err(|err| match err {
            // Report the root cause of a failed defined variable.
            ModelError::Unknown(n) => match self.defs.iter().find(|d| d.0 == n) {
                Some((_, d)) => self.eval_def(env, d).err().unwrap_or(ModelError::Unknown(n)),
                None => ModelError::Unknown(n),
            },
            e => e,
        })
    }

    pub fn objective(&self, assign: &HashMap<String, i128>) -> Result<Q, ModelError> {
        let env = self.bind(assign)?;
        self.eval_def(&env, &self.objective)
    }

    /// Names of the constraints `assign` violates. A constraint that cannot
    /// be evaluated counts as violated.
    pub fn violated(&self, assign: &HashMap<String, i128>) -> Result<Vec<String>, ModelError> {
        let env = self.bind(assign)?;
        Ok(self
            .constraints
            .iter()
            .filter(|(_, e)| env.eval(e).map_or(true, |v| v == Q::from_integer(0)))
            .map(|(n, _)| n.clone())
            .collect())
    }
}

/// Rule label of an exported constraint name (`dsp_budget_1` -> `dsp-budget`).
pub fn constraint_tag(name: &str) -> Option<ConstraintTag> {
    let stem = name.rsplit_once('_').map_or(name, |(s, _)| s);
    ConstraintTag::from_label(&stem.replace('_', "-"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_are_exact() {
        let m = Model::parse(
            "var x integer in {1, 2, 4};\nparam t := {1: 10, 2: 7};\nvar y = floor(t[x] * 3 / 4);\n\
             subject to c_1: x <= 2 or y > 100;\nminimize obj: if x == 1 then y else max(y, lcm(x, 3)) - -1;",
        )
        .unwrap();
        let a = |v: i128| HashMap::from([("x".to_string(), v)]);
        assert_eq!(m.objective(&a(1)).unwrap(), Q::from_integer(7));
        assert_eq!(m.objective(&a(2)).unwrap(), Q::from_integer(7));
        assert_eq!(m.objective(&a(4)), Err(ModelError::MissingEntry("t".into(), "4".into())));
        assert_eq!(m.violated(&a(4)).unwrap(), vec!["c_1".to_string()]);
        assert!(matches!(m.objective(&a(3)), Err(ModelError::Domain { .. })));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let e = Model::parse("var x binary;\nvar y = (x + ;\nminimize o: x;").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 2, .. }), "{e:?}");
    }

    #[test]
    fn constraint_names_map_to_tags() {
        assert_eq!(constraint_tag("dsp_budget_1"), Some(ConstraintTag::DspBudget));
        assert_eq!(constraint_tag("full_unroll_under_pipeline_12"), Some(ConstraintTag::FullUnrollUnderPipeline));
    }
}
