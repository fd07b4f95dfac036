// SPDX-License-Identifier: Apache-2.0

//! Summary AST of an affine loop kernel.
//!
//! Loops and statements live in flat tables indexed by [`LoopIdx`] and
//! [`StmtIdx`]; the tree itself is a list of [`Node`]s that point into those
//! tables. Tables are in syntactic (preorder) order, so comparing indices
//! compares program order.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

pub type LoopIdx = usize;
pub type StmtIdx = usize;
pub type ArrayIdx = usize;
pub type ParamIdx = usize;

/// Arithmetic operation kinds. Each maps through the calibration table to a
/// latency and a DSP cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Div];

    /// Add and mul are treated as reassociable (floating point under unsafe math).
    pub fn is_associative(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Mul)
    }

    pub fn symbol(self) -> char {
        match self {
            OpKind::Add => '+',
            OpKind::Sub => '-',
            OpKind::Mul => '*',
            OpKind::Div => '/',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
        }
    }

    pub fn from_name(s: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Integer affine form `Σ coef·iter + constant` over loop iterators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Affine {
    /// Sorted by loop index, no zero coefficients.
    pub terms: Vec<(LoopIdx, i64)>,
    pub constant: i64,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn iter(l: LoopIdx) -> Self {
        Affine { terms: vec![(l, 1)], constant: 0 }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coef(&self, l: LoopIdx) -> i64 {
        self.terms.iter().find(|(x, _)| *x == l).map_or(0, |(_, c)| *c)
    }

    pub fn add_term(&mut self, l: LoopIdx, c: i64) {
        match self.terms.binary_search_by_key(&l, |(x, _)| *x) {
            Ok(pos) => {
                self.terms[pos].1 += c;
                if self.terms[pos].1 == 0 {
                    self.terms.remove(pos);
                }
            }
            Err(pos) if c != 0 => self.terms.insert(pos, (l, c)),
            Err(_) => {}
        }
    }

    pub fn add(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        for &(l, c) in &other.terms {
            out.add_term(l, c);
        }
        out.constant += other.constant;
        out
    }

    pub fn scale(&self, k: i64) -> Affine {
        if k == 0 {
            return Affine::default();
        }
        Affine {
            terms: self.terms.iter().map(|&(l, c)| (l, c * k)).collect(),
            constant: self.constant * k,
        }
    }

    /// `Some((iter, offset))` when the form is exactly `iter + offset`.
    pub fn as_iter_offset(&self) -> Option<(LoopIdx, i64)> {
        match self.terms.as_slice() {
            [(l, 1)] => Some((*l, self.constant)),
            _ => None,
        }
    }

    /// Evaluate with concrete iterator values; `values[l]` must be set for
    /// every loop referenced.
    pub fn eval(&self, values: &[i64]) -> i64 {
        self.terms.iter().map(|&(l, c)| c * values[l]).sum::<i64>() + self.constant
    }

    /// Replace iterators with affine values. Loops mapped to `None` stay symbolic.
    pub fn substitute(&self, env: &[Option<Affine>]) -> Affine {
        let mut out = Affine::constant(self.constant);
        for &(l, c) in &self.terms {
            match env.get(l).and_then(|v| v.as_ref()) {
                Some(v) => out = out.add(&v.scale(c)),
                None => out.add_term(l, c),
            }
        }
        out
    }

    pub fn loops(&self) -> impl Iterator<Item = LoopIdx> + '_ {
        self.terms.iter().map(|(l, _)| *l)
    }

    pub fn display<'a>(&'a self, k: &'a KernelIr) -> AffineDisplay<'a> {
        AffineDisplay { a: self, k }
    }
}

pub struct AffineDisplay<'a> {
    a: &'a Affine,
    k: &'a KernelIr,
}

impl fmt::Display for AffineDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &(l, c) in &self.a.terms {
            let name = &self.k.loops[l].iterator;
            if first {
                match c {
                    1 => write!(f, "{name}")?,
                    -1 => write!(f, "-{name}")?,
                    _ => write!(f, "{c}*{name}")?,
                }
            } else if c == 1 {
                write!(f, "+{name}")?;
            } else if c == -1 {
                write!(f, "-{name}")?;
            } else if c < 0 {
                write!(f, "-{}*{name}", -c)?;
            } else {
                write!(f, "+{c}*{name}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.a.constant)
        } else if self.a.constant > 0 {
            write!(f, "+{}", self.a.constant)
        } else if self.a.constant < 0 {
            write!(f, "{}", self.a.constant)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    Inout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub dims: Vec<u64>,
    pub element_bits: u32,
    pub direction: Direction,
}

impl ArrayDecl {
    pub fn elements(&self) -> u64 {
        self.dims.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Access {
    pub array: ArrayIdx,
    pub subscripts: Vec<Affine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Access(Access),
    Param(ParamIdx),
    Const(f64),
    Bin(OpKind, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn collect_ops(&self, out: &mut Vec<OpKind>) {
        if let Expr::Bin(k, a, b) = self {
            a.collect_ops(out);
            b.collect_ops(out);
            out.push(*k);
        }
    }

    fn collect_reads<'a>(&'a self, out: &mut Vec<&'a Access>) {
        match self {
            Expr::Access(a) => out.push(a),
            Expr::Bin(_, a, b) => {
                a.collect_reads(out);
                b.collect_reads(out);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub lhs: Access,
    /// Right-hand side with compound assignment already expanded
    /// (`x += e` is stored as `x = x + e`).
    pub rhs: Expr,
    /// Operator of a compound assignment, kept for printing.
    pub compound: Option<OpKind>,
    /// Enclosing loops, outermost first.
    pub loops: Vec<LoopIdx>,
}

impl Statement {
    /// Operations in producer-before-consumer order.
    pub fn ops(&self) -> Vec<OpKind> {
        let mut out = Vec::new();
        self.rhs.collect_ops(&mut out);
        out
    }

    pub fn reads(&self) -> Vec<&Access> {
        let mut out = Vec::new();
        self.rhs.collect_reads(&mut out);
        out
    }

    /// Top-level operation when the statement accumulates into its own
    /// left-hand side (`x = x op e` / `x op= e`).
    pub fn accumulation_op(&self) -> Option<OpKind> {
        match &self.rhs {
            Expr::Bin(k, a, b) => {
                let is_lhs = |e: &Expr| matches!(e, Expr::Access(acc) if *acc == self.lhs);
                if is_lhs(a) || is_lhs(b) {
                    Some(*k)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub iterator: String,
    pub lower: Affine,
    /// Exclusive upper bound.
    pub upper: Affine,
    pub parent: Option<LoopIdx>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Loop { id: LoopIdx, body: Vec<Node> },
    Stmt(StmtIdx),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Allow reassociation of reduction chains into trees.
    pub tree_reduction: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { tree_reduction: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelIr {
    pub name: String,
    pub arrays: Vec<ArrayDecl>,
    pub params: Vec<String>,
    pub loops: Vec<LoopInfo>,
    pub statements: Vec<Statement>,
    pub root: Vec<Node>,
    pub options: KernelOptions,
}

impl KernelIr {
    pub fn loop_by_name(&self, name: &str) -> Option<LoopIdx> {
        self.loops.iter().position(|l| l.iterator == name)
    }

    pub fn array_by_name(&self, name: &str) -> Option<ArrayIdx> {
        self.arrays.iter().position(|a| a.name == name)
    }

    pub fn stmt_by_name(&self, name: &str) -> Option<StmtIdx> {
        self.statements.iter().position(|s| s.id == name)
    }

    /// Body of a loop, or the root list for `None`.
    pub fn body(&self, l: Option<LoopIdx>) -> &[Node] {
        match l {
            None => &self.root,
            Some(l) => find_body(&self.root, l).expect("loop index out of range"),
        }
    }

    /// True if `outer` strictly encloses `inner`.
    pub fn encloses(&self, outer: LoopIdx, inner: LoopIdx) -> bool {
        let mut cur = self.loops[inner].parent;
        while let Some(p) = cur {
            if p == outer {
                return true;
            }
            cur = self.loops[p].parent;
        }
        false
    }

    /// Loops strictly inside `l`, in preorder.
    pub fn loops_under(&self, l: LoopIdx) -> Vec<LoopIdx> {
        (0..self.loops.len()).filter(|&x| self.encloses(l, x)).collect()
    }

    /// Loops strictly enclosing `l`, outermost first.
    pub fn loops_above(&self, l: LoopIdx) -> Vec<LoopIdx> {
        let mut out = Vec::new();
        let mut cur = self.loops[l].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.loops[p].parent;
        }
        out.reverse();
        out
    }

    /// Statements nested (at any depth) under `l`.
    pub fn stmts_under(&self, l: LoopIdx) -> Vec<StmtIdx> {
        (0..self.statements.len())
            .filter(|&s| self.statements[s].loops.contains(&l))
            .collect()
    }

    /// Statements reachable from a node list.
    pub fn stmts_in(&self, nodes: &[Node]) -> Vec<StmtIdx> {
        let mut out = Vec::new();
        collect_stmts(nodes, &mut out);
        out
    }

    /// Arrays accessed (read or written) under a loop.
    pub fn arrays_under(&self, l: LoopIdx) -> BTreeSet<ArrayIdx> {
        let mut out = BTreeSet::new();
        for s in self.stmts_under(l) {
            let st = &self.statements[s];
            out.insert(st.lhs.array);
            for r in st.reads() {
                out.insert(r.array);
            }
        }
        out
    }

    pub fn arrays_used(&self) -> BTreeSet<ArrayIdx> {
        let mut out = BTreeSet::new();
        for st in &self.statements {
            out.insert(st.lhs.array);
            for r in st.reads() {
                out.insert(r.array);
            }
        }
        out
    }

    /// Constructor-form summary, e.g. `Loop_i(Loop_j1(S1), Loop_j2(S2, S3))`.
    pub fn summarize(&self) -> String {
        summarize_nodes(self, &self.root)
    }

    /// Canonical JSON serialization of the IR.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("IR serializes")
    }
}

fn find_body(nodes: &[Node], l: LoopIdx) -> Option<&[Node]> {
    for n in nodes {
        if let Node::Loop { id, body } = n {
            if *id == l {
                return Some(body);
            }
            if let Some(b) = find_body(body, l) {
                return Some(b);
            }
        }
    }
    None
}

fn collect_stmts(nodes: &[Node], out: &mut Vec<StmtIdx>) {
    for n in nodes {
        match n {
            Node::Stmt(s) => out.push(*s),
            Node::Loop { body, .. } => collect_stmts(body, out),
        }
    }
}

fn summarize_nodes(k: &KernelIr, nodes: &[Node]) -> String {
    let parts: Vec<String> = nodes
        .iter()
        .map(|n| match n {
            Node::Stmt(s) => k.statements[*s].id.clone(),
            Node::Loop { id, body } => {
                format!("Loop_{}({})", k.loops[*id].iterator, summarize_nodes(k, body))
            }
        })
        .collect();
    parts.join(", ")
}

/// Per-loop pragma and shape record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyVector {
    pub loop_id: String,
    pub ispipelined: bool,
    pub ii: u64,
    pub uf: u64,
    pub tile: u64,
    pub tc_min: u64,
    pub tc_max: u64,
    /// Average trip count as `(numerator, denominator)`.
    pub tc_avg: (u64, u64),
    pub cached_arrays: BTreeSet<String>,
}

impl PropertyVector {
    pub fn unannotated(loop_id: &str, tc_min: u64, tc_max: u64, tc_avg: (u64, u64)) -> Self {
        PropertyVector {
            loop_id: loop_id.to_string(),
            ispipelined: false,
            ii: 1,
            uf: 1,
            tile: 1,
            tc_min,
            tc_max,
            tc_avg,
            cached_arrays: BTreeSet::new(),
        }
    }
}
