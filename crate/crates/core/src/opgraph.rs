// SPDX-License-Identifier: Apache-2.0

//! Operation graphs (CDAGs) of straight-line regions.
//!
//! A region is a sequence of statement instances. Iterators of fully
//! unrolled loops are substituted by constants; iterators of enclosing loops
//! stay symbolic, so array cells are affine keys. A read takes its value from
//! the latest write to a symbolically equal cell; when a write to a cell
//! that is neither provably equal nor provably distinct intervenes, the read
//! is treated as a fresh live-in. Missing edges only shorten paths, so the
//! resulting bound stays below the true one.
//!
//! With tree reduction enabled, a run of accumulations `x = x op e_i` into
//! the same value, where no intermediate is observed elsewhere, becomes a
//! balanced tree over the `e_i` built greedily on arrival times. The initial
//! accumulator value joins at the root, so `m` accumulations have depth
//! `ceil(log2 m)`. The op count still records `m` operations.

use crate::calibration::{Calibration, Resources};
use crate::ir::{Affine, Expr, KernelIr, LoopIdx, Node, OpKind, StmtIdx};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpGraphError {
    #[error("region contains loop `{0}`; only straight-line code is allowed")]
    RegionHasLoop(String),
    #[error("useless operation in statement `{0}`: its value is overwritten before use")]
    UselessOperation(String),
    #[error("loop `{0}` cannot be unrolled: its trip count is not constant in this region")]
    NonConstantUnroll(String),
    #[error("no functional units for `{0}` but the region needs them")]
    InfeasibleResources(OpKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GNodeKind {
    LiveIn(String),
    Root,
    Op(OpKind),
    LiveOut(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GNode {
    pub kind: GNodeKind,
    pub latency: u64,
}

/// Nodes are stored in topological order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationGraph {
    pub nodes: Vec<GNode>,
    pub preds: Vec<Vec<usize>>,
    pub op_counts: BTreeMap<OpKind, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionBound {
    pub weighted_cp: u64,
    pub work_bound: u64,
    pub bound: u64,
}

impl OperationGraph {
    pub fn num_ops(&self) -> u64 {
        self.op_counts.values().sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.preds.iter().enumerate().flat_map(|(v, ps)| ps.iter().map(move |&u| (u, v)))
    }

    pub fn live_ins(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, GNodeKind::LiveIn(_))).count()
    }

    pub fn live_outs(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, GNodeKind::LiveOut(_))).count()
    }

    fn push(&mut self, kind: GNodeKind, latency: u64, preds: Vec<usize>) -> usize {
        self.nodes.push(GNode { kind, latency });
        self.preds.push(preds);
        self.nodes.len() - 1
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph cdag {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match &n.kind {
                GNodeKind::LiveIn(l) => format!("in {l}"),
                GNodeKind::Root => "root".to_string(),
                GNodeKind::Op(k) => format!("{} ({})", k.symbol(), n.latency),
                GNodeKind::LiveOut(l) => format!("out {l}"),
            };
            let _ = writeln!(s, "  n{i} [label=\"{}\"];", label.replace('"', "'"));
        }
        for (u, v) in self.edges() {
            let _ = writeln!(s, "  n{u} -> n{v};");
        }
        s.push_str("}\n");
        s
    }
}

/// Latency-weighted longest source-to-live-out path. Boundary nodes weigh 0.
pub fn critical_path(g: &OperationGraph) -> u64 {
    let mut dist = vec![0u64; g.nodes.len()];
    let mut best = 0;
    for v in 0..g.nodes.len() {
        let start = g.preds[v].iter().map(|&u| dist[u]).max().unwrap_or(0);
        dist[v] = start + g.nodes[v].latency;
        if matches!(g.nodes[v].kind, GNodeKind::LiveOut(_)) {
            best = best.max(dist[v]);
        }
    }
    best
}

/// `max(critical path, max_o ceil(#o * L(o) / R_o))`.
pub fn region_bound(g: &OperationGraph, res: &Resources, cal: &Calibration) -> Result<RegionBound, OpGraphError> {
    let cp = critical_path(g);
    let work = work_bound(&g.op_counts, res, cal)?;
    Ok(RegionBound { weighted_cp: cp, work_bound: work, bound: cp.max(work) })
}

pub fn work_bound(counts: &BTreeMap<OpKind, u64>, res: &Resources, cal: &Calibration) -> Result<u64, OpGraphError> {
    let mut work = 0;
    for (&k, &n) in counts {
        if n == 0 {
            continue;
        }
        match res.get(k) {
            None => {}
            Some(0) => return Err(OpGraphError::InfeasibleResources(k)),
            Some(r) => work = work.max((n * cal.latency(k)).div_ceil(r)),
        }
    }
    Ok(work)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Val {
    Node(usize),
    Const,
}

#[derive(Debug, Clone)]
enum Proto {
    Input(String),
    Op { kind: OpKind, inputs: Vec<Val>, accumulation: bool, stmt: StmtIdx },
    Chain { kind: OpKind, head: Val, contribs: Vec<Val> },
}

type LinearKey = Vec<Vec<(LoopIdx, i64)>>;

#[derive(Default)]
struct Bucket {
    cells: HashMap<Vec<i64>, (u64, Val)>,
    max_seq: u64,
}

/// Options for region construction.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub tree_reduction: bool,
    /// Reject values overwritten before any use.
    pub strict: bool,
}

/// Incremental SSA-style builder of an operation graph.
pub struct RegionBuilder<'a> {
    k: &'a KernelIr,
    cal: &'a Calibration,
    opts: BuildOptions,
    protos: Vec<Proto>,
    consumers: Vec<u32>,
    cell_refs: Vec<u32>,
    arrays: Vec<HashMap<LinearKey, Bucket>>,
    live_in_cells: HashMap<(usize, Vec<Affine>), usize>,
    params: HashMap<usize, usize>,
    seq: u64,
    ops: u64,
}

impl<'a> RegionBuilder<'a> {
    pub fn new(k: &'a KernelIr, cal: &'a Calibration, opts: BuildOptions) -> Self {
        RegionBuilder {
            k,
            cal,
            opts,
            protos: Vec::new(),
            consumers: Vec::new(),
            cell_refs: Vec::new(),
            arrays: (0..k.arrays.len()).map(|_| HashMap::new()).collect(),
            live_in_cells: HashMap::new(),
            params: HashMap::new(),
            seq: 0,
            ops: 0,
        }
    }

    /// Operations added so far.
    pub fn op_count(&self) -> u64 {
        self.ops
    }

    fn proto(&mut self, p: Proto) -> usize {
        self.protos.push(p);
        self.consumers.push(0);
        self.cell_refs.push(0);
        self.protos.len() - 1
    }

    fn cell_name(&self, array: usize, subs: &[Affine]) -> String {
        let s: String = subs.iter().map(|a| format!("[{}]", a.display(self.k))).collect();
        format!("{}{}", self.k.arrays[array].name, s)
    }

    fn split(subs: &[Affine]) -> (LinearKey, Vec<i64>) {
        (subs.iter().map(|a| a.terms.clone()).collect(), subs.iter().map(|a| a.constant).collect())
    }

    fn read(&mut self, array: usize, subs: Vec<Affine>) -> Val {
        let (lin, consts) = Self::split(&subs);
        let buckets = &self.arrays[array];
        let exact = buckets.get(&lin).and_then(|b| b.cells.get(&consts)).copied();
        let newest_other = buckets.iter().filter(|(key, _)| **key != lin).map(|(_, b)| b.max_seq).max();
        match (exact, newest_other) {
            (Some((seq, v)), other) if other.is_none_or(|o| o < seq) => v,
            (None, None) => {
                let key = (array, subs);
                if let Some(&p) = self.live_in_cells.get(&key) {
                    return Val::Node(p);
                }
                let name = self.cell_name(array, &key.1);
                let p = self.proto(Proto::Input(name));
                self.live_in_cells.insert(key, p);
                Val::Node(p)
            }
            _ => {
                // Ambiguous aliasing: assume the value is available on entry.
                let name = self.cell_name(array, &subs);
                Val::Node(self.proto(Proto::Input(name)))
            }
        }
    }

    fn write(&mut self, array: usize, subs: &[Affine], v: Val, stmt: StmtIdx, consumed_old: bool) -> Result<(), OpGraphError> {
        let (lin, consts) = Self::split(subs);
        self.seq += 1;
        let seq = self.seq;
        let bucket = self.arrays[array].entry(lin).or_default();
        bucket.max_seq = seq;
        let old = bucket.cells.insert(consts, (seq, v));
        if let Val::Node(p) = v {
            self.cell_refs[p] += 1;
        }
        if let Some((_, Val::Node(q))) = old {
            self.cell_refs[q] -= 1;
            let is_op = matches!(self.protos[q], Proto::Op { .. } | Proto::Chain { .. });
            if self.opts.strict && !consumed_old && is_op && self.consumers[q] == 0 && self.cell_refs[q] == 0 {
                let owner = match &self.protos[q] {
                    Proto::Op { stmt, .. } => *stmt,
                    _ => stmt,
                };
                return Err(OpGraphError::UselessOperation(self.k.statements[owner].id.clone()));
            }
        }
        Ok(())
    }

    fn use_val(&mut self, v: Val) -> Val {
        if let Val::Node(p) = v {
            self.consumers[p] += 1;
        }
        v
    }

    fn eval(&mut self, e: &Expr, env: &[Option<Affine>], stmt: StmtIdx) -> Val {
        match e {
            Expr::Const(_) => Val::Const,
            Expr::Param(p) => {
                if let Some(&n) = self.params.get(p) {
                    return Val::Node(n);
                }
                let n = self.proto(Proto::Input(self.k.params[*p].clone()));
                self.params.insert(*p, n);
                Val::Node(n)
            }
            Expr::Access(a) => {
                let subs = a.subscripts.iter().map(|s| s.substitute(env)).collect();
                self.read(a.array, subs)
            }
            Expr::Bin(k, x, y) => {
                let a = self.eval(x, env, stmt);
                let b = self.eval(y, env, stmt);
                let inputs = vec![self.use_val(a), self.use_val(b)];
                self.ops += 1;
                Val::Node(self.proto(Proto::Op { kind: *k, inputs, accumulation: false, stmt }))
            }
        }
    }

    /// Add one statement instance. `env[l]` is the value of iterator `l`;
    /// `None` keeps it symbolic.
    pub fn stmt(&mut self, s: StmtIdx, env: &[Option<Affine>]) -> Result<(), OpGraphError> {
        let st = &self.k.statements[s];
        let lhs: Vec<Affine> = st.lhs.subscripts.iter().map(|a| a.substitute(env)).collect();
        if let (Some(kind), Expr::Bin(_, x, y)) = (st.accumulation_op(), &st.rhs) {
            let is_lhs = |e: &Expr| matches!(e, Expr::Access(a) if *a == st.lhs);
            let contrib_expr = if is_lhs(x) { y } else { x };
            let contrib = self.eval(contrib_expr, env, s);
            let acc = self.read(st.lhs.array, lhs.clone());
            self.ops += 1;
            if self.opts.tree_reduction && kind.is_associative() {
                if let Val::Node(p) = acc {
                    // `x += x` feeds the running value back into itself.
                    if self.consumers[p] == 0 && self.cell_refs[p] == 1 && contrib != acc {
                        let extended = match &mut self.protos[p] {
                            Proto::Chain { kind: ck, contribs, .. } if *ck == kind => {
                                contribs.push(contrib);
                                true
                            }
                            Proto::Op { kind: ok, inputs, accumulation: true, .. } if *ok == kind => {
                                let (head, first) = (inputs[0], inputs[1]);
                                self.protos[p] = Proto::Chain { kind, head, contribs: vec![first, contrib] };
                                true
                            }
                            _ => false,
                        };
                        if extended {
                            self.use_val(contrib);
                            return self.write(st.lhs.array, &lhs, Val::Node(p), s, true);
                        }
                    }
                }
            }
            let inputs = vec![self.use_val(acc), self.use_val(contrib)];
            let v = Val::Node(self.proto(Proto::Op { kind, inputs, accumulation: true, stmt: s }));
            return self.write(st.lhs.array, &lhs, v, s, false);
        }
        let v = self.eval(&st.rhs, env, s);
        self.write(st.lhs.array, &lhs, v, s, false)
    }

    /// Lower the proto graph: topological order, tree expansion of chains,
    /// root and live-out nodes.
    pub fn finish(self) -> OperationGraph {
        let n = self.protos.len();
        let deps_of = |p: &Proto| -> Vec<usize> {
            let vals: Vec<Val> = match p {
                Proto::Input(_) => Vec::new(),
                Proto::Op { inputs, .. } => inputs.clone(),
                Proto::Chain { head, contribs, .. } => std::iter::once(*head).chain(contribs.iter().copied()).collect(),
            };
            vals.into_iter().filter_map(|v| if let Val::Node(x) = v { Some(x) } else { None }).collect()
        };
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, p) in self.protos.iter().enumerate() {
            for d in deps_of(p) {
                indeg[i] += 1;
                succ[d].push(i);
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &s in &succ[i] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        debug_assert_eq!(order.len(), n, "proto graph must be acyclic");

        let mut g = OperationGraph::default();
        let root = g.push(GNodeKind::Root, 0, Vec::new());
        let mut map = vec![usize::MAX; n];
        let mut node_arrival: Vec<u64> = vec![0];
        let add_op = |g: &mut OperationGraph, node_arrival: &mut Vec<u64>, kind: OpKind, preds: Vec<usize>, lat: u64| {
            let preds = if preds.is_empty() { vec![root] } else { preds };
            let start = preds.iter().map(|&u| node_arrival[u]).max().unwrap_or(0);
            let id = g.push(GNodeKind::Op(kind), lat, preds);
            node_arrival.push(start + lat);
            id
        };
        for &i in &order {
            match &self.protos[i] {
                Proto::Input(name) => {
                    map[i] = g.push(GNodeKind::LiveIn(name.clone()), 0, Vec::new());
                    node_arrival.push(0);
                }
                Proto::Op { kind, inputs, .. } => {
                    let preds: Vec<usize> = dedup(inputs.iter().filter_map(|v| node_of(*v, &map)).collect());
                    let lat = self.cal.latency(*kind);
                    map[i] = add_op(&mut g, &mut node_arrival, *kind, preds, lat);
                    *g.op_counts.entry(*kind).or_default() += 1;
                }
                Proto::Chain { kind, head, contribs } => {
                    let lat = self.cal.latency(*kind);
                    // Greedy pairing of the two earliest operands.
                    let mut heap: BinaryHeap<Reverse<(u64, usize, Option<usize>)>> = BinaryHeap::new();
                    for (t, c) in contribs.iter().enumerate() {
                        let node = node_of(*c, &map);
                        let at = node.map_or(0, |x| node_arrival[x]);
                        heap.push(Reverse((at, t, node)));
                    }
                    let mut tie = contribs.len();
                    let head_node = node_of(*head, &map);
                    loop {
                        let Reverse((_, _, a)) = heap.pop().expect("chain has two operands");
                        let Reverse((_, _, b)) = heap.pop().expect("chain has two operands");
                        let last = heap.is_empty();
                        let mut preds: Vec<usize> = a.into_iter().chain(b).collect();
                        if last {
                            preds.extend(head_node);
                        }
                        let id = add_op(&mut g, &mut node_arrival, *kind, dedup(preds), lat);
                        if last {
                            map[i] = id;
                            break;
                        }
                        heap.push(Reverse((node_arrival[id], tie, Some(id))));
                        tie += 1;
                    }
                    *g.op_counts.entry(*kind).or_default() += contribs.len() as u64;
                }
            }
        }
        // Live-outs: final values of written cells, in deterministic order.
        let mut outs: Vec<(String, usize)> = Vec::new();
        for (array, buckets) in self.arrays.iter().enumerate() {
            for (lin, b) in buckets {
                for (consts, (_, v)) in &b.cells {
                    if let Val::Node(p) = v {
                        if matches!(self.protos[*p], Proto::Input(_)) {
                            continue;
                        }
                        let subs: Vec<Affine> = lin
                            .iter()
                            .zip(consts)
                            .map(|(t, &c)| Affine { terms: t.clone(), constant: c })
                            .collect();
                        outs.push((self.cell_name(array, &subs), map[*p]));
                    }
                }
            }
        }
        outs.sort();
        for (name, src) in outs {
            g.push(GNodeKind::LiveOut(name), 0, vec![src]);
        }
        g
    }
}

fn node_of(v: Val, map: &[usize]) -> Option<usize> {
    match v {
        Val::Node(p) => Some(map[p]),
        Val::Const => None,
    }
}

fn dedup(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Graph of a loop-free list of statements; all iterators stay symbolic.
pub fn build_graph(k: &KernelIr, region: &[Node], cal: &Calibration, opts: BuildOptions) -> Result<OperationGraph, OpGraphError> {
    let mut b = RegionBuilder::new(k, cal, opts);
    let env = vec![None; k.loops.len()];
    for n in region {
        match n {
            Node::Stmt(s) => b.stmt(*s, &env)?,
            Node::Loop { id, .. } => return Err(OpGraphError::RegionHasLoop(k.loops[*id].iterator.clone())),
        }
    }
    Ok(b.finish())
}

/// Feed `nodes` into the builder with every loop fully unrolled. Each
/// loop's width must be constant once `env` is substituted.
pub fn unroll_into(
    b: &mut RegionBuilder,
    k: &KernelIr,
    nodes: &[Node],
    env: &mut Vec<Option<Affine>>,
) -> Result<(), OpGraphError> {
    for n in nodes {
        match n {
            Node::Stmt(s) => b.stmt(*s, env)?,
            Node::Loop { id, body } => {
                let lo = k.loops[*id].lower.substitute(env);
                let hi = k.loops[*id].upper.substitute(env);
                let width = hi.add(&lo.scale(-1));
                if !width.is_constant() {
                    return Err(OpGraphError::NonConstantUnroll(k.loops[*id].iterator.clone()));
                }
                for v in 0..width.constant.max(0) {
                    let mut x = lo.clone();
                    x.constant += v;
                    env[*id] = Some(x);
                    unroll_into(b, k, body, env)?;
                }
                env[*id] = None;
            }
        }
    }
    Ok(())
}

/// Graph of `uf` consecutive iterations of loop `l` (iterator stays
/// symbolic, offset per copy) with every inner loop fully unrolled.
pub fn build_unrolled(k: &KernelIr, l: LoopIdx, uf: u64, cal: &Calibration, opts: BuildOptions) -> Result<OperationGraph, OpGraphError> {
    let mut b = RegionBuilder::new(k, cal, opts);
    let mut env = vec![None; k.loops.len()];
    let body = k.body(Some(l));
    for c in 0..uf as i64 {
        let mut v = Affine::iter(l);
        v.constant = c;
        env[l] = Some(v);
        unroll_into(&mut b, k, body, &mut env)?;
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_kernel;

    fn strict() -> BuildOptions {
        BuildOptions { tree_reduction: true, strict: true }
    }

    #[test]
    fn single_mul() {
        let k = parse_kernel("kernel k { array a[1]: f32 out; array b[1]: f32 in; array c[1]: f32 in; S: a[0] = b[0] * c[0]; }")
            .unwrap();
        let cal = Calibration::unit().with_latency(OpKind::Mul, 4);
        let g = build_graph(&k, &k.root, &cal, strict()).unwrap();
        assert_eq!(g.num_ops(), 1);
        assert_eq!(g.live_ins(), 2);
        assert_eq!(g.live_outs(), 1);
        assert_eq!(critical_path(&g), 4);
    }

    #[test]
    fn dead_write_rejected() {
        let k = parse_kernel(
            "kernel k { array x[1]: f32 out; array y[1]: f32 in; array z[1]: f32 in;
             S1: x[0] = 12 + y[0]; S2: x[0] = y[0] + z[0]; }",
        )
        .unwrap();
        let e = build_graph(&k, &k.root, &Calibration::unit(), strict()).unwrap_err();
        assert_eq!(e, OpGraphError::UselessOperation("S1".into()));
        let lenient = BuildOptions { tree_reduction: true, strict: false };
        assert!(build_graph(&k, &k.root, &Calibration::unit(), lenient).is_ok());
    }

    #[test]
    fn loop_in_region_rejected() {
        let k = parse_kernel("kernel k { array a[4]: f32 out; loop i 0 4 { S: a[i] = 1; } }").unwrap();
        assert!(matches!(
            build_graph(&k, &k.root, &Calibration::unit(), strict()),
            Err(OpGraphError::RegionHasLoop(_))
        ));
    }

    #[test]
    fn mul_chain() {
        let k = parse_kernel(
            "kernel k { array a[1]: f32 out; array b[4]: f32 in; S: a[0] = b[0] * b[1] * b[2] * b[3]; }",
        )
        .unwrap();
        let cal = Calibration::unit().with_latency(OpKind::Mul, 4);
        let g = build_graph(&k, &k.root, &cal, strict()).unwrap();
        assert_eq!(critical_path(&g), 12);
    }

    #[test]
    fn tree_reduction_of_eight() {
        let k = parse_kernel("kernel k { array c: f32 inout; array a[8]: f32 in; loop i 0 8 { S: c += a[i]; } }").unwrap();
        let cal = Calibration::unit();
        let env_body = vec![Node::Loop { id: 0, body: k.body(Some(0)).to_vec() }];
        let mut b = RegionBuilder::new(&k, &cal, strict());
        unroll_into(&mut b, &k, &env_body, &mut vec![None]).unwrap();
        let g = b.finish();
        assert_eq!(critical_path(&g), 3);
        assert_eq!(g.op_counts[&OpKind::Add], 8);
        let ops_in_graph = g.nodes.iter().filter(|n| matches!(n.kind, GNodeKind::Op(_))).count();
        assert_eq!(ops_in_graph, 7);

        let serial = BuildOptions { tree_reduction: false, strict: true };
        let mut b = RegionBuilder::new(&k, &cal, serial);
        unroll_into(&mut b, &k, &env_body, &mut vec![None]).unwrap();
        assert_eq!(critical_path(&b.finish()), 8);
    }

    #[test]
    fn resource_bound() {
        let k = parse_kernel(
            "kernel k { array a[8]: f32 out; array b[8]: f32 in; loop i 0 8 { S: a[i] = b[i] * b[i]; } }",
        )
        .unwrap();
        let cal = Calibration::unit().with_latency(OpKind::Mul, 4);
        let g = build_unrolled(&k, 0, 8, &cal, strict()).unwrap();
        let r = region_bound(&g, &Resources::unbounded().with(OpKind::Mul, 2), &cal).unwrap();
        assert_eq!((r.weighted_cp, r.work_bound, r.bound), (4, 16, 16));
        let r = region_bound(&g, &Resources::unbounded(), &cal).unwrap();
        assert_eq!(r.bound, 4);
        assert!(matches!(
            region_bound(&g, &Resources::unbounded().with(OpKind::Mul, 0), &cal),
            Err(OpGraphError::InfeasibleResources(OpKind::Mul))
        ));
    }
}
