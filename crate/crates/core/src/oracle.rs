// SPDX-License-Identifier: Apache-2.0

//! Reference executor: a resource-constrained list scheduler over concrete
//! task graphs, and a simulator that expands a kernel under a pragma
//! configuration into such a graph.
//!
//! Nothing here uses the latency model or the dependence analysis. The
//! simulator executes the kernel on concrete iterator values and derives
//! every ordering from the cells actually touched, so its makespan is a
//! feasible latency that every lower bound must not exceed.
//!
//! Execution semantics of a configuration:
//!
//! * siblings that touch a common cell (one of them writing) run one after
//!   another, others run concurrently;
//! * a loop whose inner loops are all fully unrolled runs in waves of `uf`
//!   iterations, each wave a dataflow region;
//! * any other unpipelined loop runs in waves of `uf` iterations, where
//!   conflicting iterations of a wave run one after another;
//! * a pipelined loop issues fronts of `uf` iterations every `II` cycles
//!   with one fixed schedule per front; `II` is the smallest value that
//!   keeps every cross-front dependence and the functional units
//!   satisfied.
//!
//! Functional units are not pipelined: an operation occupies a unit for its
//! whole latency.

use crate::calibration::{Calibration, Resources};
use crate::config::PragmaConfig;
use crate::ir::{ArrayIdx, Expr, KernelIr, LoopIdx, Node, OpKind, StmtIdx};
use crate::opgraph::{GNodeKind, OperationGraph};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use thiserror::Error;

pub const DEFAULT_CAP: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("task graph has more than {cap} operations")]
    TooLarge { cap: usize },
    #[error("no functional unit available for `{}`", .0.name())]
    InfeasibleResources(OpKind),
    #[error("loop `{0}` is below a pipelined loop but not fully unrolled")]
    NotUnrolled(String),
    #[error("configuration describes {got} loops, kernel has {want}")]
    Shape { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Op(OpKind),
    /// Zero-latency write of a statement's value to its cell.
    Store,
    /// Zero-latency synchronisation point.
    Barrier,
}

/// Precedence graph with start-to-start lags. Edges always point from a
/// lower to a higher id, so ids are a topological order.
#[derive(Debug, Clone, Default)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    succ: Vec<Vec<(usize, u64)>>,
    npred: Vec<u32>,
    ops: usize,
}

impl TaskGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, t: Task) -> usize {
        self.tasks.push(t);
        self.succ.push(Vec::new());
        self.npred.push(0);
        if matches!(t, Task::Op(_)) {
            self.ops += 1;
        }
        self.tasks.len() - 1
    }

    /// `v` starts at least `lag` cycles after `u` starts.
    pub fn edge(&mut self, u: usize, v: usize, lag: u64) {
        assert!(u < v, "edge {u} -> {v} breaks id order");
        self.succ[u].push((v, lag));
        self.npred[v] += 1;
    }

    /// `v` starts once `u` has finished.
    pub fn dep(&mut self, u: usize, v: usize, cal: &Calibration) {
        let lag = self.latency(u, cal);
        self.edge(u, v, lag);
    }

    pub fn latency(&self, v: usize, cal: &Calibration) -> u64 {
        match self.tasks[v] {
            Task::Op(k) => cal.latency(k),
            Task::Store | Task::Barrier => 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn num_ops(&self) -> usize {
        self.ops
    }

    pub fn task(&self, v: usize) -> Task {
        self.tasks[v]
    }

    pub fn successors(&self, v: usize) -> &[(usize, u64)] {
        &self.succ[v]
    }

    /// Live-ins, the root and live-outs become barriers; every edge waits
    /// for its producer to finish.
    pub fn from_operation_graph(g: &OperationGraph, cal: &Calibration) -> Self {
        let mut t = TaskGraph::new();
        for n in &g.nodes {
            t.add(match n.kind {
                GNodeKind::Op(k) => Task::Op(k),
                _ => Task::Barrier,
            });
        }
        for (u, v) in g.edges() {
            t.dep(u, v, cal);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub makespan: u64,
    pub start: Vec<u64>,
    /// Largest number of busy units per kind in any cycle.
    pub peak_usage: BTreeMap<OpKind, u64>,
}

/// Longest start-to-end path from each task to a sink.
fn tail_lengths(g: &TaskGraph, cal: &Calibration) -> Vec<u64> {
    let mut lp = vec![0u64; g.len()];
    for v in (0..g.len()).rev() {
        let mut best = g.latency(v, cal);
        for &(w, lag) in &g.succ[v] {
            best = best.max(lag + lp[w]);
        }
        lp[v] = best;
    }
    lp
}

/// Greedy list schedule: among ready operations, longest tail first, then
/// lowest id.
pub fn list_schedule(g: &TaskGraph, res: &Resources, cal: &Calibration, cap: usize) -> Result<ScheduleResult, OracleError> {
    if g.num_ops() > cap {
        return Err(OracleError::TooLarge { cap });
    }
    let n = g.len();
    let prio = tail_lengths(g, cal);
    let mut indeg = g.npred.clone();
    let mut earliest = vec![0u64; n];
    let mut start = vec![u64::MAX; n];
    let mut pending: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut ready: BTreeMap<OpKind, BinaryHeap<(u64, Reverse<usize>)>> = BTreeMap::new();
    let mut units: BTreeMap<OpKind, BinaryHeap<Reverse<u64>>> = BTreeMap::new();
    for t in &g.tasks {
        if let Task::Op(k) = *t {
            if let Some(r) = res.get(k) {
                if r == 0 {
                    return Err(OracleError::InfeasibleResources(k));
                }
                units.entry(k).or_insert_with(|| (0..r.min(n as u64)).map(|_| Reverse(0)).collect());
            }
        }
    }
    for v in 0..n {
        if indeg[v] == 0 {
            pending.push(Reverse((0, v)));
        }
    }
    let mut done = 0;
    let mut t = 0u64;
    let mut place = |v: usize, at: u64, start: &mut Vec<u64>, pending: &mut BinaryHeap<Reverse<(u64, usize)>>| {
        start[v] = at;
        for &(w, lag) in &g.succ[v] {
            earliest[w] = earliest[w].max(at + lag);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                pending.push(Reverse((earliest[w], w)));
            }
        }
    };
    while done < n {
        let mut progress = false;
        while let Some(&Reverse((e, v))) = pending.peek() {
            if e > t {
                break;
            }
            pending.pop();
            match g.tasks[v] {
                Task::Op(k) if units.contains_key(&k) => ready.entry(k).or_default().push((prio[v], Reverse(v))),
                _ => {
                    place(v, t, &mut start, &mut pending);
                    done += 1;
                }
            }
            progress = true;
        }
        for (k, queue) in ready.iter_mut() {
            let free = units.get_mut(k).expect("limited kind");
            while !queue.is_empty() && free.peek().is_some_and(|&Reverse(b)| b <= t) {
                let (_, Reverse(v)) = queue.pop().expect("non-empty");
                free.pop();
                free.push(Reverse(t + cal.latency(*k)));
                place(v, t, &mut start, &mut pending);
                done += 1;
                progress = true;
            }
        }
        if progress || done == n {
            continue;
        }
        let mut next = pending.peek().map_or(u64::MAX, |r| r.0 .0);
        for (k, queue) in &ready {
            if !queue.is_empty() {
                next = next.min(units[k].peek().map_or(u64::MAX, |r| r.0));
            }
        }
        assert!(next > t && next != u64::MAX, "list scheduler stalled at cycle {t}");
        t = next;
    }
    let makespan = (0..n).map(|v| start[v] + g.latency(v, cal)).max().unwrap_or(0);
    let peak_usage = verify(g, res, cal, &start);
    Ok(ScheduleResult { makespan, start, peak_usage })
}

/// Check precedence and unit limits of a finished schedule; returns the
/// peak usage per kind.
fn verify(g: &TaskGraph, res: &Resources, cal: &Calibration, start: &[u64]) -> BTreeMap<OpKind, u64> {
    for u in 0..g.len() {
        for &(v, lag) in &g.succ[u] {
            assert!(start[v] >= start[u] + lag, "precedence {u} -> {v} violated");
        }
    }
    let mut events: BTreeMap<OpKind, Vec<(u64, i64)>> = BTreeMap::new();
    for (v, t) in g.tasks.iter().enumerate() {
        if let Task::Op(k) = *t {
            let l = cal.latency(k);
            if l > 0 {
                let e = events.entry(k).or_default();
                e.push((start[v], 1));
                e.push((start[v] + l, -1));
            }
        }
    }
    let mut peak = BTreeMap::new();
    for (k, mut ev) in events {
        ev.sort_unstable();
        let (mut cur, mut best) = (0i64, 0i64);
        for (_, d) in ev {
            cur += d;
            best = best.max(cur);
        }
        if let Some(r) = res.get(k) {
            assert!(best as u64 <= r, "{} units of `{}` busy, {r} available", best, k.name());
        }
        peak.insert(k, best as u64);
    }
    peak
}

// ---------------------------------------------------------------------------
// Configuration simulator

type Cell = (ArrayIdx, Vec<i64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Largest number of operations expanded.
    pub cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { cap: DEFAULT_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Simulation {
    pub computation: u64,
    pub communication: u64,
    pub total: u64,
    pub operations: usize,
    /// Issue interval of each pipelined loop with more than one front.
    pub initiation_intervals: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Val {
    Node(usize),
    /// Live-in, parameter or constant: available from the start.
    Ready,
}

struct Chain {
    op: OpKind,
    head: Val,
    contribs: Vec<Val>,
}

struct Frame {
    start: usize,
    members: Vec<usize>,
}

struct Builder<'a> {
    k: &'a KernelIr,
    c: &'a PragmaConfig,
    cal: &'a Calibration,
    res: &'a Resources,
    cap: usize,
    tree: bool,
    /// Loops that are fully unrolled and not pipelined in every execution.
    full: Vec<bool>,
    g: TaskGraph,
    producer: HashMap<Cell, usize>,
    chains: HashMap<Cell, Chain>,
    frames: Vec<Frame>,
    region: usize,
    /// Stores of the pipeline front being built, with their cells.
    front_writes: Option<Vec<(usize, Cell)>>,
    sibling_groups: HashMap<Option<LoopIdx>, Vec<usize>>,
    /// Fronts of every pipelined loop execution, scheduled once all are
    /// known since one hardware schedule serves them all.
    executions: Vec<(LoopIdx, Vec<Front>)>,
    loop_ii: BTreeMap<LoopIdx, u64>,
}

fn cell_of(acc: &crate::ir::Access, env: &[i64]) -> Cell {
    (acc.array, acc.subscripts.iter().map(|s| s.eval(env)).collect())
}

fn range(k: &KernelIr, l: LoopIdx, env: &[i64]) -> std::ops::Range<i64> {
    let lo = k.loops[l].lower.eval(env);
    let hi = k.loops[l].upper.eval(env);
    lo..hi.max(lo)
}

/// Call `f` on every statement instance below `nodes`, in program order.
fn walk(k: &KernelIr, nodes: &[Node], env: &mut Vec<i64>, f: &mut impl FnMut(StmtIdx, &[i64])) {
    for n in nodes {
        match n {
            Node::Stmt(s) => f(*s, env),
            Node::Loop { id, body } => {
                for v in range(k, *id, env) {
                    env[*id] = v;
                    walk(k, body, env, f);
                }
            }
        }
    }
}

#[derive(Default)]
struct AccessSet {
    reads: HashSet<Cell>,
    writes: HashSet<Cell>,
}

impl AccessSet {
    fn of(k: &KernelIr, nodes: &[Node], env: &mut Vec<i64>) -> Self {
        let mut s = AccessSet::default();
        walk(k, nodes, env, &mut |st, env| {
            let st = &k.statements[st];
            for r in st.reads() {
                s.reads.insert(cell_of(r, env));
            }
            s.writes.insert(cell_of(&st.lhs, env));
        });
        s
    }

    fn conflicts(&self, o: &AccessSet) -> bool {
        self.writes.iter().any(|c| o.writes.contains(c) || o.reads.contains(c)) || o.writes.iter().any(|c| self.reads.contains(c))
    }
}

/// Union-find groups of mutually conflicting items; returns the group
/// index of each item.
fn conflict_groups(sets: &[AccessSet]) -> Vec<usize> {
    groups_of(sets.len(), |i, j| sets[i].conflicts(&sets[j]))
}

fn groups_of(n: usize, conflict: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if conflict(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Groups of the children of `parent`'s body that conflict in at least one
/// execution of that body. Sibling order is part of the hardware, so it
/// cannot change from one execution to the next.
fn static_sibling_groups(k: &KernelIr, parent: Option<LoopIdx>) -> Vec<usize> {
    let body = k.body(parent);
    let n = body.len();
    let mut conflict = vec![vec![false; n]; n];
    let mut visit_body = |env: &mut Vec<i64>, conflict: &mut Vec<Vec<bool>>| {
        let sets: Vec<AccessSet> = body.iter().map(|c| AccessSet::of(k, std::slice::from_ref(c), env)).collect();
        for i in 0..n {
            for j in i + 1..n {
                if !conflict[i][j] && sets[i].conflicts(&sets[j]) {
                    conflict[i][j] = true;
                }
            }
        }
    };
    fn descend(
        k: &KernelIr,
        nodes: &[Node],
        target: LoopIdx,
        env: &mut Vec<i64>,
        conflict: &mut Vec<Vec<bool>>,
        f: &mut dyn FnMut(&mut Vec<i64>, &mut Vec<Vec<bool>>),
    ) {
        for node in nodes {
            if let Node::Loop { id, body } = node {
                if *id == target || k.encloses(*id, target) {
                    for v in range(k, *id, env) {
                        env[*id] = v;
                        if *id == target {
                            f(env, conflict);
                        } else {
                            descend(k, body, target, env, conflict, f);
                        }
                    }
                }
            }
        }
    }
    let mut env = vec![0; k.loops.len()];
    match parent {
        None => visit_body(&mut env, &mut conflict),
        Some(l) => descend(k, &k.root, l, &mut env, &mut conflict, &mut visit_body),
    }
    groups_of(n, |i, j| conflict[i][j])
}

impl Builder<'_> {
    fn open(&mut self, after: Option<usize>) -> usize {
        let s = self.g.add(Task::Barrier);
        if let Some(f) = self.frames.last() {
            self.g.edge(f.start, s, 0);
        }
        if let Some(a) = after {
            self.g.edge(a, s, 0);
        }
        self.frames.push(Frame { start: s, members: Vec::new() });
        s
    }

    fn close(&mut self) -> usize {
        let f = self.frames.pop().expect("open frame");
        let e = self.g.add(Task::Barrier);
        self.g.edge(f.start, e, 0);
        for m in f.members {
            self.g.dep(m, e, self.cal);
        }
        if let Some(p) = self.frames.last_mut() {
            p.members.push(e);
        }
        e
    }

    fn op(&mut self, kind: OpKind, inputs: &[Val]) -> Result<usize, OracleError> {
        if self.g.num_ops() >= self.cap {
            return Err(OracleError::TooLarge { cap: self.cap });
        }
        let v = self.g.add(Task::Op(kind));
        let f = self.frames.last_mut().expect("open frame");
        f.members.push(v);
        let start = f.start;
        self.g.edge(start, v, 0);
        for i in inputs {
            if let Val::Node(u) = *i {
                self.g.dep(u, v, self.cal);
            }
        }
        Ok(v)
    }

    fn read(&mut self, cell: Cell) -> Result<Val, OracleError> {
        self.materialize(&cell)?;
        Ok(self.producer.get(&cell).map_or(Val::Ready, |&p| Val::Node(p)))
    }

    fn write(&mut self, cell: Cell, v: Val) {
        let st = self.g.add(Task::Store);
        let f = self.frames.last_mut().expect("open frame");
        f.members.push(st);
        let start = f.start;
        self.g.edge(start, st, 0);
        if let Val::Node(p) = v {
            self.g.dep(p, st, self.cal);
        }
        // Stores to one cell land in program order.
        if let Some(&prev) = self.producer.get(&cell) {
            self.g.edge(prev, st, 0);
        }
        if let Some(writes) = self.front_writes.as_mut() {
            writes.push((st, cell.clone()));
        }
        self.producer.insert(cell, st);
    }

    fn expr(&mut self, e: &Expr, env: &[i64]) -> Result<Val, OracleError> {
        Ok(match e {
            Expr::Access(a) => self.read(cell_of(a, env))?,
            Expr::Param(_) | Expr::Const(_) => Val::Ready,
            Expr::Bin(k, a, b) => {
                let va = self.expr(a, env)?;
                let vb = self.expr(b, env)?;
                Val::Node(self.op(*k, &[va, vb])?)
            }
        })
    }

    /// Combine a pending accumulation: contributions pairwise, level by
    /// level, then the running value last.
    fn materialize(&mut self, cell: &Cell) -> Result<(), OracleError> {
        let Some(ch) = self.chains.remove(cell) else { return Ok(()) };
        let mut level = ch.contribs;
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            for pair in level.chunks(2) {
                next.push(match pair {
                    [a, b] => Val::Node(self.op(ch.op, &[*a, *b])?),
                    [a] => *a,
                    _ => unreachable!(),
                });
            }
            level = next;
        }
        let v = self.op(ch.op, &[level[0], ch.head])?;
        self.write(cell.clone(), Val::Node(v));
        Ok(())
    }

    fn materialize_all(&mut self) -> Result<(), OracleError> {
        let mut cells: Vec<Cell> = self.chains.keys().cloned().collect();
        cells.sort();
        for c in cells {
            self.materialize(&c)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: StmtIdx, env: &[i64]) -> Result<(), OracleError> {
        let st = &self.k.statements[s];
        let lhs = cell_of(&st.lhs, env);
        if self.region > 0 && self.tree {
            if let (Some(op), Expr::Bin(_, a, b)) = (st.accumulation_op().filter(|o| o.is_associative()), &st.rhs) {
                let is_lhs = |e: &Expr| matches!(e, Expr::Access(acc) if *acc == st.lhs);
                let other = if is_lhs(a) { b } else { a };
                if self.chains.get(&lhs).is_some_and(|c| c.op != op) {
                    self.materialize(&lhs)?;
                }
                let v = self.expr(other, env)?;
                if !self.chains.contains_key(&lhs) {
                    let head = self.producer.get(&lhs).map_or(Val::Ready, |&p| Val::Node(p));
                    self.chains.insert(lhs.clone(), Chain { op, head, contribs: Vec::new() });
                }
                self.chains.get_mut(&lhs).expect("chain").contribs.push(v);
                return Ok(());
            }
        }
        let v = self.expr(&st.rhs, env)?;
        self.materialize(&lhs)?;
        self.write(lhs, v);
        Ok(())
    }

    fn region_body(&mut self, nodes: &[Node], env: &mut Vec<i64>) -> Result<(), OracleError> {
        for n in nodes {
            match n {
                Node::Stmt(s) => self.stmt(*s, env)?,
                Node::Loop { id, body } => {
                    for v in range(self.k, *id, env) {
                        env[*id] = v;
                        self.region_body(body, env)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Siblings inside the current frame.
    fn seq(&mut self, parent: Option<LoopIdx>, env: &mut Vec<i64>) -> Result<(), OracleError> {
        let k = self.k;
        let nodes = k.body(parent);
        let group = self.sibling_groups.entry(parent).or_insert_with(|| static_sibling_groups(k, parent)).clone();
        let mut last: HashMap<usize, usize> = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            self.open(last.get(&group[i]).copied());
            self.node(n, env)?;
            let e = self.close();
            last.insert(group[i], e);
        }
        Ok(())
    }

    fn node(&mut self, n: &Node, env: &mut Vec<i64>) -> Result<(), OracleError> {
        let (l, body) = match n {
            Node::Stmt(s) => return self.stmt(*s, env),
            Node::Loop { id, body } => (*id, body),
        };
        let iters: Vec<i64> = range(self.k, l, env).collect();
        let uf = self.c.loops[l].uf.max(1) as usize;
        if self.c.loops[l].pip {
            return self.pipeline(l, body, env, &iters, uf);
        }
        let straight = self.k.loops_under(l).iter().all(|&m| self.full[m]);
        let mut prev = None;
        for wave in iters.chunks(uf) {
            self.open(prev);
            if straight {
                self.region += 1;
                for &v in wave {
                    env[l] = v;
                    self.region_body(body, env)?;
                }
                self.materialize_all()?;
                self.region -= 1;
            } else {
                let sets: Vec<AccessSet> = wave
                    .iter()
                    .map(|&v| {
                        env[l] = v;
                        AccessSet::of(self.k, body, env)
                    })
                    .collect();
                let group = conflict_groups(&sets);
                let mut last: HashMap<usize, usize> = HashMap::new();
                for (i, &v) in wave.iter().enumerate() {
                    env[l] = v;
                    self.open(last.get(&group[i]).copied());
                    self.seq(Some(l), env)?;
                    let e = self.close();
                    last.insert(group[i], e);
                }
            }
            prev = Some(self.close());
        }
        Ok(())
    }

    fn pipeline(&mut self, l: LoopIdx, body: &[Node], env: &mut Vec<i64>, iters: &[i64], uf: usize) -> Result<(), OracleError> {
        if let Some(&m) = self.k.loops_under(l).iter().find(|&&m| !self.full[m]) {
            return Err(OracleError::NotUnrolled(self.k.loops[m].iterator.clone()));
        }
        let outer = self.front_writes.take();
        self.open(None);
        let mut fronts = Vec::new();
        for front in iters.chunks(uf) {
            self.front_writes = Some(Vec::new());
            let fs = self.open(None);
            self.region += 1;
            for &v in front {
                env[l] = v;
                self.region_body(body, env)?;
            }
            self.materialize_all()?;
            self.region -= 1;
            let end = self.g.len();
            self.close();
            let writes = self.front_writes.take().expect("front");
            let ops = (fs + 1..end).filter(|&v| self.g.task(v) != Task::Barrier).collect();
            fronts.push(Front { start: fs, ops, writes });
        }
        self.close();
        self.front_writes = outer;
        self.executions.push((l, fronts));
        Ok(())
    }

    /// Give every pipelined loop one schedule: fixed offsets inside a
    /// front, valid for every front of every execution, and the smallest
    /// issue interval that keeps all cross-front constraints.
    fn modulo(&mut self) -> Result<(), OracleError> {
        let executions = std::mem::take(&mut self.executions);
        let mut by_loop: BTreeMap<LoopIdx, Vec<&Vec<Front>>> = BTreeMap::new();
        for (l, fronts) in &executions {
            by_loop.entry(*l).or_default().push(fronts);
        }
        for (l, execs) in by_loop {
            let Some(first) = execs.iter().flat_map(|e| e.iter()).next() else { continue };
            let shape: Vec<Task> = first.ops.iter().map(|&v| self.g.task(v)).collect();
            let same_shape = execs.iter().flat_map(|e| e.iter()).all(|f| {
                f.ops.len() == shape.len() && f.ops.iter().zip(&shape).all(|(&v, &t)| self.g.task(v) == t)
            });
            if !same_shape {
                // Fronts differ: every front gets a slot as long as the
                // slowest front of any execution.
                let mut slot = 1u64;
                for fr in execs.iter().flat_map(|e| e.iter()) {
                    let shape: Vec<Task> = fr.ops.iter().map(|&v| self.g.task(v)).collect();
                    let done = self.template(&shape, &[&vec![fr.clone()]])?;
                    let end = fr.ops.iter().zip(&done).map(|(&v, &t)| t + self.g.latency(v, self.cal)).max().unwrap_or(0);
                    slot = slot.max(end);
                }
                for fronts in &execs {
                    for w in fronts.windows(2) {
                        self.g.edge(w[0].start, w[1].start, slot);
                        for &v in &w[0].ops {
                            self.g.dep(v, w[1].start, self.cal);
                        }
                    }
                }
                if execs.iter().any(|e| e.len() > 1) {
                    self.loop_ii.insert(l, slot);
                }
                continue;
            }
            let offsets = self.template(&shape, &execs)?;
            let mut ii = 1u64;
            for fronts in &execs {
                ii = ii.max(self.interval(fronts, &offsets));
            }
            // Non-pipelined units: a front occupies each kind for the sum of
            // its latencies.
            let mut work: BTreeMap<OpKind, u64> = BTreeMap::new();
            for t in &shape {
                if let Task::Op(k) = *t {
                    *work.entry(k).or_insert(0) += self.cal.latency(k);
                }
            }
            for (k, w) in work {
                if let Some(r) = self.res.get(k) {
                    ii = ii.max(w.div_ceil(r.max(1)));
                }
            }
            for fronts in &execs {
                for fr in fronts.iter() {
                    for (i, &v) in fr.ops.iter().enumerate() {
                        self.g.edge(fr.start, v, offsets[i]);
                    }
                }
                for w in fronts.windows(2) {
                    self.g.edge(w[0].start, w[1].start, ii);
                }
            }
            if execs.iter().any(|e| e.len() > 1) {
                self.loop_ii.insert(l, ii);
            }
        }
        Ok(())
    }

    /// Offsets inside a front satisfying the internal edges of every front.
    fn template(&self, shape: &[Task], execs: &[&Vec<Front>]) -> Result<Vec<u64>, OracleError> {
        let mut edges: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for fr in execs.iter().flat_map(|e| e.iter()) {
            let index: HashMap<usize, usize> = fr.ops.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            for (i, &v) in fr.ops.iter().enumerate() {
                for &(w, lag) in self.g.successors(v) {
                    if let Some(&j) = index.get(&w) {
                        let e = edges.entry((i, j)).or_insert(0);
                        *e = (*e).max(lag);
                    }
                }
            }
        }
        let mut local = TaskGraph::new();
        for &t in shape {
            local.add(t);
        }
        for ((i, j), lag) in edges {
            local.edge(i, j, lag);
        }
        Ok(list_schedule(&local, self.res, self.cal, usize::MAX)?.start)
    }

    /// Smallest interval between front starts of one execution that keeps
    /// its cross-front edges and store order.
    fn interval(&self, fronts: &[Front], offsets: &[u64]) -> u64 {
        let mut pos: HashMap<usize, (usize, usize)> = HashMap::new();
        for (f, fr) in fronts.iter().enumerate() {
            for (i, &v) in fr.ops.iter().enumerate() {
                pos.insert(v, (f, i));
            }
        }
        let mut ii = 1u64;
        // Start of `to` must trail the start of `from` by `span` cycles.
        let mut need = |from: (usize, usize), to: (usize, usize), span: i64| {
            if to.0 > from.0 {
                let d = (to.0 - from.0) as i64;
                let gap = offsets[from.1] as i64 + span - offsets[to.1] as i64;
                if gap > 0 {
                    ii = ii.max(((gap + d - 1) / d) as u64);
                }
            }
        };
        for (&v, &pv) in &pos {
            for &(w, lag) in self.g.successors(v) {
                if let Some(&pw) = pos.get(&w) {
                    need(pv, pw, lag as i64);
                }
            }
        }
        let mut last_store: HashMap<&Cell, (usize, usize)> = HashMap::new();
        for fr in fronts {
            for (v, c) in &fr.writes {
                if let Some(&pu) = last_store.get(c) {
                    need(pu, pos[v], 0);
                }
                last_store.insert(c, pos[v]);
            }
        }
        ii
    }
}

#[derive(Clone)]
struct Front {
    start: usize,
    ops: Vec<usize>,
    writes: Vec<(usize, Cell)>,
}

/// Loops that are fully unrolled (and not pipelined) in every execution.
fn fully_unrolled(k: &KernelIr, c: &PragmaConfig) -> Vec<bool> {
    let mut trips: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); k.loops.len()];
    fn visit(k: &KernelIr, nodes: &[Node], env: &mut Vec<i64>, trips: &mut Vec<BTreeSet<u64>>) {
        for n in nodes {
            if let Node::Loop { id, body } = n {
                let r = range(k, *id, env);
                trips[*id].insert((r.end - r.start) as u64);
                for v in r {
                    env[*id] = v;
                    visit(k, body, env, trips);
                }
            }
        }
    }
    visit(k, &k.root, &mut vec![0; k.loops.len()], &mut trips);
    (0..k.loops.len())
        .map(|l| !c.loops[l].pip && trips[l].iter().all(|&t| t == 0 || t == c.loops[l].uf))
        .collect()
}

/// Burst transfers, moved serially before and after each execution of
/// every cache point; the largest transfer per level, summed over levels.
pub fn communication(k: &KernelIr, c: &PragmaConfig, cal: &Calibration) -> u64 {
    let burst = cal.burst_bits.max(1);
    let mut levels: BTreeMap<Option<LoopIdx>, u64> = BTreeMap::new();
    let touches = |s: StmtIdx, a: ArrayIdx| {
        let st = &k.statements[s];
        (st.reads().iter().any(|r| r.array == a), st.lhs.array == a)
    };
    let in_bounds = |cell: &Cell| cell.1.iter().zip(&k.arrays[cell.0].dims).all(|(&v, &d)| v >= 0 && (v as u64) < d);
    let arrays: BTreeSet<ArrayIdx> = k.statements.iter().flat_map(|s| s.reads().iter().map(|r| r.array).chain([s.lhs.array]).collect::<Vec<_>>()).collect();
    for arr in arrays {
        let bits = k.arrays[arr].element_bits as u64;
        // Scope key: `None` for the program level, else the cache loop.
        let scope_of = |s: StmtIdx| k.statements[s].loops.iter().copied().find(|&l| c.cache.contains(&(l, arr)));
        let mut flags: BTreeMap<Option<LoopIdx>, (bool, bool)> = BTreeMap::new();
        for s in 0..k.statements.len() {
            let (r, w) = touches(s, arr);
            if r || w {
                let f = flags.entry(scope_of(s)).or_default();
                f.0 |= r;
                f.1 |= w;
            }
        }
        // Cells per (scope, execution of the scope).
        let mut cells: BTreeMap<(Option<LoopIdx>, Vec<i64>), HashSet<Cell>> = BTreeMap::new();
        walk(k, &k.root, &mut vec![0; k.loops.len()], &mut |s, env| {
            let st = &k.statements[s];
            let (r, w) = touches(s, arr);
            if !(r || w) {
                return;
            }
            let scope = scope_of(s);
            let exec: Vec<i64> = match scope {
                None => Vec::new(),
                Some(l) => st.loops.iter().take_while(|&&m| m != l).map(|&m| env[m]).collect(),
            };
            let set = cells.entry((scope, exec)).or_default();
            for acc in st.reads().into_iter().chain([&st.lhs]).filter(|a| a.array == arr) {
                let cell = cell_of(acc, env);
                if in_bounds(&cell) {
                    set.insert(cell);
                }
            }
        });
        let mut per_scope: BTreeMap<Option<LoopIdx>, u64> = BTreeMap::new();
        for ((scope, _), set) in cells {
            let (r, w) = flags[&scope];
            let cycles = (r as u64 + w as u64) * (set.len() as u64 * bits).div_ceil(burst);
            *per_scope.entry(scope).or_insert(0) += cycles;
        }
        for (scope, cycles) in per_scope {
            let e = levels.entry(scope).or_insert(0);
            *e = (*e).max(cycles);
        }
    }
    levels.values().sum()
}

/// Feasible end-to-end latency of `k` under `c`.
pub fn simulate_config(
    k: &KernelIr,
    c: &PragmaConfig,
    res: &Resources,
    cal: &Calibration,
    opts: SimOptions,
) -> Result<Simulation, OracleError> {
    if c.loops.len() != k.loops.len() {
        return Err(OracleError::Shape { got: c.loops.len(), want: k.loops.len() });
    }
    let mut b = Builder {
        k,
        c,
        cal,
        res,
        cap: opts.cap,
        tree: k.options.tree_reduction,
        full: fully_unrolled(k, c),
        g: TaskGraph::new(),
        producer: HashMap::new(),
        chains: HashMap::new(),
        frames: Vec::new(),
        region: 0,
        front_writes: None,
        sibling_groups: HashMap::new(),
        executions: Vec::new(),
        loop_ii: BTreeMap::new(),
    };
    b.open(None);
    b.seq(None, &mut vec![0; k.loops.len()])?;
    b.close();
    b.modulo()?;
    let schedule = list_schedule(&b.g, res, cal, opts.cap)?;
    let communication = communication(k, c, cal);
    Ok(Simulation {
        computation: schedule.makespan,
        communication,
        total: schedule.makespan + communication,
        operations: b.g.num_ops(),
        initiation_intervals: b.loop_ii.iter().map(|(&l, &ii)| (k.loops[l].iterator.clone(), ii)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_kernel;

    fn ops(g: &mut TaskGraph, kind: OpKind, n: usize) -> Vec<usize> {
        (0..n).map(|_| g.add(Task::Op(kind))).collect()
    }

    #[test]
    fn independent_ops_share_two_units() {
        let cal = Calibration::default();
        let mut g = TaskGraph::new();
        ops(&mut g, OpKind::Mul, 8);
        let r = list_schedule(&g, &Resources::unbounded().with(OpKind::Mul, 2), &cal, DEFAULT_CAP).unwrap();
        assert_eq!(r.makespan, 16);
        assert_eq!(r.peak_usage[&OpKind::Mul], 2);
    }

    #[test]
    fn balanced_tree_of_eight_leaves() {
        let cal = Calibration::unit();
        let mut g = TaskGraph::new();
        let mut level = ops(&mut g, OpKind::Add, 4);
        while level.len() > 1 {
            let next = ops(&mut g, OpKind::Add, level.len() / 2);
            for (i, &v) in next.iter().enumerate() {
                g.dep(level[2 * i], v, &cal);
                g.dep(level[2 * i + 1], v, &cal);
            }
            level = next;
        }
        assert_eq!(list_schedule(&g, &Resources::unbounded(), &cal, DEFAULT_CAP).unwrap().makespan, 3);
    }

    #[test]
    fn serial_chain() {
        let cal = Calibration::unit();
        let mut g = TaskGraph::new();
        let chain = ops(&mut g, OpKind::Sub, 6);
        for w in chain.windows(2) {
            g.dep(w[0], w[1], &cal);
        }
        assert_eq!(list_schedule(&g, &Resources::uniform(1), &cal, DEFAULT_CAP).unwrap().makespan, 6);
    }

    #[test]
    fn zero_units_is_infeasible() {
        let mut g = TaskGraph::new();
        g.add(Task::Op(OpKind::Add));
        let err = list_schedule(&g, &Resources::uniform(0), &Calibration::unit(), DEFAULT_CAP).unwrap_err();
        assert_eq!(err, OracleError::InfeasibleResources(OpKind::Add));
    }

    #[test]
    fn cap_is_enforced() {
        let mut g = TaskGraph::new();
        ops(&mut g, OpKind::Add, 5);
        assert_eq!(list_schedule(&g, &Resources::unbounded(), &Calibration::unit(), 4).unwrap_err(), OracleError::TooLarge { cap: 4 });
    }

    fn run(src: &str, setup: impl FnOnce(&KernelIr, &mut PragmaConfig)) -> Result<Simulation, OracleError> {
        let k = parse_kernel(src).unwrap();
        let mut c = PragmaConfig::default_for(&k);
        setup(&k, &mut c);
        simulate_config(&k, &c, &Resources::unbounded(), &Calibration::unit(), SimOptions::default())
    }

    #[test]
    fn sequential_loop_repeats_its_body() {
        let src = "kernel s { array x[4]: f32 inout; loop i 0 4 { S0: x[i] = ((x[i] + 1) * 2) - 3; } }";
        assert_eq!(run(src, |_, _| {}).unwrap().computation, 4 * 3);
    }

    #[test]
    fn pipelined_loop_issues_every_ii() {
        // The recurrence through y spans four adds at distance two.
        let src = "kernel p { array a[12]: f32 in; array y[12]: f32 inout;
            loop i 2 12 { S0: y[i] = (((a[i] * 2 + y[i - 2]) + 1) + 1) + 1; } }";
        let sim = run(src, |_, c| c.loops[0].pip = true).unwrap();
        assert_eq!(sim.initiation_intervals, vec![("i".to_string(), 2)]);
        assert_eq!(sim.computation, 9 * 2 + 5);
    }

    #[test]
    fn unrolled_reduction_becomes_a_tree() {
        let src = "kernel r { array x[8]: f32 in; array s[1]: f32 inout; loop i 0 8 { S0: s[0] += x[i]; } }";
        let tree = run(src, |_, c| c.loops[0].uf = 8).unwrap();
        // Three levels of pairs, then the running value.
        assert_eq!(tree.computation, 4);
        let chain = run(&src.replace("kernel r {", "kernel r { option tree_reduction = off;"), |_, c| c.loops[0].uf = 8).unwrap();
        assert_eq!(chain.computation, 8);
    }

    #[test]
    fn pipelining_above_a_rolled_loop_is_rejected() {
        let src = "kernel n { array x[4][4]: f32 inout; loop i 0 4 { loop j 0 4 { S0: x[i][j] = x[i][j] + 1; } } }";
        assert_eq!(run(src, |_, c| c.loops[0].pip = true).unwrap_err(), OracleError::NotUnrolled("j".into()));
        assert!(run(src, |_, c| {
            c.loops[0].pip = true;
            c.loops[1].uf = 4;
        })
        .is_ok());
    }

    #[test]
    fn independent_siblings_overlap() {
        let src = "kernel o { array x[4]: f32 inout; array y[4]: f32 inout;
            loop i 0 4 { S0: x[i] = x[i] * 2; } loop j 0 4 { S1: y[j] = y[j] * 2; } }";
        assert_eq!(run(src, |_, _| {}).unwrap().computation, 4);
        let dependent = src.replace("y[j] * 2", "x[j] * 2");
        assert_eq!(run(&dependent, |_, _| {}).unwrap().computation, 8);
    }

    #[test]
    fn inout_arrays_move_twice() {
        let src = "kernel m { array a[32]: f32 in; array x[32]: f32 inout; loop i 0 32 { S0: x[i] = x[i] + a[i]; } }";
        let k = parse_kernel(src).unwrap();
        let c = PragmaConfig::default_for(&k);
        // 32 x 32 bits = 2 bursts; x is read and written.
        assert_eq!(communication(&k, &c, &Calibration::default()), 4);
    }
}
