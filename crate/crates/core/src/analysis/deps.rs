// SPDX-License-Identifier: Apache-2.0

//! Pairwise dependence testing for `iterator + constant` subscripts.
//!
//! Each dimension either fixes the distance on a common loop, pins an
//! iterator to a constant, or couples iterators. Common loops whose
//! iterator does not appear in a dimension are free: every pair of distinct
//! iterations conflicts, so the minimal distance is 1. Couplings we cannot
//! resolve make the level unknown, reported with distance `None`.
//!
//! Pairs of statements with few enough instances are instead tested exactly
//! by enumerating both iteration domains.

use super::domain::{affine_range, Interval};
use super::tripcount::TripCountInfo;
use crate::ir::{Access, ArrayIdx, KernelIr, LoopIdx, Node, StmtIdx};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

/// Statement instance count up to which pairs are tested by enumeration.
pub const EXACT_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepKind {
    RaW,
    WaR,
    WaW,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dependence {
    pub src: StmtIdx,
    pub dst: StmtIdx,
    pub array: ArrayIdx,
    pub kind: DepKind,
    /// Loop carrying the dependence; `None` for loop-independent.
    pub carrier: Option<LoopIdx>,
    /// Distance on the carrier; `None` when unknown or loop-independent.
    pub distance: Option<u64>,
    /// For read-after-write, the reference in `dst` that reads the value.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub read: Option<Access>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Level {
    Free,
    Fixed(i64),
    Unknown,
}

/// Value flow between unrolled copies inside one execution of a loop.
/// A copy is numbered by the trip indices of the statement's loops
/// strictly inside that loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CopyEdge {
    pub src: StmtIdx,
    pub src_copy: Vec<i64>,
    pub dst: StmtIdx,
    pub dst_copy: Vec<i64>,
    /// Index into the reader's `reads()`.
    pub read: usize,
    /// Iterations of the loop between writer and reader.
    pub distance: u64,
}

enum Sub {
    Const(i64),
    IterOff(LoopIdx, i64),
    Other,
}

fn classify(a: &crate::ir::Affine) -> Sub {
    if a.is_constant() {
        Sub::Const(a.constant)
    } else if let Some((l, c)) = a.as_iter_offset() {
        Sub::IterOff(l, c)
    } else {
        Sub::Other
    }
}

struct Ref<'a> {
    stmt: StmtIdx,
    access: &'a Access,
    write: bool,
}

/// Per-level verdicts for a pair of references, or `None` when the pair can
/// never touch the same cell.
fn level_verdicts(
    common: &[LoopIdx],
    a: &Access,
    b: &Access,
    ranges: &[Interval],
    tcs: &[TripCountInfo],
) -> Option<Vec<Level>> {
    let mut levels = vec![Level::Free; common.len()];
    let pos = |l: LoopIdx| common.iter().position(|&c| c == l);
    let mut pin_a: BTreeMap<LoopIdx, i64> = BTreeMap::new();
    let mut pin_b: BTreeMap<LoopIdx, i64> = BTreeMap::new();
    for (fa, fb) in a.subscripts.iter().zip(&b.subscripts) {
        if !affine_range(fa, ranges).intersects(&affine_range(fb, ranges)) {
            return None;
        }
        match (classify(fa), classify(fb)) {
            (Sub::Const(x), Sub::Const(y)) => {
                if x != y {
                    return None;
                }
            }
            (Sub::IterOff(x, ca), Sub::IterOff(y, cb)) if x == y => {
                // x_a + ca == x_b + cb, so x_b - x_a = ca - cb.
                let d = ca - cb;
                if d.unsigned_abs() >= tcs[x].tc_max.max(1) {
                    return None;
                }
                // A fixed difference holds whatever other dimensions couple.
                if let Some(p) = pos(x) {
                    match levels[p] {
                        Level::Fixed(old) if old != d => return None,
                        _ => levels[p] = Level::Fixed(d),
                    }
                }
            }
            (Sub::IterOff(x, c), Sub::Const(v)) => {
                if pin_a.insert(x, v - c).is_some_and(|old| old != v - c) {
                    return None;
                }
            }
            (Sub::Const(v), Sub::IterOff(y, c)) => {
                if pin_b.insert(y, v - c).is_some_and(|old| old != v - c) {
                    return None;
                }
            }
            (Sub::IterOff(x, _), Sub::IterOff(y, _)) => {
                if let (Some(px), Some(py)) = (pos(x), pos(y)) {
                    for p in [px, py] {
                        if levels[p] == Level::Free {
                            levels[p] = Level::Unknown;
                        }
                    }
                }
            }
            _ => {
                for l in fa.loops().chain(fb.loops()) {
                    if let Some(p) = pos(l) {
                        if levels[p] == Level::Free {
                            levels[p] = Level::Unknown;
                        }
                    }
                }
            }
        }
    }
    // Pins on the same common iterator on both sides fix the distance.
    for (l, va) in &pin_a {
        if let (Some(vb), Some(p)) = (pin_b.get(l), pos(*l)) {
            let d = vb - va;
            match levels[p] {
                Level::Fixed(old) if old != d => return None,
                Level::Unknown => {}
                _ => levels[p] = Level::Fixed(d),
            }
        }
    }
    // Fixed distances must be compatible with single-side pins.
    for (p, &l) in common.iter().enumerate() {
        if let Level::Fixed(d) = levels[p] {
            let r = ranges[l];
            if let Some(va) = pin_a.get(&l) {
                if !(r.lo..=r.hi).contains(&(va + d)) {
                    return None;
                }
            }
            if let Some(vb) = pin_b.get(&l) {
                if !(r.lo..=r.hi).contains(&(vb - d)) {
                    return None;
                }
            }
        }
    }
    Some(levels)
}

fn kind_of(src_write: bool, dst_write: bool) -> DepKind {
    match (src_write, dst_write) {
        (true, false) => DepKind::RaW,
        (false, true) => DepKind::WaR,
        _ => DepKind::WaW,
    }
}

/// All dependences of the kernel, deduplicated, in deterministic order.
/// Dependences, plus for each loop whose arrays are all value-based the
/// value flow between unrolled copies of its statements.
#[allow(clippy::type_complexity)]
pub fn dependences(
    k: &KernelIr,
    tcs: &[TripCountInfo],
    ranges: &[Interval],
) -> (Vec<Dependence>, Vec<Option<BTreeSet<CopyEdge>>>) {
    let mut refs: Vec<Ref> = Vec::new();
    for (s, st) in k.statements.iter().enumerate() {
        for r in st.reads() {
            refs.push(Ref { stmt: s, access: r, write: false });
        }
        refs.push(Ref { stmt: s, access: &st.lhs, write: true });
    }
    let instances = statement_instances(k, EXACT_LIMIT);
    // Arrays whose every reference is enumerable get value-based RaW
    // dependences: only the last write before a read counts.
    let value_based: HashSet<ArrayIdx> = (0..k.arrays.len())
        .filter(|&arr| refs.iter().filter(|r| r.access.array == arr).all(|r| instances[r.stmt].is_some()))
        .collect();
    // Minimal distance per (src, dst, array, kind, carrier); `None` absorbs.
    #[allow(clippy::type_complexity)]
    let mut found: BTreeMap<(StmtIdx, StmtIdx, ArrayIdx, DepKind, Option<LoopIdx>, Option<Access>), Option<u64>> = BTreeMap::new();
    let mut add = |src: &Ref, dst: &Ref, carrier: Option<LoopIdx>, dist: Option<u64>| {
        let kind = kind_of(src.write, dst.write);
        let read = (kind == DepKind::RaW).then(|| dst.access.clone());
        let key = (src.stmt, dst.stmt, src.access.array, kind, carrier, read);
        let e = found.entry(key).or_insert(dist);
        *e = match (*e, dist) {
            (Some(x), Some(y)) => Some(x.min(y)),
            _ => None,
        };
    };
    for i in 0..refs.len() {
        for j in i..refs.len() {
            let (a, b) = (&refs[i], &refs[j]);
            if a.access.array != b.access.array || !(a.write || b.write) {
                continue;
            }
            if i == j && !a.write {
                continue;
            }
            let la = &k.statements[a.stmt].loops;
            let lb = &k.statements[b.stmt].loops;
            let common: Vec<LoopIdx> = la.iter().zip(lb).take_while(|(x, y)| x == y).map(|(x, _)| *x).collect();
            if let (Some(ia), Some(ib)) = (&instances[a.stmt], &instances[b.stmt]) {
                let skip_raw = value_based.contains(&a.access.array);
                let mut add = |src: &Ref, dst: &Ref, carrier, dist| {
                    if !(skip_raw && src.write && !dst.write) {
                        add(src, dst, carrier, dist);
                    }
                };
                exact_matches(&common, a, ia, b, ib, &mut |va, vb| {
                    match va.iter().zip(vb).position(|(x, y)| x != y) {
                        Some(p) if vb[p] > va[p] => add(a, b, Some(common[p]), Some((vb[p] - va[p]) as u64)),
                        Some(p) => add(b, a, Some(common[p]), Some((va[p] - vb[p]) as u64)),
                        None if a.stmt != b.stmt => {
                            let (src, dst) = if a.stmt < b.stmt { (a, b) } else { (b, a) };
                            add(src, dst, None, None);
                        }
                        None => {}
                    }
                });
                continue;
            }
            let Some(levels) = level_verdicts(&common, a.access, b.access, ranges, tcs) else {
                continue;
            };
            let mut all_zero_possible = true;
            for (p, &l) in common.iter().enumerate() {
                let can_carry = tcs[l].tc_max >= 2;
                match levels[p] {
                    Level::Fixed(0) => {}
                    Level::Fixed(d) => {
                        if d > 0 {
                            add(a, b, Some(l), Some(d as u64));
                        } else {
                            add(b, a, Some(l), Some((-d) as u64));
                        }
                        all_zero_possible = false;
                        break;
                    }
                    Level::Free => {
                        if can_carry {
                            add(a, b, Some(l), Some(1));
                            add(b, a, Some(l), Some(1));
                        }
                    }
                    Level::Unknown => {
                        if can_carry {
                            add(a, b, Some(l), None);
                            add(b, a, Some(l), None);
                        }
                    }
                }
            }
            if all_zero_possible && a.stmt != b.stmt {
                // Same iteration of all common loops: syntactic order decides.
                let (src, dst) = if a.stmt < b.stmt { (a, b) } else { (b, a) };
                add(src, dst, None, None);
            }
        }
    }
    // Loops whose every array is value-based also get the flow between
    // their unrolled copies.
    let mut copies: Vec<Option<BTreeSet<CopyEdge>>> = (0..k.loops.len())
        .map(|l| {
            let under = k.stmts_under(l);
            let tracked = |a: &Access| value_based.contains(&a.array);
            let all = under.iter().all(|&s| {
                let st = &k.statements[s];
                tracked(&st.lhs) && st.reads().into_iter().all(tracked)
            });
            all.then(BTreeSet::new)
        })
        .collect();
    let mut seen = HashSet::new();
    value_flow(k, &value_based, &mut |w, wenv, r, renv, ri| {
        let (lw, lr) = (&k.statements[w].loops, &k.statements[r].loops);
        let common: Vec<LoopIdx> = lw.iter().zip(lr).take_while(|(x, y)| x == y).map(|(x, _)| *x).collect();
        let first = common.iter().position(|&l| wenv[l] != renv[l]);
        let (carrier, dist) = match first {
            Some(p) => (Some(common[p]), Some((renv[common[p]] - wenv[common[p]]) as u64)),
            None => (None, None),
        };
        if seen.insert((w, r, ri, carrier, dist)) {
            let access = k.statements[r].reads()[ri];
            let src = Ref { stmt: w, access: &k.statements[w].lhs, write: true };
            let dst = Ref { stmt: r, access, write: false };
            add(&src, &dst, carrier, dist);
        }
        let shared = first.map_or(common.len(), |p| p + 1);
        for (q, &l) in common[..shared].iter().enumerate() {
            let Some(set) = &mut copies[l] else { continue };
            let copy = |s: StmtIdx, env: &[i64]| -> Vec<i64> {
                k.statements[s].loops[q + 1..].iter().map(|&m| env[m] - k.loops[m].lower.eval(env)).collect()
            };
            set.insert(CopyEdge {
                src: w,
                src_copy: copy(w, wenv),
                dst: r,
                dst_copy: copy(r, renv),
                read: ri,
                distance: (renv[l] - wenv[l]) as u64,
            });
        }
    });
    let deps = found
        .into_iter()
        .map(|((src, dst, array, kind, carrier, read), distance)| Dependence { src, dst, array, kind, carrier, distance, read })
        .collect();
    (deps, copies)
}

/// Iterator values of every instance of each statement, or `None` for
/// statements with more than `limit` instances.
fn statement_instances(k: &KernelIr, limit: usize) -> Vec<Option<Vec<Vec<i64>>>> {
    fn visit(k: &KernelIr, nodes: &[Node], env: &mut Vec<i64>, limit: usize, out: &mut Vec<Option<Vec<Vec<i64>>>>) {
        for n in nodes {
            match n {
                Node::Stmt(s) => {
                    if let Some(v) = &mut out[*s] {
                        if v.len() >= limit {
                            out[*s] = None;
                        } else {
                            v.push(env.clone());
                        }
                    }
                }
                Node::Loop { id, body } => {
                    // Skip whole subtrees once every statement below gave up.
                    if k.stmts_in(body).iter().all(|&s| out[s].is_none()) {
                        continue;
                    }
                    let lo = k.loops[*id].lower.eval(env);
                    let hi = k.loops[*id].upper.eval(env);
                    for v in lo..hi {
                        env[*id] = v;
                        visit(k, body, env, limit, out);
                    }
                }
            }
        }
    }
    let mut out = vec![Some(Vec::new()); k.statements.len()];
    visit(k, &k.root, &mut vec![0; k.loops.len()], limit, &mut out);
    out
}

/// Call `f` on every pair of common-loop iterations (of `a`, of `b`) in
/// which the two references touch the same cell.
fn exact_matches(common: &[LoopIdx], a: &Ref, ia: &[Vec<i64>], b: &Ref, ib: &[Vec<i64>], f: &mut impl FnMut(&[i64], &[i64])) {
    let cell = |acc: &Access, env: &[i64]| acc.subscripts.iter().map(|s| s.eval(env)).collect::<Vec<i64>>();
    let prefix = |env: &[i64]| common.iter().map(|&l| env[l]).collect::<Vec<i64>>();
    let mut by_cell: HashMap<Vec<i64>, HashSet<Vec<i64>>> = HashMap::new();
    for env in ia {
        by_cell.entry(cell(a.access, env)).or_default().insert(prefix(env));
    }
    let mut seen: HashSet<(Vec<i64>, Vec<i64>)> = HashSet::new();
    for env in ib {
        if let Some(set) = by_cell.get(&cell(b.access, env)) {
            let vb = prefix(env);
            if !seen.insert((cell(b.access, env), vb.clone())) {
                continue;
            }
            for va in set {
                f(va, &vb);
            }
        }
    }
}

/// Run the program in order and report, for every read of an array in
/// `arrays`, the statement instance that last wrote the cell:
/// `f(writer, writer env, reader, reader env, read index)`.
fn value_flow(k: &KernelIr, arrays: &HashSet<ArrayIdx>, f: &mut dyn FnMut(StmtIdx, &[i64], StmtIdx, &[i64], usize)) {
    if arrays.is_empty() {
        return;
    }
    struct Flow<'a, 'f> {
        k: &'a KernelIr,
        arrays: &'a HashSet<ArrayIdx>,
        last: HashMap<(ArrayIdx, Vec<i64>), (StmtIdx, Vec<i64>)>,
        /// Loops with at least one statement touching a tracked array.
        relevant: Vec<bool>,
        f: &'f mut dyn FnMut(StmtIdx, &[i64], StmtIdx, &[i64], usize),
    }
    impl Flow<'_, '_> {
        fn visit(&mut self, nodes: &[Node], env: &mut Vec<i64>) {
            let k = self.k;
            for n in nodes {
                match n {
                    Node::Stmt(s) => {
                        let st = &k.statements[*s];
                        for (ri, r) in st.reads().into_iter().enumerate() {
                            if !self.arrays.contains(&r.array) {
                                continue;
                            }
                            let cell = (r.array, r.subscripts.iter().map(|a| a.eval(env)).collect::<Vec<_>>());
                            if let Some((w, wenv)) = self.last.get(&cell) {
                                (self.f)(*w, wenv, *s, env, ri);
                            }
                        }
                        if self.arrays.contains(&st.lhs.array) {
                            let cell = (st.lhs.array, st.lhs.subscripts.iter().map(|a| a.eval(env)).collect());
                            self.last.insert(cell, (*s, env.clone()));
                        }
                    }
                    Node::Loop { id, body } if self.relevant[*id] => {
                        let lo = k.loops[*id].lower.eval(env);
                        let hi = k.loops[*id].upper.eval(env);
                        for v in lo..hi {
                            env[*id] = v;
                            self.visit(body, env);
                        }
                    }
                    Node::Loop { .. } => {}
                }
            }
        }
    }
    let touches = |s: StmtIdx| {
        let st = &k.statements[s];
        arrays.contains(&st.lhs.array) || st.reads().iter().any(|r| arrays.contains(&r.array))
    };
    let relevant = (0..k.loops.len()).map(|l| k.stmts_under(l).into_iter().any(touches)).collect();
    let mut flow = Flow { k, arrays, last: HashMap::new(), relevant, f };
    flow.visit(&k.root, &mut vec![0; k.loops.len()]);
}
