// SPDX-License-Identifier: Apache-2.0

//! Exact affine analysis: trip counts, dependences, reductions, minimal
//! initiation intervals, and array footprints.

pub mod deps;
pub mod domain;
pub mod footprint;
pub mod tripcount;

use crate::calibration::Calibration;
use crate::ir::{Access, Expr, KernelIr, LoopIdx, Node, OpKind, StmtIdx};
pub use deps::{CopyEdge, DepKind, Dependence};
pub use footprint::{Footprint, FootprintQuery};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;
pub use tripcount::TripCountInfo;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("iteration domain around loop `{0}` is too large to enumerate")]
    EnumerationTooLarge(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionInfo {
    pub loop_id: String,
    pub is_reduction: bool,
    pub reduction_op: Option<OpKind>,
    /// Latency of the reduction op, 0 when not a reduction.
    pub il_reduction: u64,
}

/// Everything the latency and resource models need to know about a kernel.
#[derive(Debug)]
pub struct Analysis {
    pub trip: Vec<TripCountInfo>,
    pub deps: Vec<Dependence>,
    pub reductions: Vec<ReductionInfo>,
    pub min_ii: Vec<u64>,
    /// Largest unroll factor the carried dependences allow (`None`: no cap).
    pub uf_cap: Vec<Option<u64>>,
    pub ranges: Vec<domain::Interval>,
    footprints: Mutex<HashMap<FootprintQuery, Footprint>>,
}

impl Analysis {
    pub fn new(k: &KernelIr, cal: &Calibration) -> Result<Self, AnalysisError> {
        let trip = tripcount::trip_counts(k)?;
        let ranges = domain::iterator_ranges(k);
        let (deps, copies) = deps::dependences(k, &trip, &ranges);
        let reductions = reductions(k, cal, &deps);
        let min_ii = (0..k.loops.len())
            .map(|l| {
                let ii = min_ii(k, l, &deps, cal);
                match copies[l].as_ref().and_then(|e| copy_min_ii(k, e, cal)) {
                    Some(c) => ii.min(c),
                    None => ii,
                }
            })
            .collect();
        let uf_cap = (0..k.loops.len())
            .map(|l| {
                if reductions[l].is_reduction {
                    return None;
                }
                deps.iter()
                    .filter(|d| d.carrier == Some(l))
                    .map(|d| d.distance.unwrap_or(1))
                    .min()
            })
            .collect();
        Ok(Analysis { trip, deps, reductions, min_ii, uf_cap, ranges, footprints: Mutex::new(HashMap::new()) })
    }

    pub fn is_reduction(&self, l: LoopIdx) -> bool {
        self.reductions[l].is_reduction
    }

    /// Memoized footprint query.
    pub fn footprint(&self, k: &KernelIr, cal: &Calibration, q: &FootprintQuery) -> Footprint {
        if let Some(f) = self.footprints.lock().get(q) {
            return *f;
        }
        let f = footprint::footprint(k, &self.trip, cal, q);
        self.footprints.lock().insert(q.clone(), f);
        f
    }

    /// True when a loop-independent dependence links statements under the
    /// two sibling nodes.
    pub fn siblings_dependent(&self, k: &KernelIr, a: &Node, b: &Node) -> bool {
        let sa = k.stmts_in(std::slice::from_ref(a));
        let sb = k.stmts_in(std::slice::from_ref(b));
        self.deps.iter().any(|d| {
            d.carrier.is_none()
                && ((sa.contains(&d.src) && sb.contains(&d.dst)) || (sb.contains(&d.src) && sa.contains(&d.dst)))
        })
    }

    /// Partition a body into dependence-connected groups of child indices.
    /// Groups are ordered by their first member; members keep body order.
    pub fn components(&self, k: &KernelIr, body: &[Node]) -> Vec<Vec<usize>> {
        let n = body.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.siblings_dependent(k, &body[i], &body[j]) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_of: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            match root_of.get(&r) {
                Some(&g) => groups[g].push(i),
                None => {
                    root_of.insert(r, groups.len());
                    groups.push(vec![i]);
                }
            }
        }
        groups
    }
}

/// Loops whose only carried dependences are distance-1 self dependences of
/// an accumulation `x = x op e` through an associative op, with `x`
/// invariant in the loop.
pub fn reductions(k: &KernelIr, cal: &Calibration, deps: &[Dependence]) -> Vec<ReductionInfo> {
    (0..k.loops.len())
        .map(|l| {
            let carried: Vec<&Dependence> = deps.iter().filter(|d| d.carrier == Some(l)).collect();
            let mut op = None;
            let ok = !carried.is_empty()
                && carried.iter().all(|d| {
                    let st = &k.statements[d.src];
                    let acc = st.accumulation_op();
                    let good = d.src == d.dst
                        && d.distance == Some(1)
                        && d.array == st.lhs.array
                        && acc.is_some_and(|o| o.is_associative())
                        && st.lhs.subscripts.iter().all(|s| s.coef(l) == 0)
                        && st.reads().iter().filter(|r| r.array == st.lhs.array).count() == 1;
                    if good && op.is_none() {
                        op = acc;
                    }
                    good
                });
            ReductionInfo {
                loop_id: k.loops[l].iterator.clone(),
                is_reduction: ok,
                reduction_op: if ok { op } else { None },
                il_reduction: if ok { op.map_or(0, |o| cal.latency(o)) } else { 0 },
            }
        })
        .collect()
}

/// Latency from reading `array` to producing the statement's value: the
/// longest chain of ops above any leaf that reads the array.
pub fn read_to_write_delay(k: &KernelIr, s: StmtIdx, array: usize, cal: &Calibration) -> u64 {
    delay_above(&k.statements[s].rhs, &|a| a.array == array, cal).unwrap_or(0)
}

/// Like [`read_to_write_delay`], restricted to leaves reading `access`.
pub fn access_to_write_delay(k: &KernelIr, s: StmtIdx, access: &Access, cal: &Calibration) -> u64 {
    delay_above(&k.statements[s].rhs, &|a| a == access, cal).unwrap_or(0)
}

fn delay_above(e: &Expr, hit: &dyn Fn(&Access) -> bool, cal: &Calibration) -> Option<u64> {
    match e {
        Expr::Access(a) if hit(a) => Some(0),
        Expr::Bin(op, x, y) => {
            let d = delay_above(x, hit, cal).into_iter().chain(delay_above(y, hit, cal)).max()?;
            Some(d + cal.latency(*op))
        }
        _ => None,
    }
}

/// Recurrence II over the unrolled copies of a loop body, which is what a
/// pipelined loop (inner loops fully unrolled) actually schedules. Copies of
/// one statement may sit at different offsets, so a recurrence that only
/// closes between different copies can be shorter than its statement-level
/// image. `None` when the copy graph is too large.
pub fn copy_min_ii(k: &KernelIr, edges: &std::collections::BTreeSet<CopyEdge>, cal: &Calibration) -> Option<u64> {
    const MAX_NODES: usize = 4096;
    if !edges.iter().any(|e| e.distance > 0) {
        return Some(1);
    }
    let mut node: HashMap<(StmtIdx, &[i64]), usize> = HashMap::new();
    let mut g = Vec::with_capacity(edges.len());
    for e in edges {
        let n = node.len();
        let a = *node.entry((e.src, &e.src_copy)).or_insert(n);
        let n = node.len();
        let b = *node.entry((e.dst, &e.dst_copy)).or_insert(n);
        let read = k.statements[e.dst].reads()[e.read];
        g.push((a, b, access_to_write_delay(k, e.dst, read, cal) as i64, e.distance as i64));
    }
    if node.len() > MAX_NODES {
        return None;
    }
    Some(smallest_ii(node.len(), &g))
}

/// Minimal II of a loop: `max(1, RecMII)` with ResMII taken as 1. Cycles
/// are formed by RaW dependences carried by the loop (unknown distances
/// count as 1) and loop-independent RaW dependences among its statements.
pub fn min_ii(k: &KernelIr, l: LoopIdx, deps: &[Dependence], cal: &Calibration) -> u64 {
    let stmts = k.stmts_under(l);
    let idx = |s: StmtIdx| stmts.iter().position(|&x| x == s);
    let mut edges: Vec<(usize, usize, i64, i64)> = Vec::new();
    for d in deps {
        if d.kind != DepKind::RaW {
            continue;
        }
        let (Some(a), Some(b)) = (idx(d.src), idx(d.dst)) else { continue };
        let dist = match d.carrier {
            Some(c) if c == l => d.distance.unwrap_or(1) as i64,
            None => 0,
            _ => continue,
        };
        let delay = match &d.read {
            Some(r) => access_to_write_delay(k, d.dst, r, cal),
            None => read_to_write_delay(k, d.dst, d.array, cal),
        } as i64;
        edges.push((a, b, delay, dist));
    }
    if !edges.iter().any(|e| e.3 > 0) {
        return 1;
    }
    smallest_ii(stmts.len(), &edges)
}

/// Smallest II without a positive cycle under weights `delay - II * dist`.
fn smallest_ii(n: usize, edges: &[(usize, usize, i64, i64)]) -> u64 {
    let feasible = |ii: i64| !has_positive_cycle(n, edges, ii);
    let mut hi: i64 = edges.iter().map(|e| e.2).sum::<i64>().max(1);
    let mut lo: i64 = 1;
    if !feasible(hi) {
        // Only possible with a zero-distance cycle, which program order rules out.
        return hi as u64;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo as u64
}

fn has_positive_cycle(n: usize, edges: &[(usize, usize, i64, i64)], ii: i64) -> bool {
    // Longest-path relaxation; a relaxation in round n proves a positive cycle.
    let mut dist = vec![0i64; n];
    for round in 0..=n {
        let mut changed = false;
        for &(a, b, delay, d) in edges {
            let w = delay - ii * d;
            if dist[a] + w > dist[b] {
                dist[b] = dist[a] + w;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
        if round == n {
            return true;
        }
    }
    false
}

/// JSON-friendly analysis dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kernel: String,
    pub trip_counts: Vec<TripCountInfo>,
    pub dependences: Vec<NamedDependence>,
    pub reductions: Vec<ReductionInfo>,
    pub min_ii: Vec<(String, u64)>,
    pub footprints: Vec<NamedFootprint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedDependence {
    pub src: String,
    pub dst: String,
    pub array: String,
    pub kind: DepKind,
    pub carrier: Option<String>,
    pub distance: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedFootprint {
    pub array: String,
    /// Loop iterator, or `None` for the whole program.
    pub level: Option<String>,
    #[serde(flatten)]
    pub footprint: Footprint,
}

/// Footprints of every array at the program level and at every loop that
/// accesses it.
pub fn footprints(k: &KernelIr, a: &Analysis, cal: &Calibration) -> Vec<NamedFootprint> {
    let mut out = Vec::new();
    for arr in k.arrays_used() {
        let name = k.arrays[arr].name.clone();
        let all: Vec<StmtIdx> = (0..k.statements.len()).collect();
        let q = FootprintQuery { array: arr, scope: None, stmts: all, tile: None };
        out.push(NamedFootprint { array: name.clone(), level: None, footprint: a.footprint(k, cal, &q) });
        for l in 0..k.loops.len() {
            if !k.arrays_under(l).contains(&arr) {
                continue;
            }
            let q = FootprintQuery { array: arr, scope: Some(l), stmts: k.stmts_under(l), tile: None };
            out.push(NamedFootprint {
                array: name.clone(),
                level: Some(k.loops[l].iterator.clone()),
                footprint: a.footprint(k, cal, &q),
            });
        }
    }
    out
}

pub fn report(k: &KernelIr, a: &Analysis, cal: &Calibration) -> AnalysisReport {
    let sname = |s: StmtIdx| k.statements[s].id.clone();
    AnalysisReport {
        kernel: k.name.clone(),
        trip_counts: a.trip.clone(),
        dependences: a
            .deps
            .iter()
            .map(|d| NamedDependence {
                src: sname(d.src),
                dst: sname(d.dst),
                array: k.arrays[d.array].name.clone(),
                kind: d.kind,
                carrier: d.carrier.map(|l| k.loops[l].iterator.clone()),
                distance: d.distance,
            })
            .collect(),
        reductions: a.reductions.clone(),
        min_ii: (0..k.loops.len()).map(|l| (k.loops[l].iterator.clone(), a.min_ii[l])).collect(),
        footprints: footprints(k, a, cal),
    }
}
