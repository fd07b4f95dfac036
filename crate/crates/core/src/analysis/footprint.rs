// SPDX-License-Identifier: Apache-2.0

//! Distinct-element footprints of arrays over a region, with live-in
//! (read before written) and written flags.
//!
//! Small regions are enumerated exactly and the maximum over all executions
//! of the region is reported. Larger rectangular regions with
//! `iterator + constant` subscripts are counted as an exact union of boxes
//! for one representative execution; anything else falls back to a
//! per-access lower estimate.

use super::domain::{for_each_point, Interval};
use super::tripcount::TripCountInfo;
use crate::calibration::Calibration;
use crate::ir::{Access, ArrayIdx, KernelIr, LoopIdx, Node, StmtIdx};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Statement instances enumerated per query before switching to the
/// analytic path.
pub const FOOTPRINT_ENUM_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FootprintQuery {
    pub array: ArrayIdx,
    /// `None` is the whole program.
    pub scope: Option<LoopIdx>,
    /// Statements whose accesses count; sorted.
    pub stmts: Vec<StmtIdx>,
    /// Restrict the scope loop to its first `tile` iterations.
    pub tile: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Footprint {
    /// Distinct elements touched by one execution (maximum over executions).
    pub elems: u64,
    /// Some element is read before it is written.
    pub read: bool,
    pub written: bool,
    /// Burst transfers for one execution: `(read + written) * ceil(bits / burst)`,
    /// maximised over executions.
    pub transfer_cycles: u64,
}

impl Footprint {
    pub fn bits(&self, element_bits: u32) -> u64 {
        self.elems * element_bits as u64
    }
}

pub fn transfer_cycles(elems: u64, element_bits: u32, read: bool, written: bool, burst_bits: u64) -> u64 {
    let count = read as u64 + written as u64;
    count * (elems * element_bits as u64).div_ceil(burst_bits.max(1))
}

struct Ref<'a> {
    stmt: StmtIdx,
    access: &'a Access,
    write: bool,
}

fn refs_of<'a>(k: &'a KernelIr, array: ArrayIdx, stmts: &[StmtIdx]) -> Vec<Ref<'a>> {
    let mut out = Vec::new();
    for &s in stmts {
        let st = &k.statements[s];
        for r in st.reads() {
            if r.array == array {
                out.push(Ref { stmt: s, access: r, write: false });
            }
        }
        if st.lhs.array == array {
            out.push(Ref { stmt: s, access: &st.lhs, write: true });
        }
    }
    out
}

pub fn footprint(
    k: &KernelIr,
    tcs: &[TripCountInfo],
    cal: &Calibration,
    q: &FootprintQuery,
) -> Footprint {
    let refs = refs_of(k, q.array, &q.stmts);
    if refs.is_empty() {
        return Footprint::default();
    }
    let instances: u64 = q
        .stmts
        .iter()
        .map(|&s| match k.statements[s].loops.last() {
            Some(&l) => tcs[l].total(),
            None => 1,
        })
        .sum();
    if instances <= FOOTPRINT_ENUM_CAP {
        return enumerate(k, cal, q, true);
    }
    if let Some(fp) = boxes(k, cal, q, &refs) {
        return fp;
    }
    // One execution may still be small enough.
    let per_exec = match q.scope {
        None => instances,
        Some(l) => instances / tcs[l].executions.max(1),
    };
    if per_exec <= FOOTPRINT_ENUM_CAP {
        return enumerate(k, cal, q, false);
    }
    fallback(k, tcs, cal, q, &refs)
}

fn cell(access: &Access, values: &[i64], dims: &[u64]) -> Option<Vec<i64>> {
    let mut out = Vec::with_capacity(access.subscripts.len());
    for (s, &d) in access.subscripts.iter().zip(dims) {
        let v = s.eval(values);
        if v < 0 || v as u64 >= d {
            return None;
        }
        out.push(v);
    }
    Some(out)
}

/// Exact enumeration. With `all_executions` the maximum over every
/// execution of the scope is taken, otherwise only the first one is visited.
fn enumerate(k: &KernelIr, cal: &Calibration, q: &FootprintQuery, all_executions: bool) -> Footprint {
    let decl = &k.arrays[q.array];
    let outer = match q.scope {
        None => Vec::new(),
        Some(l) => k.loops_above(l),
    };
    let body: Vec<Node> = match q.scope {
        None => k.root.clone(),
        Some(l) => vec![Node::Loop { id: l, body: k.body(Some(l)).to_vec() }],
    };
    let mut best = Footprint::default();
    let mut values = vec![0i64; k.loops.len()];
    for_each_point(k, &outer, &mut values, &mut |v| {
        let mut vals = v.to_vec();
        let mut written: HashSet<Vec<i64>> = HashSet::new();
        let mut touched: HashSet<Vec<i64>> = HashSet::new();
        let mut read = false;
        walk(k, q, &body, &mut vals, &mut |acc, write, vals| {
            if let Some(c) = cell(acc, vals, &decl.dims) {
                if write {
                    written.insert(c.clone());
                } else if !written.contains(&c) {
                    read = true;
                }
                touched.insert(c);
            }
        });
        let elems = touched.len() as u64;
        let was_written = !written.is_empty();
        let cycles = transfer_cycles(elems, decl.element_bits, read, was_written, cal.burst_bits);
        best.elems = best.elems.max(elems);
        best.read |= read;
        best.written |= was_written;
        best.transfer_cycles = best.transfer_cycles.max(cycles);
        all_executions
    });
    best
}

fn walk(
    k: &KernelIr,
    q: &FootprintQuery,
    nodes: &[Node],
    vals: &mut Vec<i64>,
    f: &mut dyn FnMut(&Access, bool, &[i64]),
) {
    for n in nodes {
        match n {
            Node::Stmt(s) => {
                if q.stmts.binary_search(s).is_err() {
                    continue;
                }
                let st = &k.statements[*s];
                for r in st.reads() {
                    if r.array == q.array {
                        f(r, false, vals);
                    }
                }
                if st.lhs.array == q.array {
                    f(&st.lhs, true, vals);
                }
            }
            Node::Loop { id, body } => {
                let lo = k.loops[*id].lower.eval(vals);
                let mut hi = k.loops[*id].upper.eval(vals);
                if Some(*id) == q.scope {
                    if let Some(t) = q.tile {
                        hi = hi.min(lo + t as i64);
                    }
                }
                for v in lo..hi {
                    vals[*id] = v;
                    walk(k, q, body, vals, f);
                }
            }
        }
    }
}

/// Loops strictly inside or equal to the scope that enclose a statement.
fn scoped_loops(k: &KernelIr, scope: Option<LoopIdx>, s: StmtIdx) -> Vec<LoopIdx> {
    let loops = &k.statements[s].loops;
    match scope {
        None => loops.clone(),
        Some(l) => match loops.iter().position(|&x| x == l) {
            Some(p) => loops[p..].to_vec(),
            None => Vec::new(),
        },
    }
}

/// First point of the outer domain, or `None` if it is empty.
fn first_outer_point(k: &KernelIr, scope: Option<LoopIdx>) -> Option<Vec<i64>> {
    let outer = match scope {
        None => return Some(vec![0; k.loops.len()]),
        Some(l) => k.loops_above(l),
    };
    let mut values = vec![0i64; k.loops.len()];
    let mut first = None;
    for_each_point(k, &outer, &mut values, &mut |v| {
        first = Some(v.to_vec());
        false
    });
    first
}

fn access_box(
    k: &KernelIr,
    q: &FootprintQuery,
    r: &Ref,
    outer: &[i64],
) -> Option<Vec<Interval>> {
    let scoped = scoped_loops(k, q.scope, r.stmt);
    let mut ranges: Vec<Option<Interval>> = vec![None; k.loops.len()];
    for &l in &scoped {
        let info = &k.loops[l];
        if info.lower.loops().chain(info.upper.loops()).any(|x| scoped.contains(&x)) {
            return None;
        }
        let lo = info.lower.eval(outer);
        let mut hi = info.upper.eval(outer) - 1;
        if Some(l) == q.scope {
            if let Some(t) = q.tile {
                hi = hi.min(lo + t as i64 - 1);
            }
        }
        ranges[l] = Some(Interval { lo, hi });
    }
    let dims = &k.arrays[q.array].dims;
    let mut used: Vec<LoopIdx> = Vec::new();
    let mut out = Vec::new();
    for (s, &d) in r.access.subscripts.iter().zip(dims) {
        let iv = if s.is_constant() {
            Interval { lo: s.constant, hi: s.constant }
        } else {
            // In-scope iterators contribute a range; outer ones a point.
            let mut lo = s.constant;
            let mut hi = s.constant;
            let mut inner_seen = false;
            for &(l, c) in &s.terms {
                match ranges[l] {
                    Some(rg) => {
                        if c != 1 || inner_seen || used.contains(&l) {
                            return None;
                        }
                        inner_seen = true;
                        used.push(l);
                        if rg.is_empty() {
                            return Some(vec![Interval { lo: 1, hi: 0 }]);
                        }
                        lo += rg.lo;
                        hi += rg.hi;
                    }
                    None => {
                        lo += c * outer[l];
                        hi += c * outer[l];
                    }
                }
            }
            Interval { lo, hi }
        };
        out.push(Interval { lo: iv.lo.max(0), hi: iv.hi.min(d as i64 - 1) });
    }
    Some(out)
}

fn box_overlap(a: &[Interval], b: &[Interval]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.intersects(y))
}

/// Exact size of a union of boxes via coordinate compression.
pub fn union_size(boxes: &[Vec<Interval>]) -> u64 {
    let boxes: Vec<&Vec<Interval>> = boxes.iter().filter(|b| b.iter().all(|i| !i.is_empty())).collect();
    if boxes.is_empty() {
        return 0;
    }
    let nd = boxes[0].len();
    let cuts: Vec<Vec<i64>> = (0..nd)
        .map(|d| {
            let mut c: Vec<i64> = boxes.iter().flat_map(|b| [b[d].lo, b[d].hi + 1]).collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    let mut total = 0u64;
    let mut idx = vec![0usize; nd];
    'outer: loop {
        let lo: Vec<i64> = (0..nd).map(|d| cuts[d][idx[d]]).collect();
        if boxes.iter().any(|b| (0..nd).all(|d| b[d].lo <= lo[d] && lo[d] <= b[d].hi)) {
            total += (0..nd).map(|d| (cuts[d][idx[d] + 1] - cuts[d][idx[d]]) as u64).product::<u64>();
        }
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] + 1 < cuts[d].len() {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    total
}

fn boxes(k: &KernelIr, cal: &Calibration, q: &FootprintQuery, refs: &[Ref]) -> Option<Footprint> {
    let decl = &k.arrays[q.array];
    let Some(outer) = first_outer_point(k, q.scope) else {
        return Some(Footprint::default());
    };
    let bxs: Vec<Vec<Interval>> = refs.iter().map(|r| access_box(k, q, r, &outer)).collect::<Option<_>>()?;
    let elems = union_size(&bxs);
    let written = refs.iter().any(|r| r.write);
    // A read is covered when an earlier statement writes an overlapping box.
    let read = refs.iter().enumerate().any(|(i, r)| {
        !r.write
            && !refs
                .iter()
                .enumerate()
                .any(|(j, w)| w.write && w.stmt < r.stmt && box_overlap(&bxs[i], &bxs[j]))
    });
    Some(Footprint {
        elems,
        read,
        written,
        transfer_cycles: transfer_cycles(elems, decl.element_bits, read, written, cal.burst_bits),
    })
}

fn fallback(
    k: &KernelIr,
    tcs: &[TripCountInfo],
    cal: &Calibration,
    q: &FootprintQuery,
    refs: &[Ref],
) -> Footprint {
    let decl = &k.arrays[q.array];
    let mut elems = 0u64;
    for r in refs {
        let scoped = scoped_loops(k, q.scope, r.stmt);
        let mut seen: Vec<LoopIdx> = Vec::new();
        let mut count = 1u64;
        for s in &r.access.subscripts {
            for l in s.loops() {
                if scoped.contains(&l) && !seen.contains(&l) {
                    seen.push(l);
                    let mut tc = tcs[l].tc_min;
                    if Some(l) == q.scope {
                        if let Some(t) = q.tile {
                            tc = tc.min(t);
                        }
                    }
                    count = count.saturating_mul(tc);
                }
            }
        }
        elems = elems.max(count.min(decl.elements()));
    }
    let written = refs.iter().any(|r| r.write);
    let read = refs.iter().any(|r| !r.write) && !written;
    Footprint {
        elems,
        read,
        written,
        transfer_cycles: transfer_cycles(elems, decl.element_bits, read, written, cal.burst_bits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_of_boxes() {
        let b = |lo: i64, hi: i64| vec![Interval { lo, hi }];
        assert_eq!(union_size(&[b(0, 9), b(5, 14)]), 15);
        assert_eq!(union_size(&[b(0, 3), b(10, 11)]), 6);
        let b2 = |a: (i64, i64), c: (i64, i64)| vec![Interval { lo: a.0, hi: a.1 }, Interval { lo: c.0, hi: c.1 }];
        assert_eq!(union_size(&[b2((0, 1), (0, 1)), b2((1, 2), (1, 2))]), 7);
        assert_eq!(union_size(&[]), 0);
    }
}
