// SPDX-License-Identifier: Apache-2.0

//! Exact branch-and-bound over pipeline placements and divisor lattices.
//!
//! Computation and communication separate once the pipelined loops are
//! fixed: computation depends on `(pip, uf)`, communication on the cache
//! set, and the only coupling is that caches may not sit strictly below a
//! pipeline. The search therefore
//!
//! 1. enumerates, per top-level node ("unit"), every local pipeline
//!    placement and unroll assignment that passes the unit-local checks,
//!    with its latency;
//! 2. combines units depth-first, bounding with each unassigned unit's
//!    cheapest candidate and the least communication any placement allows;
//! 3. solves the cache subproblem per set of forbidden loops, memoized.
//!
//! Ties are broken by [`PragmaConfig::key`].

use super::{NlpProblem, ProblemOptions};
use crate::analysis::FootprintQuery;
use crate::config::{LoopPragma, PragmaConfig};
use crate::ir::{ArrayIdx, KernelIr, LoopIdx, Node, StmtIdx};
use crate::latency::compose_c;
use crate::resources::{self, combine_units, dsp_of, node_units, Units};
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

/// Cache alternatives kept per array (antichains of loops), first in key
/// order.
pub const MAX_CACHE_OPTIONS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    TimeoutBestSoFar,
    Infeasible,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub timeout: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub best_config: Option<PragmaConfig>,
    /// Objective of `best_config`.
    pub lower_bound: Option<u64>,
    pub status: SolveStatus,
    pub nodes_explored: u64,
    pub options: ProblemOptions,
}

struct Timeout;

struct Clock {
    deadline: Option<Instant>,
    ticks: u64,
    expired: bool,
}

impl Clock {
    fn check(&mut self) -> Result<(), Timeout> {
        self.ticks += 1;
        if self.expired {
            return Err(Timeout);
        }
        if let Some(d) = self.deadline {
            if self.ticks % 64 == 0 && Instant::now() >= d {
                self.expired = true;
                return Err(Timeout);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    /// `(pip, uf)` for the unit's loops, in id order.
    pragmas: Vec<(bool, u64)>,
    latency: u64,
    units: Units,
    /// `(array, dim, lcm)` partition contributions above 1.
    ap: Vec<(ArrayIdx, usize, u64)>,
    forbidden: Vec<LoopIdx>,
    key: Vec<u64>,
}

struct Unit {
    loops: Vec<LoopIdx>,
    candidates: Vec<Candidate>,
    min_latency: u64,
}

/// Pipeline sets inside a subtree with at most one pipeline per path.
pub(crate) fn placements(node: &Node) -> Vec<Vec<LoopIdx>> {
    match node {
        Node::Stmt(_) => vec![Vec::new()],
        Node::Loop { id, body } => {
            let mut combos: Vec<Vec<LoopIdx>> = vec![Vec::new()];
            for child in body {
                let opts = placements(child);
                let mut next = Vec::with_capacity(combos.len() * opts.len());
                for c in &combos {
                    for o in &opts {
                        let mut v = c.clone();
                        v.extend(o);
                        next.push(v);
                    }
                }
                combos = next;
            }
            combos.push(vec![*id]);
            combos
        }
    }
}

fn node_loops(k: &KernelIr, node: &Node) -> Vec<LoopIdx> {
    match node {
        Node::Stmt(_) => Vec::new(),
        Node::Loop { id, .. } => {
            let mut v = vec![*id];
            v.extend(k.loops_under(*id));
            v.sort_unstable();
            v
        }
    }
}

struct Search<'p, 'a> {
    p: &'p NlpProblem<'a>,
    clock: Clock,
    limit: u64,
    dsp_budget: Ratio<u128>,
    /// Loops per (array, dim) that drive its partition factor.
    part_loops: Vec<Vec<BTreeSet<LoopIdx>>>,
    mem_memo: HashMap<Vec<LoopIdx>, Option<MemChoice>>,
}

#[derive(Debug, Clone)]
struct MemChoice {
    cost: u64,
    cache: BTreeSet<(LoopIdx, ArrayIdx)>,
    tiles: BTreeMap<LoopIdx, u64>,
}

impl<'p, 'a> Search<'p, 'a> {
    fn unit(&mut self, node: &Node) -> Result<Unit, Timeout> {
        let p = self.p;
        let (k, a) = (p.k, p.a);
        let loops = node_loops(k, node);
        let mut candidates = Vec::new();
        'placement: for pset in placements(node) {
            let forbidden: Vec<LoopIdx> =
                loops.iter().copied().filter(|&l| pset.iter().any(|&q| k.encloses(q, l))).collect();
            let mut domains: Vec<Vec<u64>> = Vec::with_capacity(loops.len());
            for &l in &loops {
                let t = &a.trip[l];
                if forbidden.contains(&l) {
                    if !t.is_constant() {
                        continue 'placement;
                    }
                    domains.push(vec![t.tc_max.max(1)]);
                    continue;
                }
                let above_pipeline = pset.iter().any(|&q| k.encloses(l, q));
                if p.opts.fine_grained_only && above_pipeline {
                    domains.push(vec![1]);
                    continue;
                }
                let cap = a.uf_cap[l].unwrap_or(u64::MAX);
                domains.push(t.divisors.iter().copied().filter(|&d| d <= cap.max(1)).collect());
            }
            let mut pick = vec![0usize; loops.len()];
            loop {
                self.clock.check()?;
                let mut c = PragmaConfig::default_for(k);
                for (i, &l) in loops.iter().enumerate() {
                    c.loops[l] = LoopPragma { pip: pset.contains(&l), uf: domains[i][pick[i]], tile: 1 };
                }
                if let Some(cand) = self.candidate(node, &loops, &forbidden, &c) {
                    candidates.push(cand);
                }
                // Odometer over the domains, last loop fastest.
                let mut i = loops.len();
                loop {
                    if i == 0 {
                        continue 'placement;
                    }
                    i -= 1;
                    pick[i] += 1;
                    if pick[i] < domains[i].len() {
                        break;
                    }
                    pick[i] = 0;
                }
            }
        }
        candidates.sort_by(|x, y| (x.latency, &x.key).cmp(&(y.latency, &y.key)));
        let min_latency = candidates.first().map_or(u64::MAX, |c| c.latency);
        Ok(Unit { loops, candidates, min_latency })
    }

    fn candidate(&self, node: &Node, loops: &[LoopIdx], forbidden: &[LoopIdx], c: &PragmaConfig) -> Option<Candidate> {
        let p = self.p;
        let (k, a) = (p.k, p.a);
        let mut ap = Vec::new();
        for (arr, dims) in self.part_loops.iter().enumerate() {
            let mut product = 1u64;
            for (d, ls) in dims.iter().enumerate() {
                let f = ls.iter().filter(|l| loops.contains(l)).fold(1u64, |x, &l| x.lcm(&c.loops[l].uf));
                product = product.saturating_mul(f);
                if f > 1 {
                    ap.push((arr, d, f));
                }
            }
            if product > self.limit {
                return None;
            }
        }
        let units = node_units(k, a, c, node);
        if dsp_of(p.cal, &units) > self.dsp_budget {
            return None;
        }
        let latency = p.model.node_bound(c, node).ok()?;
        let pragmas: Vec<(bool, u64)> = loops.iter().map(|&l| (c.loops[l].pip, c.loops[l].uf)).collect();
        let key = pragmas.iter().flat_map(|&(pip, uf)| [pip as u64, uf]).collect();
        Some(Candidate { pragmas, latency, units, ap, forbidden: forbidden.to_vec(), key })
    }

    /// Best cache set and tiles when `forbidden` loops may not hold caches.
    fn memory(&mut self, forbidden: &[LoopIdx]) -> Result<Option<MemChoice>, Timeout> {
        if let Some(m) = self.mem_memo.get(forbidden) {
            return Ok(m.clone());
        }
        let m = MemorySearch::new(self.p, forbidden).run(&mut self.clock)?;
        self.mem_memo.insert(forbidden.to_vec(), m.clone());
        Ok(m)
    }
}

/// One caching alternative for one array.
#[derive(Debug, Clone)]
struct CacheOption {
    loops: Vec<LoopIdx>,
    /// Transfer cycles per level (`None` = program level).
    levels: Vec<(Option<LoopIdx>, u64)>,
    /// On-chip bits at program level plus per cache loop with the largest
    /// tile.
    fixed_bits: u64,
    strip_bits: Vec<(LoopIdx, u64)>,
}

struct MemorySearch<'p, 'a> {
    p: &'p NlpProblem<'a>,
    arrays: Vec<ArrayIdx>,
    options: Vec<Vec<CacheOption>>,
    best: Option<(u64, Vec<usize>)>,
}

fn stmts_touching(k: &KernelIr, array: ArrayIdx) -> Vec<StmtIdx> {
    (0..k.statements.len())
        .filter(|&s| {
            let st = &k.statements[s];
            st.lhs.array == array || st.reads().iter().any(|r| r.array == array)
        })
        .collect()
}

/// Antichains (pairwise non-nested subsets) of `cands`, sorted by their
/// bit vector over loop ids.
pub(crate) fn antichains(k: &KernelIr, cands: &[LoopIdx], cap: usize) -> Vec<Vec<LoopIdx>> {
    fn go(k: &KernelIr, cands: &[LoopIdx], i: usize, cur: &mut Vec<LoopIdx>, out: &mut Vec<Vec<LoopIdx>>, cap: usize) {
        if out.len() >= cap * 4 {
            return;
        }
        if i == cands.len() {
            out.push(cur.clone());
            return;
        }
        go(k, cands, i + 1, cur, out, cap);
        let l = cands[i];
        if cur.iter().all(|&m| !k.encloses(m, l) && !k.encloses(l, m)) {
            cur.push(l);
            go(k, cands, i + 1, cur, out, cap);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(k, cands, 0, &mut Vec::new(), &mut out, cap);
    let n = k.loops.len();
    let bits = |s: &Vec<LoopIdx>| (0..n).map(|l| s.contains(&l)).collect::<Vec<bool>>();
    out.sort_by_key(bits);
    out.truncate(cap);
    out
}

impl<'p, 'a> MemorySearch<'p, 'a> {
    fn new(p: &'p NlpProblem<'a>, forbidden: &[LoopIdx]) -> Self {
        let (k, a, cal) = (p.k, p.a, p.cal);
        let arrays: Vec<ArrayIdx> = k.arrays_used().into_iter().collect();
        let mut options = Vec::new();
        for &arr in &arrays {
            let bits = k.arrays[arr].element_bits;
            let cands: Vec<LoopIdx> =
                (0..k.loops.len()).filter(|l| !forbidden.contains(l) && k.arrays_under(*l).contains(&arr)).collect();
            let touching = stmts_touching(k, arr);
            let mut opts = Vec::new();
            for set in antichains(k, &cands, MAX_CACHE_OPTIONS) {
                let mut levels = Vec::new();
                let mut strip_bits = Vec::new();
                let uncovered: Vec<StmtIdx> = touching
                    .iter()
                    .copied()
                    .filter(|&s| !k.statements[s].loops.iter().any(|l| set.contains(l)))
                    .collect();
                let mut fixed_bits = 0;
                if !uncovered.is_empty() {
                    let q = FootprintQuery { array: arr, scope: None, stmts: uncovered, tile: None };
                    let f = a.footprint(k, cal, &q);
                    levels.push((None, f.transfer_cycles));
                    fixed_bits += f.bits(bits);
                }
                for &l in &set {
                    let q = FootprintQuery { array: arr, scope: None, stmts: k.stmts_under(l), tile: None };
                    levels.push((Some(l), a.footprint(k, cal, &q).transfer_cycles));
                    let widest = if a.trip[l].is_constant() { a.trip[l].tc_max.max(1) } else { 1 };
                    strip_bits.push((l, strip_footprint_bits(p, arr, l, widest)));
                }
                opts.push(CacheOption { loops: set, levels, fixed_bits, strip_bits });
            }
            options.push(opts);
        }
        MemorySearch { p, arrays, options, best: None }
    }

    fn run(mut self, clock: &mut Clock) -> Result<Option<MemChoice>, Timeout> {
        let mut pick = Vec::new();
        self.dfs(0, &mut pick, &BTreeMap::new(), 0, clock)?;
        let Some((cost, picks)) = self.best.clone() else { return Ok(None) };
        let mut cache = BTreeSet::new();
        let mut fixed = 0u64;
        let mut per_loop: BTreeMap<LoopIdx, Vec<ArrayIdx>> = BTreeMap::new();
        for (i, &o) in picks.iter().enumerate() {
            let opt = &self.options[i][o];
            fixed += opt.fixed_bits;
            for &l in &opt.loops {
                cache.insert((l, self.arrays[i]));
                per_loop.entry(l).or_default().push(self.arrays[i]);
            }
        }
        let tiles = self.choose_tiles(fixed, &per_loop);
        Ok(Some(MemChoice { cost, cache, tiles }))
    }

    /// Smallest tile per cache loop, in loop order, that still leaves room
    /// for every later loop at its largest tile.
    fn choose_tiles(&self, fixed: u64, per_loop: &BTreeMap<LoopIdx, Vec<ArrayIdx>>) -> BTreeMap<LoopIdx, u64> {
        let p = self.p;
        let domain = |l: LoopIdx| -> Vec<u64> {
            if p.a.trip[l].is_constant() {
                p.a.trip[l].divisors.clone()
            } else {
                vec![1]
            }
        };
        let bits_at = |l: LoopIdx, t: u64| -> u64 { per_loop[&l].iter().map(|&arr| strip_footprint_bits(p, arr, l, t)).sum() };
        let loops: Vec<LoopIdx> = per_loop.keys().copied().collect();
        let widest: Vec<u64> = loops.iter().map(|&l| bits_at(l, *domain(l).last().unwrap_or(&1))).collect();
        let mut used = fixed;
        let mut tiles = BTreeMap::new();
        for (i, &l) in loops.iter().enumerate() {
            let rest: u64 = widest[i + 1..].iter().sum();
            let dom = domain(l);
            let t = dom
                .iter()
                .copied()
                .find(|&t| used + bits_at(l, t) + rest <= p.cal.onchip_bits)
                .unwrap_or(*dom.last().unwrap_or(&1));
            used += bits_at(l, t);
            tiles.insert(l, t);
        }
        tiles
    }

    fn dfs(
        &mut self,
        i: usize,
        pick: &mut Vec<usize>,
        levels: &BTreeMap<Option<LoopIdx>, u64>,
        bits: u64,
        clock: &mut Clock,
    ) -> Result<(), Timeout> {
        clock.check()?;
        let cost: u64 = levels.values().sum();
        if let Some((best, _)) = &self.best {
            // Options are visited in key order, so a tie never wins later.
            if cost >= *best {
                return Ok(());
            }
        }
        if i == self.arrays.len() {
            self.best = Some((cost, pick.clone()));
            return Ok(());
        }
        for o in 0..self.options[i].len() {
            let opt = &self.options[i][o];
            let nbits = bits + opt.fixed_bits + opt.strip_bits.iter().map(|x| x.1).sum::<u64>();
            if nbits > self.p.cal.onchip_bits {
                continue;
            }
            let mut next = levels.clone();
            for &(lvl, c) in &opt.levels {
                let e = next.entry(lvl).or_insert(0);
                *e = (*e).max(c);
            }
            pick.push(o);
            self.dfs(i + 1, pick, &next, nbits, clock)?;
            pick.pop();
        }
        Ok(())
    }
}

/// On-chip bits of `array` cached at `l` with tile factor `tile`.
fn strip_footprint_bits(p: &NlpProblem, array: ArrayIdx, l: LoopIdx, tile: u64) -> u64 {
    let (k, a) = (p.k, p.a);
    let strip = (tile > 1).then(|| a.trip[l].tc_max.div_ceil(tile).max(1));
    let q = FootprintQuery { array, scope: Some(l), stmts: k.stmts_under(l), tile: strip };
    a.footprint(k, p.cal, &q).bits(k.arrays[array].element_bits)
}

struct Combine<'s> {
    units: &'s [Unit],
    groups: Vec<Vec<usize>>,
    mem_lb: u64,
    best: Option<(u64, Vec<u64>, Vec<usize>, MemChoice)>,
}

pub fn solve(p: &NlpProblem, opts: SolveOptions) -> SolveResult {
    let k = p.k;
    let mut search = Search {
        p,
        clock: Clock { deadline: opts.timeout.map(|t| Instant::now() + t), ticks: 0, expired: false },
        limit: p.max_partition(),
        dsp_budget: Ratio::from_integer(p.cal.dsp_available as u128),
        part_loops: (0..k.arrays.len()).map(|arr| resources::partition_loops(k, arr)).collect(),
        mem_memo: HashMap::new(),
    };
    let result = |best: Option<(u64, PragmaConfig)>, status: SolveStatus, nodes: u64| SolveResult {
        lower_bound: best.as_ref().map(|b| b.0),
        best_config: best.map(|b| b.1),
        status,
        nodes_explored: nodes,
        options: p.opts,
    };

    let mut units = Vec::new();
    for node in &k.root {
        match search.unit(node) {
            Ok(u) => units.push(u),
            Err(Timeout) => return result(None, SolveStatus::TimeoutBestSoFar, search.clock.ticks),
        }
    }
    if units.iter().any(|u| u.candidates.is_empty()) {
        return result(None, SolveStatus::Infeasible, search.clock.ticks);
    }
    let mem_lb = match search.memory(&[]) {
        Ok(Some(m)) => m.cost,
        Ok(None) => return result(None, SolveStatus::Infeasible, search.clock.ticks),
        Err(Timeout) => return result(None, SolveStatus::TimeoutBestSoFar, search.clock.ticks),
    };
    let mut comb = Combine { units: &units, groups: p.a.components(k, &k.root), mem_lb, best: None };
    let mut state = State {
        picks: Vec::new(),
        latency: units.iter().map(|u| u.min_latency).collect(),
        units: vec![resources::zero(); units.len()],
        ap: (0..k.arrays.len()).map(|arr| vec![1u64; k.arrays[arr].dims.len()]).collect(),
        key: Vec::new(),
    };
    let timed_out = comb.dfs(&mut search, &mut state).is_err();
    let best = comb.best.map(|(total, _, picks, mem)| (total, assemble(k, &units, &picks, &mem)));
    let status = match (&best, timed_out) {
        (_, true) => SolveStatus::TimeoutBestSoFar,
        (None, false) => SolveStatus::Infeasible,
        (Some(_), false) => SolveStatus::Optimal,
    };
    result(best, status, search.clock.ticks)
}

fn assemble(k: &KernelIr, units: &[Unit], picks: &[usize], mem: &MemChoice) -> PragmaConfig {
    let mut c = PragmaConfig::default_for(k);
    for (u, &i) in units.iter().zip(picks) {
        for (&l, &(pip, uf)) in u.loops.iter().zip(&u.candidates[i].pragmas) {
            c.loops[l].pip = pip;
            c.loops[l].uf = uf;
        }
    }
    c.cache = mem.cache.clone();
    for (&l, &t) in &mem.tiles {
        c.loops[l].tile = t;
    }
    c
}

struct State {
    picks: Vec<usize>,
    latency: Vec<u64>,
    units: Vec<Units>,
    ap: Vec<Vec<u64>>,
    key: Vec<u64>,
}

impl Combine<'_> {
    fn bound(&self, latency: &[u64]) -> u64 {
        let groups: Vec<Vec<u64>> = self.groups.iter().map(|g| g.iter().map(|&i| latency[i]).collect()).collect();
        compose_c(&groups).saturating_add(self.mem_lb)
    }

    /// Could a completion with objective `bound` and key prefix `prefix`
    /// still replace the incumbent?
    fn may_improve(&self, bound: u64, prefix: &[u64]) -> bool {
        match &self.best {
            None => true,
            Some((best, key, _, _)) => bound < *best || (bound == *best && prefix <= &key[..prefix.len()]),
        }
    }

    fn dfs(&mut self, s: &mut Search, st: &mut State) -> Result<(), Timeout> {
        s.clock.check()?;
        let u = st.picks.len();
        if u == self.units.len() {
            return self.leaf(s, st);
        }
        let unit = &self.units[u];
        for (ci, cand) in unit.candidates.iter().enumerate() {
            st.latency[u] = cand.latency;
            let bound = self.bound(&st.latency);
            if self.best.as_ref().is_some_and(|b| bound > b.0) {
                // Candidates are sorted by latency.
                break;
            }
            let klen = st.key.len();
            st.key.extend(&cand.key);
            if !self.may_improve(bound, &st.key) {
                st.key.truncate(klen);
                continue;
            }
            // Partition factors only grow as units are added.
            let saved_ap: Vec<(ArrayIdx, usize, u64)> = cand.ap.iter().map(|&(a, d, _)| (a, d, st.ap[a][d])).collect();
            let mut ok = true;
            for &(a, d, f) in &cand.ap {
                st.ap[a][d] = st.ap[a][d].lcm(&f);
            }
            for &(a, _, _) in &cand.ap {
                let product = st.ap[a].iter().fold(1u64, |x, &y| x.saturating_mul(y));
                if product > s.limit {
                    ok = false;
                }
            }
            if ok {
                st.units[u] = cand.units;
                let dsp = dsp_of(s.p.cal, &combine_units(&self.groups, &st.units));
                if dsp <= s.dsp_budget {
                    st.picks.push(ci);
                    let r = self.dfs(s, st);
                    st.picks.pop();
                    r?;
                }
                st.units[u] = resources::zero();
            }
            for (a, d, old) in saved_ap {
                st.ap[a][d] = old;
            }
            st.key.truncate(klen);
        }
        st.latency[u] = unit.min_latency;
        Ok(())
    }

    fn leaf(&mut self, s: &mut Search, st: &mut State) -> Result<(), Timeout> {
        let comp = self.bound(&st.latency) - self.mem_lb;
        let mut forbidden: Vec<LoopIdx> = st
            .picks
            .iter()
            .enumerate()
            .flat_map(|(u, &i)| self.units[u].candidates[i].forbidden.iter().copied())
            .collect();
        forbidden.sort_unstable();
        let Some(mem) = s.memory(&forbidden)? else { return Ok(()) };
        let total = comp + mem.cost;
        let c = assemble(s.p.k, self.units, &st.picks, &mem);
        let key = c.key(s.p.k);
        let better = match &self.best {
            None => true,
            Some((b, bk, _, _)) => (total, &key) < (*b, bk),
        };
        if better {
            self.best = Some((total, key, st.picks.clone(), mem));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placements_of_a_chain() {
        let k = crate::parse::parse_kernel(
            "kernel k { array A[4][4]: f32 out; loop i 0 4 { loop j 0 4 { S: A[i][j] = 1; } } }",
        )
        .unwrap();
        let mut p = placements(&k.root[0]);
        p.sort();
        assert_eq!(p, vec![vec![], vec![0], vec![1]]);
    }

    #[test]
    fn antichains_skip_nested_pairs() {
        let k = crate::parse::parse_kernel(
            "kernel k { array A[4][4]: f32 out; loop i 0 4 { loop j 0 4 { S: A[i][j] = 1; } loop m 0 4 { T: A[i][m] = 2; } } }",
        )
        .unwrap();
        let sets = antichains(&k, &[0, 1, 2], 16);
        assert_eq!(sets, vec![vec![], vec![2], vec![1], vec![1, 2], vec![0]]);
    }
}
