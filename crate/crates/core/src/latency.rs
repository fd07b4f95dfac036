// SPDX-License-Identifier: Apache-2.0

//! Composable latency lower bound of a kernel under a pragma configuration.
//!
//! The loop tree is rewritten bottom-up. A pipelined loop contributes
//! `II * (TC/uf - 1)` plus the bound of its unrolled body; a loop whose
//! inner loops are all fully unrolled contributes `TC/uf` waves of its
//! unrolled body; any other loop multiplies its body by `TC/uf` (by `TC` for
//! reduction loops, which cannot run whole iterations in parallel). Sibling
//! nodes are summed inside dependence-connected groups and maxed across
//! groups. Communication is added on top.

use crate::analysis::{Analysis, FootprintQuery};
use crate::calibration::{Calibration, Resources};
use crate::config::{PragmaConfig, Violation};
use crate::ir::{KernelIr, LoopIdx, Node, OpKind, PropertyVector, StmtIdx};
use crate::opgraph::{self, BuildOptions, OpGraphError};
use crate::resources::uncovered_stmts;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Operations expanded into one graph before switching to the counting
/// bound.
pub const EXPANSION_CAP: u64 = 1 << 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatencyError {
    #[error(transparent)]
    Graph(#[from] OpGraphError),
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
    #[error("unroll factor 0 on loop `{0}`")]
    ZeroUnroll(String),
    #[error("coarse-grained parallelization of a reduction loop")]
    CoarseReduction,
}

/// How a loop's latency was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Pipelined,
    /// Every inner loop fully unrolled; waves of `uf` unrolled iterations.
    Unrolled,
    CoarseGrained,
    Sequential,
    /// Reduction loop above the pipeline: unroll factor ignored.
    Reduction,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopTerm {
    pub loop_id: String,
    pub rule: Rule,
    pub uf: u64,
    pub ii: Option<u64>,
    /// Bound of one unrolled body region, when one was built.
    pub region_bound: Option<u64>,
    /// The region exceeded the expansion cap and was bounded by counting.
    pub capped: bool,
    /// Cycles of one execution of the loop (averaged over executions).
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayTransfer {
    pub array: String,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLevel {
    /// Cache loop, or `None` for arrays moved at program level.
    pub level: Option<String>,
    pub arrays: Vec<ArrayTransfer>,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kernel: String,
    pub computation: u64,
    pub communication: u64,
    pub total: u64,
    pub loops: Vec<LoopTerm>,
    pub memory: Vec<MemoryLevel>,
}

/// `floor(num / den)` for a rational trip count `(p, q)` scaled by `mul / div`.
fn floor_scaled(tc_avg: (u64, u64), mul: u64, div: u64) -> u64 {
    let n = tc_avg.0 as u128 * mul as u128;
    let d = tc_avg.1 as u128 * div as u128;
    (n / d) as u64
}

/// Apply one loop to its body: pipelined loops add `II*(TC/uf - 1)` to the
/// body, others repeat it `TC/uf` times.
pub fn apply_i(pv: &PropertyVector, body: u64) -> Result<u64, LatencyError> {
    if pv.uf == 0 {
        return Err(LatencyError::ZeroUnroll(pv.loop_id.clone()));
    }
    if pv.tc_max == 0 {
        return Ok(0);
    }
    if !pv.ispipelined {
        return Ok(floor_scaled(pv.tc_avg, body * pv.ii.max(1), pv.uf));
    }
    if pv.tc_min == 0 {
        // Empty executions drag the average below one front; every
        // executed iteration still costs at least min(II, body).
        return Ok(floor_scaled(pv.tc_avg, pv.ii.min(body), pv.uf));
    }
    let (p, q) = (pv.tc_avg.0 as i128, pv.tc_avg.1 as i128);
    let uf = pv.uf as i128;
    let extra = (pv.ii as i128 * (p - q * uf)).div_euclid(q * uf);
    Ok((body as i128 + extra).max(0) as u64)
}

/// Sum inside each dependence-connected group, max across groups.
pub fn compose_c(groups: &[Vec<u64>]) -> u64 {
    groups.iter().map(|g| g.iter().sum::<u64>()).max().unwrap_or(0)
}

pub fn lat_sequential(tc: u64, body: u64) -> u64 {
    tc * body
}

pub fn lat_coarse_grained(tc: u64, uf: u64, body: u64, is_reduction: bool) -> Result<u64, LatencyError> {
    if is_reduction && uf > 1 {
        return Err(LatencyError::CoarseReduction);
    }
    Ok((tc / uf.max(1)) * body)
}

/// `floor(tc/uf) * body * floor(log2 uf)`, falling back to the sequential
/// form at `uf = 1`.
pub fn lat_reduction_unroll(tc: u64, uf: u64, body: u64) -> u64 {
    if uf <= 1 {
        return lat_sequential(tc, body);
    }
    (tc / uf) * body * uf.ilog2() as u64
}

/// Latency model bound to one kernel, analysis, calibration and resource
/// budget. Region bounds are memoized, so one model is meant to evaluate
/// many configurations.
pub struct Model<'a> {
    pub k: &'a KernelIr,
    pub a: &'a Analysis,
    pub cal: &'a Calibration,
    pub res: Resources,
    pub expansion_cap: u64,
    rb: Mutex<HashMap<(LoopIdx, u64), (u64, bool)>>,
    stmt_rb: Mutex<HashMap<StmtIdx, u64>>,
}

impl<'a> Model<'a> {
    pub fn new(k: &'a KernelIr, a: &'a Analysis, cal: &'a Calibration, res: Resources) -> Self {
        Model {
            k,
            a,
            cal,
            res,
            expansion_cap: EXPANSION_CAP,
            rb: Mutex::new(HashMap::new()),
            stmt_rb: Mutex::new(HashMap::new()),
        }
    }

    fn build_opts(&self) -> BuildOptions {
        BuildOptions { tree_reduction: self.k.options.tree_reduction, strict: false }
    }

    /// Bound of a single statement instance.
    pub fn stmt_bound(&self, s: StmtIdx) -> Result<u64, LatencyError> {
        if let Some(&v) = self.stmt_rb.lock().get(&s) {
            return Ok(v);
        }
        let g = opgraph::build_graph(self.k, &[Node::Stmt(s)], self.cal, self.build_opts())?;
        let v = opgraph::region_bound(&g, &self.res, self.cal)?.bound;
        self.stmt_rb.lock().insert(s, v);
        Ok(v)
    }

    /// Operation counts of `uf` iterations of `l` with inner loops fully
    /// unrolled.
    fn unrolled_counts(&self, l: LoopIdx, uf: u64) -> BTreeMap<OpKind, u64> {
        let mut counts = BTreeMap::new();
        for s in self.k.stmts_under(l) {
            let reps: u64 = self.k.statements[s]
                .loops
                .iter()
                .filter(|&&m| self.k.encloses(l, m))
                .map(|&m| self.a.trip[m].tc_max)
                .product::<u64>()
                .saturating_mul(uf);
            for op in self.k.statements[s].ops() {
                let e = counts.entry(op).or_insert(0u64);
                *e = e.saturating_add(reps);
            }
        }
        counts
    }

    /// Bound of `uf` iterations of `l` with every inner loop fully unrolled.
    /// The flag reports whether the expansion cap forced the counting bound.
    pub fn region_bound(&self, l: LoopIdx, uf: u64) -> Result<(u64, bool), LatencyError> {
        if let Some(&v) = self.rb.lock().get(&(l, uf)) {
            return Ok(v);
        }
        let counts = self.unrolled_counts(l, uf);
        let total: u64 = counts.values().fold(0u64, |a, &b| a.saturating_add(b));
        let v = if total <= self.expansion_cap {
            let g = opgraph::build_unrolled(self.k, l, uf, self.cal, self.build_opts())?;
            (opgraph::region_bound(&g, &self.res, self.cal)?.bound, false)
        } else {
            // Any sub-region's bound and the total work both bound the region.
            let mut b = opgraph::work_bound(&counts, &self.res, self.cal)?;
            for n in self.k.body(Some(l)) {
                let child = match n {
                    Node::Stmt(s) => self.stmt_bound(*s)?,
                    Node::Loop { id, .. } => self.region_bound(*id, self.a.trip[*id].tc_max.max(1))?.0,
                };
                b = b.max(child);
            }
            (b, true)
        };
        self.rb.lock().insert((l, uf), v);
        Ok(v)
    }

    pub fn property_vector(&self, c: &PragmaConfig, l: LoopIdx) -> PropertyVector {
        let t = &self.a.trip[l];
        let p = c.loops[l];
        let cached_arrays = c
            .cache
            .iter()
            .filter(|(cl, _)| *cl == l)
            .map(|&(_, arr)| self.k.arrays[arr].name.clone())
            .collect();
        PropertyVector {
            loop_id: self.k.loops[l].iterator.clone(),
            ispipelined: p.pip,
            ii: if p.pip { self.a.min_ii[l] } else { 1 },
            uf: p.uf,
            tile: p.tile,
            tc_min: t.tc_min,
            tc_max: t.tc_max,
            tc_avg: t.tc_avg,
            cached_arrays,
        }
    }

    fn body(&self, c: &PragmaConfig, body: &[Node], trace: &mut Option<&mut Vec<LoopTerm>>) -> Result<u64, LatencyError> {
        let mut groups = Vec::new();
        for comp in self.a.components(self.k, body) {
            let mut g = Vec::with_capacity(comp.len());
            for i in comp {
                g.push(self.node(c, &body[i], trace)?);
            }
            groups.push(g);
        }
        Ok(compose_c(&groups))
    }

    fn node(&self, c: &PragmaConfig, n: &Node, trace: &mut Option<&mut Vec<LoopTerm>>) -> Result<u64, LatencyError> {
        let (l, body) = match n {
            Node::Stmt(s) => return self.stmt_bound(*s),
            Node::Loop { id, body } => (*id, body),
        };
        let p = c.loops[l];
        if p.uf == 0 {
            return Err(LatencyError::ZeroUnroll(self.k.loops[l].iterator.clone()));
        }
        let mut pv = self.property_vector(c, l);
        let mut term = LoopTerm {
            loop_id: pv.loop_id.clone(),
            rule: Rule::Empty,
            uf: p.uf,
            ii: None,
            region_bound: None,
            capped: false,
            cycles: 0,
        };
        if pv.tc_max > 0 {
            if p.pip {
                let (rb, capped) = self.region_bound(l, p.uf)?;
                term.rule = Rule::Pipelined;
                term.ii = Some(pv.ii);
                term.region_bound = Some(rb);
                term.capped = capped;
                term.cycles = apply_i(&pv, rb)?;
            } else if c.straight_line_below(self.k, &self.a.trip, l) {
                let (rb, capped) = self.region_bound(l, p.uf)?;
                term.rule = Rule::Unrolled;
                term.region_bound = Some(rb);
                term.capped = capped;
                term.cycles = apply_i(&pv, rb)?;
            } else {
                let inner = self.body(c, body, trace)?;
                term.rule = if self.a.is_reduction(l) && p.uf > 1 {
                    pv.uf = 1;
                    Rule::Reduction
                } else if p.uf > 1 {
                    Rule::CoarseGrained
                } else {
                    Rule::Sequential
                };
                term.cycles = apply_i(&pv, inner)?;
            }
        }
        let cycles = term.cycles;
        if let Some(t) = trace.as_deref_mut() {
            t.push(term);
        }
        Ok(cycles)
    }

    /// Computation bound without validating the configuration.
    pub fn computation(&self, c: &PragmaConfig) -> Result<u64, LatencyError> {
        self.body(c, &self.k.root, &mut None)
    }

    /// Computation bound of one root-level node; the program bound composes
    /// these with [`compose_c`] over the root's dependence groups.
    pub fn node_bound(&self, c: &PragmaConfig, n: &Node) -> Result<u64, LatencyError> {
        self.node(c, n, &mut None)
    }

    /// Transfer cycles of `array` when cached at `level`: its accesses
    /// below the cache point, over the whole run, moved once each way.
    pub fn transfer(&self, c: &PragmaConfig, array: usize, level: Option<LoopIdx>) -> u64 {
        let stmts = match level {
            Some(l) => self.k.stmts_under(l),
            None => uncovered_stmts(self.k, c, array),
        };
        if stmts.is_empty() {
            return 0;
        }
        let q = FootprintQuery { array, scope: None, stmts, tile: None };
        self.a.footprint(self.k, self.cal, &q).transfer_cycles
    }

    /// Sum over cache levels of the largest transfer at that level.
    pub fn memory(&self, c: &PragmaConfig) -> (u64, Vec<MemoryLevel>) {
        let mut levels: BTreeMap<Option<LoopIdx>, Vec<ArrayTransfer>> = BTreeMap::new();
        for arr in self.k.arrays_used() {
            let top = self.transfer(c, arr, None);
            if !uncovered_stmts(self.k, c, arr).is_empty() {
                levels.entry(None).or_default().push(ArrayTransfer { array: self.k.arrays[arr].name.clone(), cycles: top });
            }
        }
        for &(l, arr) in &c.cache {
            let cycles = self.transfer(c, arr, Some(l));
            levels.entry(Some(l)).or_default().push(ArrayTransfer { array: self.k.arrays[arr].name.clone(), cycles });
        }
        let mut total = 0;
        let out = levels
            .into_iter()
            .map(|(l, arrays)| {
                let cycles = arrays.iter().map(|t| t.cycles).max().unwrap_or(0);
                total += cycles;
                MemoryLevel { level: l.map(|l| self.k.loops[l].iterator.clone()), arrays, cycles }
            })
            .collect();
        (total, out)
    }

    /// Total bound without validating the configuration.
    pub fn evaluate(&self, c: &PragmaConfig) -> Result<u64, LatencyError> {
        Ok(self.computation(c)? + self.memory(c).0)
    }

    /// Full report for a structurally valid configuration.
    pub fn program_bound(&self, c: &PragmaConfig) -> Result<BoundReport, LatencyError> {
        let v = crate::nlp::structural_violations(self.k, self.a, c);
        if !v.is_empty() {
            return Err(LatencyError::InvalidConfig(v));
        }
        let mut loops = Vec::new();
        let computation = self.body(c, &self.k.root, &mut Some(&mut loops))?;
        let (communication, memory) = self.memory(c);
        Ok(BoundReport {
            kernel: self.k.name.clone(),
            computation,
            communication,
            total: computation + communication,
            loops,
            memory,
        })
    }
}
