// SPDX-License-Identifier: Apache-2.0

//! Bound-pruned design-space exploration. Every step of a partition-limit
//! ladder is solved twice, once with coarse and fine parallelism allowed and
//! once with fine only; a step's configuration is handed to the evaluator
//! only when its lower bound beats the best latency measured so far.

pub mod eval;

use crate::analysis::Analysis;
use crate::calibration::{Calibration, Resources};
use crate::config::{NamedConfig, PragmaConfig};
use crate::ir::KernelIr;
use crate::nlp::{build_problem, solve, NlpError, ProblemOptions, SolveOptions, SolveStatus};
pub use eval::{EvalContext, EvalError, Evaluation, Evaluator, ModelEvaluator, PragmaFlag, SimulatedHls};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest array-partition product a ladder step allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartitionCap {
    Unbounded,
    Max(u64),
}

impl PartitionCap {
    fn limit(self) -> u64 {
        match self {
            PartitionCap::Unbounded => u64::MAX,
            PartitionCap::Max(n) => n,
        }
    }
}

impl fmt::Display for PartitionCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionCap::Unbounded => f.write_str("inf"),
            PartitionCap::Max(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for PartitionCap {
    type Err = DseError;
    fn from_str(s: &str) -> Result<Self, DseError> {
        match s.trim() {
            "inf" | "∞" => Ok(PartitionCap::Unbounded),
            t => t.parse().map(PartitionCap::Max).map_err(|_| DseError::BadLadder(format!("`{t}` is not a partition limit"))),
        }
    }
}

impl Serialize for PartitionCap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PartitionCap::Unbounded => s.serialize_str("inf"),
            PartitionCap::Max(n) => s.serialize_u64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for PartitionCap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(PartitionCap::Max(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn default_ladder() -> Vec<PartitionCap> {
    std::iter::once(PartitionCap::Unbounded)
        .chain([2048, 1024, 512, 256, 128, 64, 32, 16, 8, 1].map(PartitionCap::Max))
        .collect()
}

/// Parse a comma-separated ladder such as `inf,1024,64,1`.
pub fn parse_ladder(s: &str) -> Result<Vec<PartitionCap>, DseError> {
    let ladder = s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>, _>>()?;
    check_ladder(&ladder)?;
    Ok(ladder)
}

fn check_ladder(ladder: &[PartitionCap]) -> Result<(), DseError> {
    if ladder.is_empty() {
        return Err(DseError::EmptyLadder);
    }
    for (i, w) in ladder.windows(2).enumerate() {
        let ok = match (w[0], w[1]) {
            (PartitionCap::Unbounded, PartitionCap::Max(_)) => i == 0,
            (PartitionCap::Max(a), PartitionCap::Max(b)) => a > b,
            (_, PartitionCap::Unbounded) => false,
        };
        if !ok {
            return Err(DseError::BadLadder(format!("`{}` cannot follow `{}`", w[1], w[0])));
        }
    }
    if ladder.contains(&PartitionCap::Max(0)) {
        return Err(DseError::BadLadder("partition limit 0 admits no design".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    CoarseFine,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DseConfig {
    pub partition_ladder: Vec<PartitionCap>,
    pub timeout_hls: Option<Duration>,
    pub timeout_nlp: Option<Duration>,
    pub parallel_evaluations: usize,
}

impl Default for DseConfig {
    fn default() -> Self {
        DseConfig { partition_ladder: default_ladder(), timeout_hls: None, timeout_nlp: None, parallel_evaluations: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    /// Evaluated and within resources.
    Evaluated { latency: u64, applied: Vec<PragmaFlag> },
    /// Evaluated but over-utilizing.
    Invalid { latency: u64, applied: Vec<PragmaFlag> },
    Timeout,
    Failed { message: String },
    /// Lower bound not below the best latency so far.
    Pruned,
    /// Same configuration as an earlier step; not evaluated again.
    Duplicate { step: usize },
    /// The solver found no configuration.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DseStep {
    pub max_partition: PartitionCap,
    pub parallelism: Parallelism,
    pub solve_status: SolveStatus,
    pub lower_bound: Option<u64>,
    pub config: Option<NamedConfig>,
    #[serde(flatten)]
    pub outcome: StepOutcome,
    /// Best valid latency after this step.
    pub best_latency: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DseBest {
    pub step: usize,
    pub latency: u64,
    pub config: NamedConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DseReport {
    pub schema_version: u32,
    pub kernel: String,
    pub ladder: Vec<PartitionCap>,
    pub steps: Vec<DseStep>,
    pub best: Option<DseBest>,
}

impl DseReport {
    pub fn evaluations(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| !matches!(s.outcome, StepOutcome::Pruned | StepOutcome::Duplicate { .. } | StepOutcome::Infeasible))
            .count()
    }
}

#[derive(Debug, Error)]
pub enum DseError {
    #[error("partition ladder is empty")]
    EmptyLadder,
    #[error("bad partition ladder: {0}")]
    BadLadder(String),
    #[error(transparent)]
    Problem(#[from] NlpError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report schema version {found}, expected {expected}")]
    Schema { found: u64, expected: u32 },
}

struct Solved {
    cap: PartitionCap,
    mode: Parallelism,
    status: SolveStatus,
    lower_bound: Option<u64>,
    config: Option<PragmaConfig>,
}

pub fn run_dse(
    k: &KernelIr,
    a: &Analysis,
    cal: &Calibration,
    res: Resources,
    cfg: &DseConfig,
    evaluator: &dyn Evaluator,
) -> Result<DseReport, DseError> {
    check_ladder(&cfg.partition_ladder)?;
    let mut solved = Vec::new();
    for &cap in &cfg.partition_ladder {
        for mode in [Parallelism::CoarseFine, Parallelism::Fine] {
            let opts = ProblemOptions { fine_grained_only: mode == Parallelism::Fine, max_partition: Some(cap.limit()) };
            let p = build_problem(k, a, cal, res.clone(), opts)?;
            let r = solve(&p, SolveOptions { timeout: cfg.timeout_nlp });
            solved.push(Solved { cap, mode, status: r.status, lower_bound: r.lower_bound, config: r.best_config });
        }
    }

    let cx = EvalContext { k, a, cal, res };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_evaluations.max(1))
        .build()
        .expect("thread pool");
    let window = cfg.parallel_evaluations.max(1);
    let mut steps: Vec<DseStep> = Vec::with_capacity(solved.len());
    let mut first_seen: HashMap<PragmaConfig, usize> = HashMap::new();
    let mut best: Option<DseBest> = None;
    for chunk_start in (0..solved.len()).step_by(window) {
        let chunk = &solved[chunk_start..(chunk_start + window).min(solved.len())];
        // Speculatively evaluate everything the sequential run could reach:
        // the best latency only drops, so a step pruned now stays pruned.
        let min_lat = best.as_ref().map(|b| b.latency);
        let mut todo: Vec<&PragmaConfig> = Vec::new();
        for s in chunk {
            if let (Some(lb), Some(c)) = (s.lower_bound, &s.config) {
                if min_lat.is_none_or(|m| lb < m) && !first_seen.contains_key(c) && !todo.contains(&c) {
                    todo.push(c);
                }
            }
        }
        let results: Vec<Result<Evaluation, EvalError>> =
            pool.install(|| todo.par_iter().map(|c| evaluator.evaluate(&cx, c, cfg.timeout_hls)).collect());
        let mut cache: HashMap<&PragmaConfig, Result<Evaluation, EvalError>> = todo.into_iter().zip(results).collect();

        for s in chunk {
            let idx = steps.len();
            let min_lat = best.as_ref().map(|b| b.latency);
            let outcome = match (s.lower_bound, &s.config) {
                (Some(lb), Some(c)) => {
                    if min_lat.is_some_and(|m| lb >= m) {
                        StepOutcome::Pruned
                    } else if let Some(&step) = first_seen.get(c) {
                        StepOutcome::Duplicate { step }
                    } else {
                        first_seen.insert(c.clone(), idx);
                        match cache.remove(c).expect("candidate was evaluated") {
                            Ok(e) if e.valid => {
                                if min_lat.is_none_or(|m| e.latency < m) {
                                    best = Some(DseBest { step: idx, latency: e.latency, config: c.to_named(k) });
                                }
                                StepOutcome::Evaluated { latency: e.latency, applied: e.applied }
                            }
                            Ok(e) => StepOutcome::Invalid { latency: e.latency, applied: e.applied },
                            Err(EvalError::Timeout) => StepOutcome::Timeout,
                            Err(EvalError::Failed(message)) => StepOutcome::Failed { message },
                        }
                    }
                }
                _ => StepOutcome::Infeasible,
            };
            steps.push(DseStep {
                max_partition: s.cap,
                parallelism: s.mode,
                solve_status: s.status,
                lower_bound: s.lower_bound,
                config: s.config.as_ref().map(|c| c.to_named(k)),
                outcome,
                best_latency: best.as_ref().map(|b| b.latency),
            });
        }
    }
    Ok(DseReport { schema_version: SCHEMA_VERSION, kernel: k.name.clone(), ladder: cfg.partition_ladder.clone(), steps, best })
}

pub fn report_to_json(r: &DseReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}

pub fn report_from_json(text: &str) -> Result<DseReport, DseError> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let found = v.get("schema_version").and_then(|x| x.as_u64()).unwrap_or(0);
    if found != SCHEMA_VERSION as u64 {
        return Err(DseError::Schema { found, expected: SCHEMA_VERSION });
    }
    Ok(serde_json::from_value(v)?)
}

pub fn persist_report(r: &DseReport, path: &Path) -> Result<(), DseError> {
    std::fs::write(path, report_to_json(r) + "\n")?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<DseReport, DseError> {
    report_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladders() {
        assert_eq!(parse_ladder("inf,1024,64,1").unwrap().len(), 4);
        assert_eq!(default_ladder().len(), 11);
        assert!(check_ladder(&default_ladder()).is_ok());
        assert!(matches!(parse_ladder(""), Err(DseError::EmptyLadder)));
        assert!(matches!(parse_ladder("64,128"), Err(DseError::BadLadder(_))));
        assert!(matches!(parse_ladder("64,inf"), Err(DseError::BadLadder(_))));
        assert!(matches!(parse_ladder("inf,x"), Err(DseError::BadLadder(_))));
    }

    #[test]
    fn empty_report_round_trips() {
        let r = DseReport { schema_version: SCHEMA_VERSION, kernel: "k".into(), ladder: vec![PartitionCap::Unbounded], steps: vec![], best: None };
        assert_eq!(report_from_json(&report_to_json(&r)).unwrap(), r);
        let stale = report_to_json(&r).replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(report_from_json(&stale), Err(DseError::Schema { found: 9, .. })));
    }
}
