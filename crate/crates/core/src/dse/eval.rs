// SPDX-License-Identifier: Apache-2.0

//! Evaluators stand in for the HLS toolchain: they turn a configuration
//! into a measured latency plus a validity verdict.

use crate::analysis::Analysis;
use crate::calibration::{Calibration, Resources};
use crate::config::PragmaConfig;
use crate::ir::KernelIr;
use crate::latency::Model;
use crate::resources;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Everything an evaluator may look at besides the configuration.
pub struct EvalContext<'a> {
    pub k: &'a KernelIr,
    pub a: &'a Analysis,
    pub cal: &'a Calibration,
    pub res: Resources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PragmaKind {
    Pipeline,
    Unroll,
    Tile,
    Cache,
}

/// Whether one requested pragma made it into the design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PragmaFlag {
    pub loop_id: String,
    pub pragma: PragmaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<String>,
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub latency: u64,
    /// No resource over-utilization.
    pub valid: bool,
    #[serde(default)]
    pub applied: Vec<PragmaFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("evaluation timed out")]
    Timeout,
    #[error("evaluation failed: {0}")]
    Failed(String),
}

pub trait Evaluator: Sync {
    fn evaluate(&self, cx: &EvalContext, c: &PragmaConfig, deadline: Option<Duration>) -> Result<Evaluation, EvalError>;
}

/// Flags for every non-default pragma of `c`, all marked applied.
pub fn requested_pragmas(k: &KernelIr, c: &PragmaConfig) -> Vec<PragmaFlag> {
    let mut out = Vec::new();
    for (l, p) in c.loops.iter().enumerate() {
        let loop_id = &k.loops[l].iterator;
        let mut flag = |pragma| out.push(PragmaFlag { loop_id: loop_id.clone(), pragma, array: None, applied: true });
        if p.pip {
            flag(PragmaKind::Pipeline);
        }
        if p.uf > 1 {
            flag(PragmaKind::Unroll);
        }
        if p.tile > 1 {
            flag(PragmaKind::Tile);
        }
    }
    for &(l, arr) in &c.cache {
        out.push(PragmaFlag {
            loop_id: k.loops[l].iterator.clone(),
            pragma: PragmaKind::Cache,
            array: Some(k.arrays[arr].name.clone()),
            applied: true,
        });
    }
    out
}

fn fits(cx: &EvalContext, c: &PragmaConfig) -> bool {
    let dsp = resources::dsp_exact(cx.k, cx.a, cx.cal, c);
    dsp <= Ratio::from_integer(cx.cal.dsp_available as u128) && resources::onchip_usage(cx.k, cx.a, cx.cal, c) <= cx.cal.onchip_bits
}

fn model_latency(cx: &EvalContext, c: &PragmaConfig) -> Result<u64, EvalError> {
    Model::new(cx.k, cx.a, cx.cal, cx.res.clone())
        .program_bound(c)
        .map(|b| b.total)
        .map_err(|e| EvalError::Failed(e.to_string()))
}

/// A perfect toolchain: every pragma applies and the latency is the bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelEvaluator;

impl Evaluator for ModelEvaluator {
    fn evaluate(&self, cx: &EvalContext, c: &PragmaConfig, _deadline: Option<Duration>) -> Result<Evaluation, EvalError> {
        Ok(Evaluation { latency: model_latency(cx, c)?, valid: fits(cx, c), applied: requested_pragmas(cx.k, c) })
    }
}

/// Condition on the requested configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    /// Some loop above a pipelined loop has an unroll factor above 1.
    CoarseParallel,
    /// Product of all unroll factors exceeds the value.
    UnrollProductGt(u64),
    /// The named loop is unrolled by more than `factor`.
    LoopUnrollGt { r#loop: String, factor: u64 },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Unroll factors above pipelined loops fall back to 1.
    RejectCoarseParallel,
    /// The named loop's unroll pragma is dropped.
    RejectUnroll(String),
    /// Latency is multiplied (and rounded up).
    MultiplyLatency(f64),
    Timeout,
    OverUtilize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub predicate: Predicate,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("malformed rule list: {0}")]
    Json(String),
    #[error("rule {0}: latency factor must be finite and positive")]
    Factor(usize),
}

/// Scripted toolchain: rules fire on the requested configuration, unapplied
/// pragmas reset to their defaults, and the latency is the model bound of
/// what remains, scaled by any inflation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulatedHls {
    pub rules: Vec<Rule>,
}

impl SimulatedHls {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RuleError> {
        for (i, r) in rules.iter().enumerate() {
            if let Effect::MultiplyLatency(f) = r.effect {
                if !(f.is_finite() && f > 0.0) {
                    return Err(RuleError::Factor(i));
                }
            }
        }
        Ok(SimulatedHls { rules })
    }

    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        Self::new(serde_json::from_str(text).map_err(|e| RuleError::Json(e.to_string()))?)
    }

    /// Rejects coarse-grained parallelism outright.
    pub fn coarse_rejecting() -> Self {
        SimulatedHls { rules: vec![Rule { predicate: Predicate::CoarseParallel, effect: Effect::RejectCoarseParallel }] }
    }
}

fn coarse_loops(k: &KernelIr, c: &PragmaConfig) -> Vec<usize> {
    let mut out: Vec<usize> = c.pipelined().flat_map(|l| k.loops_above(l)).filter(|&l| c.loops[l].uf > 1).collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn holds(p: &Predicate, k: &KernelIr, c: &PragmaConfig) -> Result<bool, EvalError> {
    Ok(match p {
        Predicate::Always => true,
        Predicate::CoarseParallel => !coarse_loops(k, c).is_empty(),
        Predicate::UnrollProductGt(n) => c.loops.iter().map(|p| p.uf as u128).product::<u128>() > *n as u128,
        Predicate::LoopUnrollGt { r#loop, factor } => {
            let l = k.loop_by_name(r#loop).ok_or_else(|| EvalError::Failed(format!("rule names unknown loop `{loop}`")))?;
            c.loops[l].uf > *factor
        }
        Predicate::All(ps) => {
            for p in ps {
                if !holds(p, k, c)? {
                    return Ok(false);
                }
            }
            true
        }
        Predicate::Any(ps) => {
            for p in ps {
                if holds(p, k, c)? {
                    return Ok(true);
                }
            }
            false
        }
        Predicate::Not(p) => !holds(p, k, c)?,
    })
}

impl Evaluator for SimulatedHls {
    fn evaluate(&self, cx: &EvalContext, c: &PragmaConfig, _deadline: Option<Duration>) -> Result<Evaluation, EvalError> {
        let k = cx.k;
        let mut effective = c.clone();
        let mut dropped = vec![false; k.loops.len()];
        let mut factor = 1.0f64;
        let mut over = false;
        for r in &self.rules {
            if !holds(&r.predicate, k, c)? {
                continue;
            }
            match &r.effect {
                Effect::RejectCoarseParallel => {
                    for l in coarse_loops(k, c) {
                        effective.loops[l].uf = 1;
                        dropped[l] = true;
                    }
                }
                Effect::RejectUnroll(name) => {
                    let l = k.loop_by_name(name).ok_or_else(|| EvalError::Failed(format!("rule names unknown loop `{name}`")))?;
                    if c.loops[l].uf > 1 && !c.under_pipeline(k, l) {
                        effective.loops[l].uf = 1;
                        dropped[l] = true;
                    }
                }
                Effect::MultiplyLatency(f) => factor *= f,
                Effect::Timeout => return Err(EvalError::Timeout),
                Effect::OverUtilize => over = true,
            }
        }
        let mut applied = requested_pragmas(k, c);
        for f in &mut applied {
            if f.pragma == PragmaKind::Unroll {
                let l = k.loop_by_name(&f.loop_id).expect("flag names a kernel loop");
                f.applied = !dropped[l];
            }
        }
        let base = model_latency(cx, &effective)?;
        let latency = (base as f64 * factor).ceil() as u64;
        Ok(Evaluation { latency, valid: !over && fits(cx, &effective), applied })
    }
}

/// Runs a user command per evaluation. `{kernel}` in the template expands to
/// the kernel file and `{config}` to a temporary JSON config file; the last
/// non-empty stdout line must be an [`Evaluation`] object (`applied` may be
/// omitted).
#[derive(Debug, Clone)]
pub struct CommandEvaluator {
    pub template: String,
    pub kernel_path: PathBuf,
}

impl Evaluator for CommandEvaluator {
    fn evaluate(&self, cx: &EvalContext, c: &PragmaConfig, deadline: Option<Duration>) -> Result<Evaluation, EvalError> {
        let fail = |e: &dyn std::fmt::Display| EvalError::Failed(e.to_string());
        let mut cfg = tempfile::Builder::new().suffix(".json").tempfile().map_err(|e| fail(&e))?;
        cfg.write_all(c.to_json(cx.k).as_bytes()).map_err(|e| fail(&e))?;
        cfg.flush().map_err(|e| fail(&e))?;
        let cmd = self
            .template
            .replace("{kernel}", &self.kernel_path.to_string_lossy())
            .replace("{config}", &cfg.path().to_string_lossy());
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| fail(&e))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let start = Instant::now();
        let status = loop {
            if let Some(st) = child.try_wait().map_err(|e| fail(&e))? {
                break st;
            }
            if deadline.is_some_and(|d| start.elapsed() >= d) {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EvalError::Timeout);
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let out = reader.join().map_err(|_| EvalError::Failed("stdout reader panicked".into()))?.map_err(|e| fail(&e))?;
        if !status.success() {
            return Err(EvalError::Failed(format!("`{cmd}` exited with {status}")));
        }
        let line = out.lines().rev().find(|l| !l.trim().is_empty()).ok_or_else(|| EvalError::Failed("no output".into()))?;
        serde_json::from_str(line).map_err(|e| EvalError::Failed(format!("bad evaluator output `{line}`: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_kernel;

    const NEST: &str = "kernel k { array A[8][8]: f32 in; array y[8]: f32 out;
        loop i 0 8 { loop j 0 8 { S: y[i] += A[i][j] * 3; } } }";

    fn with_cx<T>(f: impl FnOnce(&EvalContext) -> T) -> T {
        let k = parse_kernel(NEST).unwrap();
        let cal = Calibration::default();
        let a = Analysis::new(&k, &cal).unwrap();
        let res = Resources::from_dsp_budget(&cal, cal.dsp_available);
        f(&EvalContext { k: &k, a: &a, cal: &cal, res })
    }

    fn coarse(k: &KernelIr) -> PragmaConfig {
        let mut c = PragmaConfig::default_for(k);
        c.loops[0].uf = 2;
        c.loops[1].pip = true;
        c
    }

    #[test]
    fn empty_rules_match_the_model() {
        with_cx(|cx| {
            let c = coarse(cx.k);
            let m = ModelEvaluator.evaluate(cx, &c, None).unwrap();
            let s = SimulatedHls::default().evaluate(cx, &c, None).unwrap();
            assert_eq!(m, s);
            assert!(m.applied.iter().all(|f| f.applied));
        })
    }

    #[test]
    fn rejected_coarse_unroll_is_recomputed() {
        with_cx(|cx| {
            let c = coarse(cx.k);
            let mut fine = c.clone();
            fine.loops[0].uf = 1;
            let want = ModelEvaluator.evaluate(cx, &fine, None).unwrap().latency;
            let e = SimulatedHls::coarse_rejecting().evaluate(cx, &c, None).unwrap();
            assert_eq!(e.latency, want);
            let unroll = e.applied.iter().find(|f| f.pragma == PragmaKind::Unroll).unwrap();
            assert!(!unroll.applied);
        })
    }

    #[test]
    fn rules_parse_and_fire() {
        let sim = SimulatedHls::from_json(
            r#"[{"predicate": {"unroll_product_gt": 1}, "effect": "timeout"},
                {"predicate": "always", "effect": {"multiply_latency": 2.0}}]"#,
        )
        .unwrap();
        with_cx(|cx| {
            assert_eq!(sim.evaluate(cx, &coarse(cx.k), None), Err(EvalError::Timeout));
            let base = PragmaConfig::default_for(cx.k);
            let m = ModelEvaluator.evaluate(cx, &base, None).unwrap().latency;
            assert_eq!(sim.evaluate(cx, &base, None).unwrap().latency, 2 * m);
        });
        assert!(matches!(SimulatedHls::from_json(r#"[{"predicate": "sometimes", "effect": "timeout"}]"#), Err(RuleError::Json(_))));
        assert_eq!(
            SimulatedHls::from_json(r#"[{"predicate": "always", "effect": {"multiply_latency": -1.0}}]"#),
            Err(RuleError::Factor(0))
        );
    }

    #[test]
    fn over_utilization_marks_invalid() {
        let sim = SimulatedHls::new(vec![Rule { predicate: Predicate::Always, effect: Effect::OverUtilize }]).unwrap();
        with_cx(|cx| assert!(!sim.evaluate(cx, &PragmaConfig::default_for(cx.k), None).unwrap().valid));
    }
}
