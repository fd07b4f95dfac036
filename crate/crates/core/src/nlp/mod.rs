// SPDX-License-Identifier: Apache-2.0

//! The pragma-selection problem: variable domains, the constraint set, the
//! objective (which is the latency bound itself), an exact solver and a
//! text export.

pub mod export;
pub mod solve;
pub mod space;

use crate::analysis::Analysis;
use crate::calibration::{Calibration, Resources};
use crate::config::{ConstraintTag, PragmaConfig, Violation};
use crate::ir::KernelIr;
use crate::latency::{LatencyError, Model};
use crate::resources;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use solve::{solve, SolveOptions, SolveResult, SolveStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NlpError {
    #[error("kernel `{0}` has no statements")]
    Empty(String),
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemOptions {
    /// Forbid unrolling any loop above a pipelined loop.
    pub fine_grained_only: bool,
    /// Override of the calibration's partition limit. `None` keeps it; a
    /// value of `u64::MAX` lifts the limit.
    pub max_partition: Option<u64>,
}

/// Choices available to one loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopDomain {
    pub loop_id: String,
    /// Divisors of the trip count (`[1]` when it varies).
    pub uf: Vec<u64>,
    pub tile: Vec<u64>,
    /// Largest unroll factor the carried dependences allow outside a
    /// pipeline.
    pub dependence_cap: Option<u64>,
}

pub struct NlpProblem<'a> {
    pub k: &'a KernelIr,
    pub a: &'a Analysis,
    pub cal: &'a Calibration,
    pub opts: ProblemOptions,
    pub domains: Vec<LoopDomain>,
    pub model: Model<'a>,
}

pub fn build_problem<'a>(
    k: &'a KernelIr,
    a: &'a Analysis,
    cal: &'a Calibration,
    res: Resources,
    opts: ProblemOptions,
) -> Result<NlpProblem<'a>, NlpError> {
    if k.statements.is_empty() {
        return Err(NlpError::Empty(k.name.clone()));
    }
    let domains = (0..k.loops.len())
        .map(|l| LoopDomain {
            loop_id: k.loops[l].iterator.clone(),
            uf: a.trip[l].divisors.clone(),
            tile: a.trip[l].divisors.clone(),
            dependence_cap: a.uf_cap[l],
        })
        .collect();
    Ok(NlpProblem { k, a, cal, opts, domains, model: Model::new(k, a, cal, res) })
}

impl NlpProblem<'_> {
    pub fn max_partition(&self) -> u64 {
        self.opts.max_partition.unwrap_or(self.cal.max_partition)
    }

    /// Every violated constraint, in a fixed order.
    pub fn check_config(&self, c: &PragmaConfig) -> Vec<Violation> {
        let mut v = structural_violations(self.k, self.a, c);
        if c.loops.len() != self.k.loops.len() {
            return v;
        }
        v.extend(resource_violations(self, c));
        v
    }

    /// Objective of a valid configuration: the program latency bound.
    pub fn objective(&self, c: &PragmaConfig) -> Result<u64, NlpError> {
        let v = self.check_config(c);
        if !v.is_empty() {
            return Err(LatencyError::InvalidConfig(v).into());
        }
        Ok(self.model.evaluate(c)?)
    }
}

fn violation(out: &mut Vec<Violation>, tag: ConstraintTag, message: String) {
    out.push(Violation { tag, message });
}

/// Trip-count dependent factor rules shared by unroll and tile factors.
fn factor_violations(k: &KernelIr, a: &Analysis, c: &PragmaConfig, out: &mut Vec<Violation>) {
    for (l, p) in c.loops.iter().enumerate() {
        let t = &a.trip[l];
        let name = &k.loops[l].iterator;
        let hi = t.tc_max.max(1);
        for (value, what, bounds, divides) in [
            (p.uf, "unroll", ConstraintTag::UnrollBounds, ConstraintTag::UnrollDivides),
            (p.tile, "tile", ConstraintTag::TileBounds, ConstraintTag::TileDivides),
        ] {
            if value < 1 || value > hi {
                violation(out, bounds, format!("{what} factor {value} of loop `{name}` is outside 1..={hi}"));
            } else if !t.is_constant() && value != 1 {
                violation(out, divides, format!("loop `{name}` has a varying trip count; its {what} factor must be 1"));
            } else if t.is_constant() && t.tc_max > 0 && t.tc_max % value != 0 {
                violation(out, divides, format!("{what} factor {value} does not divide trip count {} of loop `{name}`", t.tc_max));
            }
        }
    }
}

/// Constraints that define the meaning of a configuration. The latency
/// bound is only defined when none of these is violated.
pub fn structural_violations(k: &KernelIr, a: &Analysis, c: &PragmaConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if c.loops.len() != k.loops.len() {
        violation(
            &mut out,
            ConstraintTag::UnrollBounds,
            format!("config describes {} loops, kernel has {}", c.loops.len(), k.loops.len()),
        );
        return out;
    }
    factor_violations(k, a, c, &mut out);
    for l in 0..k.loops.len() {
        let name = &k.loops[l].iterator;
        if c.under_pipeline(k, l) {
            let t = &a.trip[l];
            let full = t.is_constant() && (c.loops[l].uf == t.tc_max || t.tc_max == 0);
            if !full {
                violation(
                    &mut out,
                    ConstraintTag::FullUnrollUnderPipeline,
                    format!("loop `{name}` is under a pipelined loop but not fully unrolled"),
                );
            }
        } else if let Some(cap) = a.uf_cap[l] {
            if c.loops[l].uf > cap {
                violation(
                    &mut out,
                    ConstraintTag::DependenceDistance,
                    format!("unroll factor {} of loop `{name}` exceeds its dependence distance {cap}", c.loops[l].uf),
                );
            }
        }
    }
    for st in &k.statements {
        let pips: Vec<&str> = st.loops.iter().filter(|&&l| c.loops[l].pip).map(|&l| k.loops[l].iterator.as_str()).collect();
        if pips.len() > 1 {
            violation(
                &mut out,
                ConstraintTag::OnePipelinePerStatement,
                format!("statement `{}` is under pipelined loops {}", st.id, pips.join(", ")),
            );
        }
    }
    for &(l, arr) in &c.cache {
        let (ln, an) = (&k.loops[l].iterator, &k.arrays[arr].name);
        if c.under_pipeline(k, l) {
            violation(&mut out, ConstraintTag::NoCacheUnderPipeline, format!("cache of `{an}` at loop `{ln}` is below a pipelined loop"));
        }
        if !k.arrays_under(l).contains(&arr) {
            violation(&mut out, ConstraintTag::CachePath, format!("loop `{ln}` does not access `{an}`"));
        }
        if let Some(&(outer, _)) = c.cache.iter().find(|&&(o, x)| x == arr && k.encloses(o, l)) {
            violation(
                &mut out,
                ConstraintTag::CachePath,
                format!("`{an}` is cached at both `{}` and `{ln}`", k.loops[outer].iterator),
            );
        }
    }
    out
}

fn resource_violations(p: &NlpProblem, c: &PragmaConfig) -> Vec<Violation> {
    let (k, a, cal) = (p.k, p.a, p.cal);
    let mut out = Vec::new();
    let limit = p.max_partition();
    for part in resources::partition_factors(k, c) {
        if part.product > limit {
            violation(
                &mut out,
                ConstraintTag::PartitionLimit,
                format!("array `{}` needs {} partitions ({:?}), limit {limit}", part.array, part.product, part.factors),
            );
        }
    }
    if p.opts.fine_grained_only {
        for l in c.pipelined() {
            for above in k.loops_above(l) {
                if c.loops[above].uf > 1 {
                    violation(
                        &mut out,
                        ConstraintTag::FineGrainedOnly,
                        format!("loop `{}` above pipelined `{}` is unrolled", k.loops[above].iterator, k.loops[l].iterator),
                    );
                }
            }
        }
    }
    let dsp = resources::dsp_exact(k, a, cal, c);
    if dsp > Ratio::from_integer(cal.dsp_available as u128) {
        violation(
            &mut out,
            ConstraintTag::DspBudget,
            format!("needs at least {} DSPs, {} available", dsp.ceil().to_integer(), cal.dsp_available),
        );
    }
    let bits = resources::onchip_usage(k, a, cal, c);
    if bits > cal.onchip_bits {
        violation(&mut out, ConstraintTag::OnChipCapacity, format!("needs {bits} on-chip bits, {} available", cal.onchip_bits));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LoopPragma;
    use crate::parse::parse_kernel;

    const NEST: &str = "kernel k { array A[8][8]: f32 inout; array y[8]: f32 inout;
        loop i 0 8 { loop j 0 8 { S1: A[i][j] = A[i][j] * 2; } }
        loop t 2 8 { S2: y[t] = y[t - 2] + 1; } }";

    fn tags(src: &str, f: impl Fn(&KernelIr, &mut PragmaConfig)) -> Vec<ConstraintTag> {
        let k = parse_kernel(src).unwrap();
        let cal = Calibration::default();
        let a = Analysis::new(&k, &cal).unwrap();
        let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
        let mut c = PragmaConfig::default_for(&k);
        f(&k, &mut c);
        p.check_config(&c).into_iter().map(|v| v.tag).collect()
    }

    #[test]
    fn default_config_is_valid() {
        assert!(tags(NEST, |_, _| {}).is_empty());
    }

    #[test]
    fn targeted_violations() {
        use ConstraintTag::*;
        assert_eq!(tags(NEST, |_, c| c.loops[0].pip = true), vec![FullUnrollUnderPipeline]);
        assert!(tags(NEST, |_, c| {
            c.loops[0].pip = true;
            c.loops[1].uf = 8;
        })
        .is_empty());
        assert_eq!(
            tags(NEST, |_, c| {
                c.loops[0].pip = true;
                c.loops[1] = LoopPragma { pip: true, uf: 8, tile: 1 };
            }),
            vec![OnePipelinePerStatement]
        );
        assert_eq!(
            tags(NEST, |_, c| {
                c.loops[0].pip = true;
                c.loops[1].uf = 8;
                c.cache.insert((1, 0));
            }),
            vec![NoCacheUnderPipeline]
        );
        assert_eq!(tags(NEST, |_, c| c.loops[2].uf = 3), vec![DependenceDistance]);
        assert!(tags(NEST, |_, c| c.loops[2].uf = 2).is_empty());
        assert_eq!(tags(NEST, |_, c| c.loops[1].uf = 3), vec![UnrollDivides]);
        assert_eq!(tags(NEST, |_, c| c.loops[1].uf = 9), vec![UnrollBounds]);
        assert_eq!(tags(NEST, |_, c| c.loops[1].tile = 3), vec![TileDivides]);
        assert_eq!(tags(NEST, |_, c| {
            c.cache.insert((2, 0));
        }),
        vec![CachePath]);
    }
}
