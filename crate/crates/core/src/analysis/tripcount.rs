// SPDX-License-Identifier: Apache-2.0

use super::domain::for_each_point;
use super::AnalysisError;
use crate::ir::{KernelIr, LoopIdx};
use num_integer::Integer;
use serde::{Deserialize, Serialize};

/// Executions of a loop enumerated at most this many times when its bounds
/// depend on outer iterators.
pub const ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripCountInfo {
    pub loop_id: String,
    pub tc_min: u64,
    pub tc_max: u64,
    /// Reduced fraction `(total iterations, executions)`.
    pub tc_avg: (u64, u64),
    /// Number of times the loop is entered.
    pub executions: u64,
    /// Divisors of `tc_max` when the trip count is constant, else `[1]`.
    pub divisors: Vec<u64>,
}

impl TripCountInfo {
    pub fn is_constant(&self) -> bool {
        self.tc_min == self.tc_max
    }

    /// Total iterations across all executions.
    pub fn total(&self) -> u64 {
        self.executions * self.tc_avg.0 / self.tc_avg.1
    }
}

pub fn divisors(n: u64) -> Vec<u64> {
    if n == 0 {
        return vec![1];
    }
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

fn reduce(num: u64, den: u64) -> (u64, u64) {
    if den == 0 {
        return (0, 1);
    }
    let g = num.gcd(&den).max(1);
    (num / g, den / g)
}

pub fn trip_counts(k: &KernelIr) -> Result<Vec<TripCountInfo>, AnalysisError> {
    (0..k.loops.len()).map(|l| trip_count(k, l)).collect()
}

fn trip_count(k: &KernelIr, l: LoopIdx) -> Result<TripCountInfo, AnalysisError> {
    let info = &k.loops[l];
    let above = k.loops_above(l);
    let constant_bounds = info.lower.is_constant() && info.upper.is_constant();
    let (mut tc_min, mut tc_max, mut total) = (u64::MAX, 0u64, 0u64);
    let execs;
    if constant_bounds {
        // Executions still depend on whether enclosing loops run at all.
        let tc = (info.upper.constant - info.lower.constant).max(0) as u64;
        execs = executions(k, &above)?;
        tc_min = tc;
        tc_max = tc;
        total = tc * execs;
    } else {
        let mut values = vec![0i64; k.loops.len()];
        let mut count = 0u64;
        let mut overflow = false;
        for_each_point(k, &above, &mut values, &mut |v| {
            count += 1;
            if count > ENUMERATION_CAP {
                overflow = true;
                return false;
            }
            let tc = (info.upper.eval(v) - info.lower.eval(v)).max(0) as u64;
            tc_min = tc_min.min(tc);
            tc_max = tc_max.max(tc);
            total += tc;
            true
        });
        if overflow {
            return Err(AnalysisError::EnumerationTooLarge(info.iterator.clone()));
        }
        execs = count;
    }
    if execs == 0 {
        tc_min = 0;
        tc_max = 0;
    }
    let divisors = if tc_min == tc_max { divisors(tc_max) } else { vec![1] };
    Ok(TripCountInfo {
        loop_id: info.iterator.clone(),
        tc_min,
        tc_max,
        tc_avg: if execs == 0 { (0, 1) } else { reduce(total, execs) },
        executions: execs,
        divisors,
    })
}

fn executions(k: &KernelIr, above: &[LoopIdx]) -> Result<u64, AnalysisError> {
    if above.iter().all(|&a| k.loops[a].lower.is_constant() && k.loops[a].upper.is_constant()) {
        return Ok(above
            .iter()
            .map(|&a| (k.loops[a].upper.constant - k.loops[a].lower.constant).max(0) as u64)
            .product());
    }
    let mut values = vec![0i64; k.loops.len()];
    let mut count = 0u64;
    let complete = for_each_point(k, above, &mut values, &mut |_| {
        count += 1;
        count <= ENUMERATION_CAP
    });
    if !complete {
        return Err(AnalysisError::EnumerationTooLarge(k.loops[above[above.len() - 1]].iterator.clone()));
    }
    Ok(count)
}
