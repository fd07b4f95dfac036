// SPDX-License-Identifier: Apache-2.0

//! Plain enumeration of the configuration space. Used to count it and as a
//! reference for the solver on small kernels.

use super::NlpProblem;
use crate::config::{LoopPragma, PragmaConfig};
use crate::ir::{ArrayIdx, KernelIr, LoopIdx};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceCount {
    /// Product of every variable's domain size, ignoring all constraints.
    pub structural: u128,
    /// Configurations passing every constraint, when the structural space
    /// was small enough to enumerate.
    pub valid: Option<u64>,
}

/// Per-loop unroll and tile domains: divisors for constant trip counts,
/// `[1]` otherwise.
fn factor_domain(p: &NlpProblem, l: LoopIdx) -> Vec<u64> {
    let t = &p.a.trip[l];
    if t.is_constant() {
        t.divisors.clone()
    } else {
        vec![1]
    }
}

/// Loops that may hold a cache of `array` (those whose body accesses it).
fn cache_loops(k: &KernelIr, array: ArrayIdx) -> Vec<LoopIdx> {
    (0..k.loops.len()).filter(|&l| k.arrays_under(l).contains(&array)).collect()
}

pub fn structural_size(p: &NlpProblem) -> u128 {
    let k = p.k;
    let mut n: u128 = 1;
    for l in 0..k.loops.len() {
        let d = factor_domain(p, l).len() as u128;
        n = n.saturating_mul(2 * d * d);
    }
    for arr in k.arrays_used() {
        n = n.saturating_mul(1u128 << cache_loops(k, arr).len().min(100));
    }
    n
}

/// Visit every configuration in the structural space that passes
/// `check_config`. Returns `None` without visiting anything if the space
/// holds more than `limit` points.
pub fn for_each_valid(p: &NlpProblem, limit: u128, mut f: impl FnMut(&PragmaConfig)) -> Option<u64> {
    if structural_size(p) > limit {
        return None;
    }
    let k = p.k;
    let n = k.loops.len();
    let domains: Vec<Vec<u64>> = (0..n).map(|l| factor_domain(p, l)).collect();
    let cache_slots: Vec<(LoopIdx, ArrayIdx)> =
        k.arrays_used().into_iter().flat_map(|arr| cache_loops(k, arr).into_iter().map(move |l| (l, arr))).collect();

    // Mixed-radix counter over pip, uf, tile per loop and one bit per
    // cache slot.
    let mut radix: Vec<usize> = Vec::new();
    for d in &domains {
        radix.extend([2, d.len(), d.len()]);
    }
    radix.extend(std::iter::repeat_n(2, cache_slots.len()));
    let mut digits = vec![0usize; radix.len()];
    let mut valid = 0u64;
    loop {
        let mut c = PragmaConfig { loops: Vec::with_capacity(n), cache: BTreeSet::new() };
        for (l, d) in domains.iter().enumerate() {
            c.loops.push(LoopPragma { pip: digits[3 * l] == 1, uf: d[digits[3 * l + 1]], tile: d[digits[3 * l + 2]] });
        }
        for (i, &slot) in cache_slots.iter().enumerate() {
            if digits[3 * n + i] == 1 {
                c.cache.insert(slot);
            }
        }
        if p.check_config(&c).is_empty() {
            valid += 1;
            f(&c);
        }
        let mut i = digits.len();
        loop {
            if i == 0 {
                return Some(valid);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < radix[i] {
                break;
            }
            digits[i] = 0;
        }
    }
}

pub fn count_space(p: &NlpProblem, enumerate_limit: u128) -> SpaceCount {
    SpaceCount { structural: structural_size(p), valid: for_each_valid(p, enumerate_limit, |_| {}) }
}

/// Reference optimum: the smallest objective over all valid configurations,
/// ties broken by the configuration key.
pub fn brute_force(p: &NlpProblem, limit: u128) -> Option<Option<(u64, PragmaConfig)>> {
    let mut best: Option<(u64, Vec<u64>, PragmaConfig)> = None;
    for_each_valid(p, limit, |c| {
        let Ok(obj) = p.model.evaluate(c) else { return };
        let key = c.key(p.k);
        if best.as_ref().is_none_or(|(b, bk, _)| (obj, &key) < (*b, bk)) {
            best = Some((obj, key, c.clone()));
        }
    })?;
    Some(best.map(|(o, _, c)| (o, c)))
}

/// Draw a random valid configuration: a random pipeline placement per
/// top-level nest, unroll factors from the remaining domains, one random
/// antichain of cache loops per array and random tiles. Draws violating a
/// resource limit are retried; `None` after `attempts` failures.
pub fn random_valid(p: &NlpProblem, rng: &mut impl Rng, attempts: usize) -> Option<PragmaConfig> {
    let k = p.k;
    for _ in 0..attempts {
        let mut c = PragmaConfig::default_for(k);
        for node in &k.root {
            let options = super::solve::placements(node);
            for l in options[rng.gen_range(0..options.len())].clone() {
                c.loops[l].pip = true;
            }
        }
        for l in 0..k.loops.len() {
            let dom = factor_domain(p, l);
            c.loops[l].tile = dom[rng.gen_range(0..dom.len())];
            if c.under_pipeline(k, l) {
                c.loops[l].uf = p.a.trip[l].tc_max.max(1);
                continue;
            }
            let above_pipeline = c.pipelined().any(|q| k.encloses(l, q));
            let cap = p.a.uf_cap[l].unwrap_or(u64::MAX);
            let dom: Vec<u64> = if p.opts.fine_grained_only && above_pipeline {
                vec![1]
            } else {
                dom.into_iter().filter(|&d| d <= cap.max(1)).collect()
            };
            c.loops[l].uf = dom[rng.gen_range(0..dom.len())];
        }
        for arr in k.arrays_used() {
            let allowed: Vec<LoopIdx> = cache_loops(k, arr).into_iter().filter(|&l| !c.under_pipeline(k, l)).collect();
            let sets = super::solve::antichains(k, &allowed, 64);
            for l in &sets[rng.gen_range(0..sets.len())] {
                c.cache.insert((*l, arr));
            }
        }
        if p.check_config(&c).is_empty() {
            return Some(c);
        }
    }
    None
}
