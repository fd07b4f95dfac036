// SPDX-License-Identifier: Apache-2.0

//! Concrete enumeration of loop iteration domains.

use crate::ir::{Affine, KernelIr, LoopIdx};

/// Closed integer interval; `lo > hi` means empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn len(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            (self.hi - self.lo + 1) as u64
        }
    }

    pub fn intersects(&self, o: &Interval) -> bool {
        !self.is_empty() && !o.is_empty() && self.lo <= o.hi && o.lo <= self.hi
    }
}

/// Visit every point of the domain spanned by `path` (outermost first).
/// `values` holds iterator values indexed by loop; entries for loops outside
/// `path` must already be set when referenced by bounds. Returning `false`
/// from `f` stops the walk; the function then returns `false`.
pub fn for_each_point(
    k: &KernelIr,
    path: &[LoopIdx],
    values: &mut [i64],
    f: &mut dyn FnMut(&[i64]) -> bool,
) -> bool {
    match path.split_first() {
        None => f(values),
        Some((&l, rest)) => {
            let lo = k.loops[l].lower.eval(values);
            let hi = k.loops[l].upper.eval(values);
            for v in lo..hi {
                values[l] = v;
                if !for_each_point(k, rest, values, f) {
                    return false;
                }
            }
            true
        }
    }
}

/// Interval of values an affine form can take when each referenced loop
/// ranges over `ranges[l]`.
pub fn affine_range(a: &Affine, ranges: &[Interval]) -> Interval {
    let mut lo = a.constant;
    let mut hi = a.constant;
    for &(l, c) in &a.terms {
        let r = ranges[l];
        if r.is_empty() {
            return Interval { lo: 1, hi: 0 };
        }
        if c >= 0 {
            lo += c * r.lo;
            hi += c * r.hi;
        } else {
            lo += c * r.hi;
            hi += c * r.lo;
        }
    }
    Interval { lo, hi }
}

/// Over-approximate value range of every iterator (interval arithmetic on
/// the bounds, outermost first).
pub fn iterator_ranges(k: &KernelIr) -> Vec<Interval> {
    let mut r = vec![Interval { lo: 0, hi: 0 }; k.loops.len()];
    for l in 0..k.loops.len() {
        let lo = affine_range(&k.loops[l].lower, &r);
        let hi = affine_range(&k.loops[l].upper, &r);
        r[l] = Interval { lo: lo.lo, hi: hi.hi - 1 };
    }
    r
}

/// True if the bounds of every loop in `path` only reference loops outside
/// `path` (so the domain is a box once outer iterators are fixed).
pub fn is_rectangular(k: &KernelIr, path: &[LoopIdx]) -> bool {
    path.iter().all(|&l| {
        let info = &k.loops[l];
        info.lower.loops().chain(info.upper.loops()).all(|x| !path.contains(&x))
    })
}
