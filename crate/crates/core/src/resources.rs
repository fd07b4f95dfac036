// SPDX-License-Identifier: Apache-2.0

//! DSP lower bound, array partition factors and on-chip buffer usage of a
//! configuration.

use crate::analysis::{Analysis, FootprintQuery};
use crate::calibration::Calibration;
use crate::config::PragmaConfig;
use crate::ir::{ArrayIdx, KernelIr, LoopIdx, Node, OpKind, StmtIdx};
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Functional units per op kind, in `OpKind::ALL` order.
pub type Units = [Ratio<u128>; 4];

pub fn zero() -> Units {
    [Ratio::from_integer(0); 4]
}

fn kind_index(k: OpKind) -> usize {
    OpKind::ALL.iter().position(|&x| x == k).expect("known op kind")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayPartition {
    pub array: String,
    pub factors: Vec<u64>,
    pub product: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    /// Floor of the (fractional) minimal DSP count.
    pub dsp_min_used: u64,
    pub onchip_bits_used: u64,
    pub partitions: Vec<ArrayPartition>,
}

/// Operations of one statement instance, per kind.
fn stmt_units(k: &KernelIr, s: StmtIdx) -> Units {
    let mut u = zero();
    for op in k.statements[s].ops() {
        u[kind_index(op)] += 1;
    }
    u
}

fn add(a: &mut Units, b: &Units) {
    for i in 0..4 {
        a[i] += b[i];
    }
}

fn scale(a: &mut Units, f: Ratio<u128>) {
    for x in a.iter_mut() {
        *x *= f;
    }
}

/// Every statement under `l` replicated by the unroll factors between `l`
/// (exclusive) and the statement.
fn replicated_units(k: &KernelIr, c: &PragmaConfig, l: LoopIdx) -> Units {
    let mut total = zero();
    for s in k.stmts_under(l) {
        let mut u = stmt_units(k, s);
        let mcu: u128 = k.statements[s]
            .loops
            .iter()
            .filter(|&&m| k.encloses(l, m))
            .map(|&m| c.loops[m].uf.max(1) as u128)
            .product();
        scale(&mut u, Ratio::from_integer(mcu));
        add(&mut total, &u);
    }
    total
}

fn body_units(k: &KernelIr, a: &Analysis, c: &PragmaConfig, body: &[Node]) -> Units {
    let children: Vec<Units> = body.iter().map(|n| node_units(k, a, c, n)).collect();
    combine_units(&a.components(k, body), &children)
}

/// Max inside each dependence group (members run one after another and can
/// share units), sum across groups.
pub fn combine_units(groups: &[Vec<usize>], children: &[Units]) -> Units {
    let mut total = zero();
    for comp in groups {
        let mut m = zero();
        for &i in comp {
            for j in 0..4 {
                if children[i][j] > m[j] {
                    m[j] = children[i][j];
                }
            }
        }
        add(&mut total, &m);
    }
    total
}

/// DSP count of a unit vector.
pub fn dsp_of(cal: &Calibration, u: &Units) -> Ratio<u128> {
    OpKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &op)| u[i] * Ratio::from_integer(cal.dsp(op) as u128))
        .fold(Ratio::from_integer(0), |x, y| x + y)
}

pub fn node_units(k: &KernelIr, a: &Analysis, c: &PragmaConfig, n: &Node) -> Units {
    match n {
        Node::Stmt(s) => stmt_units(k, *s),
        Node::Loop { id, body } => {
            let l = *id;
            let p = c.loops[l];
            let uf = Ratio::from_integer(p.uf.max(1) as u128);
            if p.pip {
                let mut u = replicated_units(k, c, l);
                scale(&mut u, uf / Ratio::from_integer(a.min_ii[l].max(1) as u128));
                u
            } else if c.straight_line_below(k, &a.trip, l) {
                let mut u = replicated_units(k, c, l);
                scale(&mut u, uf);
                u
            } else {
                let mut u = body_units(k, a, c, body);
                if !a.is_reduction(l) {
                    scale(&mut u, uf);
                }
                u
            }
        }
    }
}

/// Minimal DSP count under perfect sharing: sequential groups share units,
/// parallel groups and unrolled copies do not, pipelines amortize by II.
pub fn dsp_exact(k: &KernelIr, a: &Analysis, cal: &Calibration, c: &PragmaConfig) -> Ratio<u128> {
    dsp_of(cal, &body_units(k, a, c, &k.root))
}

pub fn dsp_lower_bound(k: &KernelIr, a: &Analysis, cal: &Calibration, c: &PragmaConfig) -> u64 {
    dsp_exact(k, a, cal, c).to_integer() as u64
}

/// Loops whose iterator indexes dimension `d` of some access to `array`.
pub fn partition_loops(k: &KernelIr, array: ArrayIdx) -> Vec<BTreeSet<LoopIdx>> {
    let mut out = vec![BTreeSet::new(); k.arrays[array].dims.len()];
    for st in &k.statements {
        let accesses = std::iter::once(&st.lhs).chain(st.reads());
        for acc in accesses.filter(|x| x.array == array) {
            for (d, sub) in acc.subscripts.iter().enumerate() {
                out[d].extend(sub.loops());
            }
        }
    }
    out
}

/// Smallest factor per dimension that every relevant unroll factor divides.
pub fn partition_factors(k: &KernelIr, c: &PragmaConfig) -> Vec<ArrayPartition> {
    k.arrays_used()
        .into_iter()
        .map(|arr| {
            let factors: Vec<u64> = partition_loops(k, arr)
                .iter()
                .map(|ls| ls.iter().fold(1u64, |acc, &l| acc.lcm(&c.loops[l].uf.max(1))))
                .collect();
            let product = factors.iter().fold(1u64, |p, &f| p.saturating_mul(f));
            ArrayPartition { array: k.arrays[arr].name.clone(), factors, product }
        })
        .collect()
}

/// Statements that access `array` and are not under a cache point of it.
pub fn uncovered_stmts(k: &KernelIr, c: &PragmaConfig, array: ArrayIdx) -> Vec<StmtIdx> {
    (0..k.statements.len())
        .filter(|&s| {
            let st = &k.statements[s];
            let touches = st.lhs.array == array || st.reads().iter().any(|r| r.array == array);
            touches && !st.loops.iter().any(|&l| c.cache.contains(&(l, array)))
        })
        .collect()
}

/// Number of iterations of `l` one on-chip strip covers under its tile factor.
pub fn strip_iterations(a: &Analysis, c: &PragmaConfig, l: LoopIdx) -> Option<u64> {
    let t = c.loops[l].tile.max(1);
    (t > 1).then(|| a.trip[l].tc_max.div_ceil(t).max(1))
}

/// Bits held on chip: one strip of each cached block plus every array
/// transferred at program level in full.
pub fn onchip_usage(k: &KernelIr, a: &Analysis, cal: &Calibration, c: &PragmaConfig) -> u64 {
    let mut bits = 0u64;
    for &(l, arr) in &c.cache {
        let q = FootprintQuery { array: arr, scope: Some(l), stmts: k.stmts_under(l), tile: strip_iterations(a, c, l) };
        bits += a.footprint(k, cal, &q).bits(k.arrays[arr].element_bits);
    }
    for arr in k.arrays_used() {
        let stmts = uncovered_stmts(k, c, arr);
        if !stmts.is_empty() {
            let q = FootprintQuery { array: arr, scope: None, stmts, tile: None };
            bits += a.footprint(k, cal, &q).bits(k.arrays[arr].element_bits);
        }
    }
    bits
}

pub fn report(k: &KernelIr, a: &Analysis, cal: &Calibration, c: &PragmaConfig) -> ResourceReport {
    ResourceReport {
        dsp_min_used: dsp_lower_bound(k, a, cal, c),
        onchip_bits_used: onchip_usage(k, a, cal, c),
        partitions: partition_factors(k, c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LoopPragma;
    use crate::parse::parse_kernel;

    fn setup(src: &str) -> (KernelIr, Analysis, Calibration) {
        let k = parse_kernel(src).unwrap();
        let cal = Calibration::default();
        let a = Analysis::new(&k, &cal).unwrap();
        (k, a, cal)
    }

    #[test]
    fn unrolled_mul_statement() {
        let (k, a, cal) = setup("kernel k { array x[210]: f32 out; array y[210]: f32 in; loop i 0 210 { S: x[i] = y[i] * y[i]; } }");
        let mut c = PragmaConfig::default_for(&k);
        c.loops[0].uf = 210;
        assert_eq!(dsp_lower_bound(&k, &a, &cal, &c), 630);
        c.loops[0] = LoopPragma { pip: true, uf: 1, tile: 1 };
        assert_eq!(dsp_lower_bound(&k, &a, &cal, &c), 3);
    }

    #[test]
    fn dependent_statements_share() {
        let (k, a, cal) = setup(
            "kernel k { array x: f32 inout; array y: f32 inout; array z: f32 in;
             S1: x = z * z; S2: y = x * z; }",
        );
        let c = PragmaConfig::default_for(&k);
        assert_eq!(dsp_lower_bound(&k, &a, &cal, &c), 3);
        let (k, a, cal) = setup(
            "kernel k { array x: f32 out; array y: f32 out; array z: f32 in;
             S1: x = z * z; S2: y = z * z; }",
        );
        assert_eq!(dsp_lower_bound(&k, &a, &cal, &PragmaConfig::default_for(&k)), 6);
    }

    #[test]
    fn initiation_interval_halves_units() {
        let (k, a, cal) = setup(
            "kernel k { array y[16]: f32 inout; loop j 2 16 { S: y[j] = y[j - 2] * 3; } }",
        );
        let mut c = PragmaConfig::default_for(&k);
        c.loops[0] = LoopPragma { pip: true, uf: 2, tile: 1 };
        assert_eq!(a.min_ii[0], 2);
        assert_eq!(dsp_exact(&k, &a, &cal, &c), Ratio::from_integer(3));
    }

    #[test]
    fn partitions_follow_unroll_factors() {
        let (k, _, _) = setup(
            "kernel k { array D[8][8]: f32 inout; loop i 0 8 { loop j 0 8 { S: D[i][j] = D[i][j] * 2; } } }",
        );
        let mut c = PragmaConfig::default_for(&k);
        assert_eq!(partition_factors(&k, &c)[0].factors, vec![1, 1]);
        c.loops[0].uf = 4;
        c.loops[1].uf = 8;
        let p = &partition_factors(&k, &c)[0];
        assert_eq!((p.factors.clone(), p.product), (vec![4, 8], 32));
    }

    #[test]
    fn onchip_counts_caches_and_top_level() {
        let (k, a, cal) = setup(
            "kernel k { array A[4][8]: f32 in; array s[4]: f32 inout;
             loop i 0 4 { loop j 0 8 { S: s[i] += A[i][j]; } } }",
        );
        let mut c = PragmaConfig::default_for(&k);
        assert_eq!(onchip_usage(&k, &a, &cal, &c), (32 + 4) * 32);
        c.cache.insert((1, 0));
        assert_eq!(onchip_usage(&k, &a, &cal, &c), (8 + 4) * 32);
        c.cache.clear();
        c.cache.insert((0, 0));
        c.loops[0].tile = 2;
        assert_eq!(onchip_usage(&k, &a, &cal, &c), (16 + 4) * 32);
    }
}
