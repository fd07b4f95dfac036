// SPDX-License-Identifier: Apache-2.0

mod common;

use pragmabound::analysis::{DepKind, Dependence};
use pragmabound::config::PragmaConfig;
use pragmabound::ir::{KernelIr, Node, StmtIdx};
use pragmabound::oracle::{simulate_config, SimOptions};
use pragmabound::{Calibration, Resources};
use proptest::prelude::*;
use rand::SeedableRng;
use std::collections::{BTreeMap, HashMap};

fn recurrence(distance: u64) -> String {
    format!("kernel r {{ array y[20]: f32 inout; loop j {distance} 20 {{ S: y[j] = y[j - {distance}] + 1; }} }}")
}

#[test]
fn distance_two_recurrence_halves_the_add_latency() {
    let (_, a, cal) = common::kernel(&recurrence(2));
    assert_eq!(cal.latency(pragmabound::ir::OpKind::Add), 5);
    assert_eq!(a.min_ii[0], 3);
    assert_eq!(a.uf_cap[0], Some(2));
}

proptest! {
    #[test]
    fn recurrence_ii_is_latency_over_distance(distance in 1u64..5, lat in 1u64..24) {
        let k = pragmabound::parse_kernel(&recurrence(distance)).unwrap();
        let cal = Calibration::default().with_latency(pragmabound::ir::OpKind::Add, lat);
        let a = pragmabound::analysis::Analysis::new(&k, &cal).unwrap();
        prop_assert_eq!(a.min_ii[0], lat.div_ceil(distance));
    }
}

#[test]
fn reductions_pipeline_at_their_op_latency() {
    for (src, lat) in [
        ("kernel r { array a[8]: f32 in; array s: f32 inout; loop i 0 8 { S: s += a[i] * 3; } }", 5),
        ("kernel r { array a[8]: f32 in; array s: f32 inout; loop i 0 8 { S: s *= a[i] + 3; } }", 4),
    ] {
        let (_, a, _) = common::kernel(src);
        assert!(a.is_reduction(0));
        assert_eq!(a.reductions[0].il_reduction, lat);
        assert_eq!(a.min_ii[0], lat);
    }
    for name in ["atax", "bicg", "gemm", "gesummv", "2mm"] {
        let (_, a, _) = common::kernel(&common::benchmark(name));
        for r in a.reductions.iter().enumerate().filter(|(_, r)| r.is_reduction) {
            assert_eq!(a.min_ii[r.0], r.1.il_reduction, "{name} {}", r.1.loop_id);
        }
    }
}

/// A carried dependence that only links different unrolled copies of a
/// statement does not bind the pipeline: the copies sit at different
/// offsets of one iteration.
#[test]
fn recurrences_between_different_copies_do_not_bind() {
    let src = "kernel c { array A[11][11]: f32 in; array B[11][11]: f32 inout;
        loop i 2 5 { loop j 2 4 { S: B[i - 2][j] = (A[j - 2][3] - A[4][i - 1]) * B[j - 2][j - 1]; } } }";
    let (k, a, cal) = common::kernel(src);
    assert!(a.deps.iter().any(|d| d.kind == DepKind::RaW && d.carrier == Some(0)));
    assert_eq!(a.min_ii[0], 1);
    let mut c = PragmaConfig::default_for(&k);
    c.loops[0].pip = true;
    c.loops[1].uf = 2;
    let sim = simulate_config(&k, &c, &Resources::unbounded(), &cal, SimOptions::default()).unwrap();
    assert_eq!(sim.initiation_intervals, vec![("i".to_string(), 1)]);
}

type Key = (StmtIdx, StmtIdx, usize, DepKind, Option<usize>);

/// Every statement instance in program order with its iterator values.
fn trace(k: &KernelIr) -> Vec<(StmtIdx, Vec<i64>)> {
    fn walk(k: &KernelIr, nodes: &[Node], env: &mut Vec<i64>, out: &mut Vec<(StmtIdx, Vec<i64>)>) {
        for n in nodes {
            match n {
                Node::Stmt(s) => out.push((*s, env.clone())),
                Node::Loop { id, body } => {
                    for v in k.loops[*id].lower.eval(env)..k.loops[*id].upper.eval(env) {
                        env[*id] = v;
                        walk(k, body, env, out);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(k, &k.root, &mut vec![0; k.loops.len()], &mut out);
    out
}

/// Dependences by direct execution: value-based read-after-write and
/// memory-based write-after-read and write-after-write, with the smallest
/// distance at the carrying loop.
fn brute_force(k: &KernelIr) -> BTreeMap<Key, Option<u64>> {
    let classify = |(s, es): &(StmtIdx, Vec<i64>), (t, et): &(StmtIdx, Vec<i64>)| {
        let common = k.statements[*s].loops.iter().zip(&k.statements[*t].loops).take_while(|(x, y)| x == y);
        for (&l, _) in common {
            if es[l] != et[l] {
                return Some((Some(l), Some((et[l] - es[l]) as u64)));
            }
        }
        (s != t).then_some((None, None))
    };
    let mut out: BTreeMap<Key, Option<u64>> = BTreeMap::new();
    let mut record = |src: &(StmtIdx, Vec<i64>), dst: &(StmtIdx, Vec<i64>), array, kind| {
        if let Some((carrier, dist)) = classify(src, dst) {
            let e = out.entry((src.0, dst.0, array, kind, carrier)).or_insert(dist);
            *e = (*e).min(dist);
        }
    };
    type Cell = (usize, Vec<i64>);
    let mut last_write: HashMap<Cell, (StmtIdx, Vec<i64>)> = HashMap::new();
    let mut writes: HashMap<Cell, Vec<(StmtIdx, Vec<i64>)>> = HashMap::new();
    let mut reads: HashMap<Cell, Vec<(StmtIdx, Vec<i64>)>> = HashMap::new();
    for inst in trace(k) {
        let st = &k.statements[inst.0];
        for r in st.reads() {
            let cell = (r.array, r.subscripts.iter().map(|a| a.eval(&inst.1)).collect());
            if let Some(w) = last_write.get(&cell) {
                record(w, &inst, r.array, DepKind::RaW);
            }
            reads.entry(cell).or_default().push(inst.clone());
        }
        let cell: Cell = (st.lhs.array, st.lhs.subscripts.iter().map(|a| a.eval(&inst.1)).collect());
        for r in reads.get(&cell).into_iter().flatten() {
            record(r, &inst, cell.0, DepKind::WaR);
        }
        for w in writes.get(&cell).into_iter().flatten() {
            record(w, &inst, cell.0, DepKind::WaW);
        }
        writes.entry(cell.clone()).or_default().push(inst.clone());
        last_write.insert(cell, inst);
    }
    out
}

fn covered(deps: &[Dependence], key: &Key, dist: Option<u64>) -> bool {
    deps.iter().any(|d| {
        (d.src, d.dst, d.array, d.kind, d.carrier) == *key
            && match (d.distance, dist) {
                (None, _) => true,
                (Some(x), Some(y)) => x <= y,
                (Some(_), None) => false,
            }
    })
}

#[test]
fn dependences_cover_every_executed_conflict() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for i in 0..300 {
        let src = common::random_kernel(&mut rng, &format!("d{i}"));
        let (k, a, _) = common::kernel(&src);
        for (key, dist) in brute_force(&k) {
            assert!(covered(&a.deps, &key, dist), "{src}\nmissing {key:?} at distance {dist:?}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn benchmark_dependences_are_exact_where_enumerable() {
    // atax: tmp flows S1 -> S2 -> S3 within an i1 iteration, y accumulates
    // across i1.
    let (k, a, _) = common::kernel(&common::benchmark("atax"));
    let raw: Vec<(String, String, Option<String>)> = a
        .deps
        .iter()
        .filter(|d| d.kind == DepKind::RaW)
        .map(|d| (k.statements[d.src].id.clone(), k.statements[d.dst].id.clone(), d.carrier.map(|l| k.loops[l].iterator.clone())))
        .collect();
    for want in [("S1", "S2", None), ("S2", "S3", None), ("S2", "S2", Some("j0")), ("S3", "S3", Some("i1")), ("S0", "S3", None)] {
        let want = (want.0.to_string(), want.1.to_string(), want.2.map(String::from));
        assert!(raw.contains(&want), "{want:?} not in {raw:?}");
    }
    assert!(!raw.iter().any(|r| r.0 == "S3" && r.1 == "S2"));
}
