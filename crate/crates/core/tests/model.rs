// SPDX-License-Identifier: Apache-2.0

mod common;

use num_rational::Ratio;
use pragmabound::config::PragmaConfig;
use pragmabound::ir::OpKind;
use pragmabound::latency::Model;
use pragmabound::nlp::export::{config_assignment, export_model, Model as Exported};
use pragmabound::nlp::{build_problem, space, ProblemOptions};
use pragmabound::Resources;
use rand::SeedableRng;

fn sum(n: u64, tree: bool) -> String {
    let tree = if tree { "on" } else { "off" };
    format!("kernel t {{ option tree_reduction = {tree}; array a[{n}]: f32 in; array s: f32 inout; loop i 0 {n} {{ S: s += a[i]; }} }}")
}

#[test]
fn unrolled_sums_form_balanced_trees() {
    for n in 2..=32u64 {
        for tree in [true, false] {
            let (k, a, cal) = common::kernel(&sum(n, tree));
            let add = cal.latency(OpKind::Add);
            let m = Model::new(&k, &a, &cal, Resources::unbounded());
            let want = if tree { n.next_power_of_two().ilog2() as u64 * add } else { n * add };
            assert_eq!(m.region_bound(0, n).unwrap(), (want, false), "n={n} tree={tree}");
        }
    }
}

fn bicg(n: u64) -> String {
    format!(
        "kernel b {{ array A[{n}][{n}]: f32 in; array r[{n}]: f32 in; array p[{n}]: f32 in;
          array s[{n}]: f32 inout; array q[{n}]: f32 inout;
          loop i 0 {n} {{ loop j 0 {n} {{ S2: s[j] += r[i] * A[i][j]; S3: q[i] += A[i][j] * p[j]; }} }} }}"
    )
}

/// One row of bicg: the s updates are independent chains of one multiply
/// and one add; the q updates reduce into a tree under the multiplies.
#[test]
fn bicg_row_is_bounded_by_its_reduction_tree() {
    for n in [4u64, 8, 16] {
        let (k, a, cal) = common::kernel(&bicg(n));
        let (add, mul) = (cal.latency(OpKind::Add), cal.latency(OpKind::Mul));
        let m = Model::new(&k, &a, &cal, Resources::unbounded());
        let want = (add + mul).max(add * n.ilog2() as u64 + mul);
        assert_eq!(m.region_bound(0, n).unwrap().0, want, "n={n}");
    }
}

const MEM: &str = "kernel m { array a[64]: f32 in; array b[64]: f32 inout; array c[32]: f32 in; array d[64]: f32 out;
  loop i 0 64 { S0: b[i] = b[i] + a[i]; }
  loop j 0 32 { S1: d[j] = b[j] * c[j]; } }";

#[test]
fn transfers_count_each_direction() {
    let (k, a, cal) = common::kernel(MEM);
    let m = Model::new(&k, &a, &cal, Resources::unbounded());
    let c = PragmaConfig::default_for(&k);
    let beats = |elems: u64| (elems * 32).div_ceil(cal.burst_bits);
    let idx = |name: &str| k.arrays.iter().position(|x| x.name == name).unwrap();
    assert_eq!(m.transfer(&c, idx("a"), None), beats(64));
    assert_eq!(m.transfer(&c, idx("b"), None), 2 * beats(64));
    assert_eq!(m.transfer(&c, idx("c"), None), beats(32));
    assert_eq!(m.transfer(&c, idx("d"), None), beats(32));
}

#[test]
fn levels_take_the_max_and_add_up() {
    let (k, a, cal) = common::kernel(MEM);
    let m = Model::new(&k, &a, &cal, Resources::unbounded());
    let mut c = PragmaConfig::default_for(&k);
    let (total, levels) = m.memory(&c);
    assert_eq!(levels.len(), 1);
    assert_eq!(total, levels[0].arrays.iter().map(|t| t.cycles).max().unwrap());
    assert_eq!(total, m.transfer(&c, 1, None));

    // Moving c and d under loop j opens a second level.
    c.cache.insert((1, 2));
    c.cache.insert((1, 3));
    let (total, levels) = m.memory(&c);
    assert_eq!(levels.len(), 2);
    let inner = m.transfer(&c, 2, Some(1)).max(m.transfer(&c, 3, Some(1)));
    assert_eq!(levels[1].cycles, inner);
    assert_eq!(total, m.transfer(&c, 1, None) + inner);
}

/// The exported model, evaluated on its own, agrees with the bound report.
#[test]
fn exported_objective_matches_the_bound_report() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0;
    for (name, per) in [("atax", 334), ("bicg", 333), ("gemm", 333)] {
        let (k, a, cal) = common::kernel(&common::benchmark(name));
        let res = Resources::from_dsp_budget(&cal, cal.dsp_available);
        let p = build_problem(&k, &a, &cal, res.clone(), ProblemOptions::default()).unwrap();
        let exported = Exported::parse(&export_model(&p)).unwrap();
        let m = Model::new(&k, &a, &cal, res);
        for _ in 0..per {
            let c = space::random_valid(&p, &mut rng, 1000).unwrap();
            let report = m.program_bound(&c).unwrap();
            assert_eq!(report.total, report.computation + report.communication);
            let obj = exported.objective(&config_assignment(&k, &c)).unwrap();
            assert_eq!(obj, Ratio::from_integer(report.total as i128), "{name}: {}", c.display(&k));
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
}
