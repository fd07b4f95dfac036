// SPDX-License-Identifier: Apache-2.0

mod common;

use num_rational::Ratio;
use pragmabound::nlp::export::{config_assignment, constraint_tag, export_model, Model};
use pragmabound::nlp::{build_problem, space, ProblemOptions};
use pragmabound::Resources;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[test]
fn round_trip_on_random_valid_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let kernels: Vec<String> = ["atax", "bicg", "gemm", "gesummv"].iter().map(|n| common::benchmark(n)).collect();
    for src in kernels.iter().map(String::as_str).chain(common::SMALL.iter().map(|s| s.1)) {
        let (k, a, cal) = common::kernel(src);
        let p = build_problem(&k, &a, &cal, Resources::from_dsp_budget(&cal, cal.dsp_available), ProblemOptions::default())
            .unwrap();
        let model = Model::parse(&export_model(&p)).unwrap();
        for _ in 0..100 {
            let c = space::random_valid(&p, &mut rng, 1000).unwrap();
            let assign = config_assignment(&k, &c);
            let expected = p.objective(&c).unwrap();
            assert_eq!(model.objective(&assign).unwrap(), Ratio::from_integer(expected as i128), "{}", c.display(&k));
            assert!(model.violated(&assign).unwrap().is_empty(), "{}", c.display(&k));
        }
    }
}

#[test]
fn exported_constraints_agree_with_check_config() {
    // Every configuration in the enumerable space (resource limits tight
    // enough to bind): the exported constraints reject exactly the rules
    // check_config reports.
    for (name, src) in common::SMALL {
        let (k, a, cal) = common::kernel(src);
        let cal = common::tight(cal);
        let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
        let model = Model::parse(&export_model(&p)).unwrap();
        let space = pragmabound::nlp::space::structural_size(&p);
        assert!(space < 1_000_000, "{name}");
        let mut seen = 0;
        pragmabound::nlp::space::for_each_valid(&p, u128::MAX, |c| {
            seen += 1;
            let assign = config_assignment(&k, c);
            assert!(model.violated(&assign).unwrap().is_empty(), "{name}: {}", c.display(&k));
            assert_eq!(model.objective(&assign).unwrap(), Ratio::from_integer(p.objective(c).unwrap() as i128));
        });
        assert!(seen > 0, "{name}");
    }
}

#[test]
fn invalid_configs_violate_the_same_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    use rand::Rng;
    for (name, src) in common::SMALL {
        let (k, a, cal) = common::kernel(src);
        let cal = common::tight(cal);
        let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
        let model = Model::parse(&export_model(&p)).unwrap();
        for _ in 0..300 {
            // Random point of the structural space.
            let mut c = pragmabound::config::PragmaConfig::default_for(&k);
            for l in 0..k.loops.len() {
                let t = &a.trip[l];
                let dom = if t.is_constant() { t.divisors.clone() } else { vec![1] };
                c.loops[l].pip = rng.gen_bool(0.4);
                c.loops[l].uf = dom[rng.gen_range(0..dom.len())];
                c.loops[l].tile = dom[rng.gen_range(0..dom.len())];
                for arr in k.arrays_under(l) {
                    if rng.gen_bool(0.3) {
                        c.cache.insert((l, arr));
                    }
                }
            }
            let expected: BTreeSet<_> = p.check_config(&c).into_iter().map(|v| v.tag).collect();
            let got: BTreeSet<_> =
                model.violated(&config_assignment(&k, &c)).unwrap().iter().map(|n| constraint_tag(n).unwrap()).collect();
            assert_eq!(got, expected, "{name}: {}", c.display(&k));
        }
    }
}

#[test]
fn single_loop_golden() {
    let (k, a, cal) = common::kernel("kernel scale { array x[4]: f32 inout; loop i 0 4 { S0: x[i] = x[i] * 3; } }");
    let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
    let text = export_model(&p);
    let golden = "\
# pragma-selection model for kernel `scale`
# fine_grained_only = false, max_partition = 1024
# variables
var uf_i integer in {1, 2, 4};
var tile_i integer in {1, 2, 4};
var pip_i binary;
var cache_i_x binary;
# region bounds per unroll factor (missing entries are undefined)
param rb_i := {1: 4, 2: 4, 4: 4};
# 1 when every inner loop is fully unrolled
var sl_i = 1;
# structural rules
# resources
subject to partition_limit_1: lcm(uf_i) <= 1024;  # [partition-limit]
var units_mul_i = if pip_i == 1 then (1) * uf_i / 1 else if sl_i == 1 then (1) * uf_i else (1) * uf_i;
var units_mul = (units_mul_i);
subject to dsp_budget_1: (3 * units_mul) <= 6840;  # [dsp-budget]
param strip_bits_i_x := {1: 128, 2: 64, 4: 32};
var uncovered_x = (1 * (1 - cache_i_x));
param top_bits_x := {0: 0, 1: 128};
subject to onchip_capacity_1: (cache_i_x * strip_bits_i_x[tile_i] + top_bits_x[uncovered_x]) <= 36700160;  # [onchip-capacity]
# computation
var lat_i = if pip_i == 1 then max(0, rb_i[uf_i] + floor(1 * (4 - 1 * uf_i) / (1 * uf_i))) \
else if sl_i == 1 then floor(4 * rb_i[uf_i] / (1 * uf_i)) else floor(4 * (4) / (1 * uf_i));
var computation = (lat_i);
# communication: per level, the largest transfer
param top_cycles_x := {0: 0, 1: 2};
var communication = (top_cycles_x[uncovered_x] + 2 * cache_i_x);
minimize latency: computation + communication;
";
    assert_eq!(text, golden);
    let model = Model::parse(&text).unwrap();
    assert_eq!(model.variables().count(), 4);
}
