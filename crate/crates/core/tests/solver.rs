// SPDX-License-Identifier: Apache-2.0

mod common;

use pragmabound::analysis::Analysis;
use pragmabound::config::{LoopPragma, PragmaConfig};
use pragmabound::nlp::{build_problem, solve, space, ProblemOptions, SolveOptions, SolveStatus};
use pragmabound::{parse_kernel, Calibration, Resources};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Duration;

const LIMIT: u128 = 2_000_000;

fn check_against_brute_force(name: &str, src: &str, cal: Calibration, opts: ProblemOptions) {
    let k = parse_kernel(src).unwrap();
    let a = Analysis::new(&k, &cal).unwrap();
    let p = build_problem(&k, &a, &cal, Resources::from_dsp_budget(&cal, cal.dsp_available), opts).unwrap();
    let reference = space::brute_force(&p, LIMIT).expect("space small enough to enumerate");
    let r = solve(&p, SolveOptions::default());
    match reference {
        None => assert_eq!(r.status, SolveStatus::Infeasible, "{name}"),
        Some((obj, cfg)) => {
            assert_eq!(r.status, SolveStatus::Optimal, "{name}");
            assert_eq!(r.lower_bound, Some(obj), "{name}");
            let got = r.best_config.unwrap();
            assert_eq!(p.objective(&got).unwrap(), obj, "{name}");
            // Same tie-break as the enumeration.
            assert_eq!(got, cfg, "{name}: {} vs {}", got.display(&k), cfg.display(&k));
        }
    }
}

#[test]
fn matches_brute_force_on_small_kernels() {
    for (name, src) in common::SMALL {
        check_against_brute_force(name, src, Calibration::default(), ProblemOptions::default());
        check_against_brute_force(name, src, common::tight(Calibration::default()), ProblemOptions::default());
    }
}

#[test]
fn matches_brute_force_in_fine_grained_mode() {
    let opts = ProblemOptions { fine_grained_only: true, max_partition: None };
    for (name, src) in common::SMALL {
        check_against_brute_force(name, src, Calibration::default(), opts);
    }
}

#[test]
fn matches_brute_force_without_partition_limit() {
    let opts = ProblemOptions { fine_grained_only: false, max_partition: Some(u64::MAX) };
    for (name, src) in common::SMALL {
        check_against_brute_force(name, src, common::tight(Calibration::default()), opts);
    }
}

#[test]
fn infeasible_when_nothing_fits_on_chip() {
    let (k, a, mut cal) = common::kernel(common::SMALL[0].1);
    cal.onchip_bits = 8;
    let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
    let r = solve(&p, SolveOptions::default());
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.best_config.is_none() && r.lower_bound.is_none());
}

#[test]
fn deterministic_and_valid_on_benchmarks() {
    for name in ["2mm", "atax", "bicg", "gemm", "gesummv"] {
        let (k, a, cal) = common::kernel(&common::benchmark(name));
        let p = build_problem(&k, &a, &cal, Resources::from_dsp_budget(&cal, cal.dsp_available), ProblemOptions::default())
            .unwrap();
        let r1 = solve(&p, SolveOptions::default());
        let r2 = solve(&p, SolveOptions::default());
        assert_eq!(r1, r2, "{name}");
        assert_eq!(r1.status, SolveStatus::Optimal, "{name}");
        let c = r1.best_config.unwrap();
        assert!(p.check_config(&c).is_empty(), "{name}");
        assert_eq!(Some(p.objective(&c).unwrap()), r1.lower_bound, "{name}");
    }
}

#[test]
fn optimum_is_below_random_valid_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["2mm", "atax", "gemm"] {
        let (k, a, cal) = common::kernel(&common::benchmark(name));
        let p = build_problem(&k, &a, &cal, Resources::from_dsp_budget(&cal, cal.dsp_available), ProblemOptions::default())
            .unwrap();
        let best = solve(&p, SolveOptions::default()).lower_bound.unwrap();
        for _ in 0..200 {
            let c = space::random_valid(&p, &mut rng, 1000).unwrap();
            assert!(best <= p.objective(&c).unwrap(), "{name}: {}", c.display(&k));
        }
    }
}

#[test]
fn zero_timeout_reports_best_so_far() {
    let (k, a, cal) = common::kernel(&common::benchmark("2mm"));
    let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
    let r = solve(&p, SolveOptions { timeout: Some(Duration::ZERO) });
    assert_eq!(r.status, SolveStatus::TimeoutBestSoFar);
}

#[test]
fn pipelining_the_inner_loop_of_2mm() {
    // Pipelining j fully unrolls k; worked by hand with add 5, mul 4:
    //   first nest:  180 * (II*(190-1) + rb) with rb = 8 + 5*ceil(log2 210) = 48
    //   second nest: 180 * (II*(220-1) + rb) with rb = 4 + 5*ceil(log2 190) = 44
    // and D moved in and out once, 180*220*32/512 cycles each way.
    let (k, a, cal) = common::kernel(&common::benchmark("2mm"));
    let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions { max_partition: Some(u64::MAX), ..Default::default() })
        .unwrap();
    let mut c = PragmaConfig::default_for(&k);
    let id = |n: &str| k.loop_by_name(n).unwrap();
    c.loops[id("j1")].pip = true;
    c.loops[id("k1")] = LoopPragma { pip: false, uf: 210, tile: 1 };
    c.loops[id("j2")].pip = true;
    c.loops[id("k2")] = LoopPragma { pip: false, uf: 190, tile: 1 };
    assert!(p.check_config(&c).is_empty());
    let r = p.model.program_bound(&c).unwrap();
    assert_eq!(r.computation, 180 * (189 + 48) + 180 * (219 + 44));
    assert_eq!(r.communication, 2 * (180 * 220 * 32 / 512));
    assert_eq!(r.total, p.objective(&c).unwrap());
}
