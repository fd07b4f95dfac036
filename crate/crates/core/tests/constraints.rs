// SPDX-License-Identifier: Apache-2.0

mod common;

use pragmabound::config::{ConstraintTag, PragmaConfig};
use pragmabound::nlp::{build_problem, ProblemOptions};
use pragmabound::{Calibration, Resources};
use proptest::prelude::*;

const GEMV: &str = common::SMALL[0].1;
const CHAIN: &str = common::SMALL[1].1;
const TRI: &str = common::SMALL[3].1;
const REC: &str = "kernel r { array y[20]: f32 inout; loop j 2 20 { S: y[j] = y[j - 2] + 1; } }";

struct Case {
    src: &'static str,
    cal: fn(&mut Calibration),
    opts: ProblemOptions,
    edit: fn(&mut PragmaConfig),
}

fn case(src: &'static str, edit: fn(&mut PragmaConfig)) -> Case {
    Case { src, cal: |_| {}, opts: ProblemOptions::default(), edit }
}

fn tags(c: &Case) -> Vec<&'static str> {
    let (k, a, mut cal) = common::kernel(c.src);
    (c.cal)(&mut cal);
    let p = build_problem(&k, &a, &cal, Resources::unbounded(), c.opts).unwrap();
    let mut cfg = PragmaConfig::default_for(&k);
    (c.edit)(&mut cfg);
    let mut out: Vec<_> = p.check_config(&cfg).iter().map(|v| v.tag.label()).collect();
    out.dedup();
    out
}

#[test]
fn each_rule_fires_alone() {
    let cases: Vec<(&str, Case)> = vec![
        ("unroll-bounds", case(GEMV, |c| c.loops[1].uf = 7)),
        ("tile-bounds", case(GEMV, |c| c.loops[0].tile = 0)),
        ("unroll-divides", case(GEMV, |c| c.loops[1].uf = 4)),
        ("unroll-divides", case(TRI, |c| c.loops[1].uf = 2)),
        ("tile-divides", case(GEMV, |c| c.loops[1].tile = 4)),
        (
            "full-unroll-under-pipeline",
            case(GEMV, |c| {
                c.loops[0].pip = true;
                c.loops[1].uf = 3;
            }),
        ),
        (
            "one-pipeline-per-statement",
            case(GEMV, |c| {
                c.loops[0].pip = true;
                c.loops[1].pip = true;
                c.loops[1].uf = 6;
            }),
        ),
        (
            "no-cache-under-pipeline",
            case(GEMV, |c| {
                c.loops[0].pip = true;
                c.loops[1].uf = 6;
                c.cache.insert((1, 1));
            }),
        ),
        (
            "cache-path",
            case(CHAIN, |c| {
                c.cache.insert((0, 2));
            }),
        ),
        (
            "cache-path",
            case(GEMV, |c| {
                c.cache.insert((0, 0));
                c.cache.insert((1, 0));
            }),
        ),
        ("dependence-distance", case(REC, |c| c.loops[0].uf = 3)),
        (
            "partition-limit",
            Case { opts: ProblemOptions { max_partition: Some(2), ..Default::default() }, ..case(GEMV, |c| c.loops[1].uf = 3) },
        ),
        (
            "fine-grained-only",
            Case {
                opts: ProblemOptions { fine_grained_only: true, ..Default::default() },
                ..case(GEMV, |c| {
                    c.loops[1].pip = true;
                    c.loops[0].uf = 2;
                })
            },
        ),
        ("dsp-budget", Case { cal: |cal| cal.dsp_available = 1, ..case(GEMV, |_| {}) }),
        ("onchip-capacity", Case { cal: |cal| cal.onchip_bits = 32, ..case(GEMV, |_| {}) }),
    ];
    let mut covered = std::collections::BTreeSet::new();
    for (want, c) in &cases {
        assert_eq!(tags(c), vec![*want]);
        covered.insert(*want);
    }
    assert_eq!(covered.len(), ConstraintTag::ALL.len());
}

#[test]
fn defaults_are_valid() {
    for (name, src) in common::SMALL {
        assert!(tags(&case(src, |_| {})).is_empty(), "{name}");
    }
}

proptest! {
    /// The objective is defined exactly on configurations with no violation.
    #[test]
    fn objective_is_defined_on_valid_configs(
        pick in 0..common::SMALL.len(),
        genes in proptest::collection::vec((any::<bool>(), 0usize..4, 0usize..4), 3),
        cache in proptest::option::of((0usize..3, 0usize..5)),
    ) {
        let (k, a, cal) = common::kernel(common::SMALL[pick].1);
        let p = build_problem(&k, &a, &cal, Resources::unbounded(), ProblemOptions::default()).unwrap();
        let mut c = PragmaConfig::default_for(&k);
        for (l, (pip, u, t)) in genes.iter().take(k.loops.len()).enumerate() {
            let divs = &a.trip[l].divisors;
            c.loops[l].pip = *pip;
            c.loops[l].uf = divs.get(*u).copied().unwrap_or(1);
            c.loops[l].tile = divs.get(*t).copied().unwrap_or(1);
        }
        if let Some((l, arr)) = cache {
            if l < k.loops.len() && arr < k.arrays.len() {
                c.cache.insert((l, arr));
            }
        }
        prop_assert_eq!(p.check_config(&c).is_empty(), p.objective(&c).is_ok());
    }
}
