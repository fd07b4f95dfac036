// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use pragmabound::analysis::Analysis;
use pragmabound::{parse_kernel, Calibration, KernelIr};

/// Small kernels with trip counts from {4, 6, 8, 12}, small enough to
/// enumerate every configuration.
pub const SMALL: &[(&str, &str)] = &[
    (
        "gemv",
        "kernel gemv { array A[4][6]: f32 in; array x[6]: f32 in; array y[4]: f32 inout;
          loop i 0 4 { S0: y[i] = 0; loop j 0 6 { S1: y[i] += A[i][j] * x[j]; } } }",
    ),
    (
        "chain",
        "kernel chain { array a[8]: f32 in; array b[8]: f32 inout; array c[8]: f32 out;
          loop i 0 8 { S0: b[i] = a[i] * a[i]; }
          loop j 0 8 { S1: c[j] = b[j] + a[j]; } }",
    ),
    (
        "recurrence",
        "kernel rec { array x[14]: f32 in; array y[14]: f32 inout;
          loop t 0 12 { S0: y[t] = x[t] * 3; }
          loop u 2 14 { S1: y[u] = y[u - 2] * x[u] + 1; } }",
    ),
    (
        "triangular",
        "kernel tri { array A[4][4]: f32 in; array s[4]: f32 inout;
          loop i 0 4 { S0: s[i] = 0; loop j 0 i { S1: s[i] += A[i][j] * A[i][j]; } } }",
    ),
    (
        "matmul",
        "kernel mm { array A[4][4]: f32 in; array C[4][6]: f32 inout;
          loop i 0 4 { loop j 0 6 { S0: C[i][j] = 0; loop k 0 4 { S1: C[i][j] += A[i][k] * 2; } } } }",
    ),
    (
        "stencil",
        "kernel st { array a[14]: f32 in; array b[12]: f32 out;
          loop i 0 12 { S0: b[i] = a[i] * 2 + a[i + 1] * 3 + a[i + 2] * 5; } }",
    ),
];

pub fn kernel(src: &str) -> (KernelIr, Analysis, Calibration) {
    let k = parse_kernel(src).expect("kernel parses");
    let cal = Calibration::default();
    let a = Analysis::new(&k, &cal).expect("kernel analyzes");
    (k, a, cal)
}

pub fn benchmark(name: &str) -> String {
    let path = format!("{}/../../kernels/{name}.k", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// Calibration with budgets tight enough that resource constraints bind on
/// the small kernels.
pub fn tight(mut cal: Calibration) -> Calibration {
    cal.dsp_available = 24;
    cal.max_partition = 8;
    cal.onchip_bits = 12 * 32;
    cal
}

/// Random small affine kernel. Loops start at 2 so subscripts may reach two
/// iterations back; arrays are padded so every access stays in bounds.
pub fn random_kernel(rng: &mut impl rand::Rng, name: &str) -> String {
    use std::fmt::Write;
    const TRIPS: [i64; 4] = [2, 3, 4, 6];
    const SIZE: i64 = 2 + 6 + 3;
    let mut body = String::new();
    let mut iters = 0usize;
    let mut stmts = 0usize;
    let mut written = std::collections::BTreeSet::new();

    fn access(rng: &mut impl rand::Rng, scope: &[String], twod: bool) -> (String, String) {
        let sub = |rng: &mut dyn rand::RngCore| {
            use rand::Rng;
            let it = &scope[rng.gen_range(0..scope.len())];
            match rng.gen_range(0..5) {
                0 => format!("{it} - 1"),
                1 => format!("{it} - 2"),
                2 => format!("{it} + 1"),
                _ => it.clone(),
            }
        };
        if twod {
            let arr = ["A", "B"][rng.gen_range(0..2)];
            let (a, b) = (sub(rng), sub(rng));
            (arr.to_string(), format!("{arr}[{a}][{b}]"))
        } else {
            let arr = ["x", "y", "z"][rng.gen_range(0..3)];
            (arr.to_string(), format!("{arr}[{}]", sub(rng)))
        }
    }

    fn expr(rng: &mut impl rand::Rng, scope: &[String], depth: u32) -> String {
        if depth == 0 || rng.gen_bool(0.35) {
            return if rng.gen_bool(0.8) {
                let twod = rng.gen_bool(0.4);
                access(rng, scope, twod).1
            } else {
                format!("{}", rng.gen_range(1..5))
            };
        }
        let op = ["+", "-", "*", "+", "*", "/"][rng.gen_range(0..6)];
        format!("({} {op} {})", expr(rng, scope, depth - 1), expr(rng, scope, depth - 1))
    }

    #[allow(clippy::too_many_arguments)]
    fn nest(
        rng: &mut impl rand::Rng,
        out: &mut String,
        scope: &mut Vec<String>,
        depth: u32,
        iters: &mut usize,
        stmts: &mut usize,
        written: &mut std::collections::BTreeSet<String>,
    ) {
        let it = format!("i{iters}");
        *iters += 1;
        let tc = TRIPS[rng.gen_range(0..TRIPS.len())];
        let _ = write!(out, "loop {it} 2 {} {{ ", 2 + tc);
        scope.push(it);
        let children = rng.gen_range(1..=2);
        for _ in 0..children {
            if depth > 0 && rng.gen_bool(0.5) {
                nest(rng, out, scope, depth - 1, iters, stmts, written);
            } else {
                let twod = rng.gen_bool(0.4);
                let (arr, lhs) = access(rng, scope, twod);
                written.insert(arr);
                let rhs = expr(rng, scope, 2);
                let assign = if rng.gen_bool(0.3) { ["+=", "*="][rng.gen_range(0..2)] } else { "=" };
                let _ = write!(out, "S{}: {lhs} {assign} {rhs}; ", *stmts);
                *stmts += 1;
            }
        }
        scope.pop();
        out.push_str("} ");
    }

    for _ in 0..rng.gen_range(1..=2) {
        nest(rng, &mut body, &mut Vec::new(), 2, &mut iters, &mut stmts, &mut written);
    }
    let mut src = format!("kernel {name} {{ ");
    for arr in ["A", "B"] {
        let dir = if written.contains(arr) { "inout" } else { "in" };
        let _ = write!(src, "array {arr}[{SIZE}][{SIZE}]: f32 {dir}; ");
    }
    for arr in ["x", "y", "z"] {
        let dir = if written.contains(arr) { "inout" } else { "in" };
        let _ = write!(src, "array {arr}[{SIZE}]: f32 {dir}; ");
    }
    if rng.gen_bool(0.2) {
        src.push_str("option tree_reduction = off; ");
    }
    src + &body + "}"
}

/// Outcome of comparing the model bound with the reference executor.
#[derive(Debug, Default)]
pub struct Soundness {
    pub checked: usize,
    /// (bound, oracle) totals of every compared triple.
    pub pairs: Vec<(u64, u64)>,
    pub kernels: usize,
    pub violations: Vec<String>,
}

/// Draw random kernels and random valid configurations until `triples`
/// (kernel, configuration, resources) have been compared.
pub fn soundness_sweep(seed: u64, triples: usize) -> Soundness {
    use pragmabound::nlp::{build_problem, space, ProblemOptions};
    use pragmabound::oracle::{simulate_config, OracleError, SimOptions};
    use pragmabound::Resources;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Soundness::default();
    let mut attempts = 0;
    while out.checked < triples {
        attempts += 1;
        assert!(attempts < 20 * triples, "generator produced too few usable kernels");
        let src = random_kernel(&mut rng, &format!("r{attempts}"));
        let k = parse_kernel(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
        let mut cal = Calibration::default();
        cal.dsp_available = [6, 12, 24, 6840][rng.gen_range(0..4)];
        cal.max_partition = u64::MAX;
        let Ok(a) = Analysis::new(&k, &cal) else { continue };
        let res = Resources::from_dsp_budget(&cal, cal.dsp_available);
        let Ok(p) = build_problem(&k, &a, &cal, res.clone(), ProblemOptions::default()) else { continue };
        out.kernels += 1;
        for _ in 0..4 {
            let Some(c) = space::random_valid(&p, &mut rng, 50) else { break };
            if std::env::var_os("SWEEP_TRACE").is_some() {
                eprintln!("TRACE {src}\nTRACE {}", c.display(&k));
            }
            let bound = match p.model.program_bound(&c) {
                Ok(b) => b,
                Err(e) => panic!("valid config rejected by the model: {e}\n{src}\n{}", c.display(&k)),
            };
            let sim = match simulate_config(&k, &c, &res, &cal, SimOptions::default()) {
                Ok(s) => s,
                Err(OracleError::TooLarge { .. }) => continue,
                Err(e) => panic!("oracle failed: {e}\n{src}\n{}", c.display(&k)),
            };
            out.checked += 1;
            out.pairs.push((bound.total, sim.total));
            if bound.total > sim.total {
                out.violations.push(format!(
                    "{src}\n  config {}\n  bound {} ({} + {}) > oracle {} ({} + {})",
                    c.display(&k),
                    bound.total,
                    bound.computation,
                    bound.communication,
                    sim.total,
                    sim.computation,
                    sim.communication
                ));
            }
        }
    }
    out
}
