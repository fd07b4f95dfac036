// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: parse and analyze kernels, bound and solve pragma
//! configurations, export the selection model, and run bound-pruned DSE.

use clap::{Args, Parser, Subcommand};
use pragmabound::analysis::{self, Analysis};
use pragmabound::config::PragmaConfig;
use pragmabound::dse::eval::{CommandEvaluator, Evaluator, ModelEvaluator, SimulatedHls};
use pragmabound::dse::{self, DseConfig, DseReport, StepOutcome};
use pragmabound::nlp::{self, export, space, NlpProblem, ProblemOptions, SolveOptions};
use pragmabound::oracle::{simulate_config, SimOptions};
use pragmabound::{parse, resources, Calibration, KernelIr, Resources};
use rand::SeedableRng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "pragmabound", version, about = "Latency lower bounds and pragma selection for HLS loop kernels")]
struct Cli {
    /// TOML file overriding op latencies, DSP costs and device limits.
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for commands that draw random configurations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct SpaceArgs {
    /// Forbid unrolling loops above a pipelined loop.
    #[arg(long)]
    fine_grained_only: bool,
    /// Partition-product limit (`inf` lifts it).
    #[arg(long)]
    max_partition: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a kernel and print its loop structure.
    Parse { kernel: PathBuf },
    /// Trip counts, dependences, reductions, minimal IIs and footprints.
    Analyze { kernel: PathBuf },
    /// Latency bound of one configuration (default: no pragmas).
    Bound {
        kernel: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Find the configuration with the smallest bound.
    Solve {
        kernel: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        /// Solver time limit in seconds.
        #[arg(long)]
        timeout_nlp: Option<f64>,
        /// Also write the selection model to this file.
        #[arg(long)]
        export_model: Option<PathBuf>,
    },
    /// Size of the configuration space.
    CountSpace {
        kernel: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        /// Enumerate valid configurations only below this structural size.
        #[arg(long, default_value_t = 10_000_000)]
        limit: u128,
    },
    /// Write the selection model as text.
    ExportModel {
        kernel: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        /// Output file (stdout when absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Bound-pruned exploration over a partition-limit ladder.
    Dse {
        kernel: PathBuf,
        /// Comma-separated partition limits, e.g. `inf,1024,64,1`.
        #[arg(long)]
        ladder: Option<String>,
        /// Per-evaluation time limit in seconds.
        #[arg(long)]
        timeout_hls: Option<f64>,
        /// Per-solve time limit in seconds.
        #[arg(long)]
        timeout_nlp: Option<f64>,
        /// `model`, `simulated:<rules.json>` or `command:<template>`.
        #[arg(long, default_value = "model")]
        evaluator: String,
        /// Concurrent evaluations.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare the bound with a list-scheduled realization.
    Oracle {
        kernel: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Check this many random valid configurations instead.
        #[arg(long)]
        random: Option<usize>,
        /// Largest task graph the scheduler accepts.
        #[arg(long, default_value_t = pragmabound::oracle::DEFAULT_CAP)]
        cap: usize,
    },
    /// Summarize a saved DSE report.
    Report { report: PathBuf },
}

/// Failure of the requested computation (exit code 1).
struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Out = Result<(), Fail>;

struct Ctx {
    cal: Calibration,
    json: bool,
    seed: u64,
}

impl Ctx {
    fn resources(&self) -> Resources {
        Resources::from_dsp_budget(&self.cal, self.cal.dsp_available)
    }

    fn emit(&self, v: Value, human: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        } else {
            print!("{}", human());
        }
    }
}

fn load_kernel(path: &Path) -> Result<KernelIr, Fail> {
    let src = std::fs::read_to_string(path).map_err(|e| Fail(format!("{}: {e}", path.display())))?;
    parse::parse_kernel(&src).map_err(|e| Fail(format!("{}:{e}", path.display())))
}

fn load_config(k: &KernelIr, path: Option<&Path>) -> Result<PragmaConfig, Fail> {
    match path {
        None => Ok(PragmaConfig::default_for(k)),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Fail(format!("{}: {e}", p.display())))?;
            PragmaConfig::from_json(k, &text).map_err(|e| Fail(format!("{}: {e}", p.display())))
        }
    }
}

fn seconds(s: Option<f64>) -> Result<Option<Duration>, Fail> {
    s.map(|v| Duration::try_from_secs_f64(v).map_err(|_| Fail(format!("bad time limit {v}")))).transpose()
}

fn problem_options(s: &SpaceArgs) -> Result<ProblemOptions, Fail> {
    let max_partition = match s.max_partition.as_deref() {
        None => None,
        Some("inf") => Some(u64::MAX),
        Some(v) => Some(v.parse().map_err(|_| Fail(format!("bad partition limit `{v}`")))?),
    };
    Ok(ProblemOptions { fine_grained_only: s.fine_grained_only, max_partition })
}

/// Violations of `c` as an error naming each broken rule.
fn require_valid(p: &NlpProblem, c: &PragmaConfig) -> Out {
    let v = p.check_config(c);
    if v.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = v.iter().map(|v| format!("  {v}")).collect();
    Err(Fail(format!("invalid configuration:\n{}", lines.join("\n"))))
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let s: Vec<String> = cells.iter().enumerate().map(|(i, c)| format!("{c:<width$}", width = w[i])).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or("-".into(), |x| x.to_string())
}

fn cmd_parse(cx: &Ctx, path: &Path) -> Out {
    let k = load_kernel(path)?;
    cx.emit(serde_json::to_value(&k)?, || {
        let rows: Vec<Vec<String>> = k
            .loops
            .iter()
            .map(|l| {
                let depth = std::iter::successors(l.parent, |&p| k.loops[p].parent).count();
                vec![format!("{}{}", "  ".repeat(depth), l.iterator), l.lower.display(&k).to_string(), l.upper.display(&k).to_string()]
            })
            .collect();
        format!(
            "kernel {}: {} arrays, {} loops, {} statements\n{}",
            k.name,
            k.arrays.len(),
            k.loops.len(),
            k.statements.len(),
            table(&["loop", "lower", "upper"], &rows)
        )
    });
    Ok(())
}

fn cmd_analyze(cx: &Ctx, path: &Path) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let r = analysis::report(&k, &a, &cx.cal);
    cx.emit(serde_json::to_value(&r)?, || {
        let loops: Vec<Vec<String>> = r
            .trip_counts
            .iter()
            .zip(&r.reductions)
            .zip(&r.min_ii)
            .map(|((t, red), (_, ii))| {
                vec![
                    t.loop_id.clone(),
                    format!("{}..{}", t.tc_min, t.tc_max),
                    t.executions.to_string(),
                    if red.is_reduction { opt(red.reduction_op.map(|o| o.name())) } else { "-".into() },
                    ii.to_string(),
                ]
            })
            .collect();
        let deps: Vec<Vec<String>> = r
            .dependences
            .iter()
            .map(|d| {
                vec![
                    format!("{:?}", d.kind),
                    format!("{} -> {}", d.src, d.dst),
                    d.array.clone(),
                    opt(d.carrier.clone()),
                    opt(d.distance),
                ]
            })
            .collect();
        format!(
            "{}\n{}",
            table(&["loop", "trips", "entries", "reduction", "min_ii"], &loops),
            table(&["kind", "statements", "array", "carrier", "distance"], &deps)
        )
    });
    Ok(())
}

fn cmd_bound(cx: &Ctx, path: &Path, config: Option<&Path>) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let c = load_config(&k, config)?;
    let p = nlp::build_problem(&k, &a, &cx.cal, cx.resources(), ProblemOptions::default())?;
    require_valid(&p, &c)?;
    let b = p.model.program_bound(&c)?;
    let res = resources::report(&k, &a, &cx.cal, &c);
    cx.emit(json!({ "bound": b, "resources": res, "config": c.to_named(&k) }), || {
        let rows: Vec<Vec<String>> = b
            .loops
            .iter()
            .map(|t| {
                vec![
                    t.loop_id.clone(),
                    serde_json::to_value(t.rule).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    t.uf.to_string(),
                    opt(t.ii),
                    opt(t.region_bound),
                    t.cycles.to_string(),
                ]
            })
            .collect();
        format!(
            "config: {}\ncomputation {}  communication {}  total {}\ndsp >= {}  on-chip bits {}\n{}",
            c.display(&k),
            b.computation,
            b.communication,
            b.total,
            res.dsp_min_used,
            res.onchip_bits_used,
            table(&["loop", "rule", "uf", "ii", "region", "cycles"], &rows)
        )
    });
    Ok(())
}

fn cmd_solve(cx: &Ctx, path: &Path, s: &SpaceArgs, timeout: Option<f64>, export_to: Option<&Path>) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let p = nlp::build_problem(&k, &a, &cx.cal, cx.resources(), problem_options(s)?)?;
    if let Some(out) = export_to {
        std::fs::write(out, export::export_model(&p)).map_err(|e| Fail(format!("{}: {e}", out.display())))?;
    }
    let r = nlp::solve(&p, SolveOptions { timeout: seconds(timeout)? });
    let named = r.best_config.as_ref().map(|c| c.to_named(&k));
    cx.emit(
        json!({
            "status": r.status,
            "lower_bound": r.lower_bound,
            "config": named,
            "nodes_explored": r.nodes_explored,
            "options": r.options,
        }),
        || {
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            match &r.best_config {
                Some(c) => format!("status {status}\nbound {}\nconfig {}\n", opt(r.lower_bound), c.display(&k)),
                None => format!("status {status}\nno configuration found\n"),
            }
        },
    );
    Ok(())
}

fn cmd_count(cx: &Ctx, path: &Path, s: &SpaceArgs, limit: u128) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let p = nlp::build_problem(&k, &a, &cx.cal, cx.resources(), problem_options(s)?)?;
    let n = space::count_space(&p, limit);
    cx.emit(json!({ "structural": n.structural.to_string(), "valid": n.valid }), || {
        format!("structural {}\nvalid {}\n", n.structural, n.valid.map_or("not enumerated (above --limit)".into(), |v| v.to_string()))
    });
    Ok(())
}

fn cmd_export(cx: &Ctx, path: &Path, s: &SpaceArgs, output: Option<&Path>) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let p = nlp::build_problem(&k, &a, &cx.cal, cx.resources(), problem_options(s)?)?;
    let text = export::export_model(&p);
    match output {
        Some(o) => std::fs::write(o, text).map_err(|e| Fail(format!("{}: {e}", o.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn outcome_text(o: &StepOutcome) -> String {
    match o {
        StepOutcome::Evaluated { latency, .. } => format!("evaluated {latency}"),
        StepOutcome::Invalid { latency, .. } => format!("invalid ({latency})"),
        StepOutcome::Timeout => "timeout".into(),
        StepOutcome::Failed { message } => format!("failed: {message}"),
        StepOutcome::Pruned => "pruned".into(),
        StepOutcome::Duplicate { step } => format!("duplicate of {step}"),
        StepOutcome::Infeasible => "infeasible".into(),
    }
}

fn report_text(r: &DseReport) -> String {
    let rows: Vec<Vec<String>> = r
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                s.max_partition.to_string(),
                serde_json::to_value(s.parallelism).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                opt(s.lower_bound),
                outcome_text(&s.outcome),
                opt(s.best_latency),
            ]
        })
        .collect();
    let best = match &r.best {
        Some(b) => format!("best {} at step {}\n", b.latency, b.step),
        None => "no valid design\n".into(),
    };
    format!("kernel {}\n{}{best}", r.kernel, table(&["step", "partition", "mode", "bound", "outcome", "best"], &rows))
}

#[allow(clippy::too_many_arguments)]
fn cmd_dse(
    cx: &Ctx,
    path: &Path,
    ladder: Option<&str>,
    timeout_hls: Option<f64>,
    timeout_nlp: Option<f64>,
    evaluator: &str,
    jobs: usize,
    report: Option<&Path>,
) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let ev: Box<dyn Evaluator> = match evaluator.split_once(':') {
        None if evaluator == "model" => Box::new(ModelEvaluator),
        Some(("simulated", rules)) => {
            let text = std::fs::read_to_string(rules).map_err(|e| Fail(format!("{rules}: {e}")))?;
            Box::new(SimulatedHls::from_json(&text).map_err(|e| Fail(format!("{rules}: {e}")))?)
        }
        Some(("command", template)) => Box::new(CommandEvaluator { template: template.into(), kernel_path: path.into() }),
        _ => return Err(Fail(format!("unknown evaluator `{evaluator}`"))),
    };
    let cfg = DseConfig {
        partition_ladder: match ladder {
            Some(l) => dse::parse_ladder(l)?,
            None => dse::default_ladder(),
        },
        timeout_hls: seconds(timeout_hls)?,
        timeout_nlp: seconds(timeout_nlp)?,
        parallel_evaluations: jobs.max(1),
    };
    let r = dse::run_dse(&k, &a, &cx.cal, cx.resources(), &cfg, ev.as_ref())?;
    if let Some(out) = report {
        dse::persist_report(&r, out)?;
    }
    cx.emit(serde_json::to_value(&r)?, || report_text(&r));
    Ok(())
}

fn cmd_oracle(cx: &Ctx, path: &Path, config: Option<&Path>, random: Option<usize>, cap: usize) -> Out {
    let k = load_kernel(path)?;
    let a = Analysis::new(&k, &cx.cal)?;
    let res = cx.resources();
    let p = nlp::build_problem(&k, &a, &cx.cal, res.clone(), ProblemOptions::default())?;
    let configs = match random {
        None => {
            let c = load_config(&k, config)?;
            require_valid(&p, &c)?;
            vec![c]
        }
        Some(n) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cx.seed);
            (0..n).filter_map(|_| space::random_valid(&p, &mut rng, 100)).collect()
        }
    };
    let mut rows = Vec::new();
    for c in &configs {
        let b = p.model.program_bound(c)?;
        let sim = simulate_config(&k, c, &res, &cx.cal, SimOptions { cap })?;
        rows.push((c, b.total, sim));
    }
    let violations = rows.iter().filter(|(_, b, s)| *b > s.total).count();
    cx.emit(
        json!({
            "runs": rows.iter().map(|(c, b, s)| json!({ "config": c.to_named(&k), "bound": b, "oracle": s })).collect::<Vec<_>>(),
            "violations": violations,
        }),
        || {
            let t: Vec<Vec<String>> = rows
                .iter()
                .map(|(c, b, s)| vec![c.display(&k).to_string(), b.to_string(), s.total.to_string(), s.operations.to_string()])
                .collect();
            format!("{}violations {violations}\n", table(&["config", "bound", "oracle", "ops"], &t))
        },
    );
    if violations > 0 {
        return Err(Fail(format!("{violations} configuration(s) bounded above their schedule")));
    }
    Ok(())
}

fn cmd_report(cx: &Ctx, path: &Path) -> Out {
    let r = dse::load_report(path).map_err(|e| Fail(format!("{}: {e}", path.display())))?;
    cx.emit(serde_json::to_value(&r)?, || report_text(&r));
    Ok(())
}

fn run(cli: Cli) -> Out {
    let cal = match &cli.calibration {
        Some(p) => Calibration::load(p).map_err(|e| Fail(format!("{}: {e}", p.display())))?,
        None => Calibration::default(),
    };
    let cx = Ctx { cal, json: cli.json, seed: cli.seed };
    match &cli.cmd {
        Cmd::Parse { kernel } => cmd_parse(&cx, kernel),
        Cmd::Analyze { kernel } => cmd_analyze(&cx, kernel),
        Cmd::Bound { kernel, config } => cmd_bound(&cx, kernel, config.as_deref()),
        Cmd::Solve { kernel, space, timeout_nlp, export_model } => {
            cmd_solve(&cx, kernel, space, *timeout_nlp, export_model.as_deref())
        }
        Cmd::CountSpace { kernel, space, limit } => cmd_count(&cx, kernel, space, *limit),
        Cmd::ExportModel { kernel, space, output } => cmd_export(&cx, kernel, space, output.as_deref()),
        Cmd::Dse { kernel, ladder, timeout_hls, timeout_nlp, evaluator, jobs, report } => cmd_dse(
            &cx,
            kernel,
            ladder.as_deref(),
            *timeout_hls,
            *timeout_nlp,
            evaluator,
            *jobs,
            report.as_deref(),
        ),
        Cmd::Oracle { kernel, config, random, cap } => cmd_oracle(&cx, kernel, config.as_deref(), *random, *cap),
        Cmd::Report { report } => cmd_report(&cx, report),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // Help and version exit 0; usage errors exit 2.
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
