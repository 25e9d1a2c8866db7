//! `hypflow`: generate complexes, run the prescribed curvature flow, solve
//! steady states, check theorem hypotheses and draw face realizations.

mod spec;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hypflow_core::cellcomplex::{generate_tiling, read_complex, BallSequence, Complex, TilingKind};
use hypflow_core::conditions::{
    check_simple_decomposition, check_theorem_i, check_theorem_ii, check_theorem_simple, FaceRange, WSource,
};
use hypflow_core::curvaturefield::{assemble, field_csv, residual_norms, CurvatureRule, PrescribedCurvature};
use hypflow_core::diskrealize::{measure_arc_quantities, realize_face, render_svg};
use hypflow_core::facepacking::solve_dual_curvature;
use hypflow_core::flow::{
    exhaustion_driver, initial_state, integrate_truncated_flow, monitor_report, steady_state_newton,
    ExhaustionSpec, FlowOptions, NewtonOptions,
};

use spec::{parse_id_list, parse_sets, read_start, read_that};

#[derive(Parser)]
#[command(name = "hypflow", version, about = "Prescribed curvature flow for generalized circle packings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a ball of a built-in tiling as a complex JSON document.
    Gen(GenArgs),
    /// Integrate the truncated flow and write its trace.
    Flow(FlowArgs),
    /// Solve T(s) = T̂ directly by damped Newton.
    Steady(SteadyArgs),
    /// Check the hypotheses of a convergence criterion.
    Check(CheckArgs),
    /// Lay out one face in the Poincaré disk and draw it.
    Realize(RealizeArgs),
    /// Run the flow on growing balls and compare their limits.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Complex JSON document.
    #[arg(long, conflicts_with_all = ["tiling", "radius"])]
    complex: Option<PathBuf>,
    /// Built-in tiling: square, tri or hex.
    #[arg(long, requires = "radius")]
    tiling: Option<String>,
    /// Ball radius around the base vertex.
    #[arg(long, requires = "tiling")]
    radius: Option<usize>,
}

impl SourceArgs {
    fn load(&self) -> Result<Complex> {
        match (&self.complex, &self.tiling, self.radius) {
            (Some(path), _, _) => read_complex(path).with_context(|| format!("reading {}", path.display())),
            (None, Some(kind), Some(radius)) => Ok(generate_tiling(kind.parse()?, radius)?),
            _ => bail!("give either --complex FILE or --tiling KIND --radius N"),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    tiling: String,
    #[arg(long)]
    radius: usize,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Prescribed curvature: a constant, `deg`, `deg*c` or `file:PATH`.
    #[arg(long = "that")]
    that: String,
    /// Start state: a constant, `auto-small` or `file:PATH`.
    #[arg(long, default_value = "0")]
    s0: String,
    /// Stopping tolerance on sup |T - T̂|.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 1e-9)]
    atol: f64,
    #[arg(long, default_value_t = 1e-9)]
    rtol: f64,
    #[arg(long, default_value_t = 1e4)]
    t_max: f64,
    /// Record every n-th accepted step.
    #[arg(long, default_value_t = 1)]
    sample_every: usize,
    /// Comma-separated vertex ids reported in the trace (default: base vertex).
    #[arg(long)]
    probes: Option<String>,
    /// Trace CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Final per-vertex field CSV.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
struct SteadyArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Per-vertex field CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sparse Jacobian JSON at the solution.
    #[arg(long)]
    jacobian_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Theorem {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "simple")]
    Simple,
}

#[derive(Clone, Copy, ValueEnum)]
enum RangeArg {
    Conservative,
    Literal,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    theorem: Theorem,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long = "that")]
    that: Option<String>,
    #[arg(long, default_value = "0")]
    s0: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Test every connected vertex set up to this size.
    #[arg(long)]
    cap: Option<usize>,
    /// Upper bound on the number of generated sets.
    #[arg(long, default_value_t = 100_000)]
    max_sets: usize,
    /// Explicit vertex sets, e.g. `0,1,2;3,4`.
    #[arg(long)]
    sets: Option<String>,
    /// Test balls around the base vertex up to this radius.
    #[arg(long)]
    balls: Option<usize>,
    #[arg(long, value_enum, default_value_t = RangeArg::Conservative)]
    range: RangeArg,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RealizeArgs {
    /// Comma-separated curvatures of the face, in cyclic order.
    #[arg(long)]
    face: String,
    /// SVG path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    tiling: String,
    /// Comma-separated, strictly increasing ball radii.
    #[arg(long)]
    radii: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "0")]
    probes: String,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn that_rule(text: &str) -> Result<CurvatureRule> {
    match text.strip_prefix("file:") {
        Some(path) => Ok(CurvatureRule::PerVertex(read_that(Path::new(path))?)),
        None => Ok(text.parse()?),
    }
}

fn start_state(complex: &Complex, that: &PrescribedCurvature, text: &str) -> Result<Vec<f64>> {
    let rule = match text.strip_prefix("file:") {
        Some(path) => read_start(Path::new(path))?,
        None => text.parse()?,
    };
    Ok(initial_state(complex, that, &rule)?)
}

fn setup(source: &SourceArgs, solver: &SolverArgs) -> Result<(Complex, PrescribedCurvature, Vec<f64>)> {
    let complex = source.load().context("loading complex")?;
    let that = PrescribedCurvature::from_rule(&complex, &that_rule(&solver.that)?).context("prescribed curvature")?;
    let s0 = start_state(&complex, &that, &solver.s0).context("start state")?;
    Ok((complex, that, s0))
}

fn run_flow(args: &FlowArgs) -> Result<()> {
    let (complex, that, s0) = setup(&args.source, &args.solver)?;
    let probes = match &args.probes {
        Some(list) => parse_id_list(list)?,
        None => vec![complex.vertex_id(complex.base())],
    };
    let mut options = FlowOptions {
        atol: args.atol,
        rtol: args.rtol,
        t_max: args.t_max,
        sample_every: args.sample_every,
        record_states: false,
        probes,
        ..FlowOptions::default()
    };
    if let Some(tol) = args.solver.tol {
        options.stop_tol = tol;
    }
    let trace = integrate_truncated_flow(&complex, &s0, &that, &options).context("flow")?;
    emit(args.out.as_deref(), &trace.to_csv())?;
    if let Some(path) = &args.state_out {
        let field = assemble(&complex, &trace.final_state)?;
        fs::write(path, field_csv(&complex, &field, &that))?;
    }
    let summary = json!({
        "converged": trace.converged,
        "t_final": trace.t_final,
        "sup_residual": trace.final_sup_residual(),
        "stats": trace.stats,
        "violations": monitor_report(&trace),
    });
    eprintln!("{summary}");
    Ok(())
}

fn run_steady(args: &SteadyArgs) -> Result<()> {
    let (complex, that, s0) = setup(&args.source, &args.solver)?;
    let mut options = NewtonOptions::default();
    if let Some(tol) = args.solver.tol {
        options.tol = tol;
    }
    let outcome = steady_state_newton(&complex, &s0, &that, &options).context("steady state")?;
    let field = assemble(&complex, &outcome.state)?;
    emit(args.out.as_deref(), &field_csv(&complex, &field, &that))?;
    if let Some(path) = &args.jacobian_out {
        fs::write(path, field.jacobian.to_json(&complex))?;
    }
    let summary = json!({
        "sup_residual": residual_norms(&field, &that).sup,
        "iterations": outcome.iterations,
        "used_flow_fallback": outcome.used_flow_fallback,
    });
    eprintln!("{summary}");
    Ok(())
}

fn run_check(args: &CheckArgs) -> Result<()> {
    let report = match args.theorem {
        Theorem::One => {
            let solver = SolverArgs {
                that: args.that.clone().context("--that is required for theorem 1")?,
                s0: args.s0.clone(),
                tol: None,
            };
            let (complex, that, s0) = setup(&args.source, &solver)?;
            check_theorem_i(&complex, &s0, &that)?
        }
        Theorem::Two | Theorem::Simple => {
            let (Some(kind), Some(radius)) = (&args.source.tiling, args.source.radius) else {
                bail!("theorem 2 and simple checks need --tiling KIND --radius N");
            };
            let kind: TilingKind = kind.parse()?;
            let balls = BallSequence::of_kind(kind, radius + 1);
            let that_fn = tiling_that(kind, args.that.as_deref())?;
            let source = w_source(args, &balls, radius)?;
            match args.theorem {
                Theorem::Two => {
                    let range = match args.range {
                        RangeArg::Conservative => FaceRange::Conservative,
                        RangeArg::Literal => FaceRange::Literal,
                    };
                    let source = source.context("give --sets, --cap or --balls")?;
                    check_theorem_ii(
                        &balls.enumeration(),
                        &balls.default_prefix(),
                        &that_fn,
                        &source,
                        |v| balls.neighbors(v),
                        range,
                    )?
                }
                _ => match (source, args.eps, args.delta) {
                    (Some(source), Some(eps), Some(delta)) => {
                        check_theorem_simple(&balls, &that_fn, eps, delta, &source)?
                    }
                    (None, None, None) => check_simple_decomposition(&balls, radius)?.0,
                    _ => bail!("the simple criterion needs --eps, --delta and a set source together"),
                },
            }
        }
    };
    emit(args.out.as_deref(), &(report.to_json() + "\n"))
}

fn tiling_that(kind: TilingKind, spec: Option<&str>) -> Result<Box<dyn Fn(u64) -> Option<f64>>> {
    let deg = kind.vertex_degree() as f64;
    Ok(match spec.map(that_rule).transpose()? {
        None => Box::new(|_| None),
        Some(CurvatureRule::Constant(c)) => Box::new(move |_| Some(c)),
        Some(CurvatureRule::Degree) => Box::new(move |_| Some(deg)),
        Some(CurvatureRule::DegreeTimes(c)) => Box::new(move |_| Some(c * deg)),
        Some(CurvatureRule::PerVertex(map)) => Box::new(move |v| map.get(&v).copied()),
    })
}

fn w_source(args: &CheckArgs, balls: &BallSequence, radius: usize) -> Result<Option<WSource>> {
    Ok(if let Some(text) = &args.sets {
        Some(WSource::Explicit(parse_sets(text)?))
    } else if let Some(cap) = args.cap {
        let region: BTreeSet<u64> = balls.ball(radius.saturating_sub(1)).collect();
        Some(WSource::ConnectedSubsets { region, max_size: cap, max_sets: args.max_sets })
    } else {
        args.balls.map(|r| WSource::SubBalls { centers: vec![0], max_radius: r })
    })
}

fn run_realize(args: &RealizeArgs) -> Result<()> {
    let k: Vec<f64> = args
        .face
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad curvature `{x}`")))
        .collect::<Result<_>>()?;
    let dual = solve_dual_curvature(&k)?;
    let config = realize_face(&k, dual.curvature)?;
    emit(args.out.as_deref(), &render_svg(&config)?)?;
    let arcs: Vec<_> = measure_arc_quantities(&config)?
        .iter()
        .map(|m| json!({ "length": m.length, "total_curvature": m.total_curvature }))
        .collect();
    eprintln!("{}", json!({ "dual_curvature": dual.curvature, "arcs": arcs }));
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let kind: TilingKind = args.tiling.parse()?;
    let radii = parse_id_list(&args.radii)?.into_iter().map(|r| r as usize).collect();
    let start = match args.solver.s0.strip_prefix("file:") {
        Some(path) => read_start(Path::new(path))?,
        None => args.solver.s0.parse()?,
    };
    let mut flow = FlowOptions::default();
    if let Some(tol) = args.solver.tol {
        flow.stop_tol = tol;
    }
    let spec = ExhaustionSpec {
        radii,
        that: that_rule(&args.solver.that)?,
        start,
        probes: parse_id_list(&args.probes)?,
        flow,
    };
    let report = exhaustion_driver(kind.provider(), &spec).context("exhaustion")?;
    emit(args.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => {
            let complex = generate_tiling(args.tiling.parse()?, args.radius)?;
            emit(args.out.as_deref(), &(complex.to_json() + "\n"))
        }
        Command::Flow(args) => run_flow(&args),
        Command::Steady(args) => run_steady(&args),
        Command::Check(args) => run_check(&args),
        Command::Realize(args) => run_realize(&args),
        Command::Sweep(args) => run_sweep(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(threads) = std::env::var("HYPFLOW_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring HYPFLOW_THREADS={threads}"),
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            eprintln!("{}", json!({ "error": "usage", "message": err.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
            eprintln!("{}", json!({ "error": chain[0], "causes": &chain[1..] }));
            ExitCode::FAILURE
        }
    }
}
