//! The `zcs` command line: benchmarks, training runs, property checks.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use zcs::autograd::BUILTIN_PRIMITIVES;
use zcs::bench::{self, BenchGrid, BenchSpec, Status};
use zcs::checks::{run_suite, Suite};
use zcs::nets::{init_params, Activation};
use zcs::pde::{build_batch, make_problem, physics_loss, ProblemKind, ProblemOptions};
use zcs::sampling::{sample_points, SampleMode};
use zcs::strategies::{ProductMode, Strategy};
use zcs::train::{sample_functions, train, TrainConfig};
use zcs::{Graph, Scalar};

pub use config::Settings;

#[derive(Debug, Parser)]
#[command(
    name = "zcs",
    version,
    about = "Coordinate derivatives for operator learning: benchmarks, training and checks"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Settings file of `key = value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time full batches over a grid of M, N and P and write a CSV.
    Bench(BenchArgs),
    /// Train a network on one problem and write the loss curve.
    Train(TrainArgs),
    /// Run a property suite and print one verdict per property.
    Check(CheckArgs),
    /// Evaluate one physics loss and print graph statistics.
    Derive(DeriveArgs),
    /// Print build settings and the primitive registry.
    Info,
}

#[derive(Debug, Args)]
struct NetArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Grid file, or inline `m=1,4; n=128; p=2; strategies=zcs`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sensors per input function.
    #[arg(long)]
    features: Option<usize>,
    /// Retained-bytes ceiling per batch graph, in MiB; 0 disables it.
    #[arg(long)]
    ceiling_mb: Option<usize>,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_boundary: Option<usize>,
    #[arg(long)]
    n_initial: Option<usize>,
    #[arg(long)]
    product_mode: Option<ProductMode>,
    /// Sensors per input function.
    #[arg(long)]
    sensors: Option<usize>,
    /// Sine modes per axis of the plate load.
    #[arg(long)]
    modes: Option<usize>,
    /// Highest derivative order of the scaling operator.
    #[arg(long)]
    order: Option<usize>,
    /// Weight of boundary and initial terms.
    #[arg(long)]
    bc_weight: Option<f64>,
    #[arg(long)]
    length_scale: Option<f64>,
    #[arg(long)]
    sample_mode: Option<SampleMode>,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ProblemArgs,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Loss-curve CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the trained parameters.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    num_funcs: Option<usize>,
    #[arg(long)]
    num_val_funcs: Option<usize>,
    /// Validate every this many batches and after the last; 0 disables.
    /// Defaults to validating at the first and last batch.
    #[arg(long)]
    validate_every: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Draw fresh collocation points every batch.
    #[arg(long)]
    resample_points: Option<bool>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    suite: Option<Suite>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DeriveArgs {
    #[command(flatten)]
    common: ProblemArgs,
}

/// Failures after argument parsing.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<zcs::Error> for Failure {
    fn from(e: zcs::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: String) -> Failure {
    Failure::Usage(msg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Precision {
    F32,
    F64,
}

fn precision() -> Result<Precision, Failure> {
    match std::env::var("ZCS_FLOAT").ok().as_deref().map(str::trim) {
        None | Some("") | Some("64") => Ok(Precision::F64),
        Some("32") => Ok(Precision::F32),
        Some(other) => Err(usage(format!("ZCS_FLOAT must be 32 or 64, got `{other}`"))),
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code: 0 on success, 1 on runtime failure, 2 on
/// usage errors.
pub fn parse_and_run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let settings = match &cli.config {
        Some(path) => match Settings::load(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => Settings::default(),
    };
    match run(cli.command, &settings) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `zcs --help` for usage");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn run(command: Command, settings: &Settings) -> Outcome {
    let float = precision()?;
    match command {
        Command::Bench(args) => {
            let (grid, spec, out) = bench_inputs(args, settings)?;
            match float {
                Precision::F64 => run_bench::<f64>(&grid, &spec, &out),
                Precision::F32 => run_bench::<f32>(&grid, &spec, &out),
            }
        }
        Command::Train(args) => {
            let (cfg, out, checkpoint) = train_inputs(args, settings)?;
            match float {
                Precision::F64 => run_train::<f64>(&cfg, out.as_deref(), checkpoint.as_deref()),
                Precision::F32 => run_train::<f32>(&cfg, out.as_deref(), checkpoint.as_deref()),
            }
        }
        Command::Check(args) => {
            let suite = settings
                .pick(args.suite, "suite")
                .map_err(usage)?
                .ok_or_else(|| usage("`check` needs --suite".into()))?;
            let seed = settings.pick_or(args.seed, "seed", 0).map_err(usage)?;
            settings.finish().map_err(usage)?;
            if float == Precision::F32 {
                eprintln!("note: property suites always run in f64");
            }
            run_check(suite, seed)
        }
        Command::Derive(args) => {
            let cfg = problem_config(args.common, settings)?;
            settings.finish().map_err(usage)?;
            match float {
                Precision::F64 => run_derive::<f64>(&cfg),
                Precision::F32 => run_derive::<f32>(&cfg),
            }
        }
        Command::Info => {
            settings.finish().map_err(usage)?;
            print_info(float);
            Ok(())
        }
    }
}

fn bench_inputs(args: BenchArgs, s: &Settings) -> Result<(BenchGrid, BenchSpec, PathBuf), Failure> {
    let d = BenchSpec::default();
    let grid_text = s.pick(args.grid, "grid").map_err(usage)?;
    let grid = match grid_text {
        None => BenchGrid::default(),
        Some(g) if Path::new(&g).is_file() => std::fs::read_to_string(&g)
            .map_err(|e| Failure::Runtime(format!("cannot read {g}: {e}")))?
            .parse()
            .map_err(|e: zcs::Error| usage(e.to_string()))?,
        Some(g) => g.parse().map_err(|e: zcs::Error| usage(e.to_string()))?,
    };
    let out = s
        .pick(args.out, "out")
        .map_err(usage)?
        .ok_or_else(|| usage("`bench` needs --out".into()))?;
    let ceiling_mb = s.pick(args.ceiling_mb, "ceiling_mb").map_err(usage)?;
    let spec = BenchSpec {
        features: s
            .pick_or(args.features, "features", d.features)
            .map_err(usage)?,
        width: s.pick_or(args.net.width, "width", d.width).map_err(usage)?,
        depth: s.pick_or(args.net.depth, "depth", d.depth).map_err(usage)?,
        latent: s
            .pick_or(args.net.latent, "latent", d.latent)
            .map_err(usage)?,
        activation: s
            .pick_or(args.net.activation, "activation", d.activation)
            .map_err(usage)?,
        seed: s.pick_or(args.seed, "seed", d.seed).map_err(usage)?,
        repeats: s
            .pick_or(args.repeats, "repeats", d.repeats)
            .map_err(usage)?,
        ceiling: match ceiling_mb {
            None => d.ceiling,
            Some(0) => None,
            Some(mb) => Some(mb << 20),
        },
    };
    s.finish().map_err(usage)?;
    Ok((grid, spec, out))
}

fn run_bench<T: Scalar>(grid: &BenchGrid, spec: &BenchSpec, out: &Path) -> Outcome {
    let points = bench::run_scaling::<T>(grid, spec, out)?;
    for p in &points {
        match p.status {
            Status::Ok => println!(
                "{:<9} M={:<3} N={:<5} P={} {:>10.3} ms {:>7} nodes {:>12} bytes",
                p.strategy.to_string(),
                p.m,
                p.n,
                p.p,
                p.time_ms.unwrap_or(f64::NAN),
                p.nodes.unwrap_or(0),
                p.retained_bytes.unwrap_or(0)
            ),
            Status::DidNotFinish => println!(
                "{:<9} M={:<3} N={:<5} P={} did not finish within the ceiling",
                p.strategy.to_string(),
                p.m,
                p.n,
                p.p
            ),
        }
    }
    println!("wrote {} rows to {}", points.len(), out.display());
    Ok(())
}

fn problem_config(a: ProblemArgs, s: &Settings) -> Result<TrainConfig, Failure> {
    let kind = s
        .pick(a.problem, "problem")
        .map_err(usage)?
        .ok_or_else(|| usage("missing --problem".into()))?;
    let mut cfg = TrainConfig::new(kind);
    let o = ProblemOptions::default();
    cfg.options = ProblemOptions {
        scaling_order: s
            .pick_or(a.order, "order", o.scaling_order)
            .map_err(usage)?,
        kirchhoff_modes: s
            .pick_or(a.modes, "modes", o.kirchhoff_modes)
            .map_err(usage)?,
        sensors: s.pick_or(a.sensors, "sensors", o.sensors).map_err(usage)?,
        bc_weight: s
            .pick_or(a.bc_weight, "bc_weight", o.bc_weight)
            .map_err(usage)?,
        bc_weights: o.bc_weights,
    };
    cfg.strategy = s
        .pick_or(a.strategy, "strategy", cfg.strategy)
        .map_err(usage)?;
    cfg.m = s.pick_or(a.m, "m", cfg.m).map_err(usage)?;
    cfg.n = s.pick_or(a.n, "n", cfg.n).map_err(usage)?;
    cfg.seed = s.pick_or(a.seed, "seed", cfg.seed).map_err(usage)?;
    cfg.n_boundary = s
        .pick_or(a.n_boundary, "n_boundary", cfg.n_boundary)
        .map_err(usage)?;
    cfg.n_initial = s
        .pick_or(a.n_initial, "n_initial", cfg.n_initial)
        .map_err(usage)?;
    cfg.product_mode = s
        .pick_or(a.product_mode, "product_mode", cfg.product_mode)
        .map_err(usage)?;
    cfg.length_scale = s
        .pick_or(a.length_scale, "length_scale", cfg.length_scale)
        .map_err(usage)?;
    cfg.sample_mode = s
        .pick_or(a.sample_mode, "sample_mode", cfg.sample_mode)
        .map_err(usage)?;
    cfg.width = s.pick_or(a.net.width, "width", cfg.width).map_err(usage)?;
    cfg.depth = s.pick_or(a.net.depth, "depth", cfg.depth).map_err(usage)?;
    cfg.latent = s
        .pick_or(a.net.latent, "latent", cfg.latent)
        .map_err(usage)?;
    cfg.activation = s
        .pick_or(a.net.activation, "activation", cfg.activation)
        .map_err(usage)?;
    Ok(cfg)
}

fn train_inputs(
    a: TrainArgs,
    s: &Settings,
) -> Result<(TrainConfig, Option<PathBuf>, Option<PathBuf>), Failure> {
    let mut cfg = problem_config(a.common, s)?;
    cfg.batches = s
        .pick_or(a.batches, "batches", cfg.batches)
        .map_err(usage)?;
    cfg.lr = s.pick_or(a.lr, "lr", cfg.lr).map_err(usage)?;
    cfg.num_funcs = s
        .pick_or(a.num_funcs, "num_funcs", cfg.num_funcs)
        .map_err(usage)?;
    cfg.num_val_funcs = s
        .pick_or(a.num_val_funcs, "num_val_funcs", cfg.num_val_funcs)
        .map_err(usage)?;
    cfg.validate_every = s
        .pick_or(a.validate_every, "validate_every", cfg.batches.max(1))
        .map_err(usage)?;
    cfg.record_every = s
        .pick_or(a.record_every, "record_every", cfg.record_every)
        .map_err(usage)?;
    cfg.resample_points = s
        .pick_or(a.resample_points, "resample_points", cfg.resample_points)
        .map_err(usage)?;
    let out = s.pick(a.out, "out").map_err(usage)?;
    let checkpoint = s.pick(a.checkpoint, "checkpoint").map_err(usage)?;
    s.finish().map_err(usage)?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok((cfg, out, checkpoint))
}

fn run_train<T: Scalar>(
    cfg: &TrainConfig,
    out: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Outcome {
    let outcome = train::<T>(cfg)?;
    if let Some(path) = out {
        outcome.report.save_csv(path)?;
    }
    if let Some(path) = checkpoint {
        outcome.net.params().save(path)?;
    }
    for (batch, err) in &outcome.report.validation {
        println!("batch {batch}: relative L2 {err:.4}");
    }
    println!("{}", outcome.report.summary());
    Ok(())
}

fn run_check(suite: Suite, seed: u64) -> Outcome {
    let start = Instant::now();
    let props = run_suite(suite, seed)?;
    for p in &props {
        println!("{p}");
    }
    let passed = props.iter().filter(|p| p.passed()).count();
    println!(
        "{suite}: {passed}/{} properties passed in {:.1}s",
        props.len(),
        start.elapsed().as_secs_f64()
    );
    if passed == props.len() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} properties failed",
            props.len() - passed
        )))
    }
}

fn run_derive<T: Scalar>(cfg: &TrainConfig) -> Outcome {
    let problem = make_problem(cfg.problem, &cfg.options)?;
    let net = init_params::<T>(&cfg.net_spec(&problem), cfg.seed)?;
    let functions = sample_functions::<T>(&problem, cfg.m, cfg.length_scale, cfg.seed)?;
    let points = sample_points(
        &problem,
        cfg.n,
        cfg.n_boundary,
        cfg.n_initial,
        cfg.sample_mode,
        cfg.seed,
    )?;
    let idx: Vec<usize> = (0..cfg.m).collect();
    let batch = build_batch(&problem, &functions, &idx, &points)?;
    let graph = Graph::new();
    let bound = net.bind(&graph)?;
    let start = Instant::now();
    let loss = physics_loss(&problem, &bound, cfg.strategy, &batch, cfg.product_mode)?;
    let elapsed = start.elapsed();
    let stats = graph.stats();
    println!(
        "{} {} M={} N={} P={} ({})",
        problem.kind,
        cfg.strategy,
        cfg.m,
        cfg.n,
        problem.order,
        T::NAME
    );
    println!("loss {:.6e}", loss.value().as_f64());
    for (name, v) in loss.part_values() {
        println!("  {name:<12} {:.6e}", v.as_f64());
    }
    println!(
        "graph: {} nodes, {} leaves, {} retained bytes",
        stats.node_count, stats.leaf_count, stats.retained_bytes
    );
    println!(
        "time: forward {:.3} ms, derivatives {:.3} ms, total {:.3} ms",
        loss.forward.as_secs_f64() * 1e3,
        loss.pde.as_secs_f64() * 1e3,
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

fn print_info(float: Precision) {
    println!("zcs {}", env!("CARGO_PKG_VERSION"));
    println!(
        "build: {} profile, {}-{}",
        if cfg!(debug_assertions) {
            "debug"
        } else {
            "release"
        },
        std::env::consts::ARCH,
        std::env::consts::OS
    );
    println!(
        "float: {} (ZCS_FLOAT)",
        match float {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    );
    println!("threads: 1");
    let list = |v: Vec<String>| v.join(" ");
    println!(
        "strategies: {}",
        list(Strategy::ALL.iter().map(|s| s.to_string()).collect())
    );
    println!(
        "problems: {}",
        list(ProblemKind::ALL.iter().map(|s| s.to_string()).collect())
    );
    println!(
        "suites: {}",
        list(Suite::ALL.iter().map(|s| s.to_string()).collect())
    );
    println!(
        "primitives ({}): {}",
        BUILTIN_PRIMITIVES.len(),
        BUILTIN_PRIMITIVES.join(" ")
    );
}
