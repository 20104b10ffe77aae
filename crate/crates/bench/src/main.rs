use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tdg_runtime::{record_graph, save_tdg, Base64Codec, GraphId, PoolConfig, Spawner, WorkerPool};
use tdgbench::model::ns_to_ms;
use tdgbench::work::Calibration;
use tdgbench::{
    default_threads, kernel_rows, pinning_requested, save_kernel_tdg, BenchError, BenchmarkReport,
    ChainBench, ChainConfig, Format, KernelKind, Mode, OverheadModel,
};

#[derive(Parser)]
#[command(
    name = "tdgbench",
    version,
    about = "Record-and-replay task graph benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chain benchmark: task i writes slot i mod deps.
    Chain(ChainArgs),
    /// Numerical kernel (axpy, dotp, heat, nbody) run for several iterations.
    Kernel(KernelArgs),
    /// Evaluate the analytic overhead model.
    Model(ModelArgs),
    /// Print a recorded graph in DOT format.
    ExportDot(ExportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliMode {
    Vanilla,
    RecordReplay,
    Static,
}

impl CliMode {
    fn mode(self) -> Mode {
        match self {
            Self::Vanilla => Mode::Vanilla,
            Self::RecordReplay => Mode::Record,
            Self::Static => Mode::Static,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Output {
    Csv,
    Table,
}

#[derive(Args)]
struct Common {
    /// Worker threads [default: available cores, at least 4]
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [CliMode::Vanilla, CliMode::RecordReplay])]
    mode: Vec<CliMode>,
    /// Graph file for static mode; generated in the temp dir when omitted
    #[arg(long)]
    static_tdg: Option<PathBuf>,
    /// Runs per configuration; rows report the mean and the median
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, value_enum, default_value_t = Output::Table)]
    output: Output,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ChainArgs {
    /// Task counts; a comma-separated list runs a sweep
    #[arg(long, value_delimiter = ',', default_values_t = [10_000u64])]
    tasks: Vec<u64>,
    /// Slots in the chain [default: thread count]
    #[arg(long)]
    deps: Option<u64>,
    /// Work iterations shared by all tasks
    #[arg(long, default_value_t = 100_000_000)]
    total_work: u64,
    /// Also write the recorded graph of the first task count here
    #[arg(long)]
    save_tdg: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "axpy")]
    name: KernelKind,
    /// Vector length, grid side or particle count
    #[arg(long)]
    size: Option<usize>,
    /// Block count (per side for heat)
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value_t = 16)]
    iters: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    serial_ms: f64,
    #[arg(long)]
    tasks: u64,
    #[arg(long)]
    threads: u64,
    #[arg(long)]
    measured_ms: Option<f64>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, default_value_t = 6)]
    tasks: u64,
    #[arg(long, default_value_t = 3)]
    deps: u64,
    /// Export a kernel iteration instead of the chain
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    /// Also write the graph as a .tdg.json file
    #[arg(long)]
    save_tdg: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tdgbench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Chain(args) => chain(args),
        Command::Kernel(args) => kernel(args),
        Command::Model(args) => model(args),
        Command::ExportDot(args) => export_dot(args),
    }
}

fn pool(threads: Option<usize>) -> Result<WorkerPool, BenchError> {
    let threads = threads.unwrap_or_else(default_threads);
    let mut config = PoolConfig::new(threads).untraced();
    config.pin_threads = pinning_requested();
    Ok(WorkerPool::with_config(config)?)
}

fn check_pinning(pool: &WorkerPool) {
    if pinning_requested() && pool.pinned_workers() < pool.threads() {
        eprintln!(
            "tdgbench: warning: thread pinning requested but unavailable ({} of {} workers pinned)",
            pool.pinned_workers(),
            pool.threads()
        );
    }
}

fn temp_tdg(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("tdgbench-{name}-{}.tdg.json", std::process::id()))
}

fn modes(common: &Common) -> Vec<Mode> {
    common.mode.iter().map(|m| m.mode()).collect()
}

fn emit(report: &BenchmarkReport, output: Output) {
    let format = match output {
        Output::Csv => Format::Csv,
        Output::Table => Format::Table,
    };
    print!("{}", report.render(format));
}

fn chain(args: ChainArgs) -> Result<(), BenchError> {
    let pool = pool(args.common.threads)?;
    let deps = args.deps.unwrap_or(pool.threads() as u64).max(1);
    let modes = modes(&args.common);
    let calibration = Calibration::measure(1_000_000);
    eprintln!(
        "tdgbench: {:.3} ns per work iteration; total work about {:.1} ms serial",
        calibration.ns_per_iter,
        calibration.estimate(args.total_work).as_secs_f64() * 1e3
    );
    let mut report = BenchmarkReport::default();
    for (k, &tasks) in args.tasks.iter().enumerate() {
        let bench = ChainBench::new(
            &pool,
            ChainConfig {
                tasks,
                deps,
                total_work: args.total_work,
                runs: args.common.runs,
            },
        );
        if k == 0 {
            if let Some(path) = &args.save_tdg {
                bench.save(path)?;
            }
        }
        let generated;
        let static_path: Option<&Path> =
            match (&args.common.static_tdg, modes.contains(&Mode::Static)) {
                (Some(p), _) => Some(p),
                (None, true) => {
                    generated = temp_tdg(&format!("chain-{tasks}"));
                    bench.save(&generated)?;
                    Some(&generated)
                }
                (None, false) => None,
            };
        report.rows.extend(bench.rows(&modes, static_path)?);
    }
    check_pinning(&pool);
    emit(&report, args.common.output);
    Ok(())
}

fn kernel(args: KernelArgs) -> Result<(), BenchError> {
    let pool = pool(args.common.threads)?;
    let kind = args.name;
    let kernel = kind.build(
        args.size.unwrap_or(kind.default_size()),
        args.blocks.unwrap_or(kind.default_blocks()),
        args.common.seed,
    );
    let modes: Vec<Mode> = modes(&args.common)
        .into_iter()
        .map(|m| if m == Mode::Record { Mode::Replay } else { m })
        .collect();
    let generated;
    let static_path: Option<&Path> = match (&args.common.static_tdg, modes.contains(&Mode::Static))
    {
        (Some(p), _) => Some(p),
        (None, true) => {
            generated = temp_tdg(kernel.name());
            save_kernel_tdg(kernel.as_ref(), &generated)?;
            Some(&generated)
        }
        (None, false) => None,
    };
    let rows = kernel_rows(
        kernel.as_ref(),
        &pool,
        &modes,
        args.iters,
        args.common.runs,
        static_path,
    )?;
    check_pinning(&pool);
    emit(&BenchmarkReport::new(rows), args.common.output);
    Ok(())
}

fn model(args: ModelArgs) -> Result<(), BenchError> {
    let serial = Duration::from_secs_f64(args.serial_ms.max(0.0) / 1e3);
    let m = OverheadModel::new(serial, args.tasks, args.threads)?;
    println!("time_fn_ms={:.6}", m.time_fn().as_secs_f64() * 1e3);
    println!("rounds={}", m.rounds());
    println!("computation_ms={:.6}", m.computation().as_secs_f64() * 1e3);
    if let Some(measured) = args.measured_ms {
        let measured = Duration::from_secs_f64(measured.max(0.0) / 1e3);
        let overhead = m.overhead_ns(measured);
        let flag = if overhead < 0 { " (negative)" } else { "" };
        println!("overhead_ms={:.6}{flag}", ns_to_ms(overhead));
    }
    Ok(())
}

fn export_dot(args: ExportArgs) -> Result<(), BenchError> {
    let graph = match args.kernel {
        Some(kind) => {
            let kernel = kind.build(
                args.size.unwrap_or(kind.default_size()),
                args.blocks.unwrap_or(kind.default_blocks()),
                0,
            );
            record_graph(
                &GraphId::named("tdgbench/kernel", 0, kind.to_string()),
                &|s: &mut Spawner<'_>| kernel.spawn_iteration(s),
            )?
        }
        None => {
            let (tasks, deps) = (args.tasks, args.deps.max(1));
            let body = tdg_runtime::Body::noop("chain-work");
            record_graph(
                &GraphId::named("tdgbench/chain", tasks as u32, "chain"),
                &|s: &mut Spawner<'_>| {
                    for i in 0..tasks {
                        s.spawn(
                            &body,
                            tdg_runtime::Payload::none(),
                            &[tdg_runtime::DepClause::output(i % deps)],
                        );
                    }
                },
            )?
        }
    };
    if let Some(path) = &args.save_tdg {
        let bytes = save_tdg(&graph, &Base64Codec)?;
        std::fs::write(path, bytes).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
    }
    print!("{}", graph.export_dot());
    Ok(())
}
