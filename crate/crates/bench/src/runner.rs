//! End-to-end kernel runs in each execution mode.

use std::path::Path;
use std::time::{Duration, Instant};

use tdg_runtime::{
    record_graph, save_tdg, Base64Codec, BodyRegistry, GraphId, RegionOptions, Spawner,
    TdgRegistry, WorkerPool,
};

use crate::kernels::{compare_bits, Kernel};
use crate::model::OverheadModel;
use crate::report::{median, Mode, Row};
use crate::BenchError;

fn region_id(kernel: &dyn Kernel) -> GraphId {
    GraphId::named(
        "tdgbench/kernel",
        kernel.tasks_per_iter() as u32,
        kernel.name(),
    )
}

/// Writes the graph of one kernel iteration to `path`.
pub fn save_kernel_tdg(kernel: &dyn Kernel, path: &Path) -> Result<(), BenchError> {
    let graph = record_graph(&region_id(kernel), &|s: &mut Spawner<'_>| {
        kernel.spawn_iteration(s)
    })?;
    let bytes = save_tdg(&graph, &Base64Codec)?;
    std::fs::write(path, bytes).map_err(|e| BenchError::Io(path.display().to_string(), e))
}

/// Runs `iters` iterations from the initial data, checks the result
/// against the serial implementation, and returns the elapsed time.
///
/// `Mode::Replay` (and `Mode::Record`) record on the first iteration and
/// replay afterwards; the timing includes the recording.
pub fn run_kernel(
    kernel: &dyn Kernel,
    pool: &WorkerPool,
    mode: Mode,
    iters: usize,
    static_tdg: Option<&Path>,
) -> Result<Duration, BenchError> {
    kernel.reset();
    let gen = |s: &mut Spawner<'_>| kernel.spawn_iteration(s);
    let id = region_id(kernel);
    let bodies: BodyRegistry = kernel.bodies().into_iter().collect();
    let start = Instant::now();
    match mode {
        Mode::Vanilla => {
            for _ in 0..iters {
                pool.execute_vanilla(&gen)?;
            }
        }
        Mode::Record | Mode::Replay | Mode::Static => {
            let mut opts = RegionOptions::default();
            if mode == Mode::Static {
                opts = opts.static_tdg(static_tdg.ok_or(BenchError::MissingStaticTdg)?, &bodies);
            }
            let registry = TdgRegistry::new();
            for _ in 0..iters {
                registry.taskgraph_region(&id, pool, opts, &gen)?;
            }
        }
    }
    let elapsed = start.elapsed();
    verify(kernel, iters)?;
    Ok(elapsed)
}

pub fn verify(kernel: &dyn Kernel, iters: usize) -> Result<(), BenchError> {
    match compare_bits(&kernel.serial(iters), &kernel.result()) {
        None => Ok(()),
        Some(m) => Err(BenchError::Mismatch {
            kernel: kernel.name().to_owned(),
            differing: m.differing,
            first_index: m.first_index,
            expected: m.expected,
            got: m.got,
        }),
    }
}

/// Serial time of `iters` iterations.
pub fn serial_time(kernel: &dyn Kernel, iters: usize) -> Duration {
    let t = Instant::now();
    std::hint::black_box(kernel.serial(iters));
    t.elapsed()
}

/// One row per mode, each over `runs` end-to-end runs.
pub fn kernel_rows(
    kernel: &dyn Kernel,
    pool: &WorkerPool,
    modes: &[Mode],
    iters: usize,
    runs: usize,
    static_tdg: Option<&Path>,
) -> Result<Vec<Row>, BenchError> {
    let serial = median(
        &(0..runs.max(1))
            .map(|_| serial_time(kernel, iters))
            .collect::<Vec<_>>(),
    );
    let tasks = kernel.tasks_per_iter() * iters as u64;
    let computation = OverheadModel::new(
        serial.max(Duration::from_nanos(1)),
        tasks.max(1),
        pool.threads() as u64,
    )?
    .computation();
    let mut rows = Vec::new();
    for &mode in modes {
        let samples = (0..runs.max(1))
            .map(|_| run_kernel(kernel, pool, mode, iters, static_tdg))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(
            Row::from_samples(
                kernel.name(),
                mode,
                tasks,
                pool.threads() as u64,
                kernel.grain(),
                &samples,
                computation,
            )
            .with_baseline(computation),
        );
    }
    Ok(rows)
}
