//! Benchmark rows and their CSV / table rendering.

use std::fmt;
use std::time::Duration;

use crate::model::ns_to_ms;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Vanilla,
    Record,
    Replay,
    Static,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Vanilla => "vanilla",
            Mode::Record => "record",
            Mode::Replay => "replay",
            Mode::Static => "static",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

/// One measured configuration. `overhead_ns` is always
/// `measured - computation`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub benchmark: String,
    pub mode: Mode,
    pub tasks: u64,
    pub threads: u64,
    /// Work iterations per task.
    pub grain: u64,
    pub runs: usize,
    /// Mean over runs.
    pub measured: Duration,
    pub median: Duration,
    pub computation: Duration,
    pub overhead_ns: i128,
    /// Reference time for the relative-overhead column, when one exists.
    pub baseline: Option<Duration>,
}

impl Row {
    /// Builds a row from raw run samples. Panics on an empty sample set.
    pub fn from_samples(
        benchmark: impl Into<String>,
        mode: Mode,
        tasks: u64,
        threads: u64,
        grain: u64,
        samples: &[Duration],
        computation: Duration,
    ) -> Self {
        let measured = mean(samples);
        Self {
            benchmark: benchmark.into(),
            mode,
            tasks,
            threads,
            grain,
            runs: samples.len(),
            measured,
            median: median(samples),
            computation,
            overhead_ns: measured.as_nanos() as i128 - computation.as_nanos() as i128,
            baseline: None,
        }
    }

    pub fn with_baseline(mut self, baseline: Duration) -> Self {
        self.baseline = Some(baseline);
        self
    }

    /// `(measured - baseline) / baseline`.
    pub fn relative_overhead(&self) -> Option<f64> {
        let b = self.baseline?.as_secs_f64();
        (b > 0.0).then(|| (self.measured.as_secs_f64() - b) / b)
    }

    pub fn negative_overhead(&self) -> bool {
        self.overhead_ns < 0
    }

    fn same_config(&self, other: &Row) -> bool {
        self.benchmark == other.benchmark
            && self.tasks == other.tasks
            && self.threads == other.threads
            && self.grain == other.grain
    }
}

pub fn mean(samples: &[Duration]) -> Duration {
    assert!(!samples.is_empty(), "no samples");
    let total: u128 = samples.iter().map(Duration::as_nanos).sum();
    Duration::from_nanos((total / samples.len() as u128) as u64)
}

/// Lower median for even sample counts.
pub fn median(samples: &[Duration]) -> Duration {
    assert!(!samples.is_empty(), "no samples");
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    sorted[(sorted.len() - 1) / 2]
}

/// `baseline / other`; 1.0 when equal.
pub fn speedup(baseline: Duration, other: Duration) -> f64 {
    baseline.as_secs_f64() / other.as_secs_f64()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<Row>,
}

const HEADER: [&str; 13] = [
    "benchmark",
    "mode",
    "tasks",
    "threads",
    "grain",
    "runs",
    "measured_ms",
    "median_ms",
    "computation_ms",
    "overhead_ms",
    "speedup",
    "relative_overhead",
    "flag",
];

impl BenchmarkReport {
    pub fn new(rows: Vec<Row>) -> Self {
        Self { rows }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    /// Vanilla time over this row's time for the same configuration.
    pub fn speedup(&self, row: &Row) -> Option<f64> {
        let vanilla = self
            .rows
            .iter()
            .find(|r| r.mode == Mode::Vanilla && r.same_config(row))?;
        Some(speedup(vanilla.measured, row.measured))
    }

    fn cells(&self) -> Vec<[String; 13]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.benchmark.clone(),
                    r.mode.to_string(),
                    r.tasks.to_string(),
                    r.threads.to_string(),
                    r.grain.to_string(),
                    r.runs.to_string(),
                    ms(r.measured),
                    ms(r.median),
                    ms(r.computation),
                    format!("{:.3}", ns_to_ms(r.overhead_ns)),
                    self.speedup(r)
                        .map(|s| format!("{s:.3}"))
                        .unwrap_or_default(),
                    r.relative_overhead()
                        .map(|v| format!("{v:.4}"))
                        .unwrap_or_default(),
                    if r.negative_overhead() {
                        "negative-overhead".into()
                    } else {
                        String::new()
                    },
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = (0..HEADER.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].len())
                    .chain([HEADER[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |fields: Vec<&str>| {
            let padded: Vec<String> = fields
                .iter()
                .zip(&widths)
                .map(|(f, w)| format!("{f:>w$}"))
                .collect();
            padded.join("  ").trim_end().to_owned() + "\n"
        };
        let mut out = line(HEADER.to_vec());
        for row in &cells {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Table => self.to_table(),
        }
    }
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}
