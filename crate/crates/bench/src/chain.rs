//! Synthetic chain benchmark: `tasks` tasks, task `i` writing slot
//! `i mod deps`, so the stream is a set of series of independent tasks where
//! each task depends on exactly one task of the previous series.

use std::path::Path;
use std::time::{Duration, Instant};

use tdg_runtime::{
    record_graph, save_tdg, Base64Codec, Body, BodyRegistry, DepClause, GraphId, Payload,
    RegionOptions, Spawner, TaskGraph, TdgRegistry, WorkerPool,
};

use crate::model::OverheadModel;
use crate::report::{Mode, Row};
use crate::work::spin;
use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    pub tasks: u64,
    pub deps: u64,
    /// Work iterations shared by all tasks.
    pub total_work: u64,
    pub runs: usize,
}

impl ChainConfig {
    pub fn grain(&self) -> u64 {
        self.total_work / self.tasks.max(1)
    }
}

pub struct ChainBench<'p> {
    pool: &'p WorkerPool,
    cfg: ChainConfig,
    body: Body,
    id: GraphId,
}

impl<'p> ChainBench<'p> {
    pub fn new(pool: &'p WorkerPool, cfg: ChainConfig) -> Self {
        assert!(
            cfg.tasks >= 1 && cfg.deps >= 1,
            "chain needs tasks and deps"
        );
        let grain = cfg.grain();
        Self {
            pool,
            cfg,
            body: Body::new("chain-work", move |_| {
                spin(grain);
            }),
            id: GraphId::named("tdgbench/chain", cfg.tasks as u32, "chain"),
        }
    }

    pub fn config(&self) -> ChainConfig {
        self.cfg
    }

    fn generate(&self, s: &mut Spawner<'_>) {
        for i in 0..self.cfg.tasks {
            s.spawn(
                &self.body,
                Payload::none(),
                &[DepClause::output(i % self.cfg.deps)],
            );
        }
    }

    pub fn bodies(&self) -> BodyRegistry {
        [self.body.clone()].into_iter().collect()
    }

    /// The recorded graph, without executing it.
    pub fn graph(&self) -> Result<TaskGraph, BenchError> {
        Ok(record_graph(&self.id, &|s: &mut Spawner<'_>| {
            self.generate(s)
        })?)
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let bytes = save_tdg(&self.graph()?, &Base64Codec)?;
        std::fs::write(path, bytes).map_err(|e| BenchError::Io(path.display().to_string(), e))
    }

    /// All work run serially on the calling thread, one call per task.
    pub fn serial_samples(&self) -> Vec<Duration> {
        let grain = self.cfg.grain();
        (0..self.cfg.runs.max(1))
            .map(|_| {
                let t = Instant::now();
                for _ in 0..self.cfg.tasks {
                    spin(grain);
                }
                t.elapsed()
            })
            .collect()
    }

    pub fn warm_up(&self) -> Result<(), BenchError> {
        self.pool.execute_vanilla(&|s: &mut Spawner<'_>| {
            for _ in 0..self.pool.threads() * 4 {
                s.spawn(&self.body, Payload::none(), &[]);
            }
        })?;
        Ok(())
    }

    pub fn vanilla_samples(&self) -> Result<Vec<Duration>, BenchError> {
        self.warm_up()?;
        (0..self.cfg.runs)
            .map(|_| {
                let t = Instant::now();
                self.pool
                    .execute_vanilla(&|s: &mut Spawner<'_>| self.generate(s))?;
                Ok(t.elapsed())
            })
            .collect()
    }

    /// Per run: a fresh registry, the timed recording call, then one timed
    /// replay call.
    pub fn record_replay_samples(&self) -> Result<(Vec<Duration>, Vec<Duration>), BenchError> {
        self.warm_up()?;
        let gen = |s: &mut Spawner<'_>| self.generate(s);
        let mut record = Vec::with_capacity(self.cfg.runs);
        let mut replay = Vec::with_capacity(self.cfg.runs);
        for _ in 0..self.cfg.runs {
            let registry = TdgRegistry::new();
            let t = Instant::now();
            registry.taskgraph_region(&self.id, self.pool, RegionOptions::default(), &gen)?;
            record.push(t.elapsed());
            let t = Instant::now();
            registry.taskgraph_region(&self.id, self.pool, RegionOptions::default(), &gen)?;
            replay.push(t.elapsed());
        }
        Ok((record, replay))
    }

    /// Replay timings only, after one untimed recording.
    pub fn replay_samples(&self) -> Result<Vec<Duration>, BenchError> {
        self.warm_up()?;
        let gen = |s: &mut Spawner<'_>| self.generate(s);
        let registry = TdgRegistry::new();
        registry.taskgraph_region(&self.id, self.pool, RegionOptions::default(), &gen)?;
        (0..self.cfg.runs)
            .map(|_| {
                let t = Instant::now();
                registry.taskgraph_region(&self.id, self.pool, RegionOptions::default(), &gen)?;
                Ok(t.elapsed())
            })
            .collect()
    }

    /// Per run: a fresh registry whose first call loads `path` and replays.
    pub fn static_samples(&self, path: &Path) -> Result<Vec<Duration>, BenchError> {
        self.warm_up()?;
        let bodies = self.bodies();
        let opts = RegionOptions::default().static_tdg(path, &bodies);
        let gen = |s: &mut Spawner<'_>| self.generate(s);
        (0..self.cfg.runs)
            .map(|_| {
                let registry = TdgRegistry::new();
                let t = Instant::now();
                registry.taskgraph_region(&self.id, self.pool, opts, &gen)?;
                Ok(t.elapsed())
            })
            .collect()
    }

    pub fn model(&self, serial: Duration) -> Result<OverheadModel, BenchError> {
        Ok(OverheadModel::new(
            serial.max(Duration::from_nanos(1)),
            self.cfg.tasks,
            self.pool.threads() as u64,
        )?)
    }

    /// Measures the requested modes and returns one row per mode.
    /// `Mode::Record` implies a replay row as well.
    pub fn rows(&self, modes: &[Mode], static_tdg: Option<&Path>) -> Result<Vec<Row>, BenchError> {
        let serial = crate::report::median(&self.serial_samples());
        let computation = self.model(serial)?.computation();
        let row = |mode, samples: &[Duration]| {
            Row::from_samples(
                "chain",
                mode,
                self.cfg.tasks,
                self.pool.threads() as u64,
                self.cfg.grain(),
                samples,
                computation,
            )
            .with_baseline(computation)
        };
        let mut rows = Vec::new();
        for &mode in modes {
            match mode {
                Mode::Vanilla => rows.push(row(Mode::Vanilla, &self.vanilla_samples()?)),
                Mode::Record => {
                    let (rec, rep) = self.record_replay_samples()?;
                    rows.push(row(Mode::Record, &rec));
                    rows.push(row(Mode::Replay, &rep));
                }
                Mode::Replay => rows.push(row(Mode::Replay, &self.replay_samples()?)),
                Mode::Static => {
                    let path = static_tdg.ok_or(BenchError::MissingStaticTdg)?;
                    rows.push(row(Mode::Static, &self.static_samples(path)?));
                }
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tasks: u64, deps: u64) -> ChainConfig {
        ChainConfig {
            tasks,
            deps,
            total_work: 6000,
            runs: 2,
        }
    }

    #[test]
    fn six_tasks_three_deps_form_three_edges() {
        let pool = WorkerPool::new(2).unwrap();
        let g = ChainBench::new(&pool, cfg(6, 3)).graph().unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.edge_count(), 3);
        for t in 3..6 {
            assert_eq!(g.node(t).preds(), &[t - 3]);
        }
        assert_eq!(g.roots().len(), 3);
    }

    #[test]
    fn grain_splits_total_work() {
        assert_eq!(cfg(6, 3).grain(), 1000);
        assert_eq!(
            ChainConfig {
                tasks: 7,
                ..cfg(6, 3)
            }
            .grain(),
            857
        );
    }

    #[test]
    fn rows_cover_requested_modes() {
        let pool = WorkerPool::new(2).unwrap();
        let bench = ChainBench::new(&pool, cfg(12, 2));
        let path = std::env::temp_dir().join(format!(
            "tdgbench-chain-unit-{}.tdg.json",
            std::process::id()
        ));
        bench.save(&path).unwrap();
        let rows = bench
            .rows(&[Mode::Vanilla, Mode::Record, Mode::Static], Some(&path))
            .unwrap();
        std::fs::remove_file(&path).unwrap();
        let modes: Vec<Mode> = rows.iter().map(|r| r.mode).collect();
        assert_eq!(
            modes,
            [Mode::Vanilla, Mode::Record, Mode::Replay, Mode::Static]
        );
        for r in &rows {
            assert_eq!(r.runs, 2);
            assert_eq!(
                r.overhead_ns,
                r.measured.as_nanos() as i128 - r.computation.as_nanos() as i128
            );
        }
    }

    #[test]
    fn static_rows_need_a_path() {
        let pool = WorkerPool::new(2).unwrap();
        let bench = ChainBench::new(&pool, cfg(4, 2));
        assert!(matches!(
            bench.rows(&[Mode::Static], None),
            Err(BenchError::MissingStaticTdg)
        ));
    }
}
