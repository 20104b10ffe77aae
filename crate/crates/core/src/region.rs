//! Taskgraph regions: record on first execution, replay afterwards.
//!
//! [`TdgRegistry::taskgraph_region`] is the entry point. The first call on a
//! fresh [`GraphId`] either loads a pre-built graph file or runs the region
//! generator while recording; every later call replays the stored graph
//! without invoking the generator.

use std::cell::Cell;
use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::ThreadId;

use thiserror::Error;

use crate::graph::{GraphId, RunStateError, TaskGraph};
use crate::recorder::{RecordError, RecordMode, RecordingSession};
use crate::scheduler::trace::ExecutionTrace;
use crate::scheduler::{on_worker_thread, ExecError, Spawner, WorkerPool};
use crate::serialization::{load_tdg, BodyRegistry, LoadError};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("recursive taskgraph: region {0} entered while already active")]
    Recursive(String),
    #[error(
        "shape drift in region {region}: recorded hash {expected:#018x}, re-recorded {found:#018x}"
    )]
    ShapeDrift {
        region: String,
        expected: u64,
        found: u64,
    },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    RunState(#[from] RunStateError),
    #[error("static graph {path}: {source}")]
    Load {
        path: String,
        #[source]
        source: LoadError,
    },
    #[error("static graph {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionState {
    Empty,
    Recording,
    Ready,
    Replaying,
}

/// How a region call was served.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionPath {
    /// Generator executed while recording.
    Recorded,
    /// Generator recorded without executing, then the graph was replayed.
    RecordedThenReplayed,
    /// Graph loaded from a file, then replayed.
    LoadedStatic,
    Replayed,
}

#[derive(Debug)]
pub struct RegionOutcome {
    pub path: RegionPath,
    pub trace: ExecutionTrace,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RegionStats {
    pub records: u64,
    pub replays: u64,
    pub validations: u64,
}

#[derive(Clone, Copy)]
pub struct StaticTdg<'a> {
    pub path: &'a Path,
    pub bodies: &'a BodyRegistry,
}

#[derive(Clone, Copy, Default)]
pub struct RegionOptions<'a> {
    /// Allow this instance to overlap other instances of the same region.
    pub nowait: bool,
    /// Pre-built graph used instead of recording.
    pub static_tdg: Option<StaticTdg<'a>>,
    pub record_mode: RecordMode,
    /// Re-record every Nth replay into a shadow session and compare shapes.
    pub validate_every: Option<u32>,
}

impl<'a> RegionOptions<'a> {
    pub fn nowait(mut self, nowait: bool) -> Self {
        self.nowait = nowait;
        self
    }

    pub fn static_tdg(mut self, path: &'a Path, bodies: &'a BodyRegistry) -> Self {
        self.static_tdg = Some(StaticTdg { path, bodies });
        self
    }

    pub fn record_mode(mut self, mode: RecordMode) -> Self {
        self.record_mode = mode;
        self
    }

    pub fn validate_every(mut self, n: u32) -> Self {
        self.validate_every = Some(n.max(1));
        self
    }
}

struct EntryInner {
    state: RegionState,
    graph: Option<Arc<TaskGraph>>,
    recorder: Option<ThreadId>,
    exclusive: bool,
    active: usize,
    stats: RegionStats,
}

struct Entry {
    inner: Mutex<EntryInner>,
    cv: Condvar,
}

impl Entry {
    fn lock(&self) -> MutexGuard<'_, EntryInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Admission ticket for one replay instance; releases on drop.
pub struct Admission {
    entry: Arc<Entry>,
    graph: Arc<TaskGraph>,
    detached: bool,
}

impl Admission {
    pub fn graph(&self) -> &Arc<TaskGraph> {
        &self.graph
    }

    /// True when this instance runs on cloned run-state.
    pub fn is_detached(&self) -> bool {
        self.detached
    }
}

impl Drop for Admission {
    fn drop(&mut self) {
        let mut inner = self.entry.lock();
        inner.active -= 1;
        if !self.detached {
            inner.exclusive = false;
        }
        if inner.active == 0 {
            inner.state = RegionState::Ready;
        }
        drop(inner);
        self.entry.cv.notify_all();
    }
}

thread_local! {
    static IN_GENERATOR: Cell<bool> = const { Cell::new(false) };
}

struct GeneratorScope;

impl GeneratorScope {
    fn enter() -> Self {
        IN_GENERATOR.with(|g| g.set(true));
        GeneratorScope
    }
}

impl Drop for GeneratorScope {
    fn drop(&mut self) {
        IN_GENERATOR.with(|g| g.set(false));
    }
}

/// Stored graphs keyed by region source location.
#[derive(Default)]
pub struct TdgRegistry {
    entries: Mutex<HashMap<GraphId, Arc<Entry>>>,
}

impl TdgRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(&self, id: &GraphId) -> Arc<Entry> {
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        Arc::clone(entries.entry(id.clone()).or_insert_with(|| {
            Arc::new(Entry {
                inner: Mutex::new(EntryInner {
                    state: RegionState::Empty,
                    graph: None,
                    recorder: None,
                    exclusive: false,
                    active: 0,
                    stats: RegionStats::default(),
                }),
                cv: Condvar::new(),
            })
        }))
    }

    pub fn state(&self, id: &GraphId) -> RegionState {
        self.entry(id).lock().state
    }

    pub fn graph(&self, id: &GraphId) -> Option<Arc<TaskGraph>> {
        self.entry(id).lock().graph.clone()
    }

    pub fn stats(&self, id: &GraphId) -> RegionStats {
        self.entry(id).lock().stats
    }

    /// Number of regions with a stored graph.
    pub fn len(&self) -> usize {
        let entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        entries
            .values()
            .filter(|e| e.lock().graph.is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Opens a recording session; the region moves to `Recording`.
    pub fn begin_recording(
        &self,
        id: &GraphId,
        mode: RecordMode,
    ) -> Result<RecordingSession, RegionError> {
        let entry = self.entry(id);
        let mut inner = entry.lock();
        match inner.state {
            RegionState::Empty => {
                inner.state = RegionState::Recording;
                inner.recorder = Some(std::thread::current().id());
                Ok(RecordingSession::new(id.clone(), mode))
            }
            _ => Err(RegionError::Recursive(id.to_string())),
        }
    }

    /// Finalizes `session` and stores its graph; the region becomes `Ready`.
    pub fn finalize(&self, session: &mut RecordingSession) -> Result<Arc<TaskGraph>, RegionError> {
        let graph = match session.finalize() {
            Ok(g) => Arc::new(g),
            Err(e @ RecordError::IncompleteTasks { .. }) => return Err(e.into()),
            Err(e) => {
                self.abort_recording(session.id());
                return Err(e.into());
            }
        };
        let entry = self.entry(session.id());
        let mut inner = entry.lock();
        inner.state = RegionState::Ready;
        inner.recorder = None;
        inner.graph = Some(Arc::clone(&graph));
        inner.stats.records += 1;
        drop(inner);
        entry.cv.notify_all();
        Ok(graph)
    }

    /// Drops an unfinished recording; the region returns to `Empty`.
    pub fn abort_recording(&self, id: &GraphId) {
        let entry = self.entry(id);
        let mut inner = entry.lock();
        if inner.state == RegionState::Recording {
            inner.state = RegionState::Empty;
            inner.recorder = None;
        }
        drop(inner);
        entry.cv.notify_all();
    }

    /// Stores a pre-built graph for an empty region (`Empty -> Ready`).
    pub fn install(&self, graph: TaskGraph) -> Result<Arc<TaskGraph>, RegionError> {
        let entry = self.entry(graph.id());
        let mut inner = entry.lock();
        if inner.state != RegionState::Empty {
            return Err(RegionError::Recursive(graph.id().to_string()));
        }
        let graph = Arc::new(graph);
        inner.state = RegionState::Ready;
        inner.graph = Some(Arc::clone(&graph));
        drop(inner);
        entry.cv.notify_all();
        Ok(graph)
    }

    /// Admits one replay instance. Without `nowait` the caller waits until
    /// every earlier instance has quiesced; with `nowait` admission is
    /// immediate and the instance must run on cloned run-state.
    pub fn sequentialize(&self, id: &GraphId, nowait: bool) -> Result<Admission, RegionError> {
        let entry = self.entry(id);
        let mut inner = entry.lock();
        loop {
            match inner.state {
                RegionState::Empty => return Err(RegionError::Recursive(id.to_string())),
                RegionState::Recording => {
                    if inner.recorder == Some(std::thread::current().id()) {
                        return Err(RegionError::Recursive(id.to_string()));
                    }
                }
                RegionState::Ready | RegionState::Replaying => {
                    if nowait || inner.active == 0 {
                        break;
                    }
                }
            }
            inner = entry.cv.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
        inner.active += 1;
        inner.state = RegionState::Replaying;
        if !nowait {
            inner.exclusive = true;
        }
        let graph = Arc::clone(inner.graph.as_ref().expect("ready region has a graph"));
        drop(inner);
        Ok(Admission {
            entry,
            graph,
            detached: nowait,
        })
    }

    /// Executes one instance of the region `id`.
    ///
    /// * fresh region with a static graph: load it, then replay;
    /// * fresh region otherwise: run `body` while recording, store the graph;
    /// * stored graph: reset run-state and replay; `body` is not invoked
    ///   (except for shadow shape validation when enabled).
    pub fn taskgraph_region<F>(
        &self,
        id: &GraphId,
        pool: &WorkerPool,
        options: RegionOptions<'_>,
        body: &F,
    ) -> Result<RegionOutcome, RegionError>
    where
        F: Fn(&mut Spawner<'_>) + Sync,
    {
        if on_worker_thread() || IN_GENERATOR.with(Cell::get) {
            return Err(RegionError::Recursive(id.to_string()));
        }
        let entry = self.entry(id);
        let mut inner = entry.lock();
        while inner.state == RegionState::Recording {
            if inner.recorder == Some(std::thread::current().id()) {
                return Err(RegionError::Recursive(id.to_string()));
            }
            inner = entry.cv.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
        if inner.state == RegionState::Empty {
            drop(inner);
            if let Some(static_tdg) = options.static_tdg {
                let graph = load_static(id, static_tdg)?;
                self.install(graph)?;
                let trace = self.replay(id, pool, &options, body)?;
                return Ok(RegionOutcome {
                    path: RegionPath::LoadedStatic,
                    trace,
                });
            }
            return self.record(id, pool, &options, body);
        }
        drop(inner);
        let trace = self.replay(id, pool, &options, body)?;
        Ok(RegionOutcome {
            path: RegionPath::Replayed,
            trace,
        })
    }

    fn record<F>(
        &self,
        id: &GraphId,
        pool: &WorkerPool,
        options: &RegionOptions<'_>,
        body: &F,
    ) -> Result<RegionOutcome, RegionError>
    where
        F: Fn(&mut Spawner<'_>) + Sync,
    {
        let mut session = self.begin_recording(id, options.record_mode)?;
        match options.record_mode {
            RecordMode::RecordAndExecute => {
                let trace = match pool.record_and_execute(&mut session, body) {
                    Ok(t) => t,
                    Err(e) => {
                        self.abort_recording(id);
                        return Err(e.into());
                    }
                };
                self.finalize(&mut session)?;
                Ok(RegionOutcome {
                    path: RegionPath::Recorded,
                    trace,
                })
            }
            RecordMode::RecordOnly => {
                if let Err(panic) = record_only(&mut session, body) {
                    self.abort_recording(id);
                    std::panic::resume_unwind(panic);
                }
                self.finalize(&mut session)?;
                let trace = self.replay(id, pool, options, body)?;
                Ok(RegionOutcome {
                    path: RegionPath::RecordedThenReplayed,
                    trace,
                })
            }
        }
    }

    fn replay<F>(
        &self,
        id: &GraphId,
        pool: &WorkerPool,
        options: &RegionOptions<'_>,
        body: &F,
    ) -> Result<ExecutionTrace, RegionError>
    where
        F: Fn(&mut Spawner<'_>) + Sync,
    {
        let admission = self.sequentialize(id, options.nowait)?;
        let graph = Arc::clone(admission.graph());
        let replay_no = {
            let entry = self.entry(id);
            let mut inner = entry.lock();
            inner.stats.replays += 1;
            inner.stats.replays
        };
        if let Some(every) = options.validate_every {
            if replay_no % every as u64 == 0 {
                self.check_shape(id, &graph, body)?;
            }
        }
        let trace = if admission.is_detached() {
            pool.execute_graph_detached(&graph)?
        } else {
            graph.reset_run_state()?;
            pool.execute_graph(&graph)?
        };
        drop(admission);
        Ok(trace)
    }

    fn check_shape<F>(&self, id: &GraphId, graph: &TaskGraph, body: &F) -> Result<(), RegionError>
    where
        F: Fn(&mut Spawner<'_>) + Sync,
    {
        let mut shadow = RecordingSession::new(id.clone(), RecordMode::RecordOnly);
        if let Err(panic) = record_only(&mut shadow, body) {
            std::panic::resume_unwind(panic);
        }
        let found = shadow.finalize()?.structural_hash();
        {
            let entry = self.entry(id);
            entry.lock().stats.validations += 1;
        }
        if found != graph.structural_hash() {
            return Err(RegionError::ShapeDrift {
                region: id.to_string(),
                expected: graph.structural_hash(),
                found,
            });
        }
        Ok(())
    }
}

/// Records `body` into a graph without executing any task.
pub fn record_graph<F>(id: &GraphId, body: &F) -> Result<TaskGraph, RegionError>
where
    F: Fn(&mut Spawner<'_>) + Sync,
{
    if on_worker_thread() || IN_GENERATOR.with(Cell::get) {
        return Err(RegionError::Recursive(id.to_string()));
    }
    let mut session = RecordingSession::new(id.clone(), RecordMode::RecordOnly);
    if let Err(panic) = record_only(&mut session, body) {
        std::panic::resume_unwind(panic);
    }
    Ok(session.finalize()?)
}

fn record_only<F>(session: &mut RecordingSession, body: &F) -> std::thread::Result<()>
where
    F: Fn(&mut Spawner<'_>) + Sync,
{
    let _scope = GeneratorScope::enter();
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        let mut spawner = Spawner::recording(session);
        body(&mut spawner);
    }))
}

fn load_static(id: &GraphId, static_tdg: StaticTdg<'_>) -> Result<TaskGraph, RegionError> {
    let path = static_tdg.path.display().to_string();
    let bytes = std::fs::read(static_tdg.path).map_err(|source| RegionError::Io {
        path: path.clone(),
        source,
    })?;
    let graph =
        load_tdg(&bytes, static_tdg.bodies).map_err(|source| RegionError::Load { path, source })?;
    if graph.id() != id {
        // the file describes another region; key it under the caller's id
        return Ok(graph.with_id(id.clone()));
    }
    Ok(graph)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskloopPlan {
    pub chunks: Vec<Range<u64>>,
    pub requested: usize,
}

impl TaskloopPlan {
    /// True when fewer tasks than requested were emitted because the range
    /// is shorter than the task count.
    pub fn clamped(&self) -> bool {
        self.chunks.len() < self.requested
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskloopError {
    #[error("taskloop needs at least one task")]
    ZeroTasks,
    #[error("taskloop range {lo}..{hi} is inverted")]
    InvertedRange { lo: u64, hi: u64 },
}

/// Splits `range` into `num_tasks` contiguous chunks whose sizes differ by
/// at most one. The task count is clamped to the range length.
pub fn taskloop_chunks(range: Range<u64>, num_tasks: usize) -> Result<TaskloopPlan, TaskloopError> {
    if num_tasks == 0 {
        return Err(TaskloopError::ZeroTasks);
    }
    if range.start > range.end {
        return Err(TaskloopError::InvertedRange {
            lo: range.start,
            hi: range.end,
        });
    }
    let len = range.end - range.start;
    let n = (num_tasks as u64).min(len);
    let mut chunks = Vec::with_capacity(n as usize);
    if let Some(base) = len.checked_div(n) {
        let extra = len % n;
        let mut lo = range.start;
        for i in 0..n {
            let size = base + u64::from(i < extra);
            chunks.push(lo..lo + size);
            lo += size;
        }
    }
    Ok(TaskloopPlan {
        chunks,
        requested: num_tasks,
    })
}
