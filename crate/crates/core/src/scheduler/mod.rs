//! Work-stealing worker pool.
//!
//! Two execution paths share the pool:
//!
//! * the spawn-time path ([`WorkerPool::execute_vanilla`] and
//!   [`WorkerPool::record_and_execute`]), where one worker runs the region
//!   generator, resolves dependences as tasks are created, and pushes ready
//!   tasks onto its own deque while idle workers steal;
//! * the replay path ([`WorkerPool::execute_graph`]), where the roots of a
//!   finalized graph are placed round-robin over all queues and a finishing
//!   task pushes each successor whose pending counter drops to zero onto the
//!   finishing worker's own deque.

pub(crate) mod live;
pub mod queue;
pub mod trace;

use std::any::Any;
use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr::NonNull;
use std::sync::atomic::{fence, AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_deque::Steal;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::graph::{RunStateError, TaskGraph, TaskId};
use crate::recorder::{RecordMode, RecordingSession};
pub use live::{chunk_payload, Spawner};
use live::{Generator, LiveRun, LiveTask};
use queue::{LocalQueue, WorkQueues};
use trace::{ExecutionTrace, TraceBuffers, TraceRecord};

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("a worker pool needs at least one thread")]
    ZeroThreads,
    #[error("failed to start worker thread: {0}")]
    Spawn(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("{} panicked in region {region}: {message}", describe_task(*task))]
    TaskPanicked {
        region: String,
        task: Option<TaskId>,
        message: String,
    },
    #[error(transparent)]
    RunState(#[from] RunStateError),
    #[error("work cannot be submitted to a pool from inside one of its tasks")]
    NestedSubmission,
    #[error("recording session for {0} is not in record-and-execute mode")]
    NotExecuting(String),
}

fn describe_task(task: Option<TaskId>) -> String {
    match task {
        Some(t) => format!("task {t}"),
        None => "region generator".to_string(),
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Failure {
    task: Option<TaskId>,
    message: String,
}

pub(crate) fn panic_message(panic: &(dyn Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

#[derive(Clone, Debug)]
pub struct PoolConfig {
    pub threads: usize,
    /// Collect per-task trace records. Off for benchmarking.
    pub trace: bool,
    /// Bind worker `i` to CPU `i mod ncpu` where the platform allows it.
    pub pin_threads: bool,
    /// Seed for victim selection.
    pub seed: u64,
    /// Busy polls before an idle worker starts yielding, then parks.
    pub spin_limit: u32,
}

impl PoolConfig {
    pub fn new(threads: usize) -> Self {
        Self {
            threads,
            trace: true,
            pin_threads: false,
            seed: 0x5eed,
            spin_limit: 64,
        }
    }

    pub fn untraced(mut self) -> Self {
        self.trace = false;
        self
    }
}

/// Raw pointer to a run that the submitting thread keeps alive until the
/// run quiesces.
pub(crate) struct RunPtr<T>(NonNull<T>);

impl<T> Clone for RunPtr<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for RunPtr<T> {}

// SAFETY: runs are Sync; the pointer is only dereferenced while the run is
// alive.
unsafe impl<T: Sync> Send for RunPtr<T> {}
unsafe impl<T: Sync> Sync for RunPtr<T> {}

impl<T> RunPtr<T> {
    fn new(run: &T) -> Self {
        Self(NonNull::from(run))
    }

    /// # Safety
    /// The run must still be alive.
    pub(crate) unsafe fn get<'a>(self) -> &'a T {
        self.0.as_ref()
    }
}

struct NodeState {
    pending: AtomicU32,
    completed: AtomicBool,
}

/// One replay instance of a graph.
pub(crate) struct ReplayRun<'g> {
    graph: &'g TaskGraph,
    /// Instance-local run-state for overlapping (`nowait`) instances.
    local: Option<Box<[NodeState]>>,
    remaining: AtomicUsize,
    aborted: AtomicBool,
    failure: Mutex<Option<Failure>>,
    trace: Option<TraceBuffers>,
}

// SAFETY: TaskGraph is Sync; all other fields are Sync.
unsafe impl Sync for ReplayRun<'_> {}

impl<'g> ReplayRun<'g> {
    #[inline]
    fn pending(&self, task: TaskId) -> &AtomicU32 {
        match &self.local {
            Some(local) => &local[task as usize].pending,
            None => self.graph.node(task).pending_counter(),
        }
    }

    #[inline]
    fn completed(&self, task: TaskId) -> &AtomicBool {
        match &self.local {
            Some(local) => &local[task as usize].completed,
            None => self.graph.node(task).completed_flag(),
        }
    }

    fn fail(&self, failure: Failure) {
        self.aborted.store(true, Ordering::Relaxed);
        let mut slot = self.failure.lock().unwrap_or_else(|e| e.into_inner());
        slot.get_or_insert(failure);
    }
}

pub(crate) enum ReadyTask {
    Node {
        run: RunPtr<ReplayRun<'static>>,
        task: TaskId,
    },
    Live(Arc<LiveTask>),
    Generator(RunPtr<LiveRun>),
}

thread_local! {
    static WORKER: Cell<bool> = const { Cell::new(false) };
}

/// True on pool worker threads.
pub fn on_worker_thread() -> bool {
    WORKER.with(Cell::get)
}

pub(crate) struct PoolShared {
    queues: WorkQueues<ReadyTask>,
    threads: usize,
    trace: bool,
    spin_limit: u32,
    epoch: Instant,
    shutdown: AtomicBool,
    sleepers: AtomicUsize,
    events: AtomicU64,
    sleep_lock: Mutex<()>,
    sleep_cv: Condvar,
    done_lock: Mutex<()>,
    done_cv: Condvar,
    pinned: AtomicUsize,
}

impl PoolShared {
    #[inline]
    fn now(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    /// Called after making work visible. Wakes one parked worker if any.
    #[inline]
    pub(crate) fn work_available(&self) {
        fence(Ordering::SeqCst);
        if self.sleepers.load(Ordering::Relaxed) > 0 {
            self.events.fetch_add(1, Ordering::SeqCst);
            let _guard = self.sleep_lock.lock().unwrap_or_else(|e| e.into_inner());
            self.sleep_cv.notify_one();
        }
    }

    fn wake_all(&self) {
        self.events.fetch_add(1, Ordering::SeqCst);
        let _guard = self.sleep_lock.lock().unwrap_or_else(|e| e.into_inner());
        self.sleep_cv.notify_all();
    }

    /// Decrements a run's outstanding-work counter and signals the waiter
    /// when it reaches zero.
    ///
    /// # Safety
    /// `remaining` may be freed as soon as it reaches zero; nothing touches
    /// it after the decrement.
    pub(crate) unsafe fn finish_one(&self, remaining: *const AtomicUsize) {
        if (*remaining).fetch_sub(1, Ordering::AcqRel) == 1 {
            let _guard = self.done_lock.lock().unwrap_or_else(|e| e.into_inner());
            self.done_cv.notify_all();
        }
    }

    fn wait_quiescent(&self, remaining: &AtomicUsize) {
        for _ in 0..self.spin_limit {
            if remaining.load(Ordering::Acquire) == 0 {
                return;
            }
            std::hint::spin_loop();
        }
        let mut guard = self.done_lock.lock().unwrap_or_else(|e| e.into_inner());
        while remaining.load(Ordering::Acquire) != 0 {
            guard = self
                .done_cv
                .wait_timeout(guard, Duration::from_millis(50))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    fn has_visible_work(&self) -> bool {
        !self.queues.is_empty()
    }
}

pub struct WorkerPool {
    shared: Arc<PoolShared>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    /// Starts `threads` parked workers with tracing enabled.
    pub fn new(threads: usize) -> Result<Self, PoolError> {
        Self::with_config(PoolConfig::new(threads))
    }

    pub fn with_config(config: PoolConfig) -> Result<Self, PoolError> {
        if config.threads == 0 {
            return Err(PoolError::ZeroThreads);
        }
        let (queues, locals) = WorkQueues::new(config.threads);
        let shared = Arc::new(PoolShared {
            queues,
            threads: config.threads,
            trace: config.trace,
            spin_limit: config.spin_limit,
            epoch: Instant::now(),
            shutdown: AtomicBool::new(false),
            sleepers: AtomicUsize::new(0),
            events: AtomicU64::new(0),
            sleep_lock: Mutex::new(()),
            sleep_cv: Condvar::new(),
            done_lock: Mutex::new(()),
            done_cv: Condvar::new(),
            pinned: AtomicUsize::new(0),
        });
        let mut pool = Self {
            shared: Arc::clone(&shared),
            handles: Vec::with_capacity(config.threads),
        };
        for local in locals {
            let shared = Arc::clone(&shared);
            let seed = config.seed ^ (local.index() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let pin = config.pin_threads;
            let handle = std::thread::Builder::new()
                .name(format!("tdg-worker-{}", local.index()))
                .spawn(move || worker_main(local, shared, seed, pin))?;
            pool.handles.push(handle);
        }
        Ok(pool)
    }

    pub fn threads(&self) -> usize {
        self.shared.threads
    }

    pub fn traces(&self) -> bool {
        self.shared.trace
    }

    /// Number of workers that were successfully bound to a CPU.
    pub fn pinned_workers(&self) -> usize {
        self.shared.pinned.load(Ordering::Acquire)
    }

    /// Nanoseconds since the pool clock epoch; the time base of traces.
    pub fn now(&self) -> u64 {
        self.shared.now()
    }

    /// Queue index for every root: root `i` in ascending id order goes to
    /// queue `i mod P`.
    pub fn distribute_roots(&self, graph: &TaskGraph) -> Vec<(TaskId, usize)> {
        root_placement(graph.roots(), self.threads())
    }

    /// Replays a finalized graph using its own run-state, which must be
    /// freshly reset.
    pub fn execute_graph(&self, graph: &TaskGraph) -> Result<ExecutionTrace, ExecError> {
        if on_worker_thread() {
            return Err(ExecError::NestedSubmission);
        }
        graph.begin_replay()?;
        let result = self.replay(graph, None);
        graph.end_replay();
        result
    }

    /// Replays a graph on instance-local counters, leaving the graph's own
    /// run-state untouched. Several detached instances may overlap.
    pub fn execute_graph_detached(&self, graph: &TaskGraph) -> Result<ExecutionTrace, ExecError> {
        if on_worker_thread() {
            return Err(ExecError::NestedSubmission);
        }
        let local = graph
            .nodes()
            .iter()
            .map(|n| NodeState {
                pending: AtomicU32::new(n.indegree()),
                completed: AtomicBool::new(false),
            })
            .collect();
        self.replay(graph, Some(local))
    }

    fn replay(
        &self,
        graph: &TaskGraph,
        local: Option<Box<[NodeState]>>,
    ) -> Result<ExecutionTrace, ExecError> {
        let run = ReplayRun {
            graph,
            local,
            remaining: AtomicUsize::new(graph.len()),
            aborted: AtomicBool::new(false),
            failure: Mutex::new(None),
            trace: self
                .shared
                .trace
                .then(|| TraceBuffers::new(self.threads(), graph.len())),
        };
        if graph.is_empty() {
            return Ok(self.empty_trace());
        }
        // SAFETY: lifetime erased; we wait below until every task of this
        // run has finished before `run` goes out of scope.
        let ptr = RunPtr(NonNull::from(&run).cast::<ReplayRun<'static>>());
        let p = self.threads();
        for (i, &root) in graph.roots().iter().enumerate() {
            self.shared.queues.place(
                i % p,
                ReadyTask::Node {
                    run: ptr,
                    task: root,
                },
            );
        }
        self.shared.wake_all();
        self.shared.wait_quiescent(&run.remaining);

        let failure = run.failure.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(f) = failure {
            return Err(ExecError::TaskPanicked {
                region: graph.id().to_string(),
                task: f.task,
                message: f.message,
            });
        }
        // SAFETY: quiesced.
        Ok(run
            .trace
            .as_ref()
            .map(|t| unsafe { t.collect() })
            .unwrap_or_else(|| self.empty_trace()))
    }

    /// Vanilla tasking: runs `generator` on a worker, resolving dependences
    /// and allocating each task at spawn time.
    pub fn execute_vanilla<F>(&self, generator: &F) -> Result<ExecutionTrace, ExecError>
    where
        F: Fn(&mut Spawner<'_>) + Sync,
    {
        self.run_live(generator, None, "vanilla region")
    }

    /// Runs `generator` while recording into `session`, which must be in
    /// record-and-execute mode. Finalize the session afterwards.
    pub fn record_and_execute<F>(
        &self,
        session: &mut RecordingSession,
        generator: &F,
    ) -> Result<ExecutionTrace, ExecError>
    where
        F: Fn(&mut Spawner<'_>) + Sync,
    {
        if session.mode() != RecordMode::RecordAndExecute {
            return Err(ExecError::NotExecuting(session.id().to_string()));
        }
        let region = session.id().to_string();
        self.run_live(generator, Some(session), &region)
    }

    fn run_live(
        &self,
        generator: &Generator<'_>,
        session: Option<&mut RecordingSession>,
        region: &str,
    ) -> Result<ExecutionTrace, ExecError> {
        if on_worker_thread() {
            return Err(ExecError::NestedSubmission);
        }
        let trace = self
            .shared
            .trace
            .then(|| TraceBuffers::new(self.threads(), 0));
        // SAFETY: we block until the run quiesces, so the generator and the
        // session outlive every access made by workers.
        let run = unsafe { LiveRun::new(generator, session, trace) };
        self.shared
            .queues
            .place(0, ReadyTask::Generator(RunPtr::new(&run)));
        self.shared.wake_all();
        self.shared.wait_quiescent(&run.remaining);

        let failure = run.failure.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(f) = failure {
            return Err(ExecError::TaskPanicked {
                region: region.to_string(),
                task: f.task,
                message: f.message,
            });
        }
        // SAFETY: quiesced.
        Ok(run
            .trace
            .as_ref()
            .map(|t| unsafe { t.collect() })
            .unwrap_or_else(|| self.empty_trace()))
    }

    fn empty_trace(&self) -> ExecutionTrace {
        ExecutionTrace {
            records: Vec::new(),
            decrements: 0,
            workers: self.threads(),
            traced: self.shared.trace,
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        self.shared.wake_all();
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}

/// Round-robin placement of roots over `workers` queues.
pub fn root_placement(roots: &[TaskId], workers: usize) -> Vec<(TaskId, usize)> {
    roots
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, i % workers))
        .collect()
}

fn worker_main(local: LocalQueue<ReadyTask>, shared: Arc<PoolShared>, seed: u64, pin: bool) {
    WORKER.with(|w| w.set(true));
    if pin && pin_current_thread(local.index()) {
        shared.pinned.fetch_add(1, Ordering::AcqRel);
    }
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut idle = 0u32;
    loop {
        if let Some((task, origin)) = find_task(&local, &shared, &mut rng) {
            idle = 0;
            execute(task, origin, &local, &shared);
            continue;
        }
        if shared.shutdown.load(Ordering::Acquire) {
            break;
        }
        idle += 1;
        if idle < shared.spin_limit {
            std::hint::spin_loop();
        } else if idle < shared.spin_limit + 16 {
            std::thread::yield_now();
        } else {
            park(&shared);
            idle = 0;
        }
    }
}

fn park(shared: &PoolShared) {
    let epoch = shared.events.load(Ordering::SeqCst);
    shared.sleepers.fetch_add(1, Ordering::SeqCst);
    fence(Ordering::SeqCst);
    if !shared.has_visible_work() && !shared.shutdown.load(Ordering::SeqCst) {
        let guard = shared.sleep_lock.lock().unwrap_or_else(|e| e.into_inner());
        if shared.events.load(Ordering::SeqCst) == epoch {
            let _ = shared
                .sleep_cv
                .wait_timeout(guard, Duration::from_millis(20))
                .unwrap_or_else(|e| e.into_inner());
        }
    }
    shared.sleepers.fetch_sub(1, Ordering::SeqCst);
}

fn find_task(
    local: &LocalQueue<ReadyTask>,
    shared: &PoolShared,
    rng: &mut SmallRng,
) -> Option<(ReadyTask, usize)> {
    let me = local.index();
    if let Some(t) = local.pop(&shared.queues) {
        return Some((t, me));
    }
    let p = shared.threads;
    if p == 1 {
        return None;
    }
    loop {
        let mut retry = false;
        let start = rng.random_range(0..p);
        for victim in queue::victims(me, p, start) {
            match shared.queues.try_steal(me, victim) {
                Steal::Success(t) => return Some((t, victim)),
                Steal::Retry => retry = true,
                Steal::Empty => {}
            }
        }
        if !retry {
            return None;
        }
        std::hint::spin_loop();
    }
}

fn execute(task: ReadyTask, origin: usize, local: &LocalQueue<ReadyTask>, shared: &PoolShared) {
    match task {
        ReadyTask::Node { run, task } => execute_node(run, task, origin, local, shared),
        ReadyTask::Live(task) => execute_live(task, origin, local, shared),
        ReadyTask::Generator(run) => live::run_generator(run, local, shared),
    }
}

fn execute_node(
    run_ptr: RunPtr<ReplayRun<'static>>,
    task: TaskId,
    origin: usize,
    local: &LocalQueue<ReadyTask>,
    shared: &PoolShared,
) {
    // SAFETY: the submitting thread keeps the run alive until `remaining`
    // reaches zero, which cannot happen before this task finishes.
    let run = unsafe { run_ptr.get() };
    let node = run.graph.node(task);
    let tracing = run.trace.is_some();
    let start = if tracing { shared.now() } else { 0 };
    if !run.aborted.load(Ordering::Relaxed) {
        let body = node.body();
        let payload = node.payload().as_bytes();
        if let Err(panic) = catch_unwind(AssertUnwindSafe(|| body.call(payload))) {
            run.fail(Failure {
                task: Some(task),
                message: panic_message(&*panic),
            });
        }
    }
    let end = if tracing { shared.now() } else { 0 };
    run.completed(task).store(true, Ordering::Release);

    let succs = node.succs();
    for &s in succs {
        if run.pending(s).fetch_sub(1, Ordering::AcqRel) == 1 {
            local.push(ReadyTask::Node {
                run: run_ptr,
                task: s,
            });
            shared.work_available();
        }
    }
    if let Some(trace) = &run.trace {
        let record = TraceRecord {
            task,
            worker: local.index(),
            start,
            end,
            origin,
        };
        // SAFETY: slot `local.index()` belongs to this worker.
        unsafe { trace.push(local.index(), record, succs.len() as u64) };
    }
    // SAFETY: final access to the run.
    unsafe { shared.finish_one(&run.remaining) };
}

fn execute_live(
    task: Arc<LiveTask>,
    origin: usize,
    local: &LocalQueue<ReadyTask>,
    shared: &PoolShared,
) {
    let run = task.run();
    let tracing = run.trace.is_some();
    let start = if tracing { shared.now() } else { 0 };
    if !run.aborted.load(Ordering::Relaxed) {
        if let Err(panic) = catch_unwind(AssertUnwindSafe(|| task.run_body())) {
            run.fail(Failure {
                task: Some(task.id()),
                message: panic_message(&*panic),
            });
        }
    }
    let end = if tracing { shared.now() } else { 0 };
    let succs = task.complete();
    for s in &succs {
        if s.release_one() {
            local.push(ReadyTask::Live(Arc::clone(s)));
            shared.work_available();
        }
    }
    if let Some(trace) = &run.trace {
        let record = TraceRecord {
            task: task.id(),
            worker: local.index(),
            start,
            end,
            origin,
        };
        // SAFETY: slot `local.index()` belongs to this worker.
        unsafe { trace.push(local.index(), record, succs.len() as u64) };
    }
    let remaining: *const AtomicUsize = &run.remaining;
    drop(succs);
    drop(task);
    // SAFETY: final access to the run.
    unsafe { shared.finish_one(remaining) };
}

#[cfg(target_os = "linux")]
fn pin_current_thread(index: usize) -> bool {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    // SAFETY: cpu_set_t is plain data; sched_setaffinity(0, ..) targets the
    // calling thread.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(index % cpus, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread(_index: usize) -> bool {
    false
}
