//! Spawn-time execution: the vanilla tasking path and record-and-execute.
//!
//! Every spawned task is allocated individually and its dependences are
//! resolved against a live tracker when it is created. A task that becomes
//! ready goes onto the spawning worker's own deque.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::queue::LocalQueue;
use super::trace::TraceBuffers;
use super::{Failure, PoolShared, ReadyTask, RunPtr};
use crate::graph::{Body, DepClause, Payload, TaskId};
use crate::recorder::{DepTracker, RecordingSession};
use crate::region::{taskloop_chunks, TaskloopError, TaskloopPlan};

pub(crate) type Generator<'a> = dyn Fn(&mut Spawner<'_>) + Sync + 'a;

pub(crate) struct LiveRun {
    pub(crate) remaining: AtomicUsize,
    pub(crate) aborted: AtomicBool,
    pub(crate) failure: Mutex<Option<Failure>>,
    pub(crate) trace: Option<TraceBuffers>,
    generator: *const Generator<'static>,
    session: Option<*mut RecordingSession>,
}

// SAFETY: the generator is Sync; the session pointer is dereferenced only
// by the single generator job.
unsafe impl Sync for LiveRun {}

impl LiveRun {
    /// # Safety
    /// `generator` and `session` must outlive the run; the caller blocks
    /// until the run quiesces.
    pub(crate) unsafe fn new(
        generator: &Generator<'_>,
        session: Option<&mut RecordingSession>,
        trace: Option<TraceBuffers>,
    ) -> Self {
        let generator: *const Generator<'_> = generator;
        Self {
            // the generator itself holds one unit until it returns
            remaining: AtomicUsize::new(1),
            aborted: AtomicBool::new(false),
            failure: Mutex::new(None),
            trace,
            generator: std::mem::transmute::<*const Generator<'_>, *const Generator<'static>>(
                generator,
            ),
            session: session.map(|s| s as *mut RecordingSession),
        }
    }

    pub(crate) fn fail(&self, failure: Failure) {
        self.aborted.store(true, Ordering::Relaxed);
        let mut slot = self.failure.lock().unwrap_or_else(|e| e.into_inner());
        slot.get_or_insert(failure);
    }
}

struct LiveState {
    completed: bool,
    succs: Vec<Arc<LiveTask>>,
}

pub(crate) struct LiveTask {
    id: TaskId,
    body: Body,
    payload: Payload,
    pending: AtomicU32,
    done: AtomicBool,
    state: Mutex<LiveState>,
    run: RunPtr<LiveRun>,
}

impl LiveTask {
    pub(crate) fn id(&self) -> TaskId {
        self.id
    }

    pub(crate) fn is_completed(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }

    pub(crate) fn run(&self) -> &LiveRun {
        // SAFETY: the run outlives every task spawned into it.
        unsafe { self.run.get() }
    }

    pub(crate) fn run_body(&self) {
        self.body.call(self.payload.as_bytes());
    }

    /// Marks the task complete and returns the successors registered on it.
    pub(crate) fn complete(&self) -> Vec<Arc<LiveTask>> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        state.completed = true;
        self.done.store(true, Ordering::Release);
        std::mem::take(&mut state.succs)
    }

    /// Returns true when this decrement made the task ready.
    pub(crate) fn release_one(&self) -> bool {
        self.pending.fetch_sub(1, Ordering::AcqRel) == 1
    }
}

/// Handle passed to a region generator; creates tasks.
pub struct Spawner<'a> {
    mode: SpawnMode<'a>,
}

enum SpawnMode<'a> {
    Record(&'a mut RecordingSession),
    Live(LiveSpawner<'a>),
}

struct LiveSpawner<'a> {
    local: &'a LocalQueue<ReadyTask>,
    shared: &'a PoolShared,
    run: RunPtr<LiveRun>,
    tracker: DepTracker,
    live: Vec<Arc<LiveTask>>,
    session: Option<&'a mut RecordingSession>,
}

impl<'a> Spawner<'a> {
    /// Record-only spawner: builds the graph, runs nothing.
    pub(crate) fn recording(session: &'a mut RecordingSession) -> Self {
        Self {
            mode: SpawnMode::Record(session),
        }
    }

    /// Number of tasks created so far.
    pub fn task_count(&self) -> usize {
        match &self.mode {
            SpawnMode::Record(s) => s.task_count(),
            SpawnMode::Live(l) => l.live.len(),
        }
    }

    /// Creates one task. Returns its creation-order id.
    pub fn spawn(&mut self, body: &Body, payload: Payload, clauses: &[DepClause]) -> TaskId {
        match &mut self.mode {
            SpawnMode::Record(session) => session
                .record_task(body.clone(), payload, clauses)
                .expect("spawn into a finalized recording session"),
            SpawnMode::Live(live) => live.spawn(body, payload, clauses),
        }
    }

    /// Splits `range` into `num_tasks` balanced chunks and spawns one
    /// dependence-free task per chunk. The payload encodes the chunk; decode
    /// it with [`chunk_payload`].
    pub fn taskloop(
        &mut self,
        range: Range<u64>,
        num_tasks: usize,
        body: &Body,
    ) -> Result<TaskloopPlan, TaskloopError> {
        let plan = taskloop_chunks(range, num_tasks)?;
        for chunk in &plan.chunks {
            let mut bytes = Vec::with_capacity(16);
            bytes.extend_from_slice(&chunk.start.to_le_bytes());
            bytes.extend_from_slice(&chunk.end.to_le_bytes());
            self.spawn(body, Payload::from_bytes(bytes), &[]);
        }
        Ok(plan)
    }
}

/// Decodes the chunk payload of a task created by [`Spawner::taskloop`].
pub fn chunk_payload(bytes: &[u8]) -> Range<u64> {
    let lo = u64::from_le_bytes(bytes[0..8].try_into().expect("chunk payload"));
    let hi = u64::from_le_bytes(bytes[8..16].try_into().expect("chunk payload"));
    lo..hi
}

impl LiveSpawner<'_> {
    fn spawn(&mut self, body: &Body, payload: Payload, clauses: &[DepClause]) -> TaskId {
        let (id, preds): (TaskId, Vec<TaskId>) = match self.session.as_deref_mut() {
            Some(session) => {
                let id = session
                    .record_task(body.clone(), payload.clone(), clauses)
                    .expect("spawn into a finalized recording session");
                (id, session.preds(id).to_vec())
            }
            None => {
                let id = self.live.len() as TaskId;
                (id, self.tracker.resolve(id, clauses))
            }
        };

        let guard = preds.len() as u32 + 1;
        let task = Arc::new(LiveTask {
            id,
            body: body.clone(),
            payload,
            pending: AtomicU32::new(guard),
            done: AtomicBool::new(false),
            state: Mutex::new(LiveState {
                completed: false,
                succs: Vec::new(),
            }),
            run: self.run,
        });
        // SAFETY: the run is alive while its generator executes.
        unsafe { self.run.get() }
            .remaining
            .fetch_add(1, Ordering::Relaxed);

        // A predecessor either completes before we lock it (counted here)
        // or sees us in its successor list (decrements on completion).
        let mut satisfied = 0u32;
        for &p in &preds {
            let pred = &self.live[p as usize];
            let mut state = pred.state.lock().unwrap_or_else(|e| e.into_inner());
            if state.completed {
                satisfied += 1;
            } else {
                state.succs.push(Arc::clone(&task));
            }
        }
        self.live.push(Arc::clone(&task));
        let drop_by = satisfied + 1;
        if task.pending.fetch_sub(drop_by, Ordering::AcqRel) == drop_by {
            self.local.push(ReadyTask::Live(task));
            self.shared.work_available();
        }
        id
    }
}

/// Runs a generator job on worker `local.index()`.
pub(crate) fn run_generator(
    run_ptr: RunPtr<LiveRun>,
    local: &LocalQueue<ReadyTask>,
    shared: &PoolShared,
) {
    // SAFETY: the submitting thread keeps the run alive until quiescence.
    let run = unsafe { run_ptr.get() };
    // SAFETY: the session pointer is only touched by the generator job.
    let session = run.session.map(|s| unsafe { &mut *s });
    let mut spawner = Spawner {
        mode: SpawnMode::Live(LiveSpawner {
            local,
            shared,
            run: run_ptr,
            tracker: DepTracker::new(),
            live: Vec::new(),
            session,
        }),
    };
    // SAFETY: see LiveRun::new.
    let generator = unsafe { &*run.generator };
    let outcome =
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| generator(&mut spawner)));
    if let Err(panic) = outcome {
        run.fail(Failure {
            task: None,
            message: super::panic_message(&*panic),
        });
    }
    if let SpawnMode::Live(live) = spawner.mode {
        if let Some(session) = live.session {
            for task in live.live {
                session.attach_live(task);
            }
        }
    }
    // SAFETY: last touch of the run by this job.
    unsafe { shared.finish_one(&run.remaining) };
}
