//! Execution traces: per-task timing and placement records.

use std::cell::UnsafeCell;
use std::fmt;

use crossbeam_utils::CachePadded;

use crate::graph::{TaskGraph, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub task: TaskId,
    pub worker: usize,
    /// Nanoseconds since the pool's clock epoch.
    pub start: u64,
    pub end: u64,
    /// Queue the task was taken from.
    pub origin: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ExecutionTrace {
    /// Records ordered by start tick. Empty when the pool does not trace.
    pub records: Vec<TraceRecord>,
    /// Pending-counter decrements performed by completing tasks.
    pub decrements: u64,
    pub workers: usize,
    pub traced: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceViolation {
    Untraced,
    Missing(TaskId),
    Duplicate(TaskId),
    Unknown(TaskId),
    Ordering {
        from: TaskId,
        to: TaskId,
        end: u64,
        start: u64,
    },
    WorkerOutOfRange {
        task: TaskId,
        worker: usize,
    },
    Decrements {
        counted: u64,
        expected: u64,
    },
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Untraced => write!(f, "pool was not tracing"),
            Self::Missing(t) => write!(f, "task {t} never ran"),
            Self::Duplicate(t) => write!(f, "task {t} ran more than once"),
            Self::Unknown(t) => write!(f, "trace names unknown task {t}"),
            Self::Ordering {
                from,
                to,
                end,
                start,
            } => write!(f, "edge ({from},{to}): end {end} > start {start}"),
            Self::WorkerOutOfRange { task, worker } => {
                write!(f, "task {task} ran on out-of-range worker {worker}")
            }
            Self::Decrements { counted, expected } => {
                write!(f, "{counted} counter decrements, expected {expected}")
            }
        }
    }
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Earliest start and latest end over all records.
    pub fn span(&self) -> Option<(u64, u64)> {
        let start = self.records.iter().map(|r| r.start).min()?;
        let end = self.records.iter().map(|r| r.end).max()?;
        Some((start, end))
    }

    /// Records indexed by task id; fails unless each of `0..tasks` appears
    /// exactly once.
    pub fn by_task(&self, tasks: usize) -> Result<Vec<TraceRecord>, TraceViolation> {
        if !self.traced {
            return Err(TraceViolation::Untraced);
        }
        let mut slots: Vec<Option<TraceRecord>> = vec![None; tasks];
        for r in &self.records {
            if r.worker >= self.workers {
                return Err(TraceViolation::WorkerOutOfRange {
                    task: r.task,
                    worker: r.worker,
                });
            }
            let slot = slots
                .get_mut(r.task as usize)
                .ok_or(TraceViolation::Unknown(r.task))?;
            if slot.replace(*r).is_some() {
                return Err(TraceViolation::Duplicate(r.task));
            }
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or(TraceViolation::Missing(i as TaskId)))
            .collect()
    }

    pub fn check_edges<I>(&self, tasks: usize, edges: I) -> Result<(), TraceViolation>
    where
        I: IntoIterator<Item = (TaskId, TaskId)>,
    {
        let by_task = self.by_task(tasks)?;
        for (from, to) in edges {
            let (u, v) = (&by_task[from as usize], &by_task[to as usize]);
            if u.end > v.start {
                return Err(TraceViolation::Ordering {
                    from,
                    to,
                    end: u.end,
                    start: v.start,
                });
            }
        }
        Ok(())
    }

    /// Full replay check: exactly-once, edge ordering, and one counter
    /// decrement per edge.
    pub fn check_replay(&self, graph: &TaskGraph) -> Result<(), TraceViolation> {
        self.check_edges(graph.len(), graph.edges())?;
        if self.decrements != graph.edge_count() as u64 {
            return Err(TraceViolation::Decrements {
                counted: self.decrements,
                expected: graph.edge_count() as u64,
            });
        }
        Ok(())
    }
}

#[derive(Default)]
struct WorkerTrace {
    records: Vec<TraceRecord>,
    decrements: u64,
}

/// One slot per worker; slot `i` is written only by worker `i`.
pub(crate) struct TraceBuffers {
    slots: Box<[CachePadded<UnsafeCell<WorkerTrace>>]>,
}

// SAFETY: each slot has a single writer (its worker), and slots are only
// read by the submitting thread after the run has quiesced.
unsafe impl Sync for TraceBuffers {}

impl TraceBuffers {
    pub(crate) fn new(workers: usize, expected_tasks: usize) -> Self {
        let per_worker = expected_tasks / workers.max(1) + 1;
        let slots = (0..workers)
            .map(|_| {
                CachePadded::new(UnsafeCell::new(WorkerTrace {
                    records: Vec::with_capacity(per_worker),
                    decrements: 0,
                }))
            })
            .collect();
        Self { slots }
    }

    /// # Safety
    /// Must be called from worker `worker` only.
    pub(crate) unsafe fn push(&self, worker: usize, record: TraceRecord, decrements: u64) {
        let slot = &mut *self.slots[worker].get();
        slot.records.push(record);
        slot.decrements += decrements;
    }

    /// # Safety
    /// All workers must be done writing (the run has quiesced).
    pub(crate) unsafe fn collect(&self) -> ExecutionTrace {
        let mut records = Vec::new();
        let mut decrements = 0;
        for slot in self.slots.iter() {
            let slot = &mut *slot.get();
            records.append(&mut slot.records);
            decrements += slot.decrements;
        }
        records.sort_by_key(|r| (r.start, r.task));
        ExecutionTrace {
            records,
            decrements,
            workers: self.slots.len(),
            traced: true,
        }
    }
}
