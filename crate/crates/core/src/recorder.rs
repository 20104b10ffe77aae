//! Builds a [`TaskGraph`] by observing task creation.
//!
//! Dependences are resolved once, at record time, with the last-writer /
//! reader-set discipline. Tracker entries are never removed during a
//! session, so edges to predecessors that already finished are still found.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{Body, DepClause, GraphError, GraphId, NodeSpec, Payload, TaskGraph, TaskId};
use crate::scheduler::live::LiveTask;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagEntry {
    pub last_writer: Option<TaskId>,
    pub readers: Vec<TaskId>,
}

/// Map from dependence tag to its last writer and the readers registered
/// since that writer.
#[derive(Clone, Debug, Default)]
pub struct DepTracker {
    entries: HashMap<u64, TagEntry>,
    last_id: Option<TaskId>,
}

impl DepTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, tag: u64) -> Option<&TagEntry> {
        self.entries.get(&tag)
    }

    /// Returns the sorted, deduplicated predecessor set of `new_id` and
    /// registers its accesses.
    ///
    /// Several clauses naming the same tag are merged first; if any of them
    /// writes, the task is treated as an `inout` access on that tag.
    pub fn resolve(&mut self, new_id: TaskId, clauses: &[DepClause]) -> Vec<TaskId> {
        debug_assert!(
            self.last_id.is_none_or(|last| new_id > last),
            "task ids must increase"
        );
        self.last_id = Some(new_id);

        let mut accesses: Vec<(u64, bool)> = Vec::with_capacity(clauses.len());
        for clause in clauses {
            match accesses.iter_mut().find(|(tag, _)| *tag == clause.tag) {
                Some((_, writes)) => *writes |= clause.kind.writes(),
                None => accesses.push((clause.tag, clause.kind.writes())),
            }
        }

        let mut preds = Vec::new();
        for (tag, writes) in accesses {
            let entry = self.entries.entry(tag).or_default();
            if writes {
                if !entry.readers.is_empty() {
                    preds.extend_from_slice(&entry.readers);
                } else if let Some(w) = entry.last_writer {
                    preds.push(w);
                }
                entry.last_writer = Some(new_id);
                entry.readers.clear();
            } else {
                if let Some(w) = entry.last_writer {
                    preds.push(w);
                }
                entry.readers.push(new_id);
            }
        }
        preds.sort_unstable();
        preds.dedup();
        preds
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RecordMode {
    /// Only build the graph; bodies first run at the first replay.
    RecordOnly,
    /// Execute tasks on the pool while the graph is being built.
    #[default]
    RecordAndExecute,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("recording session for {0} was already finalized")]
    SessionConsumed(String),
    #[error("cannot finalize {graph}: {remaining} recorded tasks have not completed")]
    IncompleteTasks { graph: String, remaining: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub struct RecordingSession {
    id: GraphId,
    mode: RecordMode,
    tracker: DepTracker,
    specs: Vec<NodeSpec>,
    live: Vec<Arc<LiveTask>>,
    consumed: bool,
}

impl fmt::Debug for RecordingSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecordingSession")
            .field("id", &self.id)
            .field("mode", &self.mode)
            .field("tasks", &self.specs.len())
            .field("consumed", &self.consumed)
            .finish()
    }
}

impl RecordingSession {
    pub fn new(id: GraphId, mode: RecordMode) -> Self {
        Self {
            id,
            mode,
            tracker: DepTracker::new(),
            specs: Vec::new(),
            live: Vec::new(),
            consumed: false,
        }
    }

    pub fn id(&self) -> &GraphId {
        &self.id
    }

    pub fn mode(&self) -> RecordMode {
        self.mode
    }

    pub fn task_count(&self) -> usize {
        self.specs.len()
    }

    pub fn tracker(&self) -> &DepTracker {
        &self.tracker
    }

    pub fn preds(&self, task: TaskId) -> &[TaskId] {
        &self.specs[task as usize].preds
    }

    /// Appends a task, resolving its dependences against the tracker.
    pub fn record_task(
        &mut self,
        body: Body,
        payload: Payload,
        clauses: &[DepClause],
    ) -> Result<TaskId, RecordError> {
        if self.consumed {
            return Err(RecordError::SessionConsumed(self.id.to_string()));
        }
        let id = self.specs.len() as TaskId;
        let preds = self.tracker.resolve(id, clauses);
        self.specs.push(NodeSpec {
            body,
            payload,
            preds,
        });
        Ok(id)
    }

    pub(crate) fn attach_live(&mut self, task: Arc<LiveTask>) {
        debug_assert_eq!(task.id() as usize, self.live.len());
        self.live.push(task);
    }

    /// Freezes the recorded tasks into a graph. In record-and-execute mode
    /// every recorded task must have completed.
    pub fn finalize(&mut self) -> Result<TaskGraph, RecordError> {
        if self.consumed {
            return Err(RecordError::SessionConsumed(self.id.to_string()));
        }
        if self.mode == RecordMode::RecordAndExecute {
            let done = self.live.iter().filter(|t| t.is_completed()).count();
            if done < self.specs.len() {
                return Err(RecordError::IncompleteTasks {
                    graph: self.id.to_string(),
                    remaining: self.specs.len() - done,
                });
            }
        }
        self.consumed = true;
        self.live.clear();
        let specs = std::mem::take(&mut self.specs);
        Ok(TaskGraph::from_specs(self.id.clone(), specs)?)
    }
}
