//! Task dependency graph data model.
//!
//! A [`TaskGraph`] is an immutable DAG of recorded task instances. Only the
//! per-node run-state (pending counters and completion flags) changes after
//! construction, which is what lets a graph be replayed without allocating.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU8, Ordering};
use std::sync::Arc;

use thiserror::Error;

/// Creation-order index of a task inside one graph.
pub type TaskId = u32;

/// Source-location key of a taskgraph region.
///
/// Two ids with the same `(file, line)` denote the same logical region; the
/// optional `name` is a display alias and takes no part in equality.
#[derive(Clone, Debug)]
pub struct GraphId {
    pub file: String,
    pub line: u32,
    pub name: Option<String>,
}

impl GraphId {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        Self {
            file: file.into(),
            line,
            name: None,
        }
    }

    pub fn named(file: impl Into<String>, line: u32, name: impl Into<String>) -> Self {
        Self {
            file: file.into(),
            line,
            name: Some(name.into()),
        }
    }
}

impl PartialEq for GraphId {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file && self.line == other.line
    }
}

impl Eq for GraphId {}

impl Hash for GraphId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.file.hash(state);
        self.line.hash(state);
    }
}

impl fmt::Display for GraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(name) => write!(f, "{name} ({}:{})", self.file, self.line),
            None => write!(f, "{}:{}", self.file, self.line),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DepKind {
    In,
    Out,
    InOut,
}

impl DepKind {
    pub fn writes(self) -> bool {
        !matches!(self, DepKind::In)
    }
}

/// One `depend` clause. Tags alias only when they are equal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DepClause {
    pub kind: DepKind,
    pub tag: u64,
}

impl DepClause {
    pub fn input(tag: u64) -> Self {
        Self {
            kind: DepKind::In,
            tag,
        }
    }

    pub fn output(tag: u64) -> Self {
        Self {
            kind: DepKind::Out,
            tag,
        }
    }

    pub fn inout(tag: u64) -> Self {
        Self {
            kind: DepKind::InOut,
            tag,
        }
    }
}

type BodyFn = dyn Fn(&[u8]) + Send + Sync;

/// Executable task body plus the identity tag used for hashing and for
/// looking bodies up when a graph is loaded from disk.
#[derive(Clone)]
pub struct Body {
    tag: Arc<str>,
    func: Arc<BodyFn>,
}

impl Body {
    pub fn new<F>(tag: impl Into<Arc<str>>, func: F) -> Self
    where
        F: Fn(&[u8]) + Send + Sync + 'static,
    {
        Self {
            tag: tag.into(),
            func: Arc::new(func),
        }
    }

    /// A body that does nothing; handy for structural tests.
    pub fn noop(tag: impl Into<Arc<str>>) -> Self {
        Self::new(tag, |_| {})
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    #[inline]
    pub fn call(&self, payload: &[u8]) {
        (self.func)(payload)
    }
}

impl fmt::Debug for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Body").field(&self.tag).finish()
    }
}

/// Opaque per-instance data captured when a task is created.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Payload(Option<Box<[u8]>>);

impl Payload {
    pub fn none() -> Self {
        Self(None)
    }

    pub fn from_bytes(bytes: impl Into<Box<[u8]>>) -> Self {
        Self(Some(bytes.into()))
    }

    pub fn from_u64(value: u64) -> Self {
        Self::from_bytes(value.to_le_bytes())
    }

    pub fn is_none(&self) -> bool {
        self.0.is_none()
    }

    /// Bytes handed to the body; empty when there is no payload.
    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_deref().unwrap_or(&[])
    }

    pub fn get(&self) -> Option<&[u8]> {
        self.0.as_deref()
    }
}

/// Decodes a payload produced by [`Payload::from_u64`].
pub fn payload_u64(bytes: &[u8]) -> u64 {
    let mut buf = [0u8; 8];
    let n = bytes.len().min(8);
    buf[..n].copy_from_slice(&bytes[..n]);
    u64::from_le_bytes(buf)
}

/// Input to graph construction: one task with its predecessor list.
#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub body: Body,
    pub payload: Payload,
    pub preds: Vec<TaskId>,
}

#[derive(Debug)]
pub struct TaskNode {
    id: TaskId,
    body: Body,
    payload: Payload,
    preds: Box<[TaskId]>,
    succs: Box<[TaskId]>,
    pending: AtomicU32,
    completed: AtomicBool,
}

impl TaskNode {
    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn preds(&self) -> &[TaskId] {
        &self.preds
    }

    pub fn succs(&self) -> &[TaskId] {
        &self.succs
    }

    pub fn indegree(&self) -> u32 {
        self.preds.len() as u32
    }

    pub fn pending(&self) -> u32 {
        self.pending.load(Ordering::Acquire)
    }

    pub fn is_completed(&self) -> bool {
        self.completed.load(Ordering::Acquire)
    }

    pub(crate) fn pending_counter(&self) -> &AtomicU32 {
        &self.pending
    }

    pub(crate) fn completed_flag(&self) -> &AtomicBool {
        &self.completed
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("task {task} depends on task {pred}, which is not created before it")]
    ForwardDependence { task: TaskId, pred: TaskId },
    #[error("graph has {0} tasks, more than a task id can address")]
    TooManyTasks(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunStateError {
    #[error("graph {0} is being replayed")]
    ReplayInProgress(String),
    #[error("graph {0} must be reset before it can be replayed again")]
    NeedsReset(String),
}

const STATE_CLEAN: u8 = 0;
const STATE_REPLAYING: u8 = 1;
const STATE_DIRTY: u8 = 2;

#[derive(Debug)]
pub struct TaskGraph {
    id: GraphId,
    nodes: Box<[TaskNode]>,
    roots: Box<[TaskId]>,
    edge_count: usize,
    structural_hash: u64,
    run_state: AtomicU8,
}

impl TaskGraph {
    /// Builds and finalizes a graph. Predecessor lists are sorted and
    /// deduplicated; successor lists, roots and the structural hash are
    /// derived here.
    pub fn from_specs(id: GraphId, specs: Vec<NodeSpec>) -> Result<Self, GraphError> {
        if specs.len() > TaskId::MAX as usize {
            return Err(GraphError::TooManyTasks(specs.len()));
        }
        let mut preds_all = Vec::with_capacity(specs.len());
        let mut succs_all: Vec<Vec<TaskId>> = vec![Vec::new(); specs.len()];
        for (idx, spec) in specs.iter().enumerate() {
            let task = idx as TaskId;
            let mut preds = spec.preds.clone();
            preds.sort_unstable();
            preds.dedup();
            if let Some(&pred) = preds.iter().find(|&&p| p >= task) {
                return Err(GraphError::ForwardDependence { task, pred });
            }
            for &p in &preds {
                succs_all[p as usize].push(task);
            }
            preds_all.push(preds);
        }

        let nodes: Box<[TaskNode]> = specs
            .into_iter()
            .zip(preds_all)
            .zip(succs_all)
            .enumerate()
            .map(|(idx, ((spec, preds), succs))| TaskNode {
                id: idx as TaskId,
                body: spec.body,
                payload: spec.payload,
                pending: AtomicU32::new(preds.len() as u32),
                preds: preds.into_boxed_slice(),
                // pushed in ascending task order, already sorted
                succs: succs.into_boxed_slice(),
                completed: AtomicBool::new(false),
            })
            .collect();

        let roots = nodes
            .iter()
            .filter(|n| n.preds.is_empty())
            .map(|n| n.id)
            .collect();
        let edge_count = nodes.iter().map(|n| n.preds.len()).sum();
        let structural_hash = shape_digest(&nodes);
        Ok(Self {
            id,
            nodes,
            roots,
            edge_count,
            structural_hash,
            run_state: AtomicU8::new(STATE_CLEAN),
        })
    }

    pub fn empty(id: GraphId) -> Self {
        Self::from_specs(id, Vec::new()).expect("empty graph is valid")
    }

    /// Same graph keyed under another region id.
    pub fn with_id(mut self, id: GraphId) -> Self {
        self.id = id;
        self
    }

    pub fn id(&self) -> &GraphId {
        &self.id
    }

    pub fn nodes(&self) -> &[TaskNode] {
        &self.nodes
    }

    pub fn node(&self, id: TaskId) -> &TaskNode {
        &self.nodes[id as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[TaskId] {
        &self.roots
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Every directed edge `(u, v)` in ascending `(v, u)` order.
    pub fn edges(&self) -> impl Iterator<Item = (TaskId, TaskId)> + '_ {
        self.nodes
            .iter()
            .flat_map(|n| n.preds.iter().map(move |&p| (p, n.id)))
    }

    /// Digest of the graph's shape: node count, body tags and predecessor
    /// lists. Payloads and run-state do not contribute.
    pub fn structural_hash(&self) -> u64 {
        self.structural_hash
    }

    /// Checks every structural invariant and reports all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.nodes.len();
        let mut indegree_sum = 0usize;
        let mut succ_sum = 0usize;

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.id as usize != idx {
                violations.push(Violation::IdMismatch {
                    index: idx,
                    id: node.id,
                });
            }
            indegree_sum += node.preds.len();
            succ_sum += node.succs.len();

            if node.preds.windows(2).any(|w| w[0] >= w[1]) {
                violations.push(Violation::UnsortedEdges(node.id));
            }
            if node.succs.windows(2).any(|w| w[0] >= w[1]) {
                violations.push(Violation::UnsortedEdges(node.id));
            }
            for &p in node.preds.iter() {
                if p >= node.id {
                    violations.push(Violation::PredOrdering {
                        pred: p,
                        task: node.id,
                    });
                } else if (p as usize) < n && !self.nodes[p as usize].succs.contains(&node.id) {
                    violations.push(Violation::EdgeAsymmetry {
                        from: p,
                        to: node.id,
                    });
                }
            }
            for &s in node.succs.iter() {
                let known = (s as usize) < n && self.nodes[s as usize].preds.contains(&node.id);
                if !known {
                    violations.push(Violation::EdgeAsymmetry {
                        from: node.id,
                        to: s,
                    });
                }
            }
            let pending = node.pending.load(Ordering::Acquire);
            if pending > node.indegree() {
                violations.push(Violation::PendingOutOfRange {
                    task: node.id,
                    pending,
                    indegree: node.indegree(),
                });
            }
        }

        let expected_roots: Vec<TaskId> = self
            .nodes
            .iter()
            .filter(|n| n.preds.is_empty())
            .map(|n| n.id)
            .collect();
        if *self.roots != *expected_roots {
            violations.push(Violation::RootMismatch {
                stored: self.roots.to_vec(),
                expected: expected_roots,
            });
        }
        if indegree_sum != self.edge_count || succ_sum != self.edge_count {
            violations.push(Violation::EdgeCount {
                stored: self.edge_count,
                indegree_sum,
                succ_sum,
            });
        }
        violations.dedup();
        ValidationReport { violations }
    }

    /// Restores `pending = indegree` and clears completion flags. Allocates
    /// nothing.
    pub fn reset_run_state(&self) -> Result<(), RunStateError> {
        let prev = self.run_state.load(Ordering::Acquire);
        if prev == STATE_REPLAYING {
            return Err(RunStateError::ReplayInProgress(self.id.to_string()));
        }
        // Keep the replaying marker while counters are rewritten so a
        // concurrent begin_replay cannot observe half-reset state.
        if self
            .run_state
            .compare_exchange(prev, STATE_REPLAYING, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(RunStateError::ReplayInProgress(self.id.to_string()));
        }
        for node in self.nodes.iter() {
            node.pending.store(node.indegree(), Ordering::Relaxed);
            node.completed.store(false, Ordering::Relaxed);
        }
        self.run_state.store(STATE_CLEAN, Ordering::Release);
        Ok(())
    }

    pub fn needs_reset(&self) -> bool {
        self.run_state.load(Ordering::Acquire) == STATE_DIRTY
    }

    pub fn is_replaying(&self) -> bool {
        self.run_state.load(Ordering::Acquire) == STATE_REPLAYING
    }

    pub(crate) fn begin_replay(&self) -> Result<(), RunStateError> {
        match self.run_state.compare_exchange(
            STATE_CLEAN,
            STATE_REPLAYING,
            Ordering::AcqRel,
            Ordering::Acquire,
        ) {
            Ok(_) => Ok(()),
            Err(STATE_DIRTY) => Err(RunStateError::NeedsReset(self.id.to_string())),
            Err(_) => Err(RunStateError::ReplayInProgress(self.id.to_string())),
        }
    }

    pub(crate) fn end_replay(&self) {
        self.run_state.store(STATE_DIRTY, Ordering::Release);
    }

    /// Graphviz rendering: one node statement per task, one edge line per
    /// directed edge.
    pub fn export_dot(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "digraph \"{}\" {{\n",
            escape_dot(&self.id.to_string())
        ));
        for node in self.nodes.iter() {
            out.push_str(&format!(
                "  {} [label=\"{}: {}\"];\n",
                node.id,
                node.id,
                escape_dot(node.body.tag())
            ));
        }
        for (from, to) in self.edges() {
            out.push_str(&format!("  {from} -> {to};\n"));
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

struct Fnv(u64);

impl Fnv {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }
}

fn shape_digest(nodes: &[TaskNode]) -> u64 {
    let mut h = Fnv(FNV_OFFSET);
    h.write_u64(nodes.len() as u64);
    for node in nodes {
        let tag = node.body.tag().as_bytes();
        h.write_u64(tag.len() as u64);
        h.write(tag);
        h.write_u64(node.preds.len() as u64);
        for &p in node.preds.iter() {
            h.write_u64(p as u64);
        }
    }
    h.0
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    IdMismatch {
        index: usize,
        id: TaskId,
    },
    EdgeAsymmetry {
        from: TaskId,
        to: TaskId,
    },
    PredOrdering {
        pred: TaskId,
        task: TaskId,
    },
    UnsortedEdges(TaskId),
    PendingOutOfRange {
        task: TaskId,
        pending: u32,
        indegree: u32,
    },
    RootMismatch {
        stored: Vec<TaskId>,
        expected: Vec<TaskId>,
    },
    EdgeCount {
        stored: usize,
        indegree_sum: usize,
        succ_sum: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IdMismatch { index, id } => {
                write!(f, "node at index {index} carries id {id}")
            }
            Violation::EdgeAsymmetry { from, to } => {
                write!(f, "edge asymmetry at ({from},{to})")
            }
            Violation::PredOrdering { pred, task } => {
                write!(f, "predecessor {pred} of task {task} is not an earlier task")
            }
            Violation::UnsortedEdges(task) => write!(f, "edge lists of task {task} are not sorted"),
            Violation::PendingOutOfRange {
                task,
                pending,
                indegree,
            } => write!(f, "pending counter {pending} of task {task} exceeds indegree {indegree}"),
            Violation::RootMismatch { stored, expected } => {
                write!(f, "root list {stored:?} differs from {expected:?}")
            }
            Violation::EdgeCount {
                stored,
                indegree_sum,
                succ_sum,
            } => write!(
                f,
                "edge count {stored} disagrees with indegree sum {indegree_sum} / successor sum {succ_sum}"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}
