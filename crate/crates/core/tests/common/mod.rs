#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use proptest::prelude::*;
use tdg_runtime::{
    Body, DepClause, DepKind, GraphId, Payload, RecordMode, RecordingSession, TaskGraph, TaskId,
};

pub type Stream = Vec<Vec<DepClause>>;

fn arb_kind() -> impl Strategy<Value = DepKind> {
    prop_oneof![Just(DepKind::In), Just(DepKind::Out), Just(DepKind::InOut)]
}

pub fn arb_clause(tags: u64) -> impl Strategy<Value = DepClause> {
    (arb_kind(), 0..tags).prop_map(|(kind, tag)| DepClause { kind, tag })
}

/// Clause streams of up to `max_tasks` tasks over up to `max_tags` tags.
pub fn arb_stream(max_tasks: usize, max_tags: u64) -> impl Strategy<Value = Stream> {
    (1..=max_tags).prop_flat_map(move |tags| {
        prop::collection::vec(prop::collection::vec(arb_clause(tags), 0..4), 0..=max_tasks)
    })
}

/// Per task: tag -> whether the task writes it (any writing clause wins).
pub fn accesses(stream: &Stream) -> Vec<BTreeMap<u64, bool>> {
    stream
        .iter()
        .map(|clauses| {
            let mut m = BTreeMap::new();
            for c in clauses {
                *m.entry(c.tag).or_insert(false) |= c.kind != DepKind::In;
            }
            m
        })
        .collect()
}

/// Ordered pairs (u, v), u < v, touching a common tag with at least one
/// writer.
pub fn conflicts(stream: &Stream) -> Vec<(TaskId, TaskId)> {
    let acc = accesses(stream);
    let mut out = Vec::new();
    for v in 0..acc.len() {
        for u in 0..v {
            let clash = acc[u]
                .iter()
                .any(|(tag, &wu)| acc[v].get(tag).is_some_and(|&wv| wu || wv));
            if clash {
                out.push((u as TaskId, v as TaskId));
            }
        }
    }
    out
}

/// Direct predecessors by scanning the history of each tag.
pub fn expected_preds(stream: &Stream) -> Vec<Vec<TaskId>> {
    let acc = accesses(stream);
    (0..acc.len())
        .map(|v| {
            let mut preds = Vec::new();
            for (&tag, &writes) in &acc[v] {
                let history: Vec<(usize, bool)> = (0..v)
                    .filter_map(|u| acc[u].get(&tag).map(|&w| (u, w)))
                    .collect();
                let last_writer = history.iter().rev().find(|(_, w)| *w).map(|&(u, _)| u);
                let readers: Vec<usize> = history
                    .iter()
                    .filter(|&&(u, w)| !w && last_writer.is_none_or(|lw| u > lw))
                    .map(|&(u, _)| u)
                    .collect();
                if writes && !readers.is_empty() {
                    preds.extend(readers);
                } else if let Some(lw) = last_writer {
                    preds.push(lw);
                }
            }
            let mut preds: Vec<TaskId> = preds.into_iter().map(|u| u as TaskId).collect();
            preds.sort_unstable();
            preds.dedup();
            preds
        })
        .collect()
}

/// `reach[v][u]` is true when u reaches v through one or more edges.
pub fn reachability(graph: &TaskGraph) -> Vec<Vec<bool>> {
    let n = graph.len();
    let mut reach = vec![vec![false; n]; n];
    for v in 0..n {
        for &p in graph.node(v as TaskId).preds() {
            let p = p as usize;
            reach[v][p] = true;
            let (before, after) = reach.split_at_mut(v);
            for (u, r) in before[p].iter().enumerate() {
                if *r {
                    after[0][u] = true;
                }
            }
        }
    }
    reach
}

pub fn record(stream: &Stream) -> TaskGraph {
    record_with(stream, |_| Body::noop("t"))
}

pub fn record_with(stream: &Stream, body: impl Fn(usize) -> Body) -> TaskGraph {
    let mut session = RecordingSession::new(GraphId::new("oracle.rs", 1), RecordMode::RecordOnly);
    for (i, clauses) in stream.iter().enumerate() {
        session
            .record_task(body(i), encode_task(i, clauses), clauses)
            .unwrap();
    }
    session.finalize().unwrap()
}

/// Payload carrying the task id and its clauses.
pub fn encode_task(id: usize, clauses: &[DepClause]) -> Payload {
    let mut bytes = (id as u32).to_le_bytes().to_vec();
    for c in clauses {
        bytes.push(c.kind.writes() as u8);
        bytes.extend_from_slice(&c.tag.to_le_bytes());
    }
    Payload::from_bytes(bytes)
}

pub fn decode_task(bytes: &[u8]) -> (u64, Vec<(bool, u64)>) {
    let id = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as u64;
    let clauses = bytes[4..]
        .chunks_exact(9)
        .map(|c| (c[0] != 0, u64::from_le_bytes(c[1..].try_into().unwrap())))
        .collect();
    (id, clauses)
}

fn mix(a: u64, b: u64) -> u64 {
    (a ^ b).wrapping_mul(0x0100_0000_01b3).rotate_left(17) ^ 0x9e37
}

/// Memory model for result-equivalence checks: every task folds all tags it
/// touches into a per-task digest, then overwrites the tags it writes.
pub struct Memory {
    pub cells: Vec<AtomicU64>,
    pub digests: Vec<AtomicU64>,
}

impl Memory {
    pub fn new(tags: usize, tasks: usize) -> Arc<Self> {
        Arc::new(Self {
            cells: (0..tags).map(|t| AtomicU64::new(t as u64)).collect(),
            digests: (0..tasks).map(|_| AtomicU64::new(0)).collect(),
        })
    }

    pub fn apply(&self, bytes: &[u8]) {
        let (id, clauses) = decode_task(bytes);
        let mut digest = id;
        for &(_, tag) in &clauses {
            digest = mix(digest, self.cells[tag as usize].load(Ordering::Relaxed));
        }
        self.digests[id as usize].store(digest, Ordering::Relaxed);
        for &(writes, tag) in &clauses {
            if writes {
                self.cells[tag as usize].store(mix(digest, tag), Ordering::Relaxed);
            }
        }
    }

    pub fn snapshot(&self) -> (Vec<u64>, Vec<u64>) {
        (
            self.cells
                .iter()
                .map(|c| c.load(Ordering::Relaxed))
                .collect(),
            self.digests
                .iter()
                .map(|c| c.load(Ordering::Relaxed))
                .collect(),
        )
    }

    pub fn body(self: &Arc<Self>) -> Body {
        let mem = Arc::clone(self);
        Body::new("apply", move |p| mem.apply(p))
    }
}

/// Memory state after running the stream serially in id order.
pub fn serial_result(stream: &Stream, tags: usize) -> (Vec<u64>, Vec<u64>) {
    let mem = Memory::new(tags, stream.len());
    for (i, clauses) in stream.iter().enumerate() {
        mem.apply(encode_task(i, clauses).as_bytes());
    }
    mem.snapshot()
}

pub fn max_tag(stream: &Stream) -> usize {
    stream
        .iter()
        .flatten()
        .map(|c| c.tag as usize + 1)
        .max()
        .unwrap_or(0)
}
