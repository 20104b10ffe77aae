//! `.tdg.json` files: a pre-built graph that replaces run-time recording.
//!
//! Only the shape is stored (body tags, payloads, predecessor lists).
//! Successors, roots and indegrees are derived again on load.

use std::collections::{BTreeMap, HashMap};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Body, GraphId, NodeSpec, Payload, TaskGraph, TaskId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdgFile {
    pub version: u32,
    pub graph_id: FileGraphId,
    pub tasks: Vec<FileTask>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileGraphId {
    pub file: String,
    pub line: u32,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileTask {
    pub id: u64,
    pub body_tag: String,
    pub payload: Option<String>,
    pub preds: Vec<u64>,
}

/// Maps body tags to executable bodies when a file is loaded.
#[derive(Clone, Default)]
pub struct BodyRegistry {
    bodies: HashMap<String, Body>,
}

impl BodyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `body` under its own tag, replacing any previous entry.
    pub fn register(&mut self, body: Body) -> &mut Self {
        self.bodies.insert(body.tag().to_owned(), body);
        self
    }

    pub fn get(&self, tag: &str) -> Option<&Body> {
        self.bodies.get(tag)
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }
}

impl FromIterator<Body> for BodyRegistry {
    fn from_iter<I: IntoIterator<Item = Body>>(iter: I) -> Self {
        let mut reg = Self::new();
        for body in iter {
            reg.register(body);
        }
        reg
    }
}

/// Text encoding for opaque payload bytes.
pub trait PayloadCodec {
    fn encode(&self, bytes: &[u8]) -> Result<String, String>;
    fn decode(&self, text: &str) -> Result<Vec<u8>, String>;
}

/// Standard padded base64.
#[derive(Clone, Copy, Debug, Default)]
pub struct Base64Codec;

impl PayloadCodec for Base64Codec {
    fn encode(&self, bytes: &[u8]) -> Result<String, String> {
        Ok(STANDARD.encode(bytes))
    }

    fn decode(&self, text: &str) -> Result<Vec<u8>, String> {
        STANDARD.decode(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SaveError {
    #[error("payload of task {task} cannot be encoded: {reason}")]
    Unencodable { task: TaskId, reason: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("malformed graph file: {0}")]
    Malformed(String),
    #[error("unsupported graph file version {0}")]
    UnsupportedVersion(u32),
    #[error("id gap: entry {position} has id {found}")]
    IdGap { position: usize, found: u64 },
    #[error("forward dependence: task {task} lists predecessor {pred}")]
    ForwardDependence { task: u64, pred: u64 },
    #[error("unknown body tag {tag:?} on task {task}")]
    UnknownBodyTag { task: u64, tag: String },
    #[error("invalid payload on task {task}: {reason}")]
    InvalidPayload { task: u64, reason: String },
}

/// Builds the file representation of `graph`.
pub fn to_file(graph: &TaskGraph, codec: &dyn PayloadCodec) -> Result<TdgFile, SaveError> {
    let tasks = graph
        .nodes()
        .iter()
        .map(|node| {
            let payload = match node.payload().get() {
                Some(bytes) => {
                    Some(
                        codec
                            .encode(bytes)
                            .map_err(|reason| SaveError::Unencodable {
                                task: node.id(),
                                reason,
                            })?,
                    )
                }
                None => None,
            };
            Ok(FileTask {
                id: u64::from(node.id()),
                body_tag: node.body().tag().to_owned(),
                payload,
                preds: node.preds().iter().map(|&p| u64::from(p)).collect(),
            })
        })
        .collect::<Result<_, _>>()?;
    let id = graph.id();
    Ok(TdgFile {
        version: FORMAT_VERSION,
        graph_id: FileGraphId {
            file: id.file.clone(),
            line: id.line,
            name: id.name.clone(),
        },
        tasks,
        metadata: BTreeMap::new(),
    })
}

/// Serializes `graph` as compact UTF-8 JSON with a fixed key order.
pub fn save_tdg(graph: &TaskGraph, codec: &dyn PayloadCodec) -> Result<Vec<u8>, SaveError> {
    let file = to_file(graph, codec)?;
    Ok(serde_json::to_vec(&file).expect("graph file serializes"))
}

/// Parses a graph file, decoding payloads as base64.
pub fn load_tdg(bytes: &[u8], bodies: &BodyRegistry) -> Result<TaskGraph, LoadError> {
    load_tdg_with(bytes, bodies, &Base64Codec)
}

pub fn load_tdg_with(
    bytes: &[u8],
    bodies: &BodyRegistry,
    codec: &dyn PayloadCodec,
) -> Result<TaskGraph, LoadError> {
    let file: TdgFile =
        serde_json::from_slice(bytes).map_err(|e| LoadError::Malformed(e.to_string()))?;
    from_file(file, bodies, codec)
}

pub fn from_file(
    file: TdgFile,
    bodies: &BodyRegistry,
    codec: &dyn PayloadCodec,
) -> Result<TaskGraph, LoadError> {
    if file.version != FORMAT_VERSION {
        return Err(LoadError::UnsupportedVersion(file.version));
    }
    if file.tasks.len() > TaskId::MAX as usize {
        return Err(LoadError::Malformed(format!(
            "{} tasks exceed the task id range",
            file.tasks.len()
        )));
    }
    let mut specs = Vec::with_capacity(file.tasks.len());
    for (position, task) in file.tasks.into_iter().enumerate() {
        if task.id != position as u64 {
            return Err(LoadError::IdGap {
                position,
                found: task.id,
            });
        }
        if let Some(&pred) = task.preds.iter().find(|&&p| p >= task.id) {
            return Err(LoadError::ForwardDependence {
                task: task.id,
                pred,
            });
        }
        let body = bodies
            .get(&task.body_tag)
            .ok_or_else(|| LoadError::UnknownBodyTag {
                task: task.id,
                tag: task.body_tag.clone(),
            })?
            .clone();
        let payload = match task.payload {
            Some(text) => Payload::from_bytes(codec.decode(&text).map_err(|reason| {
                LoadError::InvalidPayload {
                    task: task.id,
                    reason,
                }
            })?),
            None => Payload::none(),
        };
        specs.push(NodeSpec {
            body,
            payload,
            preds: task.preds.iter().map(|&p| p as TaskId).collect(),
        });
    }
    let id = GraphId {
        file: file.graph_id.file,
        line: file.graph_id.line,
        name: file.graph_id.name,
    };
    TaskGraph::from_specs(id, specs).map_err(|e| LoadError::Malformed(e.to_string()))
}
