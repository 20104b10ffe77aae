//! Record-and-replay runtime for task dependency graphs.
//!
//! A region generator spawns tasks with `in`/`out`/`inout` dependence
//! clauses. The first execution of a region records the resulting DAG;
//! later executions replay it on a work-stealing pool without resolving
//! dependences or allocating tasks again.
//!
//! ```
//! use tdg_runtime::{Body, DepClause, GraphId, Payload, RegionOptions, TdgRegistry, WorkerPool};
//!
//! let pool = WorkerPool::new(2).unwrap();
//! let registry = TdgRegistry::new();
//! let id = GraphId::new("example.rs", 1);
//! let body = Body::noop("step");
//! for _ in 0..3 {
//!     registry
//!         .taskgraph_region(&id, &pool, RegionOptions::default(), &|s| {
//!             for i in 0..8u64 {
//!                 s.spawn(&body, Payload::from_u64(i), &[DepClause::inout(i % 2)]);
//!             }
//!         })
//!         .unwrap();
//! }
//! assert_eq!(registry.graph(&id).unwrap().len(), 8);
//! assert_eq!(registry.stats(&id).replays, 2);
//! ```

pub mod graph;
pub mod recorder;
pub mod region;
pub mod scheduler;
pub mod serialization;

pub use graph::{
    payload_u64, Body, DepClause, DepKind, GraphError, GraphId, NodeSpec, Payload, RunStateError,
    TaskGraph, TaskId, TaskNode, ValidationReport, Violation,
};
pub use recorder::{DepTracker, RecordError, RecordMode, RecordingSession, TagEntry};
pub use region::{
    record_graph, taskloop_chunks, Admission, RegionError, RegionOptions, RegionOutcome,
    RegionPath, RegionState, RegionStats, StaticTdg, TaskloopError, TaskloopPlan, TdgRegistry,
};
pub use scheduler::trace::{ExecutionTrace, TraceRecord, TraceViolation};
pub use scheduler::{
    chunk_payload, on_worker_thread, root_placement, ExecError, PoolConfig, PoolError, Spawner,
    WorkerPool,
};
pub use serialization::{
    load_tdg, save_tdg, Base64Codec, BodyRegistry, LoadError, PayloadCodec, SaveError, TdgFile,
};
