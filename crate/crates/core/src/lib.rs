//! Dual-loop multi-agent task planning over a simulated terminal/edge/cloud
//! topology.
//!
//! The outer loop has a global agent decompose a task into parallel,
//! role-addressed subtasks. In the inner loop each sub-agent compiles its
//! subtask into a tool-call DAG ([`plan`]), which is scheduled onto devices
//! by critical-path list scheduling ([`scheduler`]) and executed by a
//! deterministic discrete-event simulator ([`netsim`]). Faults trigger
//! replanning of the affected subgraph.

pub mod plan;
pub mod rng;
pub mod netsim;
pub mod scheduler;
pub mod task;
pub mod agents;
pub mod orchestrator;
pub mod bench;
