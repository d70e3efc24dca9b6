//! Deterministic discrete-event execution of a scheduled plan.
//!
//! Events are processed in `(time, node id)` order. A node whose
//! predecessor faulted or was skipped is itself skipped; otherwise it runs
//! for its full slot and the fault draw happens at finish time. Ref
//! arguments are replaced by the producing node's output token.

mod replay;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Arg, Literal, PlanDag, ToolRegistry};
use crate::rng::DrawKey;
use crate::scheduler::Schedule;

pub use replay::{replay, replay_against_schedule, TraceViolation};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("no runtime registered for tool `{0}`")]
    MissingRuntime(String),
    #[error("schedule does not match the plan: {0}")]
    ScheduleMismatch(String),
    #[error("invalid failure model: {0}")]
    InvalidFailureModel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolFault(pub String);

/// Everything a tool behavior may depend on.
pub struct Invocation<'a> {
    /// Corpus task the run belongs to; selects fixture responses.
    pub task_id: &'a str,
    /// Label of the executing plan (task, round, role); part of output tokens.
    pub key: &'a str,
    pub node: u32,
    pub tool: &'a str,
    pub args: &'a [TraceArg],
    pub seed: u64,
}

pub type Behavior = Arc<dyn Fn(&Invocation<'_>) -> Result<String, ToolFault> + Send + Sync>;

/// Replayable stand-in for a real tool.
#[derive(Clone)]
pub struct ToolRuntime {
    pub name: String,
    behavior: Behavior,
    /// Whether the random failure model applies.
    pub fallible: bool,
    /// Canned outputs per corpus task id, e.g. anomaly labels in place of
    /// video understanding.
    pub fixtures: BTreeMap<String, String>,
}

impl fmt::Debug for ToolRuntime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolRuntime")
            .field("name", &self.name)
            .field("fallible", &self.fallible)
            .field("fixtures", &self.fixtures)
            .finish_non_exhaustive()
    }
}

impl ToolRuntime {
    /// Emits the opaque token `"{key}:{node}:{tool}"`.
    pub fn token(name: &str) -> Self {
        Self::with_behavior(
            name,
            Arc::new(|inv: &Invocation<'_>| Ok(format!("{}:{}:{}", inv.key, inv.node, inv.tool))),
        )
    }

    pub fn with_behavior(name: &str, behavior: Behavior) -> Self {
        Self {
            name: name.to_string(),
            behavior,
            fallible: true,
            fixtures: BTreeMap::new(),
        }
    }

    pub fn with_fixture(mut self, task_id: &str, output: &str) -> Self {
        self.fixtures.insert(task_id.to_string(), output.to_string());
        self
    }

    pub fn invoke(&self, inv: &Invocation<'_>) -> Result<String, ToolFault> {
        match self.fixtures.get(inv.task_id) {
            Some(out) => Ok(out.clone()),
            None => (self.behavior)(inv),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuntimeSet {
    tools: BTreeMap<String, ToolRuntime>,
}

impl RuntimeSet {
    /// Token-emitting runtimes for every tool in the registry.
    pub fn tokens_for(registry: &ToolRegistry) -> Self {
        let mut set = Self::default();
        for spec in registry.iter() {
            let mut rt = ToolRuntime::token(&spec.name);
            rt.fallible = spec.fallible;
            set.insert(rt);
        }
        set
    }

    pub fn insert(&mut self, rt: ToolRuntime) {
        self.tools.insert(rt.name.clone(), rt);
    }

    pub fn get(&self, name: &str) -> Option<&ToolRuntime> {
        self.tools.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ToolRuntime> {
        self.tools.get_mut(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultInjection {
    pub task: String,
    pub node: u32,
    /// `None` fires on every attempt.
    pub attempt: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    /// Fault probability for fallible tools without an override.
    pub default_p: f64,
    pub per_tool: BTreeMap<String, f64>,
    pub injections: BTreeSet<FaultInjection>,
}

impl FailureModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn uniform(p: f64) -> Self {
        Self {
            default_p: p,
            ..Self::default()
        }
    }

    pub fn inject(mut self, task: &str, node: u32, attempt: Option<u32>) -> Self {
        self.injections.insert(FaultInjection {
            task: task.to_string(),
            node,
            attempt,
        });
        self
    }

    pub fn p_for(&self, tool: &str) -> f64 {
        self.per_tool.get(tool).copied().unwrap_or(self.default_p)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(self.default_p) || !self.per_tool.values().all(|&p| ok(p)) {
            return Err(SimError::InvalidFailureModel(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn injected(&self, task: &str, node: u32, attempt: u32) -> bool {
        self.injections.iter().any(|f| {
            f.task == task && f.node == node && f.attempt.map_or(true, |a| a == attempt)
        })
    }
}

/// Identifies one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimContext {
    pub task_id: String,
    pub key: String,
    pub attempt: u32,
}

impl SimContext {
    pub fn new(task_id: &str, key: &str, attempt: u32) -> Self {
        Self {
            task_id: task_id.to_string(),
            key: key.to_string(),
            attempt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Ok,
    Fault,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceArg {
    pub name: String,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: u32,
    pub tool: String,
    /// Device from the schedule, also for skipped nodes.
    pub device: String,
    pub start_s: Option<f64>,
    pub finish_s: Option<f64>,
    pub status: NodeStatus,
    pub output: Option<String>,
    /// Literal arguments with references replaced by upstream outputs.
    /// Skipped nodes keep only their literal arguments.
    pub args: Vec<TraceArg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub task: String,
    pub attempt: u32,
    pub seed: u64,
    pub nodes: Vec<NodeRecord>,
    pub end_time_s: f64,
}

impl ExecutionTrace {
    pub fn count(&self, status: NodeStatus) -> usize {
        self.nodes.iter().filter(|n| n.status == status).count()
    }

    pub fn all_ok(&self) -> bool {
        self.nodes.iter().all(|n| n.status == NodeStatus::Ok)
    }

    /// One JSON object per node event, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            task: &'a str,
            node: u32,
            tool: &'a str,
            device: &'a str,
            start_s: Option<f64>,
            finish_s: Option<f64>,
            status: NodeStatus,
            attempt: u32,
        }
        let mut out = String::new();
        for n in &self.nodes {
            let line = Line {
                task: &self.task,
                node: n.node,
                tool: &n.tool,
                device: &n.device,
                start_s: n.start_s,
                finish_s: n.finish_s,
                status: n.status,
                attempt: self.attempt,
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Start,
    Finish,
}

#[derive(Debug, PartialEq)]
struct Event {
    time: f64,
    node: u32,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the BinaryHeap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.node.cmp(&self.node))
            .then(other.kind.cmp(&self.kind))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs `schedule` for `dag` and records what happened to every node.
pub fn simulate(
    schedule: &Schedule,
    dag: &PlanDag,
    runtimes: &RuntimeSet,
    failures: &FailureModel,
    seed: u64,
    ctx: &SimContext,
) -> Result<ExecutionTrace, SimError> {
    failures.validate()?;
    if schedule.nodes.len() != dag.len()
        || schedule
            .nodes
            .iter()
            .enumerate()
            .any(|(i, s)| s.node as usize != i + 1)
    {
        return Err(SimError::ScheduleMismatch(format!(
            "{} slots for {} nodes",
            schedule.nodes.len(),
            dag.len()
        )));
    }
    for node in dag.nodes() {
        if runtimes.get(&node.tool).is_none() {
            return Err(SimError::MissingRuntime(node.tool.clone()));
        }
    }

    let mut events = BinaryHeap::with_capacity(dag.len() * 2);
    for slot in &schedule.nodes {
        events.push(Event {
            time: slot.start_s,
            node: slot.node,
            kind: EventKind::Start,
        });
    }

    let mut status: Vec<Option<NodeStatus>> = vec![None; dag.len()];
    let mut outputs: Vec<Option<String>> = vec![None; dag.len()];
    let mut args: Vec<Vec<TraceArg>> = vec![Vec::new(); dag.len()];

    while let Some(ev) = events.pop() {
        let i = ev.node as usize - 1;
        let node = dag.node(ev.node);
        match ev.kind {
            EventKind::Start => {
                let mut blocked = false;
                for p in node.refs() {
                    match status[p as usize - 1] {
                        Some(NodeStatus::Ok) => {}
                        Some(_) => blocked = true,
                        None => {
                            return Err(SimError::ScheduleMismatch(format!(
                                "node {} starts before its input {p} finished",
                                ev.node
                            )))
                        }
                    }
                }
                if blocked {
                    status[i] = Some(NodeStatus::Skipped);
                    args[i] = node
                        .args
                        .iter()
                        .filter_map(|a| match &a.value {
                            Arg::Lit(l) => Some(TraceArg {
                                name: a.name.clone(),
                                value: l.clone(),
                            }),
                            Arg::Ref(_) => None,
                        })
                        .collect();
                    continue;
                }
                args[i] = node
                    .args
                    .iter()
                    .map(|a| TraceArg {
                        name: a.name.clone(),
                        value: match &a.value {
                            Arg::Lit(l) => l.clone(),
                            Arg::Ref(k) => Literal::Str(
                                outputs[*k as usize - 1].clone().expect("ok node has output"),
                            ),
                        },
                    })
                    .collect();
                events.push(Event {
                    time: schedule.nodes[i].finish_s,
                    node: ev.node,
                    kind: EventKind::Finish,
                });
            }
            EventKind::Finish => {
                let injected = failures.injected(&ctx.key, ev.node, ctx.attempt);
                let runtime = runtimes.get(&node.tool).expect("checked");
                let p = if runtime.fallible {
                    failures.p_for(&node.tool)
                } else {
                    0.0
                };
                let drawn = p > 0.0
                    && DrawKey::new("tool-fault")
                        .u64(seed)
                        .str(&ctx.key)
                        .u64(ev.node as u64)
                        .u64(ctx.attempt as u64)
                        .uniform()
                        < p;
                if injected || drawn {
                    status[i] = Some(NodeStatus::Fault);
                    continue;
                }
                let inv = Invocation {
                    task_id: &ctx.task_id,
                    key: &ctx.key,
                    node: ev.node,
                    tool: &node.tool,
                    args: &args[i],
                    seed,
                };
                match runtime.invoke(&inv) {
                    Ok(out) => {
                        status[i] = Some(NodeStatus::Ok);
                        outputs[i] = Some(out);
                    }
                    Err(_) => status[i] = Some(NodeStatus::Fault),
                }
            }
        }
    }

    let mut end = 0.0f64;
    let nodes = dag
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let slot = &schedule.nodes[i];
            let st = status[i].expect("every node reaches a terminal status");
            let ran = st != NodeStatus::Skipped;
            if ran {
                end = end.max(slot.finish_s);
            }
            NodeRecord {
                node: node.id,
                tool: node.tool.clone(),
                device: slot.device.clone(),
                start_s: ran.then_some(slot.start_s),
                finish_s: ran.then_some(slot.finish_s),
                status: st,
                output: outputs[i].take(),
                args: std::mem::take(&mut args[i]),
            }
        })
        .collect();
    Ok(ExecutionTrace {
        task: ctx.key.clone(),
        attempt: ctx.attempt,
        seed,
        nodes,
        end_time_s: end,
    })
}
