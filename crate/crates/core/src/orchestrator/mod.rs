//! The dual-loop orchestrator and its two baselines.
//!
//! Every scheme runs a task as a sequence of phases. A phase schedules one
//! or more independent DAGs jointly on the topology, starting when the
//! previous phase ended, and simulates each DAG on its share of the joint
//! schedule. Outputs of earlier phases reach later ones as literal token
//! arguments; the [`TokenRegistry`] turns those back into data transfers
//! from the device that produced them.

mod dual;
mod flat;
mod react;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{MemoryError, MemoryStore, Planner, PlannerError, PlannerRequest};
use crate::netsim::{
    simulate, ExecutionTrace, FailureModel, NodeStatus, RuntimeSet, SimContext, SimError,
};
use crate::plan::{merge_forest, Arg, PlanDag};
use crate::scheduler::{
    priority_schedule_with, DeviceSelector, DeviceTopology, ExternalInput, Schedule,
    ScheduleError, ScheduleInputs, Tier,
};
use crate::task::{Catalog, SubTask, Task};

pub use dual::{check_round_independence, run_outer_loop};
pub use flat::run_flat_compiler;
pub use react::run_react;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "dual-loop")]
    DualLoop,
    #[serde(rename = "flat")]
    Flat,
    #[serde(rename = "react")]
    React,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::DualLoop, Scheme::Flat, Scheme::React];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::DualLoop => "dual-loop",
            Scheme::Flat => "flat",
            Scheme::React => "react",
        }
    }
}

/// Which devices a run may execute on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The task's home terminal only.
    Local,
    /// The cloud tier only.
    Cloud,
    /// Every tier.
    Collab,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Local, Mode::Cloud, Mode::Collab];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Local => "local",
            Mode::Cloud => "cloud",
            Mode::Collab => "collab",
        }
    }

    pub fn selector(self, task: &Task) -> DeviceSelector {
        match self {
            Mode::Local => DeviceSelector::device(&task.home),
            Mode::Cloud => DeviceSelector::tiers([Tier::Cloud]),
            Mode::Collab => DeviceSelector::all(),
        }
    }
}

macro_rules! str_enum {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!(concat!("unknown ", $what, " `{}`"), s))
            }
        }
    };
}

str_enum!(Scheme, "scheme");
str_enum!(Mode, "mode");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    PlanningFailure,
    ExecutionFailure,
    EarlyStop,
    BudgetExhausted,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::PlanningFailure => "planning_failure",
            Outcome::ExecutionFailure => "execution_failure",
            Outcome::EarlyStop => "early_stop",
            Outcome::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_rounds: u32,
    pub max_replans: u32,
    pub react_steps: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_rounds: 4,
            max_replans: 2,
            react_steps: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    /// Retrieve and store experiences (dual-loop only).
    pub enabled: bool,
    /// One store per role rather than one shared by all sub-agents.
    pub per_role: bool,
    /// Few-shot exemplars per request.
    pub k: usize,
    /// Digest lines the global agent keeps in context.
    pub short_term: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            per_role: true,
            k: crate::agents::K_MAX,
            short_term: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub mode: Mode,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub memory: MemoryConfig,
    pub seed: u64,
    #[serde(default)]
    pub failures: FailureModel,
}

impl RunConfig {
    pub fn new(scheme: Scheme, mode: Mode, seed: u64) -> Self {
        Self {
            scheme,
            mode,
            budgets: Budgets::default(),
            memory: MemoryConfig::default(),
            seed,
            failures: FailureModel::none(),
        }
    }
}

/// Shared, read-only collaborators of a run.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub catalog: &'a Catalog,
    pub topology: &'a DeviceTopology,
    pub runtimes: &'a RuntimeSet,
    pub planner: &'a dyn Planner,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// One simulated DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    /// Simulation key; also the prefix of every output token.
    pub label: String,
    pub role: Option<String>,
    pub round: u32,
    pub attempt: u32,
    pub plan: String,
    /// Absolute simulated times.
    pub schedule: Schedule,
    pub trace: ExecutionTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub scheme: Scheme,
    pub mode: Mode,
    pub seed: u64,
    pub outcome: Outcome,
    /// Why the run did not succeed, when it did not.
    pub reason: Option<String>,
    pub rounds_used: u32,
    pub subtasks: Vec<SubTask>,
    pub executions: Vec<Execution>,
    /// Plan-producing planner calls: subtask plans, flat plans, ReAct steps.
    pub planning_invocations: u32,
    /// Global-agent decomposition calls.
    pub decomposition_invocations: u32,
    /// Wall-clock planner time; zero for simulated backends.
    pub planning_latency_s: f64,
    /// Simulated time at which the last phase ended.
    pub execution_latency_s: f64,
}

impl TaskResult {
    fn new(task: &Task, cfg: &RunConfig) -> Self {
        Self {
            task_id: task.id.clone(),
            scheme: cfg.scheme,
            mode: cfg.mode,
            seed: cfg.seed,
            outcome: Outcome::Success,
            reason: None,
            rounds_used: 0,
            subtasks: Vec::new(),
            executions: Vec::new(),
            planning_invocations: 0,
            decomposition_invocations: 0,
            planning_latency_s: 0.0,
            execution_latency_s: 0.0,
        }
    }

    fn finish(mut self, outcome: Outcome, reason: Option<String>) -> Self {
        self.outcome = outcome;
        self.reason = reason;
        self
    }
}

/// Runs `task` under the scheme named in `cfg`. `memory` is consulted and
/// updated by the dual loop only.
pub fn run_task(
    task: &Task,
    cfg: &RunConfig,
    env: Env<'_>,
    memory: Option<&mut MemoryStore>,
) -> Result<TaskResult, OrchestratorError> {
    match cfg.scheme {
        Scheme::DualLoop => run_outer_loop(task, cfg, env, memory),
        Scheme::Flat => run_flat_compiler(task, cfg, env),
        Scheme::React => run_react(task, cfg, env),
    }
}

/// Where each output token was produced.
#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    tokens: HashMap<String, Produced>,
}

#[derive(Debug, Clone, PartialEq)]
struct Produced {
    device: String,
    finish_s: f64,
    size_kb: f64,
}

impl TokenRegistry {
    pub fn record(&mut self, trace: &ExecutionTrace, catalog: &Catalog) {
        for n in &trace.nodes {
            if let (NodeStatus::Ok, Some(out), Some(finish)) = (n.status, &n.output, n.finish_s) {
                let size_kb = catalog
                    .registry()
                    .get(&n.tool)
                    .map_or(0.0, |s| s.output_size_kb);
                self.tokens.insert(
                    out.clone(),
                    Produced {
                        device: n.device.clone(),
                        finish_s: finish,
                        size_kb,
                    },
                );
            }
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains_key(token)
    }

    /// External inputs of `dag` for a phase starting at `t0`: tokens passed
    /// as literals, plus raw sensor data pulled from `home`.
    pub fn inputs_for(&self, dag: &PlanDag, t0: f64, home: &str, catalog: &Catalog) -> ScheduleInputs {
        let mut inputs = ScheduleInputs::new();
        for node in dag.nodes() {
            let mut list = Vec::new();
            if let Some(spec) = catalog.registry().get(&node.tool) {
                if spec.origin_input_kb > 0.0 {
                    list.push(ExternalInput {
                        device: home.to_string(),
                        ready_s: 0.0,
                        size_kb: spec.origin_input_kb,
                    });
                }
            }
            for arg in &node.args {
                let Arg::Lit(lit) = &arg.value else { continue };
                if let Some(p) = lit.as_str().and_then(|s| self.tokens.get(s)) {
                    list.push(ExternalInput {
                        device: p.device.clone(),
                        ready_s: (p.finish_s - t0).max(0.0),
                        size_kb: p.size_kb,
                    });
                }
            }
            if !list.is_empty() {
                inputs.insert(node.id, list);
            }
        }
        inputs
    }
}

/// One DAG taking part in a phase.
pub(crate) struct PhaseItem<'a> {
    pub dag: &'a PlanDag,
    pub label: String,
    pub attempt: u32,
}

pub(crate) struct PhaseOutput {
    pub schedules: Vec<Schedule>,
    pub traces: Vec<ExecutionTrace>,
    pub end_s: f64,
}

/// Schedules `items` jointly from `t0` and simulates each on its share.
pub(crate) fn run_phase(
    items: &[PhaseItem<'_>],
    t0: f64,
    task: &Task,
    cfg: &RunConfig,
    env: Env<'_>,
    tokens: &TokenRegistry,
    extra: &ScheduleInputs,
) -> Result<PhaseOutput, OrchestratorError> {
    let parts: Vec<PlanDag> = items.iter().map(|i| i.dag.clone()).collect();
    let (merged, ranges) = merge_forest(&parts);
    let mut inputs = tokens.inputs_for(&merged, t0, &task.home, env.catalog);
    for (node, list) in extra {
        inputs.entry(*node).or_default().extend(list.iter().cloned());
    }
    let joint = priority_schedule_with(
        &merged,
        env.topology,
        env.catalog.registry(),
        &cfg.mode.selector(task),
        &inputs,
    )?;
    let shifted = Schedule {
        nodes: joint
            .nodes
            .into_iter()
            .map(|mut s| {
                s.start_s += t0;
                s.finish_s += t0;
                s
            })
            .collect(),
    };
    let end_s = shifted.nodes.iter().map(|s| s.finish_s).fold(t0, f64::max);

    let mut schedules = Vec::with_capacity(items.len());
    let mut traces = Vec::with_capacity(items.len());
    for (item, range) in items.iter().zip(ranges) {
        let part = shifted.restrict(range);
        let ctx = SimContext::new(&task.id, &item.label, item.attempt);
        traces.push(simulate(&part, item.dag, env.runtimes, &cfg.failures, cfg.seed, &ctx)?);
        schedules.push(part);
    }
    Ok(PhaseOutput {
        schedules,
        traces,
        end_s,
    })
}

/// Calls the planner, adding wall-clock time to `latency` for live backends.
pub(crate) fn timed_plan(
    planner: &dyn Planner,
    req: &PlannerRequest,
) -> (Result<String, PlannerError>, f64) {
    if planner.is_live() {
        let t = Instant::now();
        let r = planner.plan(req);
        (r, t.elapsed().as_secs_f64())
    } else {
        (planner.plan(req), 0.0)
    }
}

/// Digest lines for a trace, as fed back to planners.
pub(crate) fn digest(trace: &ExecutionTrace, round: u32, role: &str) -> Vec<crate::agents::text::DigestLine> {
    trace
        .nodes
        .iter()
        .map(|n| {
            let args: Vec<(&str, &crate::plan::Literal)> =
                n.args.iter().map(|a| (a.name.as_str(), &a.value)).collect();
            crate::agents::text::DigestLine::new(
                round,
                role,
                n.status,
                &n.tool,
                &args,
                n.output.as_deref(),
            )
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("serial".parse::<Scheme>().is_err());
        assert_eq!(serde_json::to_string(&Scheme::DualLoop).unwrap(), "\"dual-loop\"");
    }

    #[test]
    fn zero_fault_work_equivalence() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        for scheme in Scheme::ALL {
            let cfg = RunConfig::new(scheme, Mode::Collab, 3);
            let r = run_task(&t, &cfg, w.env(), Some(&mut MemoryStore::new(true))).unwrap();
            assert_eq!(r.outcome, Outcome::Success, "{scheme}");
            assert_eq!(ok_tools(&r), gt_tools(&t), "{scheme}");
        }
    }

    #[test]
    fn modes_restrict_devices() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        for scheme in Scheme::ALL {
            for (mode, want) in [(Mode::Local, "terminal-0"), (Mode::Cloud, "cloud-0")] {
                let cfg = RunConfig::new(scheme, mode, 3);
                let r = run_task(&t, &cfg, w.env(), None).unwrap();
                assert!(r
                    .executions
                    .iter()
                    .flat_map(|e| &e.trace.nodes)
                    .all(|n| n.device == want));
            }
        }
    }
}
