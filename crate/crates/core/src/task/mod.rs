//! Tasks, ground-truth plans and the role-partitioned tool catalog of the
//! emergency-response benchmark.

mod catalog;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{NamedArg, PlanDag, PlanNode};

pub use catalog::{Catalog, RoleProfile, ToolInfo, NONE_ARG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Inclusive tool-call range of the bin.
    pub fn bin(self) -> (usize, usize) {
        match self {
            Difficulty::Easy => (1, 3),
            Difficulty::Medium => (4, 6),
            Difficulty::Hard => (7, 9),
        }
    }

    pub fn of_count(calls: usize) -> Option<Difficulty> {
        Difficulty::ALL.into_iter().find(|d| {
            let (lo, hi) = d.bin();
            (lo..=hi).contains(&calls)
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Fire,
    TrafficAccident,
    Flood,
    Intrusion,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Fire,
        Scenario::TrafficAccident,
        Scenario::Flood,
        Scenario::Intrusion,
    ];

    /// Human-readable label, also used in similarity signatures.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Fire => "fire",
            Scenario::TrafficAccident => "traffic accident",
            Scenario::Flood => "flood",
            Scenario::Intrusion => "intrusion",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.label() == s || x.label().replace(' ', "_") == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// One required tool call of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtCall {
    pub id: u32,
    pub tool: String,
    pub role: String,
    /// Name of the fixture parameter and its required value.
    pub param: String,
    pub value: String,
    /// Calls whose output this one consumes (at most two, ascending).
    pub deps: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruthPlan {
    /// Ordered by id; ids are 1..n and every dep precedes its consumer.
    pub calls: Vec<GtCall>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("ground truth: {0}")]
    GroundTruth(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("corpus: {0}")]
    Corpus(String),
}

impl GroundTruthPlan {
    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn call(&self, id: u32) -> Option<&GtCall> {
        self.calls.get((id as usize).wrapping_sub(1))
    }

    /// Direct precedences `(a, b)`: `b` consumes the output of `a`.
    pub fn precedences(&self) -> Vec<(u32, u32)> {
        self.calls
            .iter()
            .flat_map(|c| c.deps.iter().map(move |&d| (d, c.id)))
            .collect()
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<(), TaskError> {
        let bad = |m: String| Err(TaskError::GroundTruth(m));
        for (i, c) in self.calls.iter().enumerate() {
            if c.id as usize != i + 1 {
                return bad(format!("call ids must be 1..n, found {} at {}", c.id, i + 1));
            }
            let Some(info) = catalog.tool(&c.tool) else {
                return bad(format!("unknown tool `{}`", c.tool));
            };
            if info.role != c.role || info.param != c.param {
                return bad(format!("call {} disagrees with the catalog", c.id));
            }
            if c.deps.len() > 2 || c.deps.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("call {} needs at most two ascending deps", c.id));
            }
            if c.deps.iter().any(|&d| d == 0 || d >= c.id) {
                return bad(format!("call {} depends on a later call", c.id));
            }
            if self.calls[..i].iter().any(|p| p.tool == c.tool || p.value == c.value) {
                return bad(format!("call {} repeats a tool or value", c.id));
            }
        }
        Ok(())
    }

    /// The whole plan as one DAG: fixture argument first, then `src` and
    /// `ctx` bound to the deps or `"none"`.
    pub fn to_dag(&self) -> PlanDag {
        let nodes = self
            .calls
            .iter()
            .map(|c| PlanNode {
                id: c.id,
                tool: c.tool.clone(),
                args: call_args(c, |d| Some(DepArg::Ref(d))),
            })
            .collect();
        PlanDag::new(nodes).expect("ground truth ids are contiguous and backward")
    }
}

/// How a dependency is rendered into a call's `src`/`ctx` slot.
pub enum DepArg {
    Ref(u32),
    Token(String),
}

/// Arguments `[param=value, src=.., ctx=..]` for a ground-truth call, with
/// each dep resolved by `resolve` (`None` renders as `"none"`).
pub fn call_args(call: &GtCall, mut resolve: impl FnMut(u32) -> Option<DepArg>) -> Vec<NamedArg> {
    let mut args = vec![NamedArg::lit(&call.param, call.value.as_str())];
    for (i, slot) in ["src", "ctx"].into_iter().enumerate() {
        let arg = match call.deps.get(i).and_then(|&d| resolve(d)) {
            Some(DepArg::Ref(k)) => NamedArg::reference(slot, k),
            Some(DepArg::Token(t)) => NamedArg::lit(slot, t.as_str()),
            None => NamedArg::lit(slot, NONE_ARG),
        };
        args.push(arg);
    }
    args
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub scenario: Scenario,
    pub difficulty: Difficulty,
    /// Terminal holding the raw sensor data; the only device in local mode.
    pub home: String,
    /// Canned perception outputs keyed by tool name.
    pub fixture: BTreeMap<String, String>,
    pub ground_truth: GroundTruthPlan,
}

impl Task {
    pub fn tool_count(&self) -> usize {
        self.ground_truth.len()
    }

    /// Bag-of-words signature text for experience retrieval.
    pub fn signature(&self) -> String {
        format!("{} {}", self.scenario.label(), self.instruction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub tasks: Vec<Task>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    /// Parses and checks every task against the catalog: bins, ids and
    /// ground-truth structure.
    pub fn from_json(text: &str, catalog: &Catalog) -> Result<Self, TaskError> {
        let corpus: Corpus =
            serde_json::from_str(text).map_err(|e| TaskError::Corpus(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for t in &corpus.tasks {
            if !seen.insert(t.id.as_str()) {
                return Err(TaskError::Corpus(format!("duplicate task id `{}`", t.id)));
            }
            t.ground_truth.validate(catalog)?;
            if Difficulty::of_count(t.tool_count()) != Some(t.difficulty) {
                return Err(TaskError::Corpus(format!(
                    "task `{}` has {} calls, outside the {} bin",
                    t.id,
                    t.tool_count(),
                    t.difficulty
                )));
            }
        }
        Ok(corpus)
    }
}

/// A role-addressed fragment of a task produced by decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTask {
    pub id: String,
    pub task_id: String,
    pub role: String,
    pub instruction: String,
    pub round: u32,
}
