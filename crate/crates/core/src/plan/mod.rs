//! Plan DSL for parallel tool calling.
//!
//! A plan is a numbered list of tool calls. Each call binds named
//! parameters either to literals or to `$k` back-references naming an
//! earlier line. Because a line may only reference lines above it, every
//! well-formed plan is a DAG by construction.
//!
//! ```text
//! 1. detect_objects(video="clip_03")
//! 2. extract_keyframes(frames=$1, top_k=3)
//! 3. fetch_weather(location="cell_17")
//! 4. write_report(events=$1, frames=$2, weather=$3)
//! ```

mod analysis;
mod format;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{critical_path_len, merge_forest, sequentialize, topo_order};
pub use format::{format_literal, format_plan};
pub use parse::{parse_call, parse_plan, ParseError, RawCall};

/// Static description of a callable tool and its resource demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub param_names: Vec<String>,
    /// Abstract compute cost in work-units.
    pub work: f64,
    /// Output payload size in KB.
    pub output_size_kb: f64,
    /// Whether the simulator's random failure model applies to this tool.
    pub fallible: bool,
    /// KB pulled from the task's origin device before the tool can start
    /// (raw sensor data such as a video clip). Zero for most tools.
    #[serde(default)]
    pub origin_input_kb: f64,
}

impl ToolSpec {
    pub fn new(name: &str, params: &[&str], work: f64, output_size_kb: f64) -> Self {
        Self {
            name: name.to_string(),
            param_names: params.iter().map(|p| p.to_string()).collect(),
            work,
            output_size_kb,
            fallible: true,
            origin_input_kb: 0.0,
        }
    }

    pub fn with_origin_input(mut self, kb: f64) -> Self {
        self.origin_input_kb = kb;
        self
    }

    pub fn infallible(mut self) -> Self {
        self.fallible = false;
        self
    }

    /// Renders `name(p1, p2, ...)` for prompts.
    pub fn signature(&self) -> String {
        format!("{}({})", self.name, self.param_names.join(", "))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("duplicate tool name `{0}`")]
    DuplicateTool(String),
    #[error("tool `{0}` must have finite work > 0")]
    InvalidWork(String),
    #[error("tool `{0}` must have finite sizes >= 0")]
    InvalidSize(String),
    #[error("tool `{0}` has an invalid name or duplicate parameter")]
    InvalidName(String),
}

/// Set of tools keyed by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ToolSpec>", into = "Vec<ToolSpec>")]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
}

impl ToolRegistry {
    pub fn new(tools: impl IntoIterator<Item = ToolSpec>) -> Result<Self, RegistryError> {
        let mut map = BTreeMap::new();
        for tool in tools {
            if !is_ident(&tool.name) {
                return Err(RegistryError::InvalidName(tool.name));
            }
            let distinct: BTreeSet<&String> = tool.param_names.iter().collect();
            if distinct.len() != tool.param_names.len()
                || !tool.param_names.iter().all(|p| is_ident(p))
            {
                return Err(RegistryError::InvalidName(tool.name));
            }
            if !(tool.work.is_finite() && tool.work > 0.0) {
                return Err(RegistryError::InvalidWork(tool.name));
            }
            let sizes_ok = |v: f64| v.is_finite() && v >= 0.0;
            if !sizes_ok(tool.output_size_kb) || !sizes_ok(tool.origin_input_kb) {
                return Err(RegistryError::InvalidSize(tool.name));
            }
            if map.contains_key(&tool.name) {
                return Err(RegistryError::DuplicateTool(tool.name));
            }
            map.insert(tool.name.clone(), tool);
        }
        Ok(Self { tools: map })
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    /// Registry restricted to the given tool names. Unknown names are ignored.
    pub fn subset<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> ToolRegistry {
        let tools = names
            .into_iter()
            .filter_map(|n| self.tools.get(n))
            .map(|t| (t.name.clone(), t.clone()))
            .collect();
        ToolRegistry { tools }
    }
}

impl TryFrom<Vec<ToolSpec>> for ToolRegistry {
    type Error = RegistryError;

    fn try_from(tools: Vec<ToolSpec>) -> Result<Self, Self::Error> {
        ToolRegistry::new(tools)
    }
}

impl From<ToolRegistry> for Vec<ToolSpec> {
    fn from(reg: ToolRegistry) -> Self {
        reg.tools.into_values().collect()
    }
}

/// `[a-z][a-z0-9_]*`
pub fn is_ident(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Literal {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_literal(self))
    }
}

impl From<&str> for Literal {
    fn from(s: &str) -> Self {
        Literal::Str(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Lit(Literal),
    /// Back-reference to the output of an earlier line.
    Ref(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArg {
    pub name: String,
    pub value: Arg,
}

impl NamedArg {
    pub fn lit(name: &str, value: impl Into<Literal>) -> Self {
        Self {
            name: name.to_string(),
            value: Arg::Lit(value.into()),
        }
    }

    pub fn reference(name: &str, node: u32) -> Self {
        Self {
            name: name.to_string(),
            value: Arg::Ref(node),
        }
    }
}

/// One tool call. `args` are kept in the tool's parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub id: u32,
    pub tool: String,
    pub args: Vec<NamedArg>,
}

impl PlanNode {
    pub fn refs(&self) -> impl Iterator<Item = u32> + '_ {
        self.args.iter().filter_map(|a| match a.value {
            Arg::Ref(k) => Some(k),
            Arg::Lit(_) => None,
        })
    }

    pub fn literal(&self, name: &str) -> Option<&Literal> {
        self.args.iter().find_map(|a| match &a.value {
            Arg::Lit(l) if a.name == name => Some(l),
            _ => None,
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DagError {
    #[error("node ids must be 1..n in order; position {position} holds id {found}")]
    NonContiguous { position: usize, found: u32 },
    #[error("node {node} references ${target}, which is not an earlier node")]
    BadRef { node: u32, target: u32 },
}

/// Validated tool-call DAG. Node ids are `1..=n` and every edge points
/// from a lower id to a higher one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanDag {
    nodes: Vec<PlanNode>,
    edges: BTreeSet<(u32, u32)>,
}

impl PlanDag {
    pub fn new(nodes: Vec<PlanNode>) -> Result<Self, DagError> {
        let mut edges = BTreeSet::new();
        for (pos, node) in nodes.iter().enumerate() {
            if node.id as usize != pos + 1 {
                return Err(DagError::NonContiguous {
                    position: pos + 1,
                    found: node.id,
                });
            }
            for k in node.refs() {
                if k == 0 || k >= node.id {
                    return Err(DagError::BadRef {
                        node: node.id,
                        target: k,
                    });
                }
                edges.insert((k, node.id));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(u32, u32)> {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Panics if `id` is outside `1..=len`.
    pub fn node(&self, id: u32) -> &PlanNode {
        &self.nodes[id as usize - 1]
    }

    pub fn get(&self, id: u32) -> Option<&PlanNode> {
        (id as usize).checked_sub(1).and_then(|i| self.nodes.get(i))
    }

    /// Distinct predecessors of `id`, ascending.
    pub fn predecessors(&self, id: u32) -> Vec<u32> {
        let set: BTreeSet<u32> = self.node(id).refs().collect();
        set.into_iter().collect()
    }

    /// Children lists indexed by `id - 1`.
    pub fn successors(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            out[a as usize - 1].push(b);
        }
        out
    }
}
