use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::netsim::RuntimeSet;
use crate::plan::{ToolRegistry, ToolSpec};

use super::Corpus;

/// Literal passed in an unused input slot.
pub const NONE_ARG: &str = "none";

/// Benchmark metadata for one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub role: String,
    /// The parameter carrying the task-specific value (camera, cell, ...).
    pub param: String,
    /// Instruction template; `{}` is replaced by the value.
    pub phrase: String,
}

impl ToolInfo {
    pub fn describe(&self, value: &str) -> String {
        self.phrase.replace("{}", value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleProfile {
    pub name: String,
    pub system_prompt: String,
    pub tools: Vec<String>,
    /// Dependency layer: perception (0), analysis (1), reporting (2).
    pub layer: u8,
}

/// Tool registry plus role partition and per-tool metadata.
#[derive(Debug, Clone)]
pub struct Catalog {
    registry: ToolRegistry,
    tools: BTreeMap<String, ToolInfo>,
    roles: Vec<RoleProfile>,
}

struct Row {
    role: &'static str,
    tool: &'static str,
    param: &'static str,
    phrase: &'static str,
    work: f64,
    out_kb: f64,
    origin_kb: f64,
    fallible: bool,
}

const fn row(
    role: &'static str,
    tool: &'static str,
    param: &'static str,
    phrase: &'static str,
    work: f64,
    out_kb: f64,
    origin_kb: f64,
) -> Row {
    Row {
        role,
        tool,
        param,
        phrase,
        work,
        out_kb,
        origin_kb,
        fallible: true,
    }
}

const VIDEO: &str = "Video-Agent";
const KEYFRAME: &str = "Keyframe-Agent";
const METEO: &str = "Meteorology-Agent";
const MAP: &str = "Map-Agent";
const REPORT: &str = "Report-Agent";

// Perception tools are heavy and pull the raw clip from the home terminal;
// analysis tools are mid-weight; reporting tools are light.
const ROWS: &[Row] = &[
    row(VIDEO, "detect_objects", "video", "detect objects in {}", 20.0, 120.0, 10_000.0),
    row(VIDEO, "classify_anomaly", "video", "classify the anomaly in {}", 20.0, 120.0, 10_000.0),
    row(VIDEO, "track_objects", "video", "track moving objects in {}", 20.0, 120.0, 10_000.0),
    row(KEYFRAME, "extract_keyframes", "clip", "extract keyframes from {}", 8.0, 200.0, 0.0),
    row(KEYFRAME, "enhance_frames", "clip", "enhance frames of {}", 8.0, 200.0, 0.0),
    row(KEYFRAME, "annotate_frames", "clip", "annotate frames of {}", 8.0, 200.0, 0.0),
    row(METEO, "fetch_weather", "location", "fetch weather at {}", 8.0, 8.0, 0.0),
    row(METEO, "forecast_wind", "location", "forecast wind at {}", 8.0, 8.0, 0.0),
    row(METEO, "check_air_quality", "location", "check air quality at {}", 8.0, 8.0, 0.0),
    row(MAP, "locate_incident", "area", "locate the incident in {}", 8.0, 16.0, 0.0),
    row(MAP, "plan_route", "area", "plan a route to {}", 8.0, 16.0, 0.0),
    row(MAP, "find_shelters", "area", "find shelters near {}", 8.0, 16.0, 0.0),
    row(REPORT, "write_report", "template", "write a report with template {}", 4.0, 40.0, 0.0),
    Row {
        fallible: false,
        ..row(REPORT, "notify_responders", "channel", "notify responders on {}", 4.0, 4.0, 0.0)
    },
    row(REPORT, "archive_files", "folder", "archive files to {}", 4.0, 40.0, 0.0),
];

const ROLES: &[(&str, u8, &str)] = &[
    (VIDEO, 0, "You analyse surveillance video and report detected anomalies."),
    (KEYFRAME, 1, "You select, enhance and annotate key frames of incident footage."),
    (METEO, 1, "You assess weather conditions relevant to an emergency."),
    (MAP, 1, "You locate incidents and plan routes and shelters on the city map."),
    (REPORT, 2, "You write incident reports, notify responders and archive evidence."),
];

impl Catalog {
    /// Five roles in three dependency layers, three tools per role.
    pub fn standard() -> Self {
        let specs = ROWS.iter().map(|r| {
            let spec = ToolSpec::new(r.tool, &[r.param, "src", "ctx"], r.work, r.out_kb)
                .with_origin_input(r.origin_kb);
            if r.fallible {
                spec
            } else {
                spec.infallible()
            }
        });
        let registry = ToolRegistry::new(specs).expect("static catalog is valid");
        let tools = ROWS
            .iter()
            .map(|r| {
                (
                    r.tool.to_string(),
                    ToolInfo {
                        name: r.tool.into(),
                        role: r.role.into(),
                        param: r.param.into(),
                        phrase: r.phrase.into(),
                    },
                )
            })
            .collect();
        let roles = ROLES
            .iter()
            .map(|&(name, layer, prompt)| RoleProfile {
                name: name.into(),
                system_prompt: prompt.into(),
                tools: ROWS
                    .iter()
                    .filter(|r| r.role == name)
                    .map(|r| r.tool.to_string())
                    .collect(),
                layer,
            })
            .collect();
        Self {
            registry,
            tools,
            roles,
        }
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn tool(&self, name: &str) -> Option<&ToolInfo> {
        self.tools.get(name)
    }

    pub fn roles(&self) -> &[RoleProfile] {
        &self.roles
    }

    pub fn role(&self, name: &str) -> Option<&RoleProfile> {
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn role_registry(&self, role: &str) -> ToolRegistry {
        let names = self.role(role).map(|r| r.tools.clone()).unwrap_or_default();
        self.registry.subset(names.iter().map(String::as_str))
    }

    /// Other tools of the same role, in catalog order.
    pub fn siblings(&self, tool: &str) -> Vec<&str> {
        let Some(info) = self.tools.get(tool) else {
            return Vec::new();
        };
        self.role(&info.role)
            .map(|r| {
                r.tools
                    .iter()
                    .map(String::as_str)
                    .filter(|t| *t != tool)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Token runtimes for every tool, with each task's canned perception
    /// outputs installed as fixtures.
    pub fn runtimes(&self, corpus: &Corpus) -> RuntimeSet {
        let mut set = RuntimeSet::tokens_for(&self.registry);
        for task in &corpus.tasks {
            for (tool, out) in &task.fixture {
                if let Some(rt) = set.get_mut(tool) {
                    rt.fixtures.insert(task.id.clone(), out.clone());
                }
            }
        }
        set
    }
}
