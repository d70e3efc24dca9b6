//! Critical-path list scheduling of tool-call DAGs onto heterogeneous
//! devices.
//!
//! Nodes are listed by descending critical-path length (work-units) and each
//! is placed, in list order, on the allowed device giving the earliest
//! feasible finish. Placement may use idle gaps left earlier on a device.
//! Data crossing devices pays `latency + size / bandwidth` once per edge;
//! links never contend.

mod oracle;
mod topology;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{critical_path_len, PlanDag, ToolRegistry};

pub use oracle::{brute_force_schedule, brute_force_schedule_with, lower_bounds, Bounds};
pub use topology::{Device, DeviceSelector, DeviceTopology, LinkParams, Tier, TierPair};

/// Slack used when comparing floating-point times.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScheduleError {
    #[error("no device available for the requested selection")]
    NoDeviceAvailable,
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("tool `{0}` is not in the registry")]
    UnknownTool(String),
    #[error("instance too large for exhaustive search ({nodes} nodes, {devices} devices)")]
    InstanceTooLarge { nodes: usize, devices: usize },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

/// Data a node needs from outside its DAG: `size_kb` available on `device`
/// from `ready_s` onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalInput {
    pub device: String,
    pub ready_s: f64,
    pub size_kb: f64,
}

/// External inputs keyed by node id.
pub type ScheduleInputs = BTreeMap<u32, Vec<ExternalInput>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub node: u32,
    pub device: String,
    pub start_s: f64,
    pub finish_s: f64,
}

/// Assignment of every DAG node to a device and a time window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    /// One slot per node, ordered by node id.
    pub nodes: Vec<Slot>,
}

impl Schedule {
    pub fn slot(&self, node: u32) -> &Slot {
        &self.nodes[node as usize - 1]
    }

    pub fn makespan(&self) -> f64 {
        makespan(self)
    }

    /// Restriction to a contiguous id range, renumbered from 1.
    pub fn restrict(&self, range: std::ops::Range<u32>) -> Schedule {
        let offset = range.start - 1;
        Schedule {
            nodes: self.nodes[(range.start - 1) as usize..(range.end - 1) as usize]
                .iter()
                .map(|s| Slot {
                    node: s.node - offset,
                    ..s.clone()
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            nodes: &'a [Slot],
            makespan_s: f64,
        }
        serde_json::to_string_pretty(&Export {
            nodes: &self.nodes,
            makespan_s: self.makespan(),
        })
        .expect("serializable")
    }
}

/// Latest finish time; zero for an empty schedule.
pub fn makespan(s: &Schedule) -> f64 {
    s.nodes.iter().map(|n| n.finish_s).fold(0.0, f64::max)
}

pub(crate) struct Instance<'a> {
    pub dag: &'a PlanDag,
    pub topo: &'a DeviceTopology,
    pub allowed: Vec<usize>,
    pub work: Vec<f64>,
    pub out_kb: Vec<f64>,
    pub inputs: Vec<Vec<(usize, f64, f64)>>,
}

impl<'a> Instance<'a> {
    pub fn new(
        dag: &'a PlanDag,
        topo: &'a DeviceTopology,
        registry: &ToolRegistry,
        selector: &DeviceSelector,
        inputs: &ScheduleInputs,
    ) -> Result<Self, ScheduleError> {
        let allowed = topo.select(selector)?;
        let mut work = Vec::with_capacity(dag.len());
        let mut out_kb = Vec::with_capacity(dag.len());
        for node in dag.nodes() {
            let spec = registry
                .get(&node.tool)
                .ok_or_else(|| ScheduleError::UnknownTool(node.tool.clone()))?;
            work.push(spec.work);
            out_kb.push(spec.output_size_kb);
        }
        let mut ext = vec![Vec::new(); dag.len()];
        for (&node, list) in inputs {
            let Some(slot) = ext.get_mut((node as usize).wrapping_sub(1)) else {
                continue;
            };
            for input in list {
                let dev = topo
                    .index_of(&input.device)
                    .ok_or_else(|| ScheduleError::UnknownDevice(input.device.clone()))?;
                slot.push((dev, input.ready_s, input.size_kb));
            }
        }
        Ok(Self {
            dag,
            topo,
            allowed,
            work,
            out_kb,
            inputs: ext,
        })
    }

    /// Earliest time node `n` has all its inputs on device `d`, given the
    /// placements of its predecessors.
    pub fn ready_time(&self, n: u32, d: usize, placed: &[Option<(usize, f64)>]) -> f64 {
        let i = n as usize - 1;
        let mut ready = 0.0f64;
        for p in self.dag.predecessors(n) {
            let (pd, pf) = placed[p as usize - 1].expect("predecessor placed first");
            ready = ready.max(pf + self.topo.transfer_time(pd, d, self.out_kb[p as usize - 1]));
        }
        for &(src, at, size) in &self.inputs[i] {
            ready = ready.max(at + self.topo.transfer_time(src, d, size));
        }
        ready
    }

    pub fn duration(&self, n: u32, d: usize) -> f64 {
        self.work[n as usize - 1] / self.topo.device(d).speed
    }
}

/// [`priority_schedule_with`] without external inputs.
pub fn priority_schedule(
    dag: &PlanDag,
    topo: &DeviceTopology,
    registry: &ToolRegistry,
    selector: &DeviceSelector,
) -> Result<Schedule, ScheduleError> {
    priority_schedule_with(dag, topo, registry, selector, &ScheduleInputs::new())
}

pub fn priority_schedule_with(
    dag: &PlanDag,
    topo: &DeviceTopology,
    registry: &ToolRegistry,
    selector: &DeviceSelector,
    inputs: &ScheduleInputs,
) -> Result<Schedule, ScheduleError> {
    let inst = Instance::new(dag, topo, registry, selector, inputs)?;
    let cp = critical_path_len(dag, |n| inst.work[n.id as usize - 1]);
    let mut order: Vec<u32> = (1..=dag.len() as u32).collect();
    order.sort_by(|&a, &b| {
        cp[b as usize - 1]
            .total_cmp(&cp[a as usize - 1])
            .then(a.cmp(&b))
    });

    let mut busy: Vec<Vec<(f64, f64)>> = vec![Vec::new(); topo.devices().len()];
    let mut placed: Vec<Option<(usize, f64)>> = vec![None; dag.len()];
    let mut slots: Vec<Option<Slot>> = vec![None; dag.len()];

    for n in order {
        let mut best: Option<(usize, f64, f64)> = None;
        for &d in &inst.allowed {
            let ready = inst.ready_time(n, d, &placed);
            let dur = inst.duration(n, d);
            let start = earliest_gap(&busy[d], ready, dur);
            let finish = start + dur;
            if best.map_or(true, |(_, _, f)| finish < f) {
                best = Some((d, start, finish));
            }
        }
        let (d, start, finish) = best.expect("allowed set is nonempty");
        let pos = busy[d].partition_point(|&(s, _)| s < start);
        busy[d].insert(pos, (start, finish));
        placed[n as usize - 1] = Some((d, finish));
        slots[n as usize - 1] = Some(Slot {
            node: n,
            device: topo.device(d).id.clone(),
            start_s: start,
            finish_s: finish,
        });
    }
    Ok(Schedule {
        nodes: slots.into_iter().map(|s| s.expect("every node placed")).collect(),
    })
}

/// First start `>= ready` where an interval of length `dur` fits between
/// the sorted busy intervals.
fn earliest_gap(busy: &[(f64, f64)], ready: f64, dur: f64) -> f64 {
    let mut t = ready;
    for &(s, f) in busy {
        if t + dur <= s {
            return t;
        }
        t = t.max(f);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingNode(u32),
    UnknownDevice { node: u32, device: String },
    DeviceNotAllowed { node: u32, device: String },
    Duration { node: u32, expected: f64, actual: f64 },
    Dependency { from: u32, to: u32, earliest: f64, start: f64 },
    ExternalInput { node: u32, earliest: f64, start: f64 },
    Overlap { device: String, a: u32, b: u32 },
}

/// Checks the schedule invariants: durations match device speed, every
/// dependency (and external input) arrives before its consumer starts, and
/// intervals on one device never overlap.
pub fn validate_schedule(
    schedule: &Schedule,
    dag: &PlanDag,
    topo: &DeviceTopology,
    registry: &ToolRegistry,
    selector: &DeviceSelector,
    inputs: &ScheduleInputs,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let allowed = topo.select(selector).unwrap_or_default();
    let lookup = |id: &str| topo.devices().iter().position(|d| d.id == id);
    let hop = |a: usize, b: usize, kb: f64| -> f64 {
        if a == b {
            0.0
        } else {
            let l = topo.link(topo.device(a).tier, topo.device(b).tier);
            l.latency_s + kb / l.bandwidth_kbps
        }
    };

    let mut dev_of = vec![None; dag.len()];
    for node in dag.nodes() {
        let Some(slot) = schedule.nodes.iter().find(|s| s.node == node.id) else {
            out.push(Violation::MissingNode(node.id));
            continue;
        };
        let Some(d) = lookup(&slot.device) else {
            out.push(Violation::UnknownDevice {
                node: node.id,
                device: slot.device.clone(),
            });
            continue;
        };
        if !allowed.contains(&d) {
            out.push(Violation::DeviceNotAllowed {
                node: node.id,
                device: slot.device.clone(),
            });
        }
        let work = registry.get(&node.tool).map_or(f64::NAN, |t| t.work);
        let expected = work / topo.device(d).speed;
        let actual = slot.finish_s - slot.start_s;
        if !((expected - actual).abs() <= TIME_EPS * expected.max(1.0)) {
            out.push(Violation::Duration {
                node: node.id,
                expected,
                actual,
            });
        }
        dev_of[node.id as usize - 1] = Some((d, slot));
        for input in inputs.get(&node.id).into_iter().flatten() {
            if let Some(src) = lookup(&input.device) {
                let earliest = input.ready_s + hop(src, d, input.size_kb);
                if slot.start_s + TIME_EPS < earliest {
                    out.push(Violation::ExternalInput {
                        node: node.id,
                        earliest,
                        start: slot.start_s,
                    });
                }
            }
        }
    }
    for &(a, b) in dag.edges() {
        if let (Some((da, sa)), Some((db, sb))) = (dev_of[a as usize - 1], dev_of[b as usize - 1]) {
            let kb = registry
                .get(&dag.node(a).tool)
                .map_or(0.0, |t| t.output_size_kb);
            let earliest = sa.finish_s + hop(da, db, kb);
            if sb.start_s + TIME_EPS < earliest {
                out.push(Violation::Dependency {
                    from: a,
                    to: b,
                    earliest,
                    start: sb.start_s,
                });
            }
        }
    }
    let mut per_device: BTreeMap<usize, Vec<&Slot>> = BTreeMap::new();
    for (d, slot) in dev_of.iter().flatten() {
        per_device.entry(*d).or_default().push(slot);
    }
    for (d, mut slots) in per_device {
        slots.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.node.cmp(&b.node)));
        for w in slots.windows(2) {
            if w[1].start_s + TIME_EPS < w[0].finish_s {
                out.push(Violation::Overlap {
                    device: topo.device(d).id.clone(),
                    a: w[0].node,
                    b: w[1].node,
                });
            }
        }
    }
    out
}
