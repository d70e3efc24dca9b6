use std::collections::BTreeMap;

use crate::plan::PlanDag;
use crate::scheduler::{Schedule, TIME_EPS};

use super::{ExecutionTrace, NodeStatus};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceViolation {
    /// Node count or ids differ from the plan.
    Conservation(String),
    /// Skipped status disagrees with the fault status of its inputs.
    SkipClosure { node: u32, status: NodeStatus },
    /// Times or output present where they must not be, or missing.
    TimeSanity { node: u32, reason: String },
    Dependency { from: u32, to: u32 },
    Overlap { device: String, a: u32, b: u32 },
    EndTime { recorded: f64, expected: f64 },
    ScheduleDrift { node: u32 },
}

/// Re-checks a trace against its plan and reports every invariant it
/// breaks. A trace fresh out of the simulator yields no violations.
pub fn replay(trace: &ExecutionTrace, dag: &PlanDag) -> Vec<TraceViolation> {
    let mut out = Vec::new();
    if trace.nodes.len() != dag.len() {
        out.push(TraceViolation::Conservation(format!(
            "{} records for {} nodes",
            trace.nodes.len(),
            dag.len()
        )));
        return out;
    }
    for (i, rec) in trace.nodes.iter().enumerate() {
        let node = &dag.nodes()[i];
        if rec.node != node.id || rec.tool != node.tool {
            out.push(TraceViolation::Conservation(format!(
                "record {} is {}:{} but plan has {}:{}",
                i, rec.node, rec.tool, node.id, node.tool
            )));
        }
    }
    if !out.is_empty() {
        return out;
    }

    let status = |n: u32| trace.nodes[n as usize - 1].status;
    for rec in &trace.nodes {
        let blocked = dag
            .predecessors(rec.node)
            .into_iter()
            .any(|p| status(p) != NodeStatus::Ok);
        if blocked != (rec.status == NodeStatus::Skipped) {
            out.push(TraceViolation::SkipClosure {
                node: rec.node,
                status: rec.status,
            });
        }
        let sane = |reason: &str| TraceViolation::TimeSanity {
            node: rec.node,
            reason: reason.to_string(),
        };
        match (rec.status, rec.start_s, rec.finish_s) {
            (NodeStatus::Skipped, None, None) => {
                if rec.output.is_some() {
                    out.push(sane("skipped node has an output"));
                }
            }
            (NodeStatus::Skipped, _, _) => out.push(sane("skipped node carries times")),
            (_, Some(s), Some(f)) => {
                if !(s.is_finite() && f.is_finite() && f >= s && s >= 0.0) {
                    out.push(sane("finish precedes start"));
                }
                if (rec.status == NodeStatus::Ok) != rec.output.is_some() {
                    out.push(sane("output present iff ok"));
                }
            }
            _ => out.push(sane("executed node lacks times")),
        }
    }

    for &(a, b) in dag.edges() {
        let (ra, rb) = (&trace.nodes[a as usize - 1], &trace.nodes[b as usize - 1]);
        if let (Some(fa), Some(sb)) = (ra.finish_s, rb.start_s) {
            if sb + TIME_EPS < fa {
                out.push(TraceViolation::Dependency { from: a, to: b });
            }
        }
    }

    let mut per_device: BTreeMap<&str, Vec<(f64, f64, u32)>> = BTreeMap::new();
    for rec in &trace.nodes {
        if let (Some(s), Some(f)) = (rec.start_s, rec.finish_s) {
            per_device
                .entry(rec.device.as_str())
                .or_default()
                .push((s, f, rec.node));
        }
    }
    for (device, mut spans) in per_device {
        spans.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
        for w in spans.windows(2) {
            if w[1].0 + TIME_EPS < w[0].1 {
                out.push(TraceViolation::Overlap {
                    device: device.to_string(),
                    a: w[0].2,
                    b: w[1].2,
                });
            }
        }
    }

    let expected = trace
        .nodes
        .iter()
        .filter_map(|r| r.finish_s)
        .fold(0.0, f64::max);
    if (trace.end_time_s - expected).abs() > TIME_EPS {
        out.push(TraceViolation::EndTime {
            recorded: trace.end_time_s,
            expected,
        });
    }
    out
}

/// [`replay`] plus agreement with the schedule that produced the trace:
/// executed nodes keep their slot times and a fault-free trace ends at the
/// schedule's makespan.
pub fn replay_against_schedule(
    trace: &ExecutionTrace,
    dag: &PlanDag,
    schedule: &Schedule,
) -> Vec<TraceViolation> {
    let mut out = replay(trace, dag);
    if schedule.nodes.len() != trace.nodes.len() {
        out.push(TraceViolation::Conservation("schedule size differs".into()));
        return out;
    }
    for (rec, slot) in trace.nodes.iter().zip(&schedule.nodes) {
        let drift = match (rec.start_s, rec.finish_s) {
            (Some(s), Some(f)) => s != slot.start_s || f != slot.finish_s,
            _ => false,
        };
        if drift || rec.device != slot.device {
            out.push(TraceViolation::ScheduleDrift { node: rec.node });
        }
    }
    if trace.all_ok() && trace.end_time_s != schedule.makespan() {
        out.push(TraceViolation::EndTime {
            recorded: trace.end_time_s,
            expected: schedule.makespan(),
        });
    }
    out
}
