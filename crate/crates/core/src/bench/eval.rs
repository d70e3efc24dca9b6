use serde::{Deserialize, Serialize};

use crate::netsim::{NodeRecord, NodeStatus};
use crate::orchestrator::{Outcome, TaskResult};
use crate::plan::Literal;
use crate::scheduler::TIME_EPS;
use crate::task::GroundTruthPlan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class", content = "call")]
pub enum FailureClass {
    /// No ok execution of this ground-truth call exists.
    Omission(u32),
    /// The call ran, but never after all of its inputs.
    Ordering(u32),
    /// The run ended by budget, whatever it executed.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success: bool,
    pub failure: Option<FailureClass>,
    /// Ok executions not matched to any ground-truth call.
    pub extra_calls: usize,
}

fn matches(n: &NodeRecord, tool: &str, param: &str, value: &str) -> bool {
    n.tool == tool
        && n.args
            .iter()
            .any(|a| a.name == param && a.value == Literal::Str(value.to_string()))
}

/// Checks a finished run against the ground truth.
///
/// Calls are matched in id order (a topological order). Each call takes the
/// earliest-finishing ok execution with the right tool and fixture value
/// that starts no earlier than every matched input finished.
pub fn evaluate_task(result: &TaskResult, truth: &GroundTruthPlan) -> Evaluation {
    let ok: Vec<&NodeRecord> = result
        .executions
        .iter()
        .flat_map(|e| &e.trace.nodes)
        .filter(|n| n.status == NodeStatus::Ok)
        .collect();
    let mut finish: Vec<f64> = Vec::with_capacity(truth.len());
    let mut failure = None;
    let mut matched = 0;
    for call in &truth.calls {
        let candidates: Vec<&&NodeRecord> = ok
            .iter()
            .filter(|n| matches(n, &call.tool, &call.param, &call.value))
            .collect();
        let ready = call
            .deps
            .iter()
            .map(|&d| finish[d as usize - 1])
            .fold(0.0, f64::max);
        let best = candidates
            .iter()
            .filter(|n| n.start_s.expect("ok node has a start") + TIME_EPS >= ready)
            .map(|n| n.finish_s.expect("ok node has a finish"))
            .min_by(f64::total_cmp);
        match best {
            Some(f) => {
                finish.push(f);
                matched += 1;
            }
            None => {
                failure = Some(if candidates.is_empty() {
                    FailureClass::Omission(call.id)
                } else {
                    FailureClass::Ordering(call.id)
                });
                break;
            }
        }
    }
    if failure.is_none() && matches!(result.outcome, Outcome::EarlyStop | Outcome::BudgetExhausted) {
        failure = Some(FailureClass::Budget);
    }
    Evaluation {
        success: failure.is_none(),
        failure,
        extra_calls: ok.len().saturating_sub(matched),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{ExecutionTrace, TraceArg};
    use crate::orchestrator::{Execution, Mode, Scheme};
    use crate::scheduler::Schedule;
    use crate::task::GtCall;

    fn gt() -> GroundTruthPlan {
        let c = |id, tool: &str, value: &str, deps: Vec<u32>| GtCall {
            id,
            tool: tool.into(),
            role: "r".into(),
            param: "p".into(),
            value: value.into(),
            deps,
        };
        GroundTruthPlan {
            calls: vec![c(1, "a", "x", vec![]), c(2, "b", "y", vec![1])],
        }
    }

    fn rec(tool: &str, value: &str, start: f64, finish: f64, status: NodeStatus) -> NodeRecord {
        NodeRecord {
            node: 1,
            tool: tool.into(),
            device: "d".into(),
            start_s: Some(start),
            finish_s: Some(finish),
            status,
            output: (status == NodeStatus::Ok).then(|| "tok".into()),
            args: vec![TraceArg {
                name: "p".into(),
                value: Literal::Str(value.into()),
            }],
        }
    }

    fn result(nodes: Vec<NodeRecord>, outcome: Outcome) -> TaskResult {
        TaskResult {
            task_id: "t".into(),
            scheme: Scheme::Flat,
            mode: Mode::Collab,
            seed: 0,
            outcome,
            reason: None,
            rounds_used: 1,
            subtasks: vec![],
            executions: vec![Execution {
                label: "t".into(),
                role: None,
                round: 1,
                attempt: 0,
                plan: String::new(),
                schedule: Schedule::default(),
                trace: ExecutionTrace {
                    task: "t".into(),
                    attempt: 0,
                    seed: 0,
                    nodes,
                    end_time_s: 0.0,
                },
            }],
            planning_invocations: 1,
            decomposition_invocations: 0,
            planning_latency_s: 0.0,
            execution_latency_s: 0.0,
        }
    }

    #[test]
    fn exact_match() {
        let r = result(
            vec![rec("a", "x", 0.0, 1.0, NodeStatus::Ok), rec("b", "y", 1.0, 2.0, NodeStatus::Ok)],
            Outcome::Success,
        );
        let e = evaluate_task(&r, &gt());
        assert!(e.success);
        assert_eq!(e.extra_calls, 0);
    }

    #[test]
    fn omission_and_wrong_value() {
        let r = result(
            vec![rec("a", "x", 0.0, 1.0, NodeStatus::Ok), rec("b", "z", 1.0, 2.0, NodeStatus::Ok)],
            Outcome::Success,
        );
        let e = evaluate_task(&r, &gt());
        assert_eq!(e.failure, Some(FailureClass::Omission(2)));
        assert_eq!(e.extra_calls, 1);
        let r = result(
            vec![rec("a", "x", 0.0, 1.0, NodeStatus::Ok), rec("b", "y", 1.0, 2.0, NodeStatus::Fault)],
            Outcome::Success,
        );
        assert_eq!(evaluate_task(&r, &gt()).failure, Some(FailureClass::Omission(2)));
    }

    #[test]
    fn inverted_precedence() {
        let r = result(
            vec![rec("a", "x", 1.0, 2.0, NodeStatus::Ok), rec("b", "y", 0.0, 1.0, NodeStatus::Ok)],
            Outcome::Success,
        );
        assert_eq!(evaluate_task(&r, &gt()).failure, Some(FailureClass::Ordering(2)));
    }

    #[test]
    fn later_rerun_rescues_ordering() {
        let r = result(
            vec![
                rec("b", "y", 0.0, 1.0, NodeStatus::Ok),
                rec("a", "x", 1.0, 2.0, NodeStatus::Ok),
                rec("b", "y", 2.0, 3.0, NodeStatus::Ok),
            ],
            Outcome::Success,
        );
        let e = evaluate_task(&r, &gt());
        assert!(e.success);
        assert_eq!(e.extra_calls, 1);
    }

    #[test]
    fn budget_outcomes_fail() {
        let r = result(
            vec![rec("a", "x", 0.0, 1.0, NodeStatus::Ok), rec("b", "y", 1.0, 2.0, NodeStatus::Ok)],
            Outcome::EarlyStop,
        );
        assert_eq!(evaluate_task(&r, &gt()).failure, Some(FailureClass::Budget));
    }
}
