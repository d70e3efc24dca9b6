use crate::agents::text::ReactStep;
use crate::agents::{PlannerRequest, RequestKind, RequestMeta};
use crate::netsim::NodeStatus;
use crate::plan::parse_plan;
use crate::scheduler::{ExternalInput, ScheduleInputs};
use crate::task::Task;

use super::{
    run_phase, timed_plan, Env, Execution, OrchestratorError, Outcome, PhaseItem, RunConfig,
    TaskResult, TokenRegistry,
};

const REACT_PROMPT: &str = "You handle emergency-response tasks one tool call at a time, \
reasoning about each observation before choosing the next call.";

/// Thought, act, observe, one tool per step, until a final answer or the
/// step budget runs out. Every invocation counts against the budget,
/// including the one that produces the final answer.
pub fn run_react(task: &Task, cfg: &RunConfig, env: Env<'_>) -> Result<TaskResult, OrchestratorError> {
    let mut result = TaskResult::new(task, cfg);
    result.rounds_used = 1;
    let registry = env.catalog.registry();
    let mut transcript = String::new();
    let mut tokens = TokenRegistry::default();
    // Where the agent's attention was last: the chain every step hangs off.
    let mut prev = (task.home.clone(), 0.0f64);

    for step in 0..cfg.budgets.react_steps {
        let req = PlannerRequest {
            kind: RequestKind::ReactStep,
            system: REACT_PROMPT.to_string(),
            instruction: task.instruction.clone(),
            context: transcript.clone(),
            few_shots: Vec::new(),
            allowed_tools: registry.iter().cloned().collect(),
            meta: RequestMeta {
                task_id: task.id.clone(),
                round: 1,
                role: None,
                attempt: step,
            },
        };
        let (text, dt) = timed_plan(env.planner, &req);
        result.planning_invocations += 1;
        result.planning_latency_s += dt;
        let text = text?;
        let parsed = ReactStep::parse(&text).and_then(|s| match &s.action {
            Some(action) => parse_plan(action, registry)
                .map_err(|e| e.to_string())
                .and_then(|dag| {
                    if dag.len() == 1 {
                        Ok((s, Some(dag)))
                    } else {
                        Err(format!("expected one call, got {}", dag.len()))
                    }
                }),
            None => Ok((s, None)),
        });
        let (step_text, dag) = match parsed {
            Ok(p) => p,
            Err(e) => {
                return Ok(result.finish(
                    Outcome::PlanningFailure,
                    Some(format!("step {}: malformed output: {e}", step + 1)),
                ))
            }
        };
        let Some(dag) = dag else {
            return Ok(result.finish(Outcome::Success, None));
        };

        let label = format!("{}/react/s{}", task.id, step + 1);
        let items = [PhaseItem {
            dag: &dag,
            label: label.clone(),
            attempt: step,
        }];
        let chain = ScheduleInputs::from([(
            1,
            vec![ExternalInput {
                device: prev.0.clone(),
                ready_s: 0.0,
                size_kb: 0.0,
            }],
        )]);
        let mut phase = run_phase(&items, prev.1, task, cfg, env, &tokens, &chain)?;
        let trace = phase.traces.remove(0);
        let node = &trace.nodes[0];
        prev = (node.device.clone(), phase.end_s);
        result.execution_latency_s = phase.end_s;
        tokens.record(&trace, env.catalog);

        transcript.push_str(&step_text.to_string());
        transcript.push('\n');
        match (node.status, &node.output) {
            (NodeStatus::Ok, Some(out)) => {
                transcript.push_str(&format!("Observation: ok -> {out}\n"))
            }
            _ => transcript.push_str("Observation: fault\n"),
        }
        result.executions.push(Execution {
            label,
            role: None,
            round: 1,
            attempt: step,
            plan: step_text.action.clone().unwrap_or_default(),
            schedule: phase.schedules.remove(0),
            trace,
        });
    }
    Ok(result.finish(
        Outcome::EarlyStop,
        Some(format!("step budget of {} spent", cfg.budgets.react_steps)),
    ))
}
