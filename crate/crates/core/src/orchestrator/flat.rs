use crate::agents::{PlannerRequest, RequestKind, RequestMeta};
use crate::plan::parse_plan;
use crate::scheduler::ScheduleInputs;
use crate::task::Task;

use super::{
    digest, run_phase, timed_plan, Env, Execution, OrchestratorError, Outcome, PhaseItem,
    RunConfig, TaskResult, TokenRegistry,
};

const FLAT_PROMPT: &str = "You plan emergency-response tasks. Emit the complete tool-call \
graph for the task in one plan; independent calls run in parallel.";

/// One agent compiles the whole task into a single DAG, executes it, and
/// replans whatever did not run cleanly.
pub fn run_flat_compiler(
    task: &Task,
    cfg: &RunConfig,
    env: Env<'_>,
) -> Result<TaskResult, OrchestratorError> {
    let mut result = TaskResult::new(task, cfg);
    result.rounds_used = 1;
    let registry = env.catalog.registry();
    let mut context: Vec<String> = Vec::new();
    let mut tokens = TokenRegistry::default();
    let mut clock = 0.0;
    let mut parse_failed = false;

    for attempt in 0..=cfg.budgets.max_replans {
        let req = PlannerRequest {
            kind: RequestKind::FlatPlan,
            system: FLAT_PROMPT.to_string(),
            instruction: task.instruction.clone(),
            context: context.join("\n"),
            few_shots: Vec::new(),
            allowed_tools: registry.iter().cloned().collect(),
            meta: RequestMeta {
                task_id: task.id.clone(),
                round: 1,
                role: None,
                attempt,
            },
        };
        let (text, dt) = timed_plan(env.planner, &req);
        result.planning_invocations += 1;
        result.planning_latency_s += dt;
        let text = text?;
        let dag = match parse_plan(&text, registry) {
            Ok(dag) => dag,
            Err(e) => {
                parse_failed = true;
                context.push(format!("attempt {attempt}: plan rejected: {e}"));
                continue;
            }
        };
        parse_failed = false;
        let label = format!("{}/flat/a{attempt}", task.id);
        let items = [PhaseItem {
            dag: &dag,
            label: label.clone(),
            attempt,
        }];
        let mut phase = run_phase(&items, clock, task, cfg, env, &tokens, &ScheduleInputs::new())?;
        clock = phase.end_s;
        result.execution_latency_s = clock;
        let trace = phase.traces.remove(0);
        tokens.record(&trace, env.catalog);
        context.extend(digest(&trace, 1, "planner").iter().map(|l| l.to_string()));
        let ok = trace.all_ok();
        result.executions.push(Execution {
            label,
            role: None,
            round: 1,
            attempt,
            plan: text,
            schedule: phase.schedules.remove(0),
            trace,
        });
        if ok {
            return Ok(result.finish(Outcome::Success, None));
        }
    }
    Ok(if parse_failed {
        result.finish(Outcome::PlanningFailure, Some("plan never parsed".into()))
    } else {
        result.finish(Outcome::ExecutionFailure, Some("execution kept faulting".into()))
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{Mode, Scheme};
    use super::*;
    use crate::agents::{ErrorKind, ErrorMix, ErrorModel};
    use crate::netsim::{FailureModel, NodeStatus};

    fn cfg() -> RunConfig {
        RunConfig::new(Scheme::Flat, Mode::Collab, 5)
    }

    #[test]
    fn one_invocation_when_clean() {
        let t = hard();
        let w = World::new(vec![t.clone()], 0.0);
        let r = run_flat_compiler(&t, &cfg(), w.env()).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.planning_invocations, 1);
        assert_eq!(r.executions[0].trace.nodes.len(), 9);
    }

    #[test]
    fn replan_reruns_only_the_broken_part() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let mut c = cfg();
        c.failures = FailureModel::none().inject("m1/flat/a0", 2, None);
        let r = run_flat_compiler(&t, &c, w.env()).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.planning_invocations, 2);
        let first = &r.executions[0].trace;
        assert_eq!(first.count(NodeStatus::Fault), 1);
        assert_eq!(first.count(NodeStatus::Skipped), 1);
        let second = &r.executions[1].trace;
        let tools: Vec<_> = second.nodes.iter().map(|n| n.tool.as_str()).collect();
        assert_eq!(tools, vec!["extract_keyframes", "write_report"]);
        // The cached weather output is passed in as a literal token.
        let report = &second.nodes[1];
        assert!(report.args.iter().any(|a| a.value.as_str() == first.nodes[2].output.as_deref()));
    }

    #[test]
    fn malformed_every_time_is_planning_failure() {
        let t = medium();
        let mut model = ErrorModel::with_eps(1.0);
        model.mix = ErrorMix::only(ErrorKind::Malformed);
        let w = World::with_model(vec![t.clone()], model);
        let r = run_flat_compiler(&t, &cfg(), w.env()).unwrap();
        assert_eq!(r.outcome, Outcome::PlanningFailure);
        assert_eq!(r.planning_invocations, 3);
    }
}
