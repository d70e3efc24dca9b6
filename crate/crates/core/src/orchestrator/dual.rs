use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::agents::text::{parse_decomposition, parse_tags, strip_tags, DecompositionLine, TagDep};
use crate::agents::{
    ExperienceRecord, MemoryKind, MemoryStore, PlannerRequest, RecordOutcome, RequestKind,
    RequestMeta, ShortTermMemory,
};
use crate::plan::{parse_plan, PlanDag};
use crate::scheduler::ScheduleInputs;
use crate::task::{SubTask, Task};

use super::{
    digest, run_phase, timed_plan, Env, Execution, OrchestratorError, Outcome, PhaseItem,
    RunConfig, TaskResult, TokenRegistry,
};

/// Rejects a decomposition whose subtasks refer to calls assigned to a
/// different subtask of the same round.
pub fn check_round_independence(lines: &[DecompositionLine]) -> Result<(), String> {
    for (i, line) in lines.iter().enumerate() {
        let own: BTreeSet<u32> = parse_tags(&line.instruction).iter().map(|t| t.call).collect();
        for tag in parse_tags(&line.instruction) {
            for dep in tag.deps {
                if let TagDep::Local(k) = dep {
                    if !own.contains(&k) {
                        return Err(format!(
                            "subtask {} depends on #{k}, which it does not own",
                            i + 1
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

struct Active {
    subtask: SubTask,
    signature: String,
    context: Vec<String>,
    last_plan: String,
    parse_failed: bool,
}

/// Rounds of decompose, run the subtasks concurrently, aggregate, until the
/// global agent returns an empty decomposition or the round budget runs out.
pub fn run_outer_loop(
    task: &Task,
    cfg: &RunConfig,
    env: Env<'_>,
    mut memory: Option<&mut MemoryStore>,
) -> Result<TaskResult, OrchestratorError> {
    let mut result = TaskResult::new(task, cfg);
    if !cfg.memory.enabled {
        memory = None;
    }
    let roles: Vec<&str> = env.catalog.roles().iter().map(|r| r.name.as_str()).collect();
    let mut global_ctx = ShortTermMemory::new(cfg.memory.short_term);
    let mut tokens = TokenRegistry::default();
    let mut clock = 0.0f64;
    let mut decompositions = Vec::new();
    let mut solved: Vec<(String, String, String)> = Vec::new();

    let global_shots = memory
        .as_deref()
        .map(|m| m.retrieve(None, &task.signature(), cfg.memory.k))
        .unwrap_or_default();

    for round in 1.. {
        let mut lines = None;
        let mut last_err = String::new();
        for attempt in 0..2 {
            let req = PlannerRequest {
                kind: RequestKind::Decompose,
                system: GLOBAL_PROMPT.to_string(),
                instruction: task.instruction.clone(),
                context: global_ctx.render(),
                few_shots: global_shots.clone(),
                allowed_tools: Vec::new(),
                meta: RequestMeta {
                    task_id: task.id.clone(),
                    round,
                    role: None,
                    attempt,
                },
            };
            let (text, dt) = timed_plan(env.planner, &req);
            result.decomposition_invocations += 1;
            result.planning_latency_s += dt;
            let text = text?;
            match parse_decomposition(&text, &roles)
                .map_err(|e| e.to_string())
                .and_then(|l| check_round_independence(&l).map(|_| l))
            {
                Ok(l) => {
                    decompositions.push(text);
                    lines = Some(l);
                    break;
                }
                Err(e) => last_err = e,
            }
        }
        let Some(lines) = lines else {
            return Ok(result.finish(
                Outcome::PlanningFailure,
                Some(format!("round {round}: malformed decomposition: {last_err}")),
            ));
        };
        if lines.is_empty() {
            if let Some(mem) = memory {
                store_experiences(mem, task, &decompositions, &solved, &global_ctx)?;
            }
            return Ok(result.finish(Outcome::Success, None));
        }
        if result.rounds_used == cfg.budgets.max_rounds {
            let why = format!("{} rounds used", result.rounds_used);
            return Ok(result.finish(Outcome::BudgetExhausted, Some(why)));
        }
        result.rounds_used = round;

        let mut active: Vec<Active> = lines
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let signature = format!(
                    "{} {} {}",
                    task.scenario.label(),
                    l.role,
                    strip_tags(&l.instruction)
                );
                Active {
                    subtask: SubTask {
                        id: format!("{}/r{round}/s{}", task.id, i + 1),
                        task_id: task.id.clone(),
                        role: l.role,
                        instruction: l.instruction,
                        round,
                    },
                    signature,
                    context: Vec::new(),
                    last_plan: String::new(),
                    parse_failed: false,
                }
            })
            .collect();
        result.subtasks.extend(active.iter().map(|a| a.subtask.clone()));

        for attempt in 0..=cfg.budgets.max_replans {
            let mem = memory.as_deref();
            let answers: Vec<_> = active
                .par_iter()
                .map(|a| {
                    let profile = env.catalog.role(&a.subtask.role).expect("parsed roles are known");
                    let registry = env.catalog.role_registry(&a.subtask.role);
                    let req = PlannerRequest {
                        kind: RequestKind::SubtaskPlan,
                        system: profile.system_prompt.clone(),
                        instruction: a.subtask.instruction.clone(),
                        context: a.context.join("\n"),
                        few_shots: mem
                            .map(|m| m.retrieve(Some(&a.subtask.role), &a.signature, cfg.memory.k))
                            .unwrap_or_default(),
                        allowed_tools: registry.iter().cloned().collect(),
                        meta: RequestMeta {
                            task_id: task.id.clone(),
                            round,
                            role: Some(a.subtask.role.clone()),
                            attempt,
                        },
                    };
                    let (text, dt) = timed_plan(env.planner, &req);
                    (text, dt, registry)
                })
                .collect();
            result.planning_invocations += active.len() as u32;
            result.planning_latency_s += answers.iter().map(|a| a.1).fold(0.0, f64::max);

            let mut dags: Vec<(usize, PlanDag)> = Vec::new();
            for (i, (text, _, registry)) in answers.into_iter().enumerate() {
                let text = text?;
                let a = &mut active[i];
                a.last_plan = text.clone();
                match parse_plan(&text, &registry) {
                    Ok(dag) => {
                        a.parse_failed = false;
                        dags.push((i, dag));
                    }
                    Err(e) => {
                        a.parse_failed = true;
                        a.context.push(format!("attempt {attempt}: plan rejected: {e}"));
                    }
                }
            }

            let labels: Vec<String> = dags
                .iter()
                .map(|(i, _)| format!("{}/r{round}/{}/a{attempt}", task.id, active[*i].subtask.role))
                .collect();
            let items: Vec<PhaseItem<'_>> = dags
                .iter()
                .zip(&labels)
                .map(|((_, dag), label)| PhaseItem {
                    dag,
                    label: label.clone(),
                    attempt,
                })
                .collect();
            let phase = run_phase(&items, clock, task, cfg, env, &tokens, &ScheduleInputs::new())?;
            clock = phase.end_s;

            let mut finished = BTreeSet::new();
            for ((((i, _), schedule), trace), label) in dags
                .iter()
                .zip(phase.schedules)
                .zip(phase.traces)
                .zip(labels)
            {
                let a = &mut active[*i];
                tokens.record(&trace, env.catalog);
                for line in digest(&trace, round, &a.subtask.role) {
                    let line = line.to_string();
                    a.context.push(line.clone());
                    global_ctx.push(line);
                }
                if trace.all_ok() {
                    finished.insert(*i);
                    solved.push((a.subtask.role.clone(), a.signature.clone(), a.last_plan.clone()));
                }
                result.executions.push(Execution {
                    label,
                    role: Some(a.subtask.role.clone()),
                    round,
                    attempt,
                    plan: a.last_plan.clone(),
                    schedule,
                    trace,
                });
            }
            let mut i = 0;
            active.retain(|_| {
                let keep = !finished.contains(&i);
                i += 1;
                keep
            });
            if active.is_empty() {
                break;
            }
        }
        result.execution_latency_s = clock;

        if let Some(a) = active.first() {
            let (outcome, why) = if a.parse_failed {
                (Outcome::PlanningFailure, "plan never parsed")
            } else {
                (Outcome::ExecutionFailure, "execution kept faulting")
            };
            return Ok(result.finish(
                outcome,
                Some(format!("{} ({}): {why}", a.subtask.id, a.subtask.role)),
            ));
        }
    }
    unreachable!("the round loop only exits by returning")
}

const GLOBAL_PROMPT: &str = "You are the global agent of an emergency-response team. \
Each round, split what remains of the task into subtasks that the role agents can \
work on in parallel, using the execution results reported so far.";

fn store_experiences(
    mem: &mut MemoryStore,
    task: &Task,
    decompositions: &[String],
    solved: &[(String, String, String)],
    digest: &ShortTermMemory,
) -> Result<(), OrchestratorError> {
    for (role, signature, plan) in solved {
        mem.store(ExperienceRecord {
            signature: signature.clone(),
            plan: plan.clone(),
            outcome: RecordOutcome::Success,
            timestamp: 0,
            kind: MemoryKind::Procedural,
            role: Some(role.clone()),
        })?;
    }
    mem.store(ExperienceRecord {
        signature: task.signature(),
        plan: decompositions.join("\n\n"),
        outcome: RecordOutcome::Success,
        timestamp: 0,
        kind: MemoryKind::Procedural,
        role: None,
    })?;
    mem.store(ExperienceRecord {
        signature: task.signature(),
        plan: digest.render(),
        outcome: RecordOutcome::Success,
        timestamp: 0,
        kind: MemoryKind::Declarative,
        role: None,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{Mode, Scheme};
    use super::*;
    use crate::agents::{ErrorKind, ErrorMix, ErrorModel};
    use crate::netsim::{FailureModel, NodeStatus};

    fn cfg() -> RunConfig {
        RunConfig::new(Scheme::DualLoop, Mode::Collab, 5)
    }

    #[test]
    fn layered_rounds() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let r = run_outer_loop(&t, &cfg(), w.env(), None).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.rounds_used, 3);
        // One decomposition per round plus the terminating one.
        assert_eq!(r.decomposition_invocations, 4);
        assert_eq!(r.planning_invocations, 4);
        let roles: Vec<_> = r.subtasks.iter().map(|s| s.role.as_str()).collect();
        assert_eq!(
            roles,
            vec!["Video-Agent", "Keyframe-Agent", "Meteorology-Agent", "Report-Agent"]
        );
        // Round-2 subtasks share one phase that starts when round 1 ended
        // and never double-book a device.
        let r1_end = r.executions[0].trace.end_time_s;
        let r2: Vec<_> = r.executions.iter().filter(|e| e.round == 2).collect();
        assert_eq!(r2.len(), 2);
        let (a, b) = (&r2[0].trace.nodes[0], &r2[1].trace.nodes[0]);
        assert!(a.start_s.unwrap() >= r1_end && b.start_s.unwrap() >= r1_end);
        assert!(a.device != b.device || a.finish_s <= b.start_s || b.finish_s <= a.start_s);
        assert_eq!(ok_tools(&r), gt_tools(&t));
    }

    #[test]
    fn easy_task_takes_one_round() {
        let t = task("e1", vec![call(1, "fetch_weather", "cell_01", &[])]);
        let w = World::new(vec![t.clone()], 0.0);
        let r = run_outer_loop(&t, &cfg(), w.env(), None).unwrap();
        assert_eq!((r.outcome, r.rounds_used), (Outcome::Success, 1));
    }

    #[test]
    fn zero_rounds_exhausts_budget() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let mut c = cfg();
        c.budgets.max_rounds = 0;
        let r = run_outer_loop(&t, &c, w.env(), None).unwrap();
        assert_eq!(r.outcome, Outcome::BudgetExhausted);
        assert_eq!(r.planning_invocations, 0);
        assert_eq!(r.decomposition_invocations, 1);
    }

    #[test]
    fn always_wrong_planner_fails_planning() {
        let t = hard();
        let w = World::new(vec![t.clone()], 1.0);
        let r = run_outer_loop(&t, &cfg(), w.env(), None).unwrap();
        assert_eq!(r.outcome, Outcome::PlanningFailure);
        assert_eq!(r.decomposition_invocations, 2);
    }

    #[test]
    fn injected_fault_is_replanned() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let mut c = cfg();
        c.failures = FailureModel::none().inject("m1/r2/Keyframe-Agent/a0", 1, None);
        let r = run_outer_loop(&t, &c, w.env(), None).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        // Keyframe-Agent planned twice in round 2, everyone else once.
        assert_eq!(r.planning_invocations, 5);
        let kf: Vec<_> = r
            .executions
            .iter()
            .filter(|e| e.role.as_deref() == Some("Keyframe-Agent"))
            .collect();
        assert_eq!(kf.len(), 2);
        assert_eq!(kf[0].trace.nodes[0].status, NodeStatus::Fault);
        assert!(kf[1].trace.all_ok());
        // The retry starts after the first attempt's phase ended.
        assert!(kf[1].trace.nodes[0].start_s.unwrap() >= kf[0].trace.end_time_s);
    }

    #[test]
    fn persistent_fault_is_execution_failure() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let mut c = cfg();
        for a in 0..3 {
            c.failures = c.failures.inject(&format!("m1/r1/Video-Agent/a{a}"), 1, None);
        }
        let r = run_outer_loop(&t, &c, w.env(), None).unwrap();
        assert_eq!(r.outcome, Outcome::ExecutionFailure);
        assert_eq!(r.planning_invocations, 3);
    }

    struct BrokenSubtasks(crate::agents::ScriptedPlanner);

    impl crate::agents::Planner for BrokenSubtasks {
        fn plan(&self, req: &PlannerRequest) -> Result<String, crate::agents::PlannerError> {
            match req.kind {
                RequestKind::SubtaskPlan => Ok("1. detect_objects(video=\"cam_01\"".into()),
                _ => self.0.plan(req),
            }
        }
    }

    #[test]
    fn unparseable_plans_exhaust_replans() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let broken = BrokenSubtasks(World::new(vec![t.clone()], 0.0).planner);
        let env = Env { planner: &broken, ..w.env() };
        let r = run_outer_loop(&t, &cfg(), env, None).unwrap();
        assert_eq!(r.outcome, Outcome::PlanningFailure);
        assert_eq!(r.planning_invocations, 3);
        assert!(r.executions.is_empty());
    }

    #[test]
    fn global_agent_repairs_a_wrong_tool() {
        // At moderate eps some call goes wrong in round 1 or 2; the global
        // agent sees it unsatisfied and reassigns it.
        let t = medium();
        let mut model = ErrorModel::with_eps(0.35);
        model.mix = ErrorMix::only(ErrorKind::WrongTool);
        let w = World::with_model(vec![t.clone()], model);
        let mut repaired = 0;
        for seed in 0..20 {
            let mut c = cfg();
            c.seed = seed;
            let planner = crate::agents::ScriptedPlanner::new(
                std::sync::Arc::new(crate::task::Corpus { seed: 0, tasks: vec![t.clone()] }),
                std::sync::Arc::new(crate::task::Catalog::standard()),
                model,
                seed,
            );
            let env = Env { planner: &planner, ..w.env() };
            let r = run_outer_loop(&t, &c, env, None).unwrap();
            let wrong = r
                .executions
                .iter()
                .flat_map(|e| &e.trace.nodes)
                .any(|n| !gt_tools(&t).contains(&n.tool));
            if wrong && r.outcome == Outcome::Success {
                repaired += 1;
                let mut ok = ok_tools(&r);
                ok.retain(|n| gt_tools(&t).contains(n));
                ok.dedup();
                assert_eq!(ok, gt_tools(&t));
            }
        }
        assert!(repaired > 0);
    }

    #[test]
    fn memory_records_on_success() {
        let t = medium();
        let w = World::new(vec![t.clone()], 0.0);
        let mut mem = MemoryStore::new(true);
        let r = run_outer_loop(&t, &cfg(), w.env(), Some(&mut mem)).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        // Four procedural subtask records, a decomposition and a digest.
        assert_eq!(mem.len(), 6);
        assert_eq!(mem.retrieve(Some("Report-Agent"), "fire Report-Agent write report", 3).len(), 1);
        let mut off = cfg();
        off.memory.enabled = false;
        let mut mem2 = MemoryStore::new(true);
        run_outer_loop(&t, &off, w.env(), Some(&mut mem2)).unwrap();
        assert!(mem2.is_empty());
    }

    #[test]
    fn independence_check() {
        let ok = vec![DecompositionLine {
            role: "Map-Agent".into(),
            instruction: "a [#1] b [#2 <- #1]".into(),
        }];
        assert!(check_round_independence(&ok).is_ok());
        let bad = vec![
            DecompositionLine {
                role: "Map-Agent".into(),
                instruction: "a [#1]".into(),
            },
            DecompositionLine {
                role: "Report-Agent".into(),
                instruction: "b [#2 <- #1]".into(),
            },
        ];
        assert!(check_round_independence(&bad).is_err());
    }
}
