//! Deterministic planner stand-in.
//!
//! Every answer is derived from the task's ground truth and then passed
//! through the error model, one draw per required call. A draw is keyed by
//! `(seed, task, call, round, attempt)`. Flat plans and ReAct steps use
//! round 1 with the attempt set to how often the call has been presented
//! before, so all three schemes see the same draw the first time a call is
//! planned.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::plan::{format_literal, Arg, NamedArg};
use crate::rng::DrawKey;
use crate::task::{call_args, Catalog, Corpus, DepArg, GtCall, Task};

use super::text::{
    format_decomposition, parse_digest, parse_tags, CallTag, DecompositionLine, TagDep,
};
use super::{ErrorKind, ErrorModel, Planner, PlannerError, PlannerRequest, RequestKind};

pub struct ScriptedPlanner {
    corpus: Arc<Corpus>,
    catalog: Arc<Catalog>,
    model: ErrorModel,
    seed: u64,
}

impl ScriptedPlanner {
    pub fn new(corpus: Arc<Corpus>, catalog: Arc<Catalog>, model: ErrorModel, seed: u64) -> Self {
        Self {
            corpus,
            catalog,
            model,
            seed,
        }
    }

    pub fn model(&self) -> &ErrorModel {
        &self.model
    }

    fn task(&self, id: &str) -> Result<&Task, PlannerError> {
        self.corpus
            .get(id)
            .ok_or_else(|| PlannerError::UnknownTask(id.to_string()))
    }

    fn eps_for(&self, req: &PlannerRequest) -> f64 {
        let relevant = req
            .few_shots
            .iter()
            .filter(|f| f.similarity >= self.model.relevance)
            .count();
        self.model.effective_eps(relevant)
    }

    /// Error draw for one call presentation.
    pub fn call_error(
        &self,
        task: &str,
        call: u32,
        round: u32,
        attempt: u32,
        eps: f64,
    ) -> Option<ErrorKind> {
        let key = DrawKey::new("plan-error")
            .u64(self.seed)
            .str(task)
            .u64(call as u64)
            .u64(round as u64)
            .u64(attempt as u64);
        self.model.draw(key, eps)
    }

    fn sibling(&self, task: &str, call: &GtCall, round: u32, attempt: u32) -> Option<&str> {
        let sibs = self.catalog.siblings(&call.tool);
        if sibs.is_empty() {
            return None;
        }
        let u = DrawKey::new("wrong-tool")
            .u64(self.seed)
            .str(task)
            .u64(call.id as u64)
            .u64(round as u64)
            .u64(attempt as u64)
            .uniform();
        Some(sibs[((u * sibs.len() as f64) as usize).min(sibs.len() - 1)])
    }

    /// Renders one call line after applying `error`.
    fn render_call(
        &self,
        task: &Task,
        line_no: u32,
        call: &GtCall,
        mut args: Vec<NamedArg>,
        error: Option<ErrorKind>,
        round: u32,
        attempt: u32,
    ) -> String {
        let mut tool = call.tool.as_str();
        match error {
            Some(ErrorKind::WrongTool) => {
                if let Some(s) = self.sibling(&task.id, call, round, attempt) {
                    tool = s;
                    args[0].name = self.catalog.tool(s).expect("catalog sibling").param.clone();
                }
            }
            Some(ErrorKind::DropDependency) => {
                // Forget the first input that carries data.
                if let Some(a) = args.iter_mut().skip(1).find(|a| match &a.value {
                    Arg::Ref(_) => true,
                    Arg::Lit(l) => l.as_str() != Some(crate::task::NONE_ARG),
                }) {
                    *a = NamedArg::lit(&a.name.clone(), crate::task::NONE_ARG);
                }
            }
            _ => {}
        }
        let rendered: Vec<String> = args
            .iter()
            .map(|a| match &a.value {
                Arg::Ref(k) => format!("{}=${k}", a.name),
                Arg::Lit(l) => format!("{}={}", a.name, format_literal(l)),
            })
            .collect();
        let mut line = format!("{line_no}. {tool}({})", rendered.join(", "));
        if error == Some(ErrorKind::Malformed) {
            line.pop();
        }
        line
    }

    /// Output tokens of calls already executed correctly, per the context
    /// digest. A call counts when an ok line matches its tool and fixture
    /// value.
    fn done_from_context(task: &Task, context: &str) -> BTreeMap<u32, String> {
        let mut done = BTreeMap::new();
        for line in parse_digest(context) {
            if line.status != crate::netsim::NodeStatus::Ok {
                continue;
            }
            let (Some((tool, _, value)), Some(out)) = (line.fixture(), line.output.clone()) else {
                continue;
            };
            if let Some(c) = task
                .ground_truth
                .calls
                .iter()
                .find(|c| c.tool == tool && c.value == value)
            {
                done.insert(c.id, out);
            }
        }
        done
    }

    /// Plan for `targets` (ascending call ids). `known` holds tokens for
    /// inputs produced outside this plan.
    fn plan_calls(
        &self,
        task: &Task,
        targets: &[u32],
        known: &BTreeMap<u32, String>,
        context: &str,
        round: u32,
        attempt: u32,
        eps: f64,
    ) -> String {
        let done = Self::done_from_context(task, context);
        let mut line_of: BTreeMap<u32, u32> = BTreeMap::new();
        let mut lines = Vec::new();
        for &id in targets {
            if done.contains_key(&id) {
                continue;
            }
            let call = task.ground_truth.call(id).expect("target exists");
            let error = self.call_error(&task.id, id, round, attempt, eps);
            if error == Some(ErrorKind::Omit) {
                continue;
            }
            let args = call_args(call, |d| {
                if let Some(&k) = line_of.get(&d) {
                    Some(DepArg::Ref(k))
                } else {
                    done.get(&d)
                        .or_else(|| known.get(&d))
                        .map(|t| DepArg::Token(t.clone()))
                }
            });
            let n = lines.len() as u32 + 1;
            lines.push(self.render_call(task, n, call, args, error, round, attempt));
            line_of.insert(id, n);
        }
        lines.join("\n")
    }

    fn subtask_plan(&self, task: &Task, req: &PlannerRequest) -> String {
        let tags = parse_tags(&req.instruction);
        let mut known = BTreeMap::new();
        let mut targets = BTreeSet::new();
        for CallTag { call, deps } in tags {
            if task.ground_truth.call(call).is_none() {
                continue;
            }
            targets.insert(call);
            for d in deps {
                if let TagDep::Done(k, tok) = d {
                    known.insert(k, tok);
                }
            }
        }
        let targets: Vec<u32> = targets.into_iter().collect();
        let eps = self.eps_for(req);
        self.plan_calls(task, &targets, &known, &req.context, req.meta.round, req.meta.attempt, eps)
    }

    fn flat_plan(&self, task: &Task, req: &PlannerRequest) -> String {
        let targets: Vec<u32> = task.ground_truth.calls.iter().map(|c| c.id).collect();
        let eps = self.eps_for(req);
        self.plan_calls(task, &targets, &BTreeMap::new(), &req.context, 1, req.meta.attempt, eps)
    }

    /// The global agent: checks which calls are satisfied according to the
    /// aggregated digest and hands each role the pending calls it can
    /// complete this round.
    fn decompose(&self, task: &Task, req: &PlannerRequest) -> String {
        let digest = parse_digest(&req.context);
        let mut satisfied: BTreeMap<u32, String> = BTreeMap::new();
        for call in &task.ground_truth.calls {
            let dep_tokens: Option<Vec<&String>> =
                call.deps.iter().map(|d| satisfied.get(d)).collect();
            let Some(dep_tokens) = dep_tokens else { continue };
            let hit = digest.iter().find(|l| {
                l.status == crate::netsim::NodeStatus::Ok
                    && l.output.is_some()
                    && l.fixture().is_some_and(|(t, _, v)| t == call.tool && v == call.value)
                    && {
                        let inputs = l.inputs();
                        dep_tokens.iter().all(|t| inputs.contains(t))
                    }
            });
            if let Some(l) = hit {
                satisfied.insert(call.id, l.output.clone().expect("checked"));
            }
        }

        let mut groups: BTreeMap<&str, Vec<&GtCall>> = BTreeMap::new();
        for call in &task.ground_truth.calls {
            if satisfied.contains_key(&call.id) {
                continue;
            }
            let group = groups.entry(call.role.as_str()).or_default();
            if call
                .deps
                .iter()
                .all(|d| satisfied.contains_key(d) || group.iter().any(|g| g.id == *d))
            {
                group.push(call);
            }
        }

        let eps = self.eps_for(req);
        let mut lines = Vec::new();
        for role in self.catalog.roles() {
            let Some(calls) = groups.get(role.name.as_str()).filter(|g| !g.is_empty()) else {
                continue;
            };
            let parts: Vec<String> = calls
                .iter()
                .map(|c| {
                    let tag = CallTag {
                        call: c.id,
                        deps: c
                            .deps
                            .iter()
                            .map(|d| match satisfied.get(d) {
                                Some(t) => TagDep::Done(*d, t.clone()),
                                None => TagDep::Local(*d),
                            })
                            .collect(),
                    };
                    let info = self.catalog.tool(&c.tool).expect("catalog tool");
                    format!("{} {tag}", info.describe(&c.value))
                })
                .collect();
            lines.push(DecompositionLine {
                role: role.name.clone(),
                instruction: parts.join("; "),
            });
        }

        let text = format_decomposition(&lines);
        text.split('\n')
            .enumerate()
            .map(|(i, line)| {
                let u = DrawKey::new("decompose-error")
                    .u64(self.seed)
                    .str(&task.id)
                    .u64(req.meta.round as u64)
                    .u64(req.meta.attempt as u64)
                    .u64(i as u64)
                    .uniform();
                if u < eps {
                    line.replacen(": ", " ", 1)
                } else {
                    line.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// One ReAct step. Beliefs are rebuilt from the transcript: a call is
    /// believed done once it was skipped (an omission) or acted on with an
    /// ok observation.
    fn react_step(&self, task: &Task, req: &PlannerRequest) -> String {
        let mut believed: BTreeMap<u32, Option<String>> = BTreeMap::new();
        let mut exposures: BTreeMap<u32, u32> = BTreeMap::new();
        let mut acting: Option<u32> = None;
        for line in req.context.lines() {
            if let Some(thought) = line.strip_prefix("Thought:") {
                for (id, skip) in react_marks(thought) {
                    *exposures.entry(id).or_insert(0) += 1;
                    if skip {
                        believed.insert(id, None);
                    } else {
                        acting = Some(id);
                    }
                }
            } else if let Some(obs) = line.strip_prefix("Observation:") {
                if let (Some(id), Some(tok)) = (acting.take(), obs.trim().strip_prefix("ok -> ")) {
                    believed.insert(id, Some(tok.to_string()));
                }
            }
        }

        let eps = self.eps_for(req);
        let mut marks = Vec::new();
        for call in &task.ground_truth.calls {
            if believed.contains_key(&call.id) {
                continue;
            }
            let seen = exposures.get(&call.id).copied().unwrap_or(0);
            let error = self.call_error(&task.id, call.id, 1, seen, eps);
            if error == Some(ErrorKind::Omit) {
                marks.push(format!("[#{} skip]", call.id));
                believed.insert(call.id, None);
                continue;
            }
            let args = call_args(call, |d| {
                believed
                    .get(&d)
                    .cloned()
                    .flatten()
                    .map(DepArg::Token)
            });
            marks.push(format!("[#{}]", call.id));
            let action = self.render_call(task, 1, call, args, error, 1, seen);
            return format!(
                "Thought: {} next I call {}\nAction: {action}",
                marks.join(" "),
                call.tool
            );
        }
        let lead = if marks.is_empty() {
            String::new()
        } else {
            format!("{} ", marks.join(" "))
        };
        format!("Thought: {lead}all required calls are done\nFinal Answer: done")
    }
}

/// `[#N]` and `[#N skip]` marks in a ReAct thought.
fn react_marks(thought: &str) -> Vec<(u32, bool)> {
    let mut out = Vec::new();
    let mut rest = thought;
    while let Some(open) = rest.find("[#") {
        let after = &rest[open + 2..];
        let Some(close) = after.find(']') else { break };
        let body = &after[..close];
        let (num, skip) = match body.strip_suffix(" skip") {
            Some(n) => (n, true),
            None => (body, false),
        };
        if let Ok(id) = num.parse() {
            out.push((id, skip));
        }
        rest = &after[close + 1..];
    }
    out
}

impl Planner for ScriptedPlanner {
    fn plan(&self, req: &PlannerRequest) -> Result<String, PlannerError> {
        let task = self.task(&req.meta.task_id)?;
        Ok(match req.kind {
            RequestKind::Decompose => self.decompose(task, req),
            RequestKind::SubtaskPlan => self.subtask_plan(task, req),
            RequestKind::FlatPlan => self.flat_plan(task, req),
            RequestKind::ReactStep => self.react_step(task, req),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::text::{parse_decomposition, ReactStep};
    use crate::agents::{ErrorMix, RequestMeta};
    use crate::plan::parse_plan;
    use crate::task::{Difficulty, GroundTruthPlan, Scenario};

    fn gt_call(id: u32, tool: &str, value: &str, deps: &[u32]) -> GtCall {
        let cat = Catalog::standard();
        let info = cat.tool(tool).unwrap();
        GtCall {
            id,
            tool: tool.into(),
            role: info.role.clone(),
            param: info.param.clone(),
            value: value.into(),
            deps: deps.to_vec(),
        }
    }

    fn corpus() -> Arc<Corpus> {
        let calls = vec![
            gt_call(1, "detect_objects", "cam_01", &[]),
            gt_call(2, "extract_keyframes", "clip_01", &[1]),
            gt_call(3, "fetch_weather", "cell_01", &[1]),
            gt_call(4, "write_report", "tpl_01", &[2, 3]),
        ];
        Arc::new(Corpus {
            seed: 0,
            tasks: vec![Task {
                id: "t01".into(),
                instruction: "fire".into(),
                scenario: Scenario::Fire,
                difficulty: Difficulty::Medium,
                home: "terminal-0".into(),
                fixture: BTreeMap::new(),
                ground_truth: GroundTruthPlan { calls },
            }],
        })
    }

    fn planner(eps: f64, mix: ErrorMix) -> ScriptedPlanner {
        let model = ErrorModel {
            mix,
            ..ErrorModel::with_eps(eps)
        };
        ScriptedPlanner::new(corpus(), Arc::new(Catalog::standard()), model, 9)
    }

    fn req(kind: RequestKind, instruction: &str, context: &str) -> PlannerRequest {
        PlannerRequest {
            kind,
            system: String::new(),
            instruction: instruction.into(),
            context: context.into(),
            few_shots: Vec::new(),
            allowed_tools: Vec::new(),
            meta: RequestMeta {
                task_id: "t01".into(),
                round: 1,
                role: None,
                attempt: 0,
            },
        }
    }

    #[test]
    fn flat_plan_is_ground_truth_at_zero_eps() {
        let p = planner(0.0, ErrorMix::default());
        let text = p.plan(&req(RequestKind::FlatPlan, "", "")).unwrap();
        let cat = Catalog::standard();
        let dag = parse_plan(&text, cat.registry()).unwrap();
        assert_eq!(dag, corpus().tasks[0].ground_truth.to_dag());
    }

    #[test]
    fn omit_everything_gives_empty_plan() {
        let p = planner(1.0, ErrorMix::only(ErrorKind::Omit));
        assert_eq!(p.plan(&req(RequestKind::FlatPlan, "", "")).unwrap(), "");
    }

    #[test]
    fn decomposition_by_layer() {
        let p = planner(0.0, ErrorMix::default());
        let cat = Catalog::standard();
        let roles: Vec<&str> = cat.roles().iter().map(|r| r.name.as_str()).collect();
        let d1 = p.plan(&req(RequestKind::Decompose, "", "")).unwrap();
        let lines = parse_decomposition(&d1, &roles).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].role, "Video-Agent");
        assert!(lines[0].instruction.ends_with("[#1]"));

        let ctx = "r1 Video-Agent ok detect_objects(video=\"cam_01\", src=\"none\", ctx=\"none\") -> T1";
        let d2 = p.plan(&req(RequestKind::Decompose, "", ctx)).unwrap();
        let lines = parse_decomposition(&d2, &roles).unwrap();
        let got: Vec<&str> = lines.iter().map(|l| l.role.as_str()).collect();
        assert_eq!(got, vec!["Keyframe-Agent", "Meteorology-Agent"]);
        assert!(lines[0].instruction.contains("[#2 <- #1=T1]"));

        let sub = p
            .plan(&req(RequestKind::SubtaskPlan, &lines[0].instruction, ""))
            .unwrap();
        assert_eq!(sub, "1. extract_keyframes(clip=\"clip_01\", src=\"T1\", ctx=\"none\")");

        // An execution that did not consume the upstream token does not count.
        let ctx2 = format!("{ctx}\nr2 Keyframe-Agent ok extract_keyframes(clip=\"clip_01\", src=\"none\", ctx=\"none\") -> T2");
        let d3 = p.plan(&req(RequestKind::Decompose, "", &ctx2)).unwrap();
        assert!(d3.contains("[#2 <- #1=T1]"));

        let full = format!(
            "{ctx}\nr2 Keyframe-Agent ok extract_keyframes(clip=\"clip_01\", src=\"T1\", ctx=\"none\") -> T2\n\
             r2 Meteorology-Agent ok fetch_weather(location=\"cell_01\", src=\"T1\", ctx=\"none\") -> T3\n\
             r3 Report-Agent ok write_report(template=\"tpl_01\", src=\"T2\", ctx=\"T3\") -> T4"
        );
        assert_eq!(p.plan(&req(RequestKind::Decompose, "", &full)).unwrap(), "");
    }

    #[test]
    fn replans_skip_done_calls() {
        let p = planner(0.0, ErrorMix::default());
        let ctx = "r1 x ok detect_objects(video=\"cam_01\") -> T1\nr1 x fault extract_keyframes(clip=\"clip_01\")";
        let text = p.plan(&req(RequestKind::FlatPlan, "", ctx)).unwrap();
        assert!(text.starts_with("1. extract_keyframes(clip=\"clip_01\", src=\"T1\""));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn react_walks_the_calls() {
        let p = planner(0.0, ErrorMix::default());
        let mut transcript = String::new();
        for i in 1..=4 {
            let out = p.plan(&req(RequestKind::ReactStep, "", &transcript)).unwrap();
            let step = ReactStep::parse(&out).unwrap();
            let action = step.action.expect("an action");
            assert!(action.starts_with("1. "));
            transcript.push_str(&format!("{out}\nObservation: ok -> T{i}\n"));
        }
        let out = p.plan(&req(RequestKind::ReactStep, "", &transcript)).unwrap();
        assert!(ReactStep::parse(&out).unwrap().final_answer.is_some());
        assert!(transcript.contains("src=\"T2\", ctx=\"T3\""));
    }

    #[test]
    fn react_retries_after_fault() {
        let p = planner(0.0, ErrorMix::default());
        let first = p.plan(&req(RequestKind::ReactStep, "", "")).unwrap();
        let transcript = format!("{first}\nObservation: fault\n");
        let again = p.plan(&req(RequestKind::ReactStep, "", &transcript)).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn malformed_drops_paren() {
        let p = planner(1.0, ErrorMix::only(ErrorKind::Malformed));
        let text = p.plan(&req(RequestKind::FlatPlan, "", "")).unwrap();
        assert!(text.lines().all(|l| !l.ends_with(')')));
        assert!(parse_plan(&text, Catalog::standard().registry()).is_err());
    }

    #[test]
    fn unknown_task() {
        let p = planner(0.0, ErrorMix::default());
        let mut r = req(RequestKind::FlatPlan, "", "");
        r.meta.task_id = "nope".into();
        assert_eq!(p.plan(&r), Err(PlannerError::UnknownTask("nope".into())));
    }
}
