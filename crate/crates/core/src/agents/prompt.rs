use serde::{Deserialize, Serialize};

use super::{PlannerRequest, RequestKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub messages: Vec<Message>,
    /// Total characters across message contents.
    pub rendered_len: usize,
}

const PLAN_GRAMMAR: &str = "\
Answer with a numbered plan, one tool call per line:
  N. tool_name(param=value, param=value)
Values are double-quoted strings, integers, floats, true/false, or $K to use
the output of line K (K must be an earlier line). Pass \"none\" for an unused
input. Output nothing but the plan.";

const DECOMPOSE_FORMAT: &str = "\
Split the task into independent subtasks for this round, one per line:
  N. Role-Agent: instruction
Subtasks in one round must not depend on each other. Keep every [#...] tag
with the call it belongs to. Answer with an empty message once every
required call has been executed successfully.";

const REACT_FORMAT: &str = "\
Work one tool call at a time. Reply with
  Thought: <reasoning>
  Action: 1. tool_name(param=value, ...)
or, when the task is complete,
  Thought: <reasoning>
  Final Answer: <summary>";

/// Renders a request as chat messages: system, one message per few-shot
/// exemplar in retrieval order, then the user turn.
pub fn build_prompt(req: &PlannerRequest) -> Prompt {
    let mut system = req.system.trim().to_string();
    let format = match req.kind {
        RequestKind::Decompose => DECOMPOSE_FORMAT,
        RequestKind::ReactStep => REACT_FORMAT,
        RequestKind::SubtaskPlan | RequestKind::FlatPlan => PLAN_GRAMMAR,
    };
    system.push_str("\n\n");
    system.push_str(format);
    if !req.allowed_tools.is_empty() {
        system.push_str("\n\nTools:");
        for t in &req.allowed_tools {
            system.push_str("\n- ");
            system.push_str(&t.signature());
        }
    }

    let mut messages = vec![Message {
        role: "system".into(),
        content: system,
    }];
    for shot in &req.few_shots {
        messages.push(Message {
            role: "user".into(),
            content: format!(
                "Example of a solved task:\n{}\nPlan:\n{}",
                shot.record.signature, shot.record.plan
            ),
        });
    }
    let mut user = format!("Instruction: {}", req.instruction);
    if !req.context.trim().is_empty() {
        user.push_str("\n\nContext:\n");
        user.push_str(req.context.trim_end());
    }
    messages.push(Message {
        role: "user".into(),
        content: user,
    });
    let rendered_len = messages.iter().map(|m| m.content.chars().count()).sum();
    Prompt {
        messages,
        rendered_len,
    }
}
