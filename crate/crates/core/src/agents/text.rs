//! Text formats exchanged between the orchestrator and planners:
//! decomposition lines, call tags inside subtask instructions, execution
//! digests and ReAct step output.

use std::fmt;

use thiserror::Error;

use crate::netsim::NodeStatus;
use crate::plan::{parse_call, Literal, RawCall};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct DecompositionError {
    pub line: usize,
    pub reason: String,
}

/// One line of a decomposition: `N. Role-Agent: instruction`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionLine {
    pub role: String,
    pub instruction: String,
}

pub fn format_decomposition(lines: &[DecompositionLine]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {}: {}", i + 1, l.role, l.instruction))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses a decomposition. Blank text means the task is complete and
/// yields no lines. Numbering must run 1..n and every role must be one of
/// `roles`.
pub fn parse_decomposition(
    text: &str,
    roles: &[&str],
) -> Result<Vec<DecompositionLine>, DecompositionError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, raw) in body.split('\n').enumerate() {
        let line = i + 1;
        let err = |reason: &str| DecompositionError {
            line,
            reason: reason.to_string(),
        };
        let (num, rest) = raw.split_once(". ").ok_or_else(|| err("expected `N. Role: ...`"))?;
        if num.parse::<usize>().ok() != Some(line) {
            return Err(err(&format!("expected line number {line}")));
        }
        let (role, instruction) = rest
            .split_once(": ")
            .ok_or_else(|| err("expected `: ` after the role"))?;
        if !roles.contains(&role) {
            return Err(err(&format!("unknown role `{role}`")));
        }
        if instruction.trim().is_empty() {
            return Err(err("empty instruction"));
        }
        out.push(DecompositionLine {
            role: role.to_string(),
            instruction: instruction.to_string(),
        });
    }
    Ok(out)
}

/// A reference from a tagged call to one of its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagDep {
    /// Produced by another call in the same subtask.
    Local(u32),
    /// Already produced; its output token is known.
    Done(u32, String),
}

/// `[#5 <- #2=TOKEN, #4]`: call 5 consumes the known output of call 2 and
/// the output of call 4 from the same subtask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallTag {
    pub call: u32,
    pub deps: Vec<TagDep>,
}

impl fmt::Display for CallTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[#{}", self.call)?;
        for (i, d) in self.deps.iter().enumerate() {
            f.write_str(if i == 0 { " <- " } else { ", " })?;
            match d {
                TagDep::Local(k) => write!(f, "#{k}")?,
                TagDep::Done(k, tok) => write!(f, "#{k}={tok}")?,
            }
        }
        f.write_str("]")
    }
}

fn parse_ref(s: &str) -> Option<u32> {
    s.strip_prefix('#')?.parse().ok().filter(|&k| k > 0)
}

/// Every well-formed tag in `text`, in order. Malformed brackets are
/// ignored.
pub fn parse_tags(text: &str) -> Vec<CallTag> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("[#") {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        if let Some(tag) = parse_tag_body(&after[..close]) {
            out.push(tag);
        }
        rest = &after[close + 1..];
    }
    out
}

fn parse_tag_body(body: &str) -> Option<CallTag> {
    let (head, deps) = match body.split_once(" <- ") {
        Some((h, d)) => (h, Some(d)),
        None => (body, None),
    };
    let call = parse_ref(head.trim())?;
    let mut tag = CallTag {
        call,
        deps: Vec::new(),
    };
    for part in deps.into_iter().flat_map(|d| d.split(", ")) {
        let dep = match part.split_once('=') {
            Some((k, tok)) if !tok.is_empty() => TagDep::Done(parse_ref(k)?, tok.to_string()),
            Some(_) => return None,
            None => TagDep::Local(parse_ref(part)?),
        };
        tag.deps.push(dep);
    }
    Some(tag)
}

/// Instruction text with tags removed and whitespace normalized.
pub fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("[#") {
        out.push_str(&rest[..open]);
        match rest[open..].find(']') {
            Some(close) => rest = &rest[open + close + 1..],
            None => {
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One executed call as reported back to a planner:
/// `r2 Map-Agent ok plan_route(area="zone_04") -> TOKEN`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigestLine {
    pub round: u32,
    pub role: String,
    pub status: NodeStatus,
    /// `tool(name=value, ...)` with the arguments as executed.
    pub call: String,
    pub output: Option<String>,
}

impl DigestLine {
    pub fn new(
        round: u32,
        role: &str,
        status: NodeStatus,
        tool: &str,
        args: &[(&str, &Literal)],
        output: Option<&str>,
    ) -> Self {
        let rendered: Vec<String> = args.iter().map(|(n, v)| format!("{n}={v}")).collect();
        let call = format!("{tool}({})", rendered.join(", "));
        Self {
            round,
            role: role.to_string(),
            status,
            call,
            output: output.map(str::to_string),
        }
    }

    /// `(tool, fixture name, fixture value)` when the call text parses.
    pub fn fixture(&self) -> Option<(String, String, String)> {
        let RawCall { tool, args } = parse_call(&self.call).ok()?;
        let first = args.into_iter().next()?;
        let value = match first.value {
            crate::plan::Arg::Lit(Literal::Str(s)) => s,
            crate::plan::Arg::Lit(other) => other.to_string(),
            crate::plan::Arg::Ref(_) => return None,
        };
        Some((tool, first.name, value))
    }

    /// String values of every argument after the fixture argument.
    pub fn inputs(&self) -> Vec<String> {
        let Ok(RawCall { args, .. }) = parse_call(&self.call) else {
            return Vec::new();
        };
        args.into_iter()
            .skip(1)
            .filter_map(|a| match a.value {
                crate::plan::Arg::Lit(Literal::Str(s)) => Some(s),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for DigestLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.status {
            NodeStatus::Ok => "ok",
            NodeStatus::Fault => "fault",
            NodeStatus::Skipped => "skipped",
        };
        write!(f, "r{} {} {} {}", self.round, self.role, status, self.call)?;
        if let Some(out) = &self.output {
            write!(f, " -> {out}")?;
        }
        Ok(())
    }
}

/// Parses every digest line in `text`; other lines are skipped.
pub fn parse_digest(text: &str) -> Vec<DigestLine> {
    text.lines().filter_map(parse_digest_line).collect()
}

fn parse_digest_line(line: &str) -> Option<DigestLine> {
    let mut parts = line.splitn(4, ' ');
    let round = parts.next()?.strip_prefix('r')?.parse().ok()?;
    let role = parts.next()?.to_string();
    let status = match parts.next()? {
        "ok" => NodeStatus::Ok,
        "fault" => NodeStatus::Fault,
        "skipped" => NodeStatus::Skipped,
        _ => return None,
    };
    let rest = parts.next()?;
    let (call, output) = match rest.split_once(" -> ") {
        Some((c, o)) => (c, Some(o.to_string())),
        None => (rest, None),
    };
    Some(DigestLine {
        round,
        role,
        status,
        call: call.to_string(),
        output,
    })
}

/// One ReAct step as emitted by a planner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactStep {
    pub thought: String,
    /// Plan text of the single action, e.g. `1. fetch_weather(...)`.
    pub action: Option<String>,
    pub final_answer: Option<String>,
}

impl ReactStep {
    pub fn parse(text: &str) -> Result<ReactStep, String> {
        let mut step = ReactStep {
            thought: String::new(),
            action: None,
            final_answer: None,
        };
        for line in text.lines() {
            if let Some(t) = line.strip_prefix("Thought:") {
                step.thought = t.trim().to_string();
            } else if let Some(a) = line.strip_prefix("Action:") {
                if step.action.is_some() {
                    return Err("more than one action".into());
                }
                step.action = Some(a.trim().to_string());
            } else if let Some(f) = line.strip_prefix("Final Answer:") {
                step.final_answer = Some(f.trim().to_string());
            }
        }
        match (&step.action, &step.final_answer) {
            (None, None) => Err("neither an action nor a final answer".into()),
            (Some(_), Some(_)) => Err("both an action and a final answer".into()),
            _ => Ok(step),
        }
    }
}

impl fmt::Display for ReactStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Thought: {}", self.thought)?;
        if let Some(a) = &self.action {
            write!(f, "\nAction: {a}")?;
        }
        if let Some(a) = &self.final_answer {
            write!(f, "\nFinal Answer: {a}")?;
        }
        Ok(())
    }
}
