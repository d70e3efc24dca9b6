use std::collections::BTreeSet;

use thiserror::Error;

use super::{is_ident, Arg, Literal, NamedArg, PlanDag, PlanNode, ToolRegistry};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: syntax error: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown tool `{name}`")]
    UnknownTool { line: usize, name: String },
    #[error("line {line}: reference ${target} does not point to an earlier line")]
    ForwardRef { line: usize, target: u32 },
    #[error("line {line}: arguments do not match `{tool}`: {detail}")]
    ArityMismatch {
        line: usize,
        tool: String,
        detail: String,
    },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: u32 },
    #[error("tool registry is empty")]
    EmptyRegistry,
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnknownTool { line, .. }
            | ParseError::ForwardRef { line, .. }
            | ParseError::ArityMismatch { line, .. }
            | ParseError::DuplicateId { line, .. } => Some(*line),
            ParseError::EmptyRegistry => None,
        }
    }
}

/// A call expression `tool(name=value, ...)` before registry validation.
/// Arguments are in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCall {
    pub tool: String,
    pub args: Vec<NamedArg>,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8, what: &str) -> Result<(), String> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(format!("expected {what} at column {}", self.pos + 1))
        }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if !f(b) {
                break;
            }
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn ident(&mut self) -> Result<&'a str, String> {
        let start = self.pos;
        let word = self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_');
        if is_ident(word) {
            Ok(word)
        } else {
            self.pos = start;
            Err(format!("expected identifier at column {}", start + 1))
        }
    }

    fn uint(&mut self) -> Result<u32, String> {
        let start = self.pos;
        let digits = self.take_while(|b| b.is_ascii_digit());
        if digits.is_empty() {
            return Err(format!("expected integer at column {}", start + 1));
        }
        digits
            .parse()
            .map_err(|_| format!("integer `{digits}` out of range"))
    }

    fn string(&mut self) -> Result<String, String> {
        self.expect(b'"', "`\"`")?;
        let mut out = String::new();
        loop {
            let rest = &self.src[self.pos..];
            let mut chars = rest.chars();
            let c = chars.next().ok_or("unterminated string")?;
            self.pos += c.len_utf8();
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let e = chars.next().ok_or("unterminated escape")?;
                    self.pos += e.len_utf8();
                    out.push(match e {
                        '"' => '"',
                        '\\' => '\\',
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => return Err(format!("unknown escape `\\{other}`")),
                    });
                }
                '\n' => return Err("newline inside string".into()),
                c => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<Literal, String> {
        let start = self.pos;
        self.eat(b'-');
        if self.take_while(|b| b.is_ascii_digit()).is_empty() {
            return Err(format!("expected value at column {}", start + 1));
        }
        let mut is_float = false;
        if self.eat(b'.') {
            is_float = true;
            if self.take_while(|b| b.is_ascii_digit()).is_empty() {
                return Err("expected digits after decimal point".into());
            }
            if self.eat(b'e') || self.eat(b'E') {
                if !self.eat(b'+') {
                    self.eat(b'-');
                }
                if self.take_while(|b| b.is_ascii_digit()).is_empty() {
                    return Err("expected exponent digits".into());
                }
            }
        }
        let text = &self.src[start..self.pos];
        if is_float {
            let v: f64 = text.parse().map_err(|_| format!("bad float `{text}`"))?;
            if !v.is_finite() {
                return Err(format!("float `{text}` is not finite"));
            }
            Ok(Literal::Float(v))
        } else {
            text.parse()
                .map(Literal::Int)
                .map_err(|_| format!("integer `{text}` out of range"))
        }
    }

    fn value(&mut self) -> Result<Arg, String> {
        match self.peek() {
            Some(b'"') => self.string().map(|s| Arg::Lit(Literal::Str(s))),
            Some(b'$') => {
                self.pos += 1;
                self.uint().map(Arg::Ref)
            }
            Some(b't') | Some(b'f') => {
                let start = self.pos;
                match self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_') {
                    "true" => Ok(Arg::Lit(Literal::Bool(true))),
                    "false" => Ok(Arg::Lit(Literal::Bool(false))),
                    _ => Err(format!("expected value at column {}", start + 1)),
                }
            }
            _ => self.number().map(Arg::Lit),
        }
    }

    fn call(&mut self) -> Result<RawCall, String> {
        let tool = self.ident()?.to_string();
        self.expect(b'(', "`(`")?;
        let mut args = Vec::new();
        if !self.eat(b')') {
            loop {
                let name = self.ident()?.to_string();
                self.expect(b'=', "`=`")?;
                let value = self.value()?;
                args.push(NamedArg { name, value });
                if self.eat(b')') {
                    break;
                }
                self.expect(b',', "`,` or `)`")?;
                self.eat(b' ');
            }
        }
        Ok(RawCall { tool, args })
    }
}

/// Parses a bare call expression such as `fetch_weather(location="cell_17")`.
pub fn parse_call(text: &str) -> Result<RawCall, String> {
    let mut cur = Cursor::new(text);
    let call = cur.call()?;
    if !cur.at_end() {
        return Err(format!("trailing input at column {}", cur.pos + 1));
    }
    Ok(call)
}

fn parse_line(text: &str) -> Result<(u32, RawCall), String> {
    let mut cur = Cursor::new(text);
    let id = cur.uint()?;
    cur.expect(b'.', "`.`")?;
    cur.expect(b' ', "space")?;
    let call = cur.call()?;
    if !cur.at_end() {
        return Err(format!("trailing input at column {}", cur.pos + 1));
    }
    Ok((id, call))
}

/// Parses plan text into a validated [`PlanDag`].
///
/// Lines are separated by `\n`; a single trailing newline is accepted and
/// empty input yields an empty plan. Arguments are bound to the tool's
/// parameters by name and stored in parameter order.
pub fn parse_plan(text: &str, registry: &ToolRegistry) -> Result<PlanDag, ParseError> {
    if registry.is_empty() {
        return Err(ParseError::EmptyRegistry);
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(PlanDag::empty());
    }

    let mut nodes: Vec<PlanNode> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw) in body.split('\n').enumerate() {
        let line = idx + 1;
        let (id, call) = parse_line(raw).map_err(|reason| ParseError::Syntax { line, reason })?;
        if !seen.insert(id) {
            return Err(ParseError::DuplicateId { line, id });
        }
        let expected = nodes.len() as u32 + 1;
        if id != expected {
            return Err(ParseError::Syntax {
                line,
                reason: format!("expected line id {expected}, found {id}"),
            });
        }
        let spec = registry
            .get(&call.tool)
            .ok_or_else(|| ParseError::UnknownTool {
                line,
                name: call.tool.clone(),
            })?;

        let arity = |detail: String| ParseError::ArityMismatch {
            line,
            tool: call.tool.clone(),
            detail,
        };
        let mut bound: Vec<Option<Arg>> = vec![None; spec.param_names.len()];
        for arg in &call.args {
            let slot = spec
                .param_names
                .iter()
                .position(|p| *p == arg.name)
                .ok_or_else(|| arity(format!("unknown parameter `{}`", arg.name)))?;
            if bound[slot].is_some() {
                return Err(arity(format!("parameter `{}` given twice", arg.name)));
            }
            bound[slot] = Some(arg.value.clone());
        }
        let mut args = Vec::with_capacity(bound.len());
        for (name, value) in spec.param_names.iter().zip(bound) {
            let value = value.ok_or_else(|| arity(format!("missing parameter `{name}`")))?;
            if let Arg::Ref(k) = value {
                if k == 0 {
                    return Err(ParseError::Syntax {
                        line,
                        reason: "`$0` does not name a line".into(),
                    });
                }
                if k >= id {
                    return Err(ParseError::ForwardRef { line, target: k });
                }
            }
            args.push(NamedArg {
                name: name.clone(),
                value,
            });
        }
        nodes.push(PlanNode {
            id,
            tool: call.tool,
            args,
        });
    }
    // Ids and refs were checked above; this cannot fail.
    Ok(PlanDag::new(nodes).expect("validated plan"))
}
