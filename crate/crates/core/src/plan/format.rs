use std::fmt::Write;

use super::{Arg, Literal, PlanDag};

/// Renders a literal in plan-DSL syntax.
pub fn format_literal(lit: &Literal) -> String {
    match lit {
        Literal::Bool(b) => b.to_string(),
        Literal::Int(i) => i.to_string(),
        Literal::Float(f) => {
            let repr = format!("{f:?}");
            match repr.find('e') {
                Some(e) if !repr[..e].contains('.') => format!("{}.0{}", &repr[..e], &repr[e..]),
                _ => repr,
            }
        }
        Literal::Str(s) => {
            let mut out = String::with_capacity(s.len() + 2);
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    '\r' => out.push_str("\\r"),
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        }
    }
}

/// Canonical text for a plan: one line per node, `, ` between arguments,
/// no trailing newline.
pub fn format_plan(dag: &PlanDag) -> String {
    let mut out = String::new();
    for (i, node) in dag.nodes().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}. {}(", node.id, node.tool);
        for (j, arg) in node.args.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&arg.name);
            out.push('=');
            match &arg.value {
                Arg::Ref(k) => {
                    let _ = write!(out, "${k}");
                }
                Arg::Lit(lit) => out.push_str(&format_literal(lit)),
            }
        }
        out.push(')');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{parse_plan, NamedArg, PlanNode, ToolRegistry, ToolSpec};

    #[test]
    fn single_node_text() {
        let dag = PlanDag::new(vec![PlanNode {
            id: 1,
            tool: "fetch_weather".into(),
            args: vec![NamedArg::lit("location", "cell_17")],
        }])
        .unwrap();
        assert_eq!(format_plan(&dag), r#"1. fetch_weather(location="cell_17")"#);
    }

    #[test]
    fn floats_keep_a_decimal_point() {
        assert_eq!(format_literal(&Literal::Float(1.0)), "1.0");
        assert_eq!(format_literal(&Literal::Float(1e-7)), "1.0e-7");
        assert_eq!(format_literal(&Literal::Float(-2.5e300)), "-2.5e300");
    }

    #[test]
    fn four_line_round_trip() {
        let reg = ToolRegistry::new([
            ToolSpec::new("fetch_weather", &["location"], 1.0, 1.0),
            ToolSpec::new("detect_objects", &["video"], 4.0, 10.0),
            ToolSpec::new("extract_keyframes", &["frames", "top_k"], 2.0, 50.0),
            ToolSpec::new("write_report", &["events", "frames", "weather"], 1.0, 5.0),
        ])
        .unwrap();
        let text = "1. detect_objects(video=\"clip_03\")\n\
                    2. extract_keyframes(frames=$1, top_k=3)\n\
                    3. fetch_weather(location=\"cell_17\")\n\
                    4. write_report(events=$1, frames=$2, weather=$3)";
        let dag = parse_plan(text, &reg).unwrap();
        assert_eq!(format_plan(&dag), text);
        assert_eq!(parse_plan(&format_plan(&dag), &reg).unwrap(), dag);
    }
}
