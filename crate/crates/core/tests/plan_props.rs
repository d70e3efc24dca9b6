mod common;

use std::collections::BTreeSet;

use common::{arb_dag, brute_longest_paths, registry};
use dualloop::plan::{
    critical_path_len, format_plan, parse_plan, sequentialize, topo_order, Arg, ParseError,
};
use proptest::prelude::*;

fn work(dag: &dualloop::plan::PlanDag, n: u32) -> f64 {
    registry().get(&dag.node(n).tool).unwrap().work
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn format_then_parse_round_trips(dag in arb_dag(0, 12)) {
        let text = format_plan(&dag);
        let back = parse_plan(&text, &registry()).unwrap();
        prop_assert_eq!(&back, &dag);
        prop_assert_eq!(format_plan(&back), text);
    }

    #[test]
    fn edges_are_exactly_the_references(dag in arb_dag(1, 12)) {
        let mut want = BTreeSet::new();
        for node in dag.nodes() {
            for a in &node.args {
                if let Arg::Ref(k) = a.value {
                    want.insert((k, node.id));
                }
            }
        }
        prop_assert_eq!(dag.edges(), &want);
    }

    #[test]
    fn topo_order_is_a_permutation_respecting_edges(dag in arb_dag(0, 15)) {
        let order = topo_order(&dag);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (1..=dag.len() as u32).collect::<Vec<_>>());
        let pos: Vec<usize> = {
            let mut p = vec![0; dag.len()];
            for (i, &n) in order.iter().enumerate() {
                p[n as usize - 1] = i;
            }
            p
        };
        for &(a, b) in dag.edges() {
            prop_assert!(pos[a as usize - 1] < pos[b as usize - 1]);
        }
    }

    #[test]
    fn critical_path_matches_path_enumeration(dag in arb_dag(1, 10)) {
        let cp = critical_path_len(&dag, |n| work(&dag, n.id));
        let brute = brute_longest_paths(&dag, |n| work(&dag, n));
        for (a, b) in cp.iter().zip(&brute) {
            prop_assert!((a - b).abs() < 1e-9, "{cp:?} vs {brute:?}");
        }
        let succ = dag.successors();
        for n in 1..=dag.len() as u32 {
            let tail = succ[n as usize - 1]
                .iter()
                .map(|&m| cp[m as usize - 1])
                .fold(0.0, f64::max);
            prop_assert!((cp[n as usize - 1] - work(&dag, n) - tail).abs() < 1e-9);
        }
    }

    #[test]
    fn sequentialize_is_a_chain_in_topo_order(dag in arb_dag(1, 12)) {
        let seq = sequentialize(&dag);
        prop_assert_eq!(seq.len(), dag.len());
        prop_assert_eq!(seq.edges().len(), dag.len() - 1);
        let before: f64 = (1..=dag.len() as u32).map(|n| work(&dag, n)).sum();
        let after: f64 = (1..=seq.len() as u32).map(|n| work(&seq, n)).sum();
        prop_assert!((before - after).abs() < 1e-9);
        let tools: Vec<&str> = topo_order(&dag).iter().map(|&n| dag.node(n).tool.as_str()).collect();
        let chain: Vec<&str> = seq.nodes().iter().map(|n| n.tool.as_str()).collect();
        prop_assert_eq!(tools, chain);
    }

    #[test]
    fn parser_never_panics(text in "[0-9a-z_.$=\"(), \\n-]{0,80}") {
        let _ = parse_plan(&text, &registry());
    }
}

#[test]
fn malformed_inputs_map_to_their_error_class() {
    let reg = registry();
    let cases: [(&str, fn(&ParseError) -> bool); 7] = [
        ("1. alpha(a=$1)", |e| matches!(e, ParseError::ForwardRef { line: 1, target: 1 })),
        ("1. delta()\n2. alpha(a=$3)", |e| matches!(e, ParseError::ForwardRef { line: 2, target: 3 })),
        ("1. omega(a=1)", |e| matches!(e, ParseError::UnknownTool { line: 1, name } if name == "omega")),
        ("1. beta(a=1)", |e| matches!(e, ParseError::ArityMismatch { line: 1, .. })),
        ("1. alpha(a=1, q=2)", |e| matches!(e, ParseError::ArityMismatch { line: 1, .. })),
        ("1. alpha(a=1\n", |e| matches!(e, ParseError::Syntax { line: 1, .. })),
        ("1. delta()\n1. delta()", |e| matches!(e, ParseError::DuplicateId { line: 2, id: 1 })),
    ];
    for (text, check) in cases {
        let err = parse_plan(text, &reg).unwrap_err();
        assert!(check(&err), "{text:?} gave {err:?}");
    }
    let syntax = ["alpha(a=1)", "1 alpha(a=1)", "1. alpha(a=1))", "2. delta()", "1. alpha(a=$0)", "1. alpha(a=\"x)"];
    for text in syntax {
        assert!(
            matches!(parse_plan(text, &reg), Err(ParseError::Syntax { .. })),
            "{text:?}"
        );
    }
}
