//! Generators shared by the property suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dualloop::plan::{Literal, NamedArg, PlanDag, PlanNode, ToolRegistry, ToolSpec};
use dualloop::scheduler::{Device, DeviceTopology, LinkParams, Tier, TierPair};
use proptest::prelude::*;

/// Five tools with 0 to 3 parameters and spread-out costs.
pub fn registry() -> ToolRegistry {
    ToolRegistry::new([
        ToolSpec::new("alpha", &["a"], 1.0, 10.0),
        ToolSpec::new("beta", &["a", "b"], 2.0, 100.0),
        ToolSpec::new("gamma", &["x", "y", "z"], 3.0, 5.0),
        ToolSpec::new("delta", &[], 0.5, 0.0),
        ToolSpec::new("echo_tool", &["src"], 4.0, 1000.0),
    ])
    .unwrap()
}

pub fn arb_literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<bool>().prop_map(Literal::Bool),
        any::<i64>().prop_map(Literal::Int),
        (-1e12f64..1e12).prop_map(Literal::Float),
        prop_oneof![Just(1e300f64), Just(-2.5e-300), Just(0.1), Just(-0.0)].prop_map(Literal::Float),
        "[ -~\\n\\t\\r\"\\\\äß漢]{0,12}".prop_map(Literal::Str),
    ]
}

/// An argument choice: `Err(pick)` refers to an earlier node chosen by
/// `pick`, `Ok(lit)` is a literal.
type ArgChoice = Result<Literal, usize>;

fn arb_arg() -> impl Strategy<Value = ArgChoice> {
    prop_oneof![arb_literal().prop_map(Ok), any::<usize>().prop_map(Err)]
}

/// Random valid plan over [`registry`] with up to `max` nodes.
pub fn arb_dag(min: usize, max: usize) -> impl Strategy<Value = PlanDag> {
    let reg = registry();
    let tools: Vec<ToolSpec> = reg.iter().cloned().collect();
    prop::collection::vec((0..tools.len(), prop::collection::vec(arb_arg(), 3)), min..=max).prop_map(
        move |raw| {
            let nodes = raw
                .into_iter()
                .enumerate()
                .map(|(i, (t, choices))| {
                    let spec = &tools[t];
                    let args = spec
                        .param_names
                        .iter()
                        .zip(choices)
                        .map(|(p, c)| match c {
                            Err(pick) if i > 0 => NamedArg::reference(p, (pick % i) as u32 + 1),
                            Err(_) => NamedArg::lit(p, "root"),
                            Ok(lit) => NamedArg::lit(p, lit),
                        })
                        .collect();
                    PlanNode {
                        id: i as u32 + 1,
                        tool: spec.name.clone(),
                        args,
                    }
                })
                .collect();
            PlanDag::new(nodes).unwrap()
        },
    )
}

pub fn links(latency_s: f64, bandwidth_kbps: f64) -> BTreeMap<TierPair, LinkParams> {
    let mut out = BTreeMap::new();
    for a in Tier::ALL {
        for b in Tier::ALL {
            out.insert(
                TierPair::new(a, b),
                LinkParams {
                    latency_s,
                    bandwidth_kbps,
                },
            );
        }
    }
    out
}

/// Up to `max` devices with speeds in {0.5, 1, 2, 4}. `comm` selects
/// nonzero latency and finite bandwidth.
pub fn arb_topology(max: usize, comm: bool) -> impl Strategy<Value = DeviceTopology> {
    let speeds = prop::sample::select(vec![0.5, 1.0, 2.0, 4.0]);
    let tiers = prop::sample::select(Tier::ALL.to_vec());
    (
        prop::collection::vec((tiers, speeds), 1..=max),
        0.0f64..0.5,
        prop::sample::select(vec![50.0, 500.0, 5000.0]),
    )
        .prop_map(move |(devs, lat, bw)| {
            let devices = devs
                .into_iter()
                .enumerate()
                .map(|(i, (tier, speed))| Device {
                    id: format!("d{i}"),
                    tier,
                    speed,
                })
                .collect();
            let topo = DeviceTopology::new(devices, links(lat, bw)).unwrap();
            if comm {
                topo
            } else {
                topo.without_comm()
            }
        })
}

/// Longest cost over all paths starting at each node, by enumerating every
/// path explicitly.
pub fn brute_longest_paths(dag: &PlanDag, cost: impl Fn(u32) -> f64) -> Vec<f64> {
    let succ = dag.successors();
    fn walk(n: u32, succ: &[Vec<u32>], cost: &dyn Fn(u32) -> f64, acc: f64, best: &mut f64) {
        let acc = acc + cost(n);
        let next = &succ[n as usize - 1];
        if next.is_empty() {
            *best = best.max(acc);
        }
        for &m in next {
            walk(m, succ, cost, acc, best);
        }
    }
    (1..=dag.len() as u32)
        .map(|n| {
            let mut best = 0.0;
            walk(n, &succ, &cost, 0.0, &mut best);
            best
        })
        .collect()
}
