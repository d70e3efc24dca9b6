mod common;

use common::{arb_dag, arb_topology, registry};
use dualloop::netsim::{
    replay, replay_against_schedule, simulate, FailureModel, NodeStatus, RuntimeSet, SimContext,
};
use dualloop::plan::{PlanDag, PlanNode};
use dualloop::scheduler::{priority_schedule, DeviceSelector};
use proptest::prelude::*;

fn ctx() -> SimContext {
    SimContext::new("task", "task/a0", 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn zero_failure_run_ends_at_makespan(dag in arb_dag(0, 12), topo in arb_topology(4, true), seed: u64) {
        let s = priority_schedule(&dag, &topo, &registry(), &DeviceSelector::all()).unwrap();
        let rt = RuntimeSet::tokens_for(&registry());
        let trace = simulate(&s, &dag, &rt, &FailureModel::none(), seed, &ctx()).unwrap();
        prop_assert!(trace.all_ok());
        prop_assert!((trace.end_time_s - s.makespan()).abs() < 1e-9);
        prop_assert!(replay_against_schedule(&trace, &dag, &s).is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn faults_close_over_descendants(
        dag in arb_dag(1, 12),
        topo in arb_topology(3, true),
        p in 0.0f64..0.6,
        inject in prop::option::of(1u32..13),
        seed: u64,
    ) {
        let s = priority_schedule(&dag, &topo, &registry(), &DeviceSelector::all()).unwrap();
        let rt = RuntimeSet::tokens_for(&registry());
        let mut fm = FailureModel::uniform(p);
        if let Some(n) = inject.filter(|&n| n as usize <= dag.len()) {
            fm = fm.inject("task", n, None);
        }
        let trace = simulate(&s, &dag, &rt, &fm, seed, &ctx()).unwrap();
        prop_assert!(replay(&trace, &dag).is_empty());
        prop_assert!(replay_against_schedule(&trace, &dag, &s).is_empty());

        let total = trace.count(NodeStatus::Ok) + trace.count(NodeStatus::Fault) + trace.count(NodeStatus::Skipped);
        prop_assert_eq!(total, dag.len());
        // A node is skipped exactly when one of its inputs did not succeed.
        for rec in &trace.nodes {
            let upstream_failed = dag
                .predecessors(rec.node)
                .iter()
                .any(|&p| trace.nodes[p as usize - 1].status != NodeStatus::Ok);
            prop_assert_eq!(rec.status == NodeStatus::Skipped, upstream_failed, "node {}", rec.node);
            match rec.status {
                NodeStatus::Skipped => prop_assert!(rec.start_s.is_none() && rec.finish_s.is_none() && rec.output.is_none()),
                NodeStatus::Ok => prop_assert!(rec.output.is_some()),
                NodeStatus::Fault => prop_assert!(rec.output.is_none()),
            }
        }

        let again = simulate(&s, &dag, &rt, &fm, seed, &ctx()).unwrap();
        prop_assert_eq!(trace.to_jsonl(), again.to_jsonl());
    }
}

#[test]
fn fault_counts_follow_the_binomial() {
    let reg = registry();
    let dag = PlanDag::new(
        (1..=10)
            .map(|id| PlanNode {
                id,
                tool: "delta".into(),
                args: vec![],
            })
            .collect(),
    )
    .unwrap();
    let topo = dualloop::scheduler::DeviceTopology::default_edge();
    let s = priority_schedule(&dag, &topo, &reg, &DeviceSelector::all()).unwrap();
    let rt = RuntimeSet::tokens_for(&reg);
    let fm = FailureModel::uniform(0.3);
    let faults: usize = (0..100u64)
        .map(|seed| simulate(&s, &dag, &rt, &fm, seed, &ctx()).unwrap().count(NodeStatus::Fault))
        .sum();
    let (n, p): (f64, f64) = (1000.0, 0.3);
    let sigma = (n * p * (1.0 - p)).sqrt();
    assert!(
        (faults as f64 - n * p).abs() <= 3.0 * sigma,
        "{faults} faults, expected {} ± {}",
        n * p,
        3.0 * sigma
    );
}
