use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{Arg, NamedArg, PlanDag, PlanNode};

/// Kahn's algorithm with the smallest ready id first.
pub fn topo_order(dag: &PlanDag) -> Vec<u32> {
    let succ = dag.successors();
    let mut indegree = vec![0usize; dag.len()];
    for &(_, b) in dag.edges() {
        indegree[b as usize - 1] += 1;
    }
    let mut ready: BinaryHeap<Reverse<u32>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == 0)
        .map(|(i, _)| Reverse(i as u32 + 1))
        .collect();
    let mut order = Vec::with_capacity(dag.len());
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n);
        for &m in &succ[n as usize - 1] {
            let d = &mut indegree[m as usize - 1];
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(m));
            }
        }
    }
    debug_assert_eq!(order.len(), dag.len(), "PlanDag invariant: acyclic");
    order
}

/// Longest cost-weighted path starting at each node, inclusive of the
/// node itself. Index `i` holds the value for node `i + 1`.
pub fn critical_path_len(dag: &PlanDag, cost: impl Fn(&PlanNode) -> f64) -> Vec<f64> {
    let succ = dag.successors();
    let mut cp = vec![0.0; dag.len()];
    for &n in topo_order(dag).iter().rev() {
        let i = n as usize - 1;
        let tail = succ[i]
            .iter()
            .map(|&m| cp[m as usize - 1])
            .fold(0.0, f64::max);
        cp[i] = cost(dag.node(n)) + tail;
    }
    cp
}

/// Chain over the same calls in topological order: every node after the
/// first depends on exactly its predecessor in the chain.
///
/// Existing references are redirected to the previous node; a node with no
/// references gets an extra `after` argument carrying the chain edge.
pub fn sequentialize(dag: &PlanDag) -> PlanDag {
    let order = topo_order(dag);
    let nodes = order
        .iter()
        .enumerate()
        .map(|(pos, &old)| {
            let id = pos as u32 + 1;
            let src = dag.node(old);
            let mut args: Vec<NamedArg> = src
                .args
                .iter()
                .map(|a| NamedArg {
                    name: a.name.clone(),
                    value: match a.value {
                        Arg::Ref(_) => Arg::Ref(id - 1),
                        ref lit => lit.clone(),
                    },
                })
                .collect();
            if id > 1 && src.refs().next().is_none() {
                args.push(NamedArg::reference("after", id - 1));
            }
            PlanNode {
                id,
                tool: src.tool.clone(),
                args,
            }
        })
        .collect();
    PlanDag::new(nodes).expect("chain is a valid DAG")
}

/// Disjoint union of several DAGs. Node ids are shifted so part `i`
/// occupies the returned id range.
pub fn merge_forest(parts: &[PlanDag]) -> (PlanDag, Vec<std::ops::Range<u32>>) {
    let mut nodes = Vec::new();
    let mut ranges = Vec::with_capacity(parts.len());
    let mut offset = 0u32;
    for part in parts {
        for node in part.nodes() {
            nodes.push(PlanNode {
                id: node.id + offset,
                tool: node.tool.clone(),
                args: node
                    .args
                    .iter()
                    .map(|a| NamedArg {
                        name: a.name.clone(),
                        value: match a.value {
                            Arg::Ref(k) => Arg::Ref(k + offset),
                            ref lit => lit.clone(),
                        },
                    })
                    .collect(),
            });
        }
        let n = part.len() as u32;
        ranges.push(offset + 1..offset + n + 1);
        offset += n;
    }
    (PlanDag::new(nodes).expect("union of valid DAGs"), ranges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::NamedArg;

    fn node(id: u32, refs: &[u32]) -> PlanNode {
        PlanNode {
            id,
            tool: "t".into(),
            args: refs
                .iter()
                .enumerate()
                .map(|(i, &k)| NamedArg::reference(&format!("a{i}"), k))
                .collect(),
        }
    }

    fn chain() -> PlanDag {
        PlanDag::new(vec![node(1, &[]), node(2, &[1]), node(3, &[2])]).unwrap()
    }

    fn diamond() -> PlanDag {
        PlanDag::new(vec![node(1, &[]), node(2, &[1]), node(3, &[1]), node(4, &[2, 3])]).unwrap()
    }

    #[test]
    fn critical_path_examples() {
        assert_eq!(critical_path_len(&chain(), |_| 1.0), vec![3.0, 2.0, 1.0]);
        assert_eq!(critical_path_len(&diamond(), |_| 1.0), vec![3.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn topo_examples() {
        assert_eq!(topo_order(&diamond()), vec![1, 2, 3, 4]);
        assert_eq!(topo_order(&chain()), vec![1, 2, 3]);
        assert!(topo_order(&PlanDag::empty()).is_empty());
    }

    #[test]
    fn sequentialize_examples() {
        let seq = sequentialize(&diamond());
        let edges: Vec<_> = seq.edges().iter().copied().collect();
        assert_eq!(edges, vec![(1, 2), (2, 3), (3, 4)]);

        let single = PlanDag::new(vec![node(1, &[])]).unwrap();
        assert_eq!(sequentialize(&single), single);

        let wide = PlanDag::new(vec![node(1, &[]), node(2, &[]), node(3, &[])]).unwrap();
        assert_eq!(sequentialize(&wide).edges().len(), 2);
    }

    #[test]
    fn merge_offsets_refs() {
        let (m, ranges) = merge_forest(&[diamond(), chain()]);
        assert_eq!(m.len(), 7);
        assert_eq!(ranges, vec![1..5, 5..8]);
        assert!(m.edges().contains(&(5, 6)));
        assert!(m.edges().contains(&(6, 7)));
        assert_eq!(m.edges().len(), 6);
    }
}
