//! Exhaustive minimal-makespan search and analytic lower bounds, used to
//! check the list scheduler.

use crate::plan::{critical_path_len, PlanDag, ToolRegistry};

use super::{
    DeviceSelector, DeviceTopology, Instance, Schedule, ScheduleError, ScheduleInputs, Slot,
};

pub const MAX_ORACLE_NODES: usize = 8;
pub const MAX_ORACLE_DEVICES: usize = 3;

pub fn brute_force_schedule(
    dag: &PlanDag,
    topo: &DeviceTopology,
    registry: &ToolRegistry,
    selector: &DeviceSelector,
) -> Result<Schedule, ScheduleError> {
    brute_force_schedule_with(dag, topo, registry, selector, &ScheduleInputs::new())
}

/// Minimum makespan over every device assignment and every
/// dependency-consistent dispatch order. Each node starts as soon as its
/// inputs have arrived and its device has finished the previous node.
/// Any optimal schedule, ordered by start time, is reproduced this way,
/// so the search is exact.
pub fn brute_force_schedule_with(
    dag: &PlanDag,
    topo: &DeviceTopology,
    registry: &ToolRegistry,
    selector: &DeviceSelector,
    inputs: &ScheduleInputs,
) -> Result<Schedule, ScheduleError> {
    let inst = Instance::new(dag, topo, registry, selector, inputs)?;
    if dag.len() > MAX_ORACLE_NODES || inst.allowed.len() > MAX_ORACLE_DEVICES {
        return Err(ScheduleError::InstanceTooLarge {
            nodes: dag.len(),
            devices: inst.allowed.len(),
        });
    }
    let preds: Vec<u32> = (1..=dag.len() as u32)
        .map(|n| {
            dag.predecessors(n)
                .into_iter()
                .fold(0u32, |m, p| m | 1 << (p - 1))
        })
        .collect();

    let mut search = Search {
        inst: &inst,
        preds,
        placed: vec![None; dag.len()],
        start: vec![0.0; dag.len()],
        avail: vec![0.0; topo.devices().len()],
        best: f64::INFINITY,
        best_slots: Vec::new(),
    };
    search.run(0, 0.0);

    let mut slots = search.best_slots;
    slots.sort_by_key(|s| s.node);
    Ok(Schedule { nodes: slots })
}

struct Search<'a> {
    inst: &'a Instance<'a>,
    preds: Vec<u32>,
    placed: Vec<Option<(usize, f64)>>,
    start: Vec<f64>,
    avail: Vec<f64>,
    best: f64,
    best_slots: Vec<Slot>,
}

impl Search<'_> {
    fn run(&mut self, done: u32, span: f64) {
        let n_nodes = self.placed.len();
        if done.count_ones() as usize == n_nodes {
            if span < self.best {
                self.best = span;
                self.best_slots = (0..n_nodes)
                    .map(|i| {
                        let (d, f) = self.placed[i].expect("complete");
                        Slot {
                            node: i as u32 + 1,
                            device: self.inst.topo.device(d).id.clone(),
                            start_s: self.start[i],
                            finish_s: f,
                        }
                    })
                    .collect();
            }
            return;
        }
        for i in 0..n_nodes {
            if done & (1 << i) != 0 || self.preds[i] & !done != 0 {
                continue;
            }
            let n = i as u32 + 1;
            for k in 0..self.inst.allowed.len() {
                let d = self.inst.allowed[k];
                let ready = self.inst.ready_time(n, d, &self.placed);
                let s = ready.max(self.avail[d]);
                let f = s + self.inst.duration(n, d);
                let new_span = span.max(f);
                if new_span >= self.best {
                    continue;
                }
                let prev_avail = self.avail[d];
                self.avail[d] = f;
                self.placed[i] = Some((d, f));
                self.start[i] = s;
                self.run(done | 1 << i, new_span);
                self.placed[i] = None;
                self.avail[d] = prev_avail;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    /// Longest path with every node on the fastest allowed device.
    pub cp_bound: f64,
    /// Total work spread perfectly over all allowed devices.
    pub work_bound: f64,
}

impl Bounds {
    pub fn max(&self) -> f64 {
        self.cp_bound.max(self.work_bound)
    }
}

/// Makespan lower bounds valid whenever communication is free.
pub fn lower_bounds(
    dag: &PlanDag,
    topo: &DeviceTopology,
    registry: &ToolRegistry,
    selector: &DeviceSelector,
) -> Result<Bounds, ScheduleError> {
    let allowed = topo.select(selector)?;
    let fastest = allowed
        .iter()
        .map(|&d| topo.device(d).speed)
        .fold(0.0, f64::max);
    let total_speed: f64 = allowed.iter().map(|&d| topo.device(d).speed).sum();
    let mut work = Vec::with_capacity(dag.len());
    for node in dag.nodes() {
        work.push(
            registry
                .get(&node.tool)
                .ok_or_else(|| ScheduleError::UnknownTool(node.tool.clone()))?
                .work,
        );
    }
    let cp = critical_path_len(dag, |n| work[n.id as usize - 1] / fastest);
    Ok(Bounds {
        cp_bound: cp.iter().copied().fold(0.0, f64::max),
        work_bound: work.iter().sum::<f64>() / total_speed,
    })
}
