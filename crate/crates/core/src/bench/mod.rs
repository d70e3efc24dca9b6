//! Benchmark harness: corpus generation, evaluation, experiment driver and
//! report files.

mod corpus;
mod eval;
mod report;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{ErrorModel, MemoryStore, Planner, ScriptedPlanner};
use crate::netsim::FailureModel;
use crate::orchestrator::{
    run_task, Budgets, Env, MemoryConfig, Mode, OrchestratorError, RunConfig, Scheme, TaskResult,
};
use crate::rng::DrawKey;
use crate::scheduler::DeviceTopology;
use crate::task::{Catalog, Corpus, Difficulty, Task};

pub use corpus::{generate_taskset, layer_sizes, HOME_TERMINALS};
pub use eval::{evaluate_task, Evaluation, FailureClass};
pub use report::{
    emit_report, format_tables, latency_csv, read_report, sr_csv, ReportError, LATENCY_FILE,
    REPORT_FILE, RESULTS_FILE, SR_FILE,
};

/// Per-bin task counts of the standard corpus.
pub const STANDARD_COUNTS: [usize; 3] = [10, 10, 10];
/// Seed of the standard corpus.
pub const STANDARD_CORPUS_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schemes: Vec<Scheme>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub error_model: ErrorModel,
    /// Per-execution fault probability of fallible tools.
    pub p_tool: f64,
    pub budgets: Budgets,
    pub memory: MemoryConfig,
    /// Planner backend name, recorded for the report.
    pub backend: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            modes: vec![Mode::Collab],
            seeds: (0..20).collect(),
            error_model: ErrorModel::default(),
            p_tool: 0.02,
            budgets: Budgets::default(),
            memory: MemoryConfig::default(),
            backend: "scripted".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task {task} ({scheme}, {mode}, seed {seed}): {source}")]
    Run {
        task: String,
        scheme: Scheme,
        mode: Mode,
        seed: u64,
        #[source]
        source: OrchestratorError,
    },
}

/// One evaluated run, as stored in `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub scheme: Scheme,
    pub mode: Mode,
    pub task_id: String,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub tool_count: usize,
    pub outcome: crate::orchestrator::Outcome,
    pub success: bool,
    pub failure: Option<FailureClass>,
    pub extra_calls: usize,
    pub rounds_used: u32,
    pub planning_invocations: u32,
    pub decomposition_invocations: u32,
    pub planning_latency_s: f64,
    pub execution_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrCell {
    pub scheme: Scheme,
    pub difficulty: Difficulty,
    pub sr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyCell {
    pub scheme: Scheme,
    pub mode: Mode,
    pub tool_count: usize,
    pub mean_latency_s: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationCell {
    pub scheme: Scheme,
    pub difficulty: Difficulty,
    pub mean_planning_invocations: f64,
    pub mean_decomposition_invocations: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    /// SHA-256 over the config, corpus and topology.
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub sr: Vec<SrCell>,
    pub latency: Vec<LatencyCell>,
    pub invocations: Vec<InvocationCell>,
    pub records: Vec<TaskRecord>,
}

pub struct Experiment {
    pub report: Report,
    /// Full results in report order.
    pub results: Vec<TaskResult>,
}

pub fn config_digest(cfg: &ExperimentConfig, corpus: &Corpus, topology: &DeviceTopology) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("serializable"));
    h.update([0]);
    h.update(corpus.to_json());
    h.update([0]);
    h.update(topology.to_json());
    hex::encode(h.finalize())
}

/// Builds a planner for one seed.
pub type PlannerFactory<'a> = dyn Fn(u64) -> Arc<dyn Planner> + Sync + 'a;

/// The scripted backend for every seed.
pub fn scripted_factory(
    corpus: &Corpus,
    catalog: &Catalog,
    model: ErrorModel,
) -> impl Fn(u64) -> Arc<dyn Planner> + Sync {
    let corpus = Arc::new(corpus.clone());
    let catalog = Arc::new(catalog.clone());
    move |seed| {
        Arc::new(ScriptedPlanner::new(corpus.clone(), catalog.clone(), model, seed)) as Arc<dyn Planner>
    }
}

/// Runs every (scheme, mode, seed) series over the corpus. Series run in
/// parallel; tasks within a series run one after another in [`task_order`]
/// so experience memory accumulates deterministically.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    topology: &DeviceTopology,
    catalog: &Catalog,
    planners: &PlannerFactory<'_>,
) -> Result<Experiment, BenchError> {
    cfg.error_model.validate().map_err(BenchError::Config)?;
    let failures = FailureModel::uniform(cfg.p_tool);
    failures.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    for t in &corpus.tasks {
        if topology.index_of(&t.home).is_none() {
            return Err(BenchError::Config(format!(
                "task {} lives on {}, which the topology lacks",
                t.id, t.home
            )));
        }
    }
    let runtimes = catalog.runtimes(corpus);
    let mut by_id: Vec<_> = corpus.tasks.iter().collect();
    by_id.sort_by(|a, b| a.id.cmp(&b.id));

    let mut series = Vec::new();
    for &scheme in &cfg.schemes {
        for &mode in &cfg.modes {
            for &seed in &cfg.seeds {
                series.push((scheme, mode, seed));
            }
        }
    }
    let batches: Vec<Vec<(TaskRecord, TaskResult)>> = series
        .par_iter()
        .map(|&(scheme, mode, seed)| {
            let planner = planners(seed);
            let env = Env {
                catalog,
                topology,
                runtimes: &runtimes,
                planner: planner.as_ref(),
            };
            let run_cfg = RunConfig {
                scheme,
                mode,
                budgets: cfg.budgets,
                memory: cfg.memory,
                seed,
                failures: failures.clone(),
            };
            let mut memory = MemoryStore::new(cfg.memory.per_role);
            task_order(&by_id, seed)
                .into_iter()
                .map(|task| {
                    let result = run_task(task, &run_cfg, env, Some(&mut memory)).map_err(|source| {
                        BenchError::Run {
                            task: task.id.clone(),
                            scheme,
                            mode,
                            seed,
                            source,
                        }
                    })?;
                    let eval = evaluate_task(&result, &task.ground_truth);
                    let record = TaskRecord {
                        scheme,
                        mode,
                        task_id: task.id.clone(),
                        seed,
                        difficulty: task.difficulty,
                        tool_count: task.tool_count(),
                        outcome: result.outcome,
                        success: eval.success,
                        failure: eval.failure,
                        extra_calls: eval.extra_calls,
                        rounds_used: result.rounds_used,
                        planning_invocations: result.planning_invocations,
                        decomposition_invocations: result.decomposition_invocations,
                        planning_latency_s: result.planning_latency_s,
                        execution_latency_s: result.execution_latency_s,
                    };
                    Ok((record, result))
                })
                .collect::<Result<Vec<_>, BenchError>>()
        })
        .collect::<Result<_, _>>()?;

    let mut pairs: Vec<(TaskRecord, TaskResult)> = batches.into_iter().flatten().collect();
    pairs.sort_by(|(a, _), (b, _)| {
        (a.scheme, a.mode, &a.task_id, a.seed).cmp(&(b.scheme, b.mode, &b.task_id, b.seed))
    });
    let (records, results): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let report = aggregate(cfg, config_digest(cfg, corpus, topology), records);
    Ok(Experiment { report, results })
}

/// The order a series meets its tasks in. Experience memory makes later
/// tasks easier, so the order is shuffled per seed rather than tied to task
/// naming; all schemes and modes of one seed share it.
pub fn task_order<'a>(by_id: &[&'a Task], seed: u64) -> Vec<&'a Task> {
    let mut order = by_id.to_vec();
    order.shuffle(&mut DrawKey::new("task-order").u64(seed).rng());
    order
}

/// Folds sorted records into the report cells.
pub fn aggregate(cfg: &ExperimentConfig, digest: String, records: Vec<TaskRecord>) -> Report {
    let mut sr: BTreeMap<(Scheme, Difficulty), (usize, usize)> = BTreeMap::new();
    let mut lat: BTreeMap<(Scheme, Mode, usize), (f64, usize)> = BTreeMap::new();
    let mut inv: BTreeMap<(Scheme, Difficulty), (u64, u64, usize)> = BTreeMap::new();
    for r in &records {
        let cell = sr.entry((r.scheme, r.difficulty)).or_default();
        cell.0 += r.success as usize;
        cell.1 += 1;
        if r.success {
            let cell = lat.entry((r.scheme, r.mode, r.tool_count)).or_default();
            cell.0 += r.execution_latency_s;
            cell.1 += 1;
        }
        let cell = inv.entry((r.scheme, r.difficulty)).or_default();
        cell.0 += r.planning_invocations as u64;
        cell.1 += r.decomposition_invocations as u64;
        cell.2 += 1;
    }
    Report {
        config: cfg.clone(),
        config_digest: digest,
        seeds: cfg.seeds.clone(),
        sr: sr
            .into_iter()
            .map(|((scheme, difficulty), (ok, n))| SrCell {
                scheme,
                difficulty,
                sr: ok as f64 / n as f64,
                n,
            })
            .collect(),
        latency: lat
            .into_iter()
            .map(|((scheme, mode, tool_count), (sum, n))| LatencyCell {
                scheme,
                mode,
                tool_count,
                mean_latency_s: sum / n as f64,
                n,
            })
            .collect(),
        invocations: inv
            .into_iter()
            .map(|((scheme, difficulty), (p, d, n))| InvocationCell {
                scheme,
                difficulty,
                mean_planning_invocations: p as f64 / n as f64,
                mean_decomposition_invocations: d as f64 / n as f64,
                n,
            })
            .collect(),
        records,
    }
}

impl Report {
    pub fn sr_of(&self, scheme: Scheme, difficulty: Difficulty) -> Option<f64> {
        self.sr
            .iter()
            .find(|c| c.scheme == scheme && c.difficulty == difficulty)
            .map(|c| c.sr)
    }

    pub fn latency_of(&self, scheme: Scheme, mode: Mode, tool_count: usize) -> Option<f64> {
        self.latency
            .iter()
            .find(|c| c.scheme == scheme && c.mode == mode && c.tool_count == tool_count)
            .map(|c| c.mean_latency_s)
    }
}
