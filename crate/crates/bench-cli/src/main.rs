use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualloop::agents::{ErrorModel, HttpConfig, HttpPlanner, Planner, ReplayPlanner, RequestGate};
use dualloop::bench::{
    emit_report, format_tables, generate_taskset, read_report, run_experiment, scripted_factory,
    ExperimentConfig, STANDARD_CORPUS_SEED,
};
use dualloop::orchestrator::{Budgets, MemoryConfig, Mode, Scheme};
use dualloop::scheduler::DeviceTopology;
use dualloop::task::{Catalog, Corpus};

#[derive(Parser)]
#[command(name = "bench", version, about = "Dual-loop planner benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task corpus.
    Gen {
        #[arg(long, default_value_t = STANDARD_CORPUS_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        easy: usize,
        #[arg(long, default_value_t = 10)]
        medium: usize,
        #[arg(long, default_value_t = 10)]
        hard: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run schemes over a corpus and write the report files.
    Run(RunArgs),
    /// Print the tables of a finished run.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Write the default topology as JSON.
    Topology {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Scripted,
    Http,
    Replay,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Topology JSON; the built-in default when omitted.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',', default_value = "dual-loop,flat,react")]
    scheme: Vec<Scheme>,
    /// Comma-separated execution modes.
    #[arg(long, value_delimiter = ',', default_value = "collab")]
    mode: Vec<Mode>,
    /// Seeds as a comma list and/or `a..b` ranges.
    #[arg(long, default_value = "0..20")]
    seed: String,
    #[arg(long, value_enum, default_value = "scripted")]
    backend: Backend,
    /// Per-call planning error probability of the scripted backend.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Per-execution fault probability of fallible tools.
    #[arg(long, default_value_t = 0.02)]
    p_tool: f64,
    #[arg(long, default_value_t = Budgets::default().max_rounds)]
    max_rounds: u32,
    #[arg(long, default_value_t = Budgets::default().max_replans)]
    max_replans: u32,
    #[arg(long, default_value_t = Budgets::default().react_steps)]
    react_steps: u32,
    /// Disable experience retrieval and storage.
    #[arg(long)]
    no_memory: bool,
    /// One experience store shared by all sub-agents.
    #[arg(long)]
    shared_memory: bool,
    /// Replay log to append to (http) or serve from (replay).
    #[arg(long)]
    replay_log: Option<PathBuf>,
    /// Also write every full result with its traces.
    #[arg(long)]
    traces: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| format!("bad seed range `{part}`"))?;
            let b: u64 = b.parse().map_err(|_| format!("bad seed range `{part}`"))?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(args: RunArgs) -> Result<(), String> {
    let catalog = Catalog::standard();
    let corpus = Corpus::from_json(&read(&args.corpus)?, &catalog)
        .map_err(|e| format!("{}: {e}", args.corpus.display()))?;
    let topology = match &args.topology {
        Some(p) => DeviceTopology::from_json(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        None => DeviceTopology::default_edge(),
    };
    let cfg = ExperimentConfig {
        schemes: args.scheme.clone(),
        modes: args.mode.clone(),
        seeds: parse_seeds(&args.seed)?,
        error_model: ErrorModel::with_eps(args.eps),
        p_tool: args.p_tool,
        budgets: Budgets {
            max_rounds: args.max_rounds,
            max_replans: args.max_replans,
            react_steps: args.react_steps,
        },
        memory: MemoryConfig {
            enabled: !args.no_memory,
            per_role: !args.shared_memory,
            ..MemoryConfig::default()
        },
        backend: match args.backend {
            Backend::Scripted => "scripted",
            Backend::Http => "http",
            Backend::Replay => "replay",
        }
        .into(),
    };

    let experiment = match args.backend {
        Backend::Scripted => {
            let f = scripted_factory(&corpus, &catalog, cfg.error_model);
            run_experiment(&cfg, &corpus, &topology, &catalog, &f)
        }
        Backend::Http => {
            let mut http = HttpConfig::from_env().map_err(|e| e.to_string())?;
            http.replay_log = args.replay_log.clone();
            let planner: Arc<dyn Planner> = Arc::new(
                HttpPlanner::new(http, Arc::new(RequestGate::default())).map_err(|e| e.to_string())?,
            );
            let f = move |_seed| planner.clone();
            run_experiment(&cfg, &corpus, &topology, &catalog, &f)
        }
        Backend::Replay => {
            let path = args.replay_log.as_ref().ok_or("--backend replay needs --replay-log")?;
            let planner: Arc<dyn Planner> =
                Arc::new(ReplayPlanner::load(path).map_err(|e| e.to_string())?);
            let f = move |_seed| planner.clone();
            run_experiment(&cfg, &corpus, &topology, &catalog, &f)
        }
    }
    .map_err(|e| e.to_string())?;

    let results = args.traces.then_some(experiment.results.as_slice());
    let files = emit_report(&experiment.report, results, &args.out).map_err(|e| e.to_string())?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen {
            seed,
            easy,
            medium,
            hard,
            out,
        } => {
            let corpus = generate_taskset(seed, [easy, medium, hard], &Catalog::standard());
            std::fs::write(&out, corpus.to_json())
                .map(|_| println!("wrote {} tasks to {}", corpus.tasks.len(), out.display()))
                .map_err(|e| format!("{}: {e}", out.display()))
        }
        Command::Run(args) => run(args),
        Command::Report { dir } => read_report(&dir)
            .map(|r| print!("{}", format_tables(&r)))
            .map_err(|e| e.to_string()),
        Command::Topology { out } => std::fs::write(&out, DeviceTopology::default_edge().to_json())
            .map_err(|e| format!("{}: {e}", out.display())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5,1..3").unwrap(), vec![5, 1, 2]);
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
