//! `selfplay-tree` command-line driver.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selfplay_tree::config::RunConfig;
use selfplay_tree::engine::{self, run_experiment_random_vs_reward, run_sweep, Engine, Snapshot, SWEEP_DEPTHS, SWEEP_WINDOWS};

const CLIENT_MODE_FILE: &str = "clients.txt";
pub const EXPERIMENT_FILE: &str = "experiment.json";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Parser)]
#[command(name = "selfplay-tree", version, about = "Self-play curriculum engine over a growing concept tree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root domain label.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Start a fresh run.
    Run {
        #[command(flatten)]
        common: Common,
        /// Use the offline simulated clients.
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        output_dir: PathBuf,
        /// Start from the tree stored in another run's snapshot.
        #[arg(long)]
        import_tree: Option<PathBuf>,
    },
    /// Continue a run from its last snapshot.
    Resume {
        #[arg(long)]
        output_dir: PathBuf,
        /// New total iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Built-in offline experiments.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
    /// Depth by window grid of offline runs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of seeds (0..n).
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Render tables and plots from the artifacts in an output directory.
    Report {
        #[arg(long)]
        output_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum Experiment {
    /// Reward-guided versus uniform exploration, paired by seed.
    #[command(name = "rand-vs-reward")]
    RandVsReward {
        #[command(flatten)]
        common: Common,
        /// Number of seeds (0..n).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn build_config(common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.domain {
        cfg.domain_label = d.clone();
    }
    if let Some(n) = common.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn make_engine(cfg: RunConfig, mock: bool) -> Result<Engine, String> {
    if mock {
        return Engine::mock(cfg).map_err(|e| e.to_string());
    }
    let clients = engine::http_clients(&cfg);
    Engine::new(cfg, clients, None).map_err(|e| e.to_string())
}

fn progress(r: &selfplay_tree::IterationReport) {
    eprintln!(
        "iteration {:>4}: paths {:>4}  processed {:>4}  skipped {:>4}  batches {:>4}  mean g {:.3}  nodes {:>5}",
        r.iteration + 1,
        r.paths_sampled,
        r.processed,
        r.skipped,
        r.batches,
        r.mean_g,
        r.total_nodes
    );
}

fn drive(mut engine: Engine) -> Result<(), String> {
    while engine.iteration < engine.cfg.iterations as u64 {
        let r = engine.run_iteration().map_err(|e| format!("iteration {} aborted: {e}", engine.iteration + 1))?;
        progress(&r);
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { common, mock, output_dir, import_tree } => {
            let cfg = build_config(&common)?;
            let mut engine = make_engine(cfg, mock)?.with_output(&output_dir).map_err(|e| e.to_string())?;
            std::fs::write(output_dir.join(CLIENT_MODE_FILE), if mock { "mock\n" } else { "http\n" })
                .map_err(|e| e.to_string())?;
            if let Some(p) = import_tree {
                let snap = Snapshot::load(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                engine.import_tree(snap.tree).map_err(|e| e.to_string())?;
            }
            drive(engine)
        }
        Command::Resume { output_dir, iterations } => {
            let mut cfg = RunConfig::from_file(&output_dir.join(engine::CONFIG_FILE)).map_err(|e| e.to_string())?;
            if let Some(n) = iterations {
                cfg.iterations = n;
            }
            let mode = std::fs::read_to_string(output_dir.join(CLIENT_MODE_FILE)).unwrap_or_default();
            let mock = mode.trim() == "mock";
            let restored = if mock {
                let (clients, landscape) = engine::mock_clients(&cfg);
                Engine::restore(&output_dir, cfg.clone(), clients, Some(landscape))
            } else {
                Engine::restore(&output_dir, cfg.clone(), engine::http_clients(&cfg), None)
            };
            let engine = restored.map_err(|e| e.to_string())?;
            std::fs::write(output_dir.join(engine::CONFIG_FILE), cfg.to_kv_string()).map_err(|e| e.to_string())?;
            eprintln!("resuming at iteration {}", engine.iteration + 1);
            drive(engine)
        }
        Command::Experiment { which: Experiment::RandVsReward { common, seeds, output_dir } } => {
            let cfg = build_config(&common)?;
            std::fs::create_dir_all(&output_dir).map_err(|e| e.to_string())?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = run_experiment_random_vs_reward(&cfg, &seeds).map_err(|e| e.to_string())?;
            for s in &report.seeds {
                eprintln!(
                    "seed {:>3}: late learnable rate reward {:.3} vs random {:.3}",
                    s.seed, s.late_reward, s.late_random
                );
            }
            eprintln!("reward-guided wins {} of {} seeds", report.wins, report.seeds.len());
            write_json(&output_dir.join(EXPERIMENT_FILE), &report)
        }
        Command::Sweep { common, seeds, output_dir } => {
            let cfg = build_config(&common)?;
            std::fs::create_dir_all(&output_dir).map_err(|e| e.to_string())?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = run_sweep(&cfg, &SWEEP_DEPTHS, &SWEEP_WINDOWS, &seeds).map_err(|e| e.to_string())?;
            for v in &report.violations {
                eprintln!("ordering violated: {v}");
            }
            write_json(&output_dir.join(SWEEP_FILE), &report)
        }
        Command::Report { output_dir } => {
            let written = report::render(&output_dir)?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
