//! Built-in offline experiments: reward-guided versus uniform exploration, and
//! the depth by window sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Engine, EngineError, IterationReport};
use crate::config::{ExplorationMode, RunConfig};

/// Iterations at the end of a run that count as "late".
pub const LATE_WINDOW: usize = 10;

/// Pooled learnable share of non-skipped paths over the last `window` reports.
pub fn late_learnable_rate(reports: &[IterationReport], window: usize) -> f64 {
    let tail = &reports[reports.len().saturating_sub(window)..];
    let processed: usize = tail.iter().map(|r| r.processed).sum();
    let learnable: usize = tail.iter().map(|r| r.learnable).sum();
    if processed == 0 {
        0.0
    } else {
        learnable as f64 / processed as f64
    }
}

fn run_one(cfg: RunConfig) -> Result<(Vec<IterationReport>, usize), EngineError> {
    let mut engine = Engine::mock(cfg)?;
    let reports = engine.run_to_end()?;
    Ok((reports, engine.tree.topic_count()))
}

/// Runs independent mock configurations, `parallel` at a time; output order
/// follows input order.
fn run_many(cfgs: Vec<RunConfig>, parallel: usize) -> Result<Vec<(Vec<IterationReport>, usize)>, EngineError> {
    if parallel <= 1 {
        return cfgs.into_iter().map(run_one).collect();
    }
    let mut out = Vec::with_capacity(cfgs.len());
    for chunk in cfgs.chunks(parallel) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().cloned().map(|c| s.spawn(move || run_one(c))).collect();
            handles.into_iter().map(|h| h.join().expect("run panicked")).collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    /// Per-iteration learnable rate.
    pub reward_rates: Vec<f64>,
    pub random_rates: Vec<f64>,
    pub late_reward: f64,
    pub late_random: f64,
    pub reward_wins: bool,
    pub reward_nodes: usize,
    pub random_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub iterations: usize,
    pub late_window: usize,
    pub seeds: Vec<SeedComparison>,
    /// Seeds where the reward-guided run had the higher late learnable rate.
    pub wins: usize,
    pub mean_difference: f64,
    /// Sample standard deviation of the paired differences.
    pub sd_difference: f64,
}

fn rates(reports: &[IterationReport]) -> Vec<f64> {
    reports.iter().map(|r| r.mean_g).collect()
}

/// Paired reward-guided and uniform runs per seed on identical landscapes.
/// `cfg.workers` runs execute at once.
pub fn run_experiment_random_vs_reward(cfg: &RunConfig, seeds: &[u64]) -> Result<ExperimentReport, EngineError> {
    let mut cfgs = Vec::new();
    for &seed in seeds {
        for mode in [ExplorationMode::Reward, ExplorationMode::Random] {
            cfgs.push(RunConfig { seed, exploration_mode: mode, workers: 1, ..cfg.clone() });
        }
    }
    let runs = run_many(cfgs, cfg.workers)?;
    let window = LATE_WINDOW.min(cfg.iterations);
    let mut comparisons = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let (reward, reward_nodes) = &runs[2 * i];
        let (random, random_nodes) = &runs[2 * i + 1];
        let late_reward = late_learnable_rate(reward, window);
        let late_random = late_learnable_rate(random, window);
        comparisons.push(SeedComparison {
            seed,
            reward_rates: rates(reward),
            random_rates: rates(random),
            late_reward,
            late_random,
            reward_wins: late_reward > late_random,
            reward_nodes: *reward_nodes,
            random_nodes: *random_nodes,
        });
    }
    let diffs: Vec<f64> = comparisons.iter().map(|c| c.late_reward - c.late_random).collect();
    let n = diffs.len() as f64;
    let mean = if diffs.is_empty() { 0.0 } else { diffs.iter().sum::<f64>() / n };
    let sd = if diffs.len() < 2 { 0.0 } else { (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    Ok(ExperimentReport {
        iterations: cfg.iterations,
        late_window: window,
        wins: comparisons.iter().filter(|c| c.reward_wins).count(),
        seeds: comparisons,
        mean_difference: mean,
        sd_difference: sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_depth: usize,
    pub window: usize,
    pub seed: u64,
    pub final_learnable_rate: f64,
    pub total_nodes: usize,
    pub node_counts: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// For every (window, seed): nodes grow strictly with depth.
    pub ordering_holds: bool,
    pub violations: Vec<String>,
}

pub const SWEEP_DEPTHS: [usize; 3] = [2, 3, 4];
pub const SWEEP_WINDOWS: [usize; 3] = [5, 10, 20];

/// One mock run per (depth, window, seed) cell.
pub fn run_sweep(cfg: &RunConfig, depths: &[usize], windows: &[usize], seeds: &[u64]) -> Result<SweepReport, EngineError> {
    let mut cells = Vec::new();
    for &max_depth in depths {
        for &window in windows {
            for &seed in seeds {
                cells.push(RunConfig { max_depth, window, seed, workers: 1, ..cfg.clone() });
            }
        }
    }
    let runs = run_many(cells.clone(), cfg.workers)?;
    let rows: Vec<SweepRow> = cells
        .iter()
        .zip(&runs)
        .map(|(c, (reports, nodes))| SweepRow {
            max_depth: c.max_depth,
            window: c.window,
            seed: c.seed,
            final_learnable_rate: late_learnable_rate(reports, LATE_WINDOW.min(c.iterations)),
            total_nodes: *nodes,
            node_counts: reports.last().map(|r| r.node_counts.clone()).unwrap_or_default(),
        })
        .collect();
    let mut sorted_depths = depths.to_vec();
    sorted_depths.sort_unstable();
    let mut violations = Vec::new();
    for &window in windows {
        for &seed in seeds {
            let counts: Vec<(usize, usize)> = sorted_depths
                .iter()
                .filter_map(|&d| {
                    rows.iter().find(|r| r.max_depth == d && r.window == window && r.seed == seed).map(|r| (d, r.total_nodes))
                })
                .collect();
            for pair in counts.windows(2) {
                if pair[1].1 <= pair[0].1 {
                    violations.push(format!(
                        "window {window}, seed {seed}: depth {} has {} nodes, depth {} has {}",
                        pair[0].0, pair[0].1, pair[1].0, pair[1].1
                    ));
                }
            }
        }
    }
    Ok(SweepReport { rows, ordering_holds: violations.is_empty(), violations })
}
