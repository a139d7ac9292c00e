//! The iteration loop: sample paths, make sure each leaf has a document pool,
//! run self-play per path, export batches, feed learnability back into the
//! tree and (offline) advance the simulated learner.

mod experiments;
mod snapshot;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use experiments::{
    late_learnable_rate, run_experiment_random_vs_reward, run_sweep, ExperimentReport, SeedComparison, SweepReport,
    SweepRow, LATE_WINDOW, SWEEP_DEPTHS, SWEEP_WINDOWS,
};
pub use snapshot::{EngineSnapshot, PoolIndexEntry, Snapshot, SNAPSHOT_SCHEMA_VERSION};

use crate::clients::embed::HashEmbedder;
use crate::clients::sim::{ConceptUniverse, SimLandscape, SimPolicy, SimWeb};
use crate::clients::wiki::MockWiki;
use crate::clients::{ClientError, Clients, ReferenceVerifier, WhitespaceTokenizer};
use crate::config::{ExplorationMode, RunConfig};
use crate::corpus::{self, CorpusError, CorpusPool, PipelineContext, PipelineStats, UrlRules};
use crate::export::{export_batches, BatchSink, ExportContext, ExportError, JsonlSink, MemorySink, TrainerPassthrough};
use crate::rng::{derive_seed, kind, stream};
use crate::selfplay::{process_document, DocumentResult};
use crate::tree::{sample_path, DomainTree, ExpansionContext, ExpansionStats, NodeId, Path, SamplingMode, TreeError};

pub const TREE_FILE: &str = "tree.snapshot";
pub const POOLS_DIR: &str = "pools";
pub const BATCHES_FILE: &str = "batches.jsonl";
pub const AUDIT_FILE: &str = "selfplay_audit.jsonl";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("client failure: {0}")]
    Client(#[from] ClientError),
    #[error("tree error: {0}")]
    Tree(TreeError),
    #[error("export error: {0}")]
    Export(#[from] ExportError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot schema version {found:?} is not supported (expected {expected})")]
    SchemaVersion { found: Option<u64>, expected: u32 },
    #[error("snapshot was written for config {found}, current config is {expected}")]
    ConfigMismatch { found: String, expected: String },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

impl From<TreeError> for EngineError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::Client(c) => EngineError::Client(c),
            other => EngineError::Tree(other),
        }
    }
}

/// A leaf's pool plus how many iterations have used it since it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub pool: CorpusPool,
    pub uses_since_refresh: u64,
    pub last_used: Option<u64>,
}

/// Counts for one iteration; also the line written to `metrics.jsonl`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u64,
    pub paths_sampled: usize,
    pub unsampled_slots: usize,
    pub path_resamples: usize,
    pub empty_pools: usize,
    pub expansion: ExpansionStats,
    pub pool_builds: usize,
    pub pipeline: PipelineStats,
    pub skipped: usize,
    pub processed: usize,
    pub batches: usize,
    pub observations: usize,
    pub learnable: usize,
    /// Mean g over non-skipped paths, i.e. the learnable rate.
    pub mean_g: f64,
    pub skill: Option<f64>,
    pub node_counts: BTreeMap<usize, usize>,
    pub total_nodes: usize,
    /// Non-skipped paths per level-2 branch label.
    pub branch_paths: BTreeMap<String, usize>,
}

/// Builds the offline collaborators for `cfg`.
pub fn mock_clients(cfg: &RunConfig) -> (Clients, Arc<SimLandscape>) {
    let universe = Arc::new(ConceptUniverse::from_config(cfg));
    let landscape = Arc::new(SimLandscape::new(cfg, &universe));
    let clients = Clients {
        policy: Arc::new(SimPolicy::new(cfg, universe.clone(), landscape.clone())),
        search: Arc::new(SimWeb),
        fetcher: Arc::new(SimWeb),
        embedder: Arc::new(HashEmbedder::default()),
        verifier: Arc::new(ReferenceVerifier),
        wiki: Arc::new(MockWiki::new(Some(universe))),
        tokens: Arc::new(WhitespaceTokenizer),
    };
    (clients, landscape)
}

/// Builds HTTP-backed collaborators for `cfg`.
#[cfg(feature = "http")]
pub fn http_clients(cfg: &RunConfig) -> Clients {
    use crate::clients::http::{HttpEmbedder, HttpPolicy, HttpWeb, HttpWiki};
    let web = Arc::new(HttpWeb::new(cfg));
    Clients {
        policy: Arc::new(HttpPolicy::new(cfg)),
        search: web.clone(),
        fetcher: web,
        embedder: Arc::new(HttpEmbedder::new(cfg)),
        verifier: Arc::new(ReferenceVerifier),
        wiki: Arc::new(HttpWiki::new(cfg)),
        tokens: Arc::new(WhitespaceTokenizer),
    }
}

pub fn load_rules(cfg: &RunConfig) -> std::io::Result<UrlRules> {
    match &cfg.url_rules_path {
        Some(p) => UrlRules::load(FsPath::new(p)),
        None => Ok(UrlRules::defaults()),
    }
}

struct Job {
    slot: usize,
    path: Path,
    labels: Vec<String>,
    leaf: NodeId,
    doc_index: usize,
}

pub struct Engine {
    pub cfg: RunConfig,
    pub tree: DomainTree,
    pub clients: Clients,
    pub landscape: Option<Arc<SimLandscape>>,
    pub rules: UrlRules,
    pub pools: BTreeMap<NodeId, PoolEntry>,
    /// Iterations completed so far.
    pub iteration: u64,
    pub output: Option<PathBuf>,
    /// Batches of the most recent iteration (kept when there is no output dir).
    pub last_batches: MemorySink,
}

impl Engine {
    pub fn new(cfg: RunConfig, clients: Clients, landscape: Option<Arc<SimLandscape>>) -> Result<Self, EngineError> {
        cfg.validate().map_err(|e| EngineError::Corrupt(e.to_string()))?;
        let rules = load_rules(&cfg)?;
        Ok(Self {
            tree: DomainTree::new(&cfg.domain_label, cfg.max_depth, cfg.window),
            cfg,
            clients,
            landscape,
            rules,
            pools: BTreeMap::new(),
            iteration: 0,
            output: None,
            last_batches: MemorySink::default(),
        })
    }

    /// Offline engine with simulated clients.
    pub fn mock(cfg: RunConfig) -> Result<Self, EngineError> {
        let (clients, landscape) = mock_clients(&cfg);
        Self::new(cfg, clients, Some(landscape))
    }

    /// Starts writing artifacts under `dir` (existing artifacts are replaced).
    pub fn with_output(mut self, dir: &FsPath) -> Result<Self, EngineError> {
        fs::create_dir_all(dir.join(POOLS_DIR))?;
        for f in [BATCHES_FILE, AUDIT_FILE, METRICS_FILE] {
            fs::write(dir.join(f), b"")?;
        }
        fs::write(dir.join(CONFIG_FILE), self.cfg.to_kv_string())?;
        self.output = Some(dir.to_path_buf());
        self.write_snapshot()?;
        Ok(self)
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        self.cfg.exploration_mode.into()
    }

    fn pool_needs_build(&self, leaf: NodeId) -> bool {
        match self.pools.get(&leaf) {
            None => true,
            Some(e) => {
                e.pool.documents.is_empty()
                    || (e.last_used != Some(self.iteration) && e.uses_since_refresh >= self.cfg.pool_refresh_interval)
            }
        }
    }

    /// Makes sure `leaf` has a usable pool; returns its size.
    fn ensure_pool(&mut self, leaf: NodeId, report: &mut IterationReport) -> Result<Option<usize>, EngineError> {
        if self.pool_needs_build(leaf) {
            let labels = self.tree.label_path(leaf);
            let label = labels.last().cloned().unwrap_or_default();
            let parent = labels.len().checked_sub(2).map(|i| labels[i].as_str());
            let ctx = PipelineContext {
                search: self.clients.search.as_ref(),
                fetcher: self.clients.fetcher.as_ref(),
                embedder: self.clients.embedder.as_ref(),
                tokens: self.clients.tokens.as_ref(),
                rules: &self.rules,
                cfg: &self.cfg,
            };
            report.pool_builds += 1;
            match corpus::build_pool(leaf, &label, parent, &ctx, self.iteration) {
                Ok(build) => {
                    report.pipeline.add(&build.stats);
                    if let Some(dir) = &self.output {
                        corpus::write_pool(&dir.join(POOLS_DIR), &build.pool)?;
                    }
                    self.pools.insert(leaf, PoolEntry { pool: build.pool, uses_since_refresh: 0, last_used: None });
                }
                Err(CorpusError::EmptyPool { stats, .. }) => {
                    report.pipeline.add(&stats);
                    self.pools.remove(&leaf);
                    return Ok(None);
                }
                Err(CorpusError::Search(e)) => return Err(e.into()),
            }
        }
        let entry = self.pools.get_mut(&leaf).expect("pool present");
        if entry.last_used != Some(self.iteration) {
            entry.last_used = Some(self.iteration);
            entry.uses_since_refresh += 1;
        }
        Ok(Some(entry.pool.documents.len()))
    }

    /// Picks a path (and its leaf pool) for one batch slot.
    fn sample_slot(&mut self, slot: usize, stats: &mut ExpansionStats, report: &mut IterationReport) -> Result<Option<(Path, usize)>, EngineError> {
        let mode = self.sampling_mode();
        for attempt in 0..=self.cfg.path_resamples {
            if attempt > 0 {
                report.path_resamples += 1;
            }
            let mut rng = stream(self.cfg.seed, &[kind::SAMPLE_PATH, self.iteration, slot as u64, attempt as u64]);
            let ctx = ExpansionContext { policy: self.clients.policy.as_ref(), wiki: self.clients.wiki.as_ref(), cfg: &self.cfg };
            let path = match sample_path(&mut self.tree, mode, &ctx, &mut rng, stats) {
                Ok(p) => p,
                Err(TreeError::RetryBudgetExceeded { .. } | TreeError::NoActiveChildren(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            match self.ensure_pool(path.leaf_id, report)? {
                Some(n) => return Ok(Some((path, n))),
                None => report.empty_pools += 1,
            }
        }
        Ok(None)
    }

    /// Runs one full iteration.
    pub fn run_iteration(&mut self) -> Result<IterationReport, EngineError> {
        let t = self.iteration;
        let mut report = IterationReport { iteration: t, ..Default::default() };
        let mut stats = ExpansionStats::default();

        // Path sampling and pool acquisition, serialized through this owner.
        let mut jobs = Vec::with_capacity(self.cfg.paths_per_iteration);
        let mut leaf_hits: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut orders: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for slot in 0..self.cfg.paths_per_iteration {
            let Some((path, pool_len)) = self.sample_slot(slot, &mut stats, &mut report)? else {
                report.unsampled_slots += 1;
                continue;
            };
            let leaf = path.leaf_id;
            let order = orders.entry(leaf).or_insert_with(|| {
                let mut o: Vec<usize> = (0..pool_len).collect();
                o.shuffle(&mut stream(self.cfg.seed, &[kind::DOC_PICK, t, leaf]));
                o
            });
            let k = leaf_hits.entry(leaf).or_insert(0);
            let doc_index = order[*k % order.len()];
            *k += 1;
            let labels = self.tree.path_labels(&path);
            jobs.push(Job { slot, path, labels, leaf, doc_index });
        }
        report.paths_sampled = jobs.len();
        report.expansion = stats;

        let results = self.run_jobs(&jobs);

        // Feedback in path order.
        let mut groups = Vec::new();
        let mut audit_lines = String::new();
        let mut signal = 0.0;
        for (job, result) in jobs.iter().zip(&results) {
            audit_lines.push_str(&serde_json::to_string(&result.audit).expect("audit serializes"));
            audit_lines.push('\n');
            let Some(g) = result.learnable else {
                report.skipped += 1;
                continue;
            };
            report.processed += 1;
            signal += result.solver_signal;
            groups.extend(result.groups.iter().cloned().map(|grp| (job.leaf, grp)));
            self.tree.record_observation(&job.path, g)?;
            report.observations += 1;
            if g {
                report.learnable += 1;
            }
            if let Some(branch) = job.labels.get(1) {
                *report.branch_paths.entry(branch.clone()).or_insert(0) += 1;
            }
        }
        let ctx = ExportContext { iteration: t, passthrough: TrainerPassthrough::from_config(&self.cfg) };
        self.last_batches = MemorySink::default();
        report.batches = match &self.output {
            Some(dir) => {
                let mut sink = JsonlSink::append(&dir.join(BATCHES_FILE))?;
                export_batches(&groups, &ctx, &mut sink as &mut dyn BatchSink)?
            }
            None => export_batches(&groups, &ctx, &mut self.last_batches)?,
        };
        if let Some(l) = &self.landscape {
            l.advance(signal, self.cfg.paths_per_iteration);
            report.skill = Some(l.skill());
        }
        if report.processed > 0 {
            report.mean_g = report.learnable as f64 / report.processed as f64;
        }
        report.node_counts = self.tree.node_count_by_level();
        report.total_nodes = self.tree.topic_count();
        self.iteration += 1;
        if let Some(dir) = &self.output {
            append(&dir.join(AUDIT_FILE), &audit_lines)?;
            append(&dir.join(METRICS_FILE), &format!("{}\n", serde_json::to_string(&report).expect("report serializes")))?;
            self.write_snapshot()?;
        }
        Ok(report)
    }

    /// Self-play for every job; fans out over `workers` threads when asked.
    fn run_jobs(&self, jobs: &[Job]) -> Vec<DocumentResult> {
        let run = |job: &Job| {
            let doc = &self.pools[&job.leaf].pool.documents[job.doc_index];
            process_document(
                doc,
                &job.labels,
                self.clients.policy.as_ref(),
                self.clients.verifier.as_ref(),
                &self.cfg,
                derive_seed(self.cfg.seed, &[self.iteration, job.slot as u64]),
                self.iteration,
                job.slot,
            )
        };
        let workers = self.cfg.workers.min(jobs.len()).max(1);
        if workers == 1 {
            return jobs.iter().map(run).collect();
        }
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.chunks(chunk).map(|c| s.spawn(move || c.iter().map(run).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    }

    /// Runs until `cfg.iterations` iterations are complete.
    pub fn run_to_end(&mut self) -> Result<Vec<IterationReport>, EngineError> {
        let mut reports = Vec::new();
        while self.iteration < self.cfg.iterations as u64 {
            reports.push(self.run_iteration()?);
        }
        Ok(reports)
    }

    pub fn exploration_mode(&self) -> ExplorationMode {
        self.cfg.exploration_mode
    }
}

fn append(path: &FsPath, text: &str) -> std::io::Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(text.as_bytes())
}
