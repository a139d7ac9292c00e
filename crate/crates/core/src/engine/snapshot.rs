//! `tree.snapshot`: schema version, config hash, the flat node table and the
//! engine state needed to resume (iteration counter, learner skill, pool
//! index, artifact lengths). Random streams are derived from the iteration
//! counter, so no generator state is stored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path as FsPath;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Engine, EngineError, PoolEntry, AUDIT_FILE, BATCHES_FILE, METRICS_FILE, POOLS_DIR, TREE_FILE};
use crate::clients::sim::SimLandscape;
use crate::clients::Clients;
use crate::config::RunConfig;
use crate::corpus::read_pool;
use crate::export::MemorySink;
use crate::tree::{DomainTree, NodeId};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolIndexEntry {
    pub refreshed_at: u64,
    pub uses_since_refresh: u64,
    pub last_used: Option<u64>,
    pub content_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub iteration: u64,
    pub skill: Option<f64>,
    pub pools: BTreeMap<NodeId, PoolIndexEntry>,
    /// Byte lengths of the line-delimited artifacts at snapshot time.
    pub artifact_lengths: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub config_hash: String,
    pub tree: DomainTree,
    pub engine: Option<EngineSnapshot>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    /// Parses a snapshot, checking the schema version before anything else.
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let value: Value = serde_json::from_str(text).map_err(|_| EngineError::SchemaVersion {
            found: None,
            expected: SNAPSHOT_SCHEMA_VERSION,
        })?;
        let found = value.get("schema_version").and_then(Value::as_u64);
        if found != Some(u64::from(SNAPSHOT_SCHEMA_VERSION)) {
            return Err(EngineError::SchemaVersion { found, expected: SNAPSHOT_SCHEMA_VERSION });
        }
        let snap: Snapshot = serde_json::from_value(value).map_err(|e| EngineError::Corrupt(e.to_string()))?;
        let problems = snap.tree.audit();
        if !problems.is_empty() {
            return Err(EngineError::Corrupt(problems.join("; ")));
        }
        Ok(snap)
    }

    pub fn load(path: &FsPath) -> Result<Self, EngineError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn artifact_len(dir: &FsPath, name: &str) -> u64 {
    fs::metadata(dir.join(name)).map_or(0, |m| m.len())
}

impl Engine {
    pub fn snapshot(&self) -> Snapshot {
        let artifact_lengths = match &self.output {
            Some(dir) => [BATCHES_FILE, AUDIT_FILE, METRICS_FILE]
                .into_iter()
                .map(|f| (f.to_owned(), artifact_len(dir, f)))
                .collect(),
            None => BTreeMap::new(),
        };
        Snapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            config_hash: self.cfg.config_hash(),
            tree: self.tree.clone(),
            engine: Some(EngineSnapshot {
                iteration: self.iteration,
                skill: self.landscape.as_ref().map(|l| l.skill()),
                pools: self
                    .pools
                    .iter()
                    .map(|(id, e)| {
                        (
                            *id,
                            PoolIndexEntry {
                                refreshed_at: e.pool.refreshed_at,
                                uses_since_refresh: e.uses_since_refresh,
                                last_used: e.last_used,
                                content_hashes: e.pool.documents.iter().map(|d| d.content_hash.clone()).collect(),
                            },
                        )
                    })
                    .collect(),
                artifact_lengths,
            }),
        }
    }

    /// Writes `tree.snapshot` atomically (temp file, then rename).
    pub fn write_snapshot(&self) -> Result<(), EngineError> {
        let Some(dir) = &self.output else { return Ok(()) };
        let tmp = dir.join(format!("{TREE_FILE}.tmp"));
        fs::write(&tmp, self.snapshot().to_json())?;
        fs::rename(tmp, dir.join(TREE_FILE))?;
        Ok(())
    }

    /// Rebuilds an engine from an output directory. Nothing on disk changes
    /// unless every check passes; then artifacts written after the snapshot
    /// are cut back to their recorded lengths.
    pub fn restore(
        dir: &FsPath,
        cfg: RunConfig,
        clients: Clients,
        landscape: Option<Arc<SimLandscape>>,
    ) -> Result<Self, EngineError> {
        let snap = Snapshot::load(&dir.join(TREE_FILE))?;
        if snap.config_hash != cfg.config_hash() {
            return Err(EngineError::ConfigMismatch { found: snap.config_hash, expected: cfg.config_hash() });
        }
        let state = snap.engine.ok_or_else(|| EngineError::Corrupt("snapshot has no engine state".into()))?;
        let mut pools = BTreeMap::new();
        for (leaf, idx) in &state.pools {
            let pool = read_pool(&dir.join(POOLS_DIR), *leaf, idx.refreshed_at)?;
            let hashes: Vec<String> = pool.documents.iter().map(|d| d.content_hash.clone()).collect();
            if hashes != idx.content_hashes {
                return Err(EngineError::Corrupt(format!("pool file for leaf {leaf} does not match the snapshot")));
            }
            pools.insert(*leaf, PoolEntry { pool, uses_since_refresh: idx.uses_since_refresh, last_used: idx.last_used });
        }
        let mut engine = Engine::new(cfg, clients, landscape)?;
        engine.tree = snap.tree;
        engine.pools = pools;
        engine.iteration = state.iteration;
        if let (Some(l), Some(skill)) = (&engine.landscape, state.skill) {
            l.set_skill(skill);
        }
        for (name, len) in &state.artifact_lengths {
            let f = fs::OpenOptions::new().write(true).create(true).truncate(false).open(dir.join(name))?;
            if f.metadata()?.len() > *len {
                f.set_len(*len)?;
            }
        }
        engine.output = Some(dir.to_path_buf());
        engine.last_batches = MemorySink::default();
        Ok(engine)
    }

    /// Replaces the fresh tree of a not-yet-started engine with an imported one.
    pub fn import_tree(&mut self, tree: DomainTree) -> Result<(), EngineError> {
        if self.iteration != 0 {
            return Err(EngineError::Corrupt("trees can only be imported before the first iteration".into()));
        }
        if tree.max_depth != self.cfg.max_depth {
            return Err(EngineError::Corrupt(format!(
                "imported tree has depth {}, config says {}",
                tree.max_depth, self.cfg.max_depth
            )));
        }
        let problems = tree.audit();
        if !problems.is_empty() {
            return Err(EngineError::Corrupt(problems.join("; ")));
        }
        self.tree = tree;
        self.tree.set_window(self.cfg.window);
        self.write_snapshot()
    }
}
