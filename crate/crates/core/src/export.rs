//! Group-centered advantages and training-batch export.
//!
//! Each [`TrainingBatch`] is one JSON line. Field names are fixed:
//! `schema_version`, `role`, `prompt`, `responses`, `rewards`, `advantages`,
//! `group_id`, `iteration`, `path_leaf`, `trainer_passthrough`
//! (`learning_rate`, `kl_coef`, `train_batch_size`).

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::Role;
use crate::config::RunConfig;
use crate::selfplay::RewardGroup;
use crate::tree::NodeId;

pub const BATCH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ExportError {
    #[error("reward group is empty")]
    EmptyGroup,
    #[error("sink write failed: {0}")]
    Sink(String),
}

/// `r_i - mean(r)`, with no scaling.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>, ExportError> {
    if rewards.is_empty() {
        return Err(ExportError::EmptyGroup);
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(rewards.iter().map(|r| r - mean).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerPassthrough {
    pub learning_rate: f64,
    pub kl_coef: f64,
    pub train_batch_size: usize,
}

impl TrainerPassthrough {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self { learning_rate: cfg.learning_rate, kl_coef: cfg.kl_coef, train_batch_size: cfg.train_batch_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch {
    pub schema_version: u32,
    pub role: Role,
    pub prompt: String,
    pub responses: Vec<String>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub group_id: String,
    pub iteration: u64,
    pub path_leaf: NodeId,
    pub trainer_passthrough: TrainerPassthrough,
}

pub trait BatchSink {
    fn write(&mut self, batch: &TrainingBatch) -> Result<(), String>;
    fn flush(&mut self) -> Result<(), String> {
        Ok(())
    }
}

/// Keeps batches in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub batches: Vec<TrainingBatch>,
}

impl BatchSink for MemorySink {
    fn write(&mut self, batch: &TrainingBatch) -> Result<(), String> {
        self.batches.push(batch.clone());
        Ok(())
    }
}

/// Appends one JSON line per batch.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: BufWriter::new(file) })
    }
}

impl BatchSink for JsonlSink {
    fn write(&mut self, batch: &TrainingBatch) -> Result<(), String> {
        let mut line = serde_json::to_string(batch).map_err(|e| e.to_string())?;
        line.push('\n');
        self.out.write_all(line.as_bytes()).map_err(|e| e.to_string())
    }

    fn flush(&mut self) -> Result<(), String> {
        self.out.flush().map_err(|e| e.to_string())
    }
}

/// Per-iteration metadata attached to every exported batch.
#[derive(Debug, Clone, Copy)]
pub struct ExportContext {
    pub iteration: u64,
    pub passthrough: TrainerPassthrough,
}

/// One batch per group, in the given order. A failed write is retried once.
pub fn export_batches(
    groups: &[(NodeId, RewardGroup)],
    ctx: &ExportContext,
    sink: &mut dyn BatchSink,
) -> Result<usize, ExportError> {
    let mut written = 0;
    for (index, (leaf, group)) in groups.iter().enumerate() {
        let batch = TrainingBatch {
            schema_version: BATCH_SCHEMA_VERSION,
            role: group.role,
            prompt: group.prompt.clone(),
            responses: group.responses.clone(),
            rewards: group.rewards.clone(),
            advantages: compute_advantages(&group.rewards)?,
            group_id: format!("it{:05}-g{index:05}", ctx.iteration),
            iteration: ctx.iteration,
            path_leaf: *leaf,
            trainer_passthrough: ctx.passthrough,
        };
        sink.write(&batch).or_else(|_| sink.write(&batch)).map_err(ExportError::Sink)?;
        written += 1;
    }
    sink.flush().map_err(ExportError::Sink)?;
    Ok(written)
}
