//! Run configuration.
//!
//! Defaults reproduce the published hyperparameter table; everything else
//! (endpoints, retry budgets, simulation knobs) is plumbing with documented
//! defaults. The on-disk form is a flat `key = value` file whose keys are the
//! field names of [`RunConfig`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    OutOfRange(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationMode {
    /// Thompson sampling over windowed posteriors.
    Reward,
    /// Uniform choice among active children.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Freeform,
    Mcq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeKind {
    /// Learnable leaves live under a few level-2 branches; the rest are far too hard.
    Clustered,
    /// Every leaf sits near the learner's skill.
    Uniform,
    /// Every leaf is far out of reach, so every document is skipped.
    Extreme,
}

macro_rules! impl_enum_from_str {
    ($ty:ty { $($text:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($variant),)+
                    _ => Err(()),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
                f.write_str(s.as_deref().unwrap_or("?"))
            }
        }
    };
}

impl_enum_from_str!(ExplorationMode { "reward" => ExplorationMode::Reward, "random" => ExplorationMode::Random });
impl_enum_from_str!(PromptVariant { "freeform" => PromptVariant::Freeform, "free-form" => PromptVariant::Freeform, "mcq" => PromptVariant::Mcq });
impl_enum_from_str!(LandscapeKind {
    "clustered" => LandscapeKind::Clustered,
    "uniform" => LandscapeKind::Uniform,
    "extreme" => LandscapeKind::Extreme,
});

pub const DEFAULT_SOLVER_INSTRUCTION: &str =
    "Please reason step by step, and put your final answer within \\boxed{}.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain_label: String,
    /// Maximum tree depth; leaves live at this level.
    pub max_depth: usize,
    /// Root-to-leaf paths sampled per iteration.
    pub paths_per_iteration: usize,
    /// Challenger QA candidates per document.
    pub challenger_samples: usize,
    /// Solver self-consistency samples per question.
    pub solver_samples: usize,
    /// Learnability threshold on solver variance.
    pub tau_var: f64,
    /// Sliding window length for effective posterior parameters.
    pub window: usize,
    /// Title relevance threshold (cosine).
    pub tau_emb: f64,
    /// Label validation threshold (string similarity).
    pub tau_wiki: f64,
    /// Reward for an invalid challenger candidate.
    pub invalid_penalty: f64,
    /// Width of the challenger difficulty band.
    pub sigma: f64,
    pub temperature: f64,
    pub max_doc_tokens: usize,
    pub iterations: usize,
    pub seed: u64,
    pub exploration_mode: ExplorationMode,
    pub prompt_variant: PromptVariant,

    // Passed through to the external trainer untouched.
    pub learning_rate: f64,
    pub kl_coef: f64,
    pub train_batch_size: usize,

    pub policy_endpoint: String,
    pub policy_model: String,
    pub policy_max_tokens: usize,
    pub search_endpoint: String,
    pub embed_endpoint: String,
    pub embed_model: String,
    pub wiki_endpoint: String,
    pub http_timeout_secs: u64,
    pub client_retries: usize,

    pub search_results: usize,
    pub query_parent_prefix: bool,
    /// Iterations a pool may be used before it is fetched again.
    pub pool_refresh_interval: u64,
    pub url_rules_path: Option<String>,
    pub expansion_retries: usize,
    /// Attempts to find a usable path for one batch slot before giving up on it.
    pub path_resamples: usize,
    pub workers: usize,
    pub solver_instruction: String,

    // Offline simulation.
    pub sim_landscape: LandscapeKind,
    pub sim_kappa: f64,
    pub sim_skill_rate: f64,
    pub sim_initial_skill: f64,
    pub sim_invalid_rate: f64,
    pub sim_hallucination_rate: f64,
    pub sim_branch_fanout: usize,
    pub sim_learnable_branches: usize,
    pub sim_min_fanout: usize,
    pub sim_max_fanout: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain_label: "Mathematics".into(),
            max_depth: 4,
            paths_per_iteration: 128,
            challenger_samples: 8,
            solver_samples: 8,
            tau_var: 0.2,
            window: 5,
            tau_emb: 0.5,
            tau_wiki: 0.8,
            invalid_penalty: -0.1,
            sigma: 0.02,
            temperature: 1.0,
            max_doc_tokens: 5992,
            iterations: 50,
            seed: 0,
            exploration_mode: ExplorationMode::Reward,
            prompt_variant: PromptVariant::Freeform,
            learning_rate: 1e-6,
            kl_coef: 0.0,
            train_batch_size: 512,
            policy_endpoint: "http://127.0.0.1:8000/v1".into(),
            policy_model: "policy".into(),
            policy_max_tokens: 4096,
            search_endpoint: "http://127.0.0.1:8001/search".into(),
            embed_endpoint: "http://127.0.0.1:8002/v1".into(),
            embed_model: "all-MiniLM-L6-v2".into(),
            wiki_endpoint: "https://en.wikipedia.org/w/api.php".into(),
            http_timeout_secs: 60,
            client_retries: 2,
            search_results: 20,
            query_parent_prefix: false,
            pool_refresh_interval: 10,
            url_rules_path: None,
            expansion_retries: 3,
            path_resamples: 5,
            workers: 1,
            solver_instruction: DEFAULT_SOLVER_INSTRUCTION.into(),
            sim_landscape: LandscapeKind::Clustered,
            sim_kappa: 4.0,
            sim_skill_rate: 0.02,
            sim_initial_skill: 0.0,
            sim_invalid_rate: 0.1,
            sim_hallucination_rate: 0.15,
            sim_branch_fanout: 4,
            sim_learnable_branches: 1,
            sim_min_fanout: 3,
            sim_max_fanout: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values. `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim().trim_matches('"');
        match key {
            "domain_label" => self.domain_label = v.to_owned(),
            "max_depth" => self.max_depth = parse(key, v)?,
            "paths_per_iteration" => self.paths_per_iteration = parse(key, v)?,
            "challenger_samples" => self.challenger_samples = parse(key, v)?,
            "solver_samples" => self.solver_samples = parse(key, v)?,
            "tau_var" => self.tau_var = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "tau_emb" => self.tau_emb = parse(key, v)?,
            "tau_wiki" => self.tau_wiki = parse(key, v)?,
            "invalid_penalty" => self.invalid_penalty = parse(key, v)?,
            "sigma" => self.sigma = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "max_doc_tokens" => self.max_doc_tokens = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "exploration_mode" => self.exploration_mode = parse(key, v)?,
            "prompt_variant" => self.prompt_variant = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "kl_coef" => self.kl_coef = parse(key, v)?,
            "train_batch_size" => self.train_batch_size = parse(key, v)?,
            "policy_endpoint" => self.policy_endpoint = v.to_owned(),
            "policy_model" => self.policy_model = v.to_owned(),
            "policy_max_tokens" => self.policy_max_tokens = parse(key, v)?,
            "search_endpoint" => self.search_endpoint = v.to_owned(),
            "embed_endpoint" => self.embed_endpoint = v.to_owned(),
            "embed_model" => self.embed_model = v.to_owned(),
            "wiki_endpoint" => self.wiki_endpoint = v.to_owned(),
            "http_timeout_secs" => self.http_timeout_secs = parse(key, v)?,
            "client_retries" => self.client_retries = parse(key, v)?,
            "search_results" => self.search_results = parse(key, v)?,
            "query_parent_prefix" => self.query_parent_prefix = parse(key, v)?,
            "pool_refresh_interval" => self.pool_refresh_interval = parse(key, v)?,
            "url_rules_path" => {
                self.url_rules_path = if v.is_empty() { None } else { Some(v.to_owned()) }
            }
            "expansion_retries" => self.expansion_retries = parse(key, v)?,
            "path_resamples" => self.path_resamples = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "solver_instruction" => self.solver_instruction = v.to_owned(),
            "sim_landscape" => self.sim_landscape = parse(key, v)?,
            "sim_kappa" => self.sim_kappa = parse(key, v)?,
            "sim_skill_rate" => self.sim_skill_rate = parse(key, v)?,
            "sim_initial_skill" => self.sim_initial_skill = parse(key, v)?,
            "sim_invalid_rate" => self.sim_invalid_rate = parse(key, v)?,
            "sim_hallucination_rate" => self.sim_hallucination_rate = parse(key, v)?,
            "sim_branch_fanout" => self.sim_branch_fanout = parse(key, v)?,
            "sim_learnable_branches" => self.sim_learnable_branches = parse(key, v)?,
            "sim_min_fanout" => self.sim_min_fanout = parse(key, v)?,
            "sim_max_fanout" => self.sim_max_fanout = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::OutOfRange(m.to_owned()));
        if !(self.tau_var > 0.0 && self.tau_var <= 0.25) {
            return fail("tau_var must lie in (0, 0.25]");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.max_depth < 2 {
            return fail("max_depth must be at least 2");
        }
        if self.paths_per_iteration == 0 || self.challenger_samples == 0 || self.solver_samples == 0 {
            return fail("paths_per_iteration, challenger_samples and solver_samples must be positive");
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return fail("sigma must be positive");
        }
        if self.invalid_penalty.is_nan() || self.invalid_penalty >= 0.0 {
            return fail("invalid_penalty must be negative");
        }
        if !(-1.0..=1.0).contains(&self.tau_emb) || !(0.0..=1.0).contains(&self.tau_wiki) {
            return fail("tau_emb must lie in [-1, 1] and tau_wiki in [0, 1]");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return fail("temperature must be non-negative");
        }
        if self.max_doc_tokens == 0 || self.workers == 0 {
            return fail("max_doc_tokens and workers must be positive");
        }
        if self.sim_min_fanout == 0 || self.sim_min_fanout > self.sim_max_fanout {
            return fail("sim_min_fanout must be in 1..=sim_max_fanout");
        }
        if self.sim_branch_fanout == 0 || self.sim_learnable_branches > self.sim_branch_fanout {
            return fail("sim_learnable_branches must not exceed sim_branch_fanout");
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form with `iterations` and `workers`
    /// blanked; stored in snapshots.
    pub fn config_hash(&self) -> String {
        let canonical = RunConfig { iterations: 0, workers: 1, ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..16])
    }

    /// Renders the config back into the flat file format.
    pub fn to_kv_string(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let rendered = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {rendered}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_hyperparameter_table() {
        let c = RunConfig::default();
        assert_eq!(c.paths_per_iteration, 128);
        assert_eq!(c.train_batch_size, 512);
        assert_eq!(c.max_depth, 4);
        assert_eq!(c.tau_var, 0.2);
        assert_eq!(c.window, 5);
        assert_eq!(c.tau_emb, 0.5);
        assert_eq!(c.tau_wiki, 0.8);
        assert_eq!(c.challenger_samples, 8);
        assert_eq!(c.solver_samples, 8);
        assert_eq!(c.invalid_penalty, -0.1);
        assert_eq!(c.sigma, 0.02);
        assert_eq!(c.kl_coef, 0.0);
        assert_eq!(c.learning_rate, 1e-6);
        assert_eq!(c.iterations, 50);
        assert_eq!(c.max_doc_tokens, 5992);
        assert_eq!(c.temperature, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn kv_file_overrides_and_round_trips() {
        let mut c = RunConfig::default();
        c.apply_str("# comment\nmax_depth = 3\nwindow=10\nexploration_mode = random\nurl_rules_path = rules.txt\n")
            .unwrap();
        assert_eq!(c.max_depth, 3);
        assert_eq!(c.window, 10);
        assert_eq!(c.exploration_mode, ExplorationMode::Random);
        assert_eq!(c.url_rules_path.as_deref(), Some("rules.txt"));

        let mut back = RunConfig::default();
        back.apply_str(&c.to_kv_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_hash(), c.config_hash());
    }

    #[test]
    fn rejects_unknown_keys_and_out_of_range_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_str("nope = 1"), Err(ConfigError::UnknownKey(_))));
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_str("tau_var = 0.3"), Err(ConfigError::OutOfRange(_))));
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_str("window = 0"), Err(ConfigError::OutOfRange(_))));
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_str("max_depth = 1"), Err(ConfigError::OutOfRange(_))));
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_str("window"), Err(ConfigError::Syntax { line: 1 })));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
