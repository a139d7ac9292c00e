//! Self-play curriculum engine.
//!
//! A concept tree is grown on demand and sampled root to leaf by Thompson
//! sampling over windowed Beta posteriors. Each sampled leaf gets a pool of
//! cleaned web documents; a challenger writes questions from a document, a
//! solver answers them without it, and the solver's self-consistency decides
//! both the rewards and whether the path counts as learnable. Advantages are
//! exported as JSON lines for an external trainer.
//!
//! Everything runs offline against deterministic simulated clients; the
//! `http` feature adds real endpoints behind the same interfaces.

pub mod clients;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod export;
pub mod prompts;
pub mod rng;
pub mod selfplay;
pub mod tree;

pub use config::RunConfig;
pub use engine::{Engine, EngineError, IterationReport};
