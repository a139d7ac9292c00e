//! Root-to-leaf path selection.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{expand_unk, DomainTree, ExpandOutcome, ExpansionContext, ExpansionStats, NodeId, NodeKind, Path, TreeError, ROOT_ID};
use crate::config::ExplorationMode;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// One Beta draw per candidate from its windowed parameters; largest wins.
    Thompson,
    /// Uniform among candidates.
    Uniform,
}

impl From<ExplorationMode> for SamplingMode {
    fn from(m: ExplorationMode) -> Self {
        match m {
            ExplorationMode::Reward => SamplingMode::Thompson,
            ExplorationMode::Random => SamplingMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Topic(NodeId),
    Unk(NodeId),
}

/// Picks one selectable child of `parent`: viable topic children and an
/// active unk. Unk nodes always draw from Beta(1, 1). Ties go to the lowest
/// child index.
pub fn choose_child(tree: &DomainTree, parent: NodeId, mode: SamplingMode, rng: &mut StreamRng) -> Result<Choice, TreeError> {
    let node = tree.node(parent)?;
    let candidates: Vec<Choice> = node
        .child_ids
        .iter()
        .filter_map(|&c| {
            let child = &tree.nodes[&c];
            match child.kind {
                NodeKind::Unk if child.active => Some(Choice::Unk(c)),
                NodeKind::Topic if tree.is_viable(c) => Some(Choice::Topic(c)),
                _ => None,
            }
        })
        .collect();
    if candidates.is_empty() {
        return Err(TreeError::NoActiveChildren(parent));
    }
    match mode {
        SamplingMode::Uniform => Ok(candidates[rng.random_range(0..candidates.len())]),
        SamplingMode::Thompson => {
            let mut best = candidates[0];
            let mut best_draw = f64::NEG_INFINITY;
            for c in candidates {
                let (a, b) = match c {
                    Choice::Unk(_) => (1, 1),
                    Choice::Topic(id) => tree.nodes[&id].posterior.effective(),
                };
                let draw = Beta::new(a as f64, b as f64).expect("parameters are at least 1").sample(rng);
                if draw > best_draw {
                    best_draw = draw;
                    best = c;
                }
            }
            Ok(best)
        }
    }
}

/// Descends from the virtual root to a leaf, growing the tree whenever an unk
/// child wins. When a parent's unk reports exhaustion the choice is redrawn at
/// the same depth.
pub fn sample_path(
    tree: &mut DomainTree,
    mode: SamplingMode,
    ctx: &ExpansionContext<'_>,
    rng: &mut StreamRng,
    stats: &mut ExpansionStats,
) -> Result<Path, TreeError> {
    let mut node_ids = vec![ROOT_ID];
    let mut current = ROOT_ID;
    while tree.node(current)?.level < tree.max_depth {
        let next = match choose_child(tree, current, mode, rng)? {
            Choice::Topic(id) => id,
            Choice::Unk(_) => {
                let seed: u64 = rng.random();
                match expand_unk(tree, current, ctx, seed, stats)? {
                    ExpandOutcome::Inserted(id) => id,
                    ExpandOutcome::Exhausted => continue,
                }
            }
        };
        node_ids.push(next);
        current = next;
    }
    Ok(Path { node_ids, leaf_id: current })
}
