//! wasm-bindgen bindings behind `www/index.html`. Every export returns a JSON
//! string so the page needs no generated typings.

use serde_json::json;
use wasm_bindgen::prelude::*;

use selfplay_tree::config::{ExplorationMode, RunConfig};
use selfplay_tree::engine::Engine;
use selfplay_tree::rng::stream;
use selfplay_tree::selfplay::challenger_reward;
use selfplay_tree::tree::{choose_child, Choice, DomainTree, NodeId, NodeKind, Path, SamplingMode, DOMAIN_ID, ROOT_ID};

/// Thompson selection shares among the domain's children.
///
/// `windows` holds one child per line, written as a string of `0`/`1`
/// outcomes, oldest first. With `with_unk` the domain keeps its unk child.
#[wasm_bindgen]
pub fn thompson_shares(windows: &str, window: usize, with_unk: bool, draws: usize, seed: u64) -> Result<String, JsError> {
    let rows: Vec<&str> = windows.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if rows.is_empty() && !with_unk {
        return Err(JsError::new("no children to choose from"));
    }
    let mut tree = DomainTree::new("Domain", 2, window.max(1));
    let mut ids = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let id = tree.insert_topic(DOMAIN_ID, &format!("child {}", i + 1)).map_err(|e| JsError::new(&e.to_string()))?;
        let path = Path { node_ids: vec![ROOT_ID, DOMAIN_ID, id], leaf_id: id };
        for c in row.chars() {
            let g = match c {
                '1' => true,
                '0' => false,
                other => return Err(JsError::new(&format!("line {}: unexpected {other:?}", i + 1))),
            };
            tree.record_observation(&path, g).map_err(|e| JsError::new(&e.to_string()))?;
        }
        ids.push(id);
    }
    if !with_unk {
        tree.deactivate_unk(DOMAIN_ID).map_err(|e| JsError::new(&e.to_string()))?;
    }
    let mut rng = stream(seed, &[]);
    let mut counts = std::collections::BTreeMap::<NodeId, usize>::new();
    for _ in 0..draws {
        let id = match choose_child(&tree, DOMAIN_ID, SamplingMode::Thompson, &mut rng).map_err(|e| JsError::new(&e.to_string()))? {
            Choice::Topic(id) | Choice::Unk(id) => id,
        };
        *counts.entry(id).or_default() += 1;
    }
    let share = |id: NodeId| counts.get(&id).copied().unwrap_or(0) as f64 / draws.max(1) as f64;
    let mut out: Vec<_> = ids
        .iter()
        .map(|&id| {
            let (a, b) = tree.nodes[&id].posterior.effective();
            json!({ "label": tree.nodes[&id].label, "alpha": a, "beta": b, "share": share(id) })
        })
        .collect();
    if let Some(unk) = tree.unk_child(DOMAIN_ID).filter(|_| with_unk) {
        out.push(json!({ "label": "unk", "alpha": 1, "beta": 1, "share": share(unk) }));
    }
    Ok(json!(out).to_string())
}

/// Challenger reward against solver variance on `points` evenly spaced
/// values in [0, 0.25], plus the reward of an invalid question.
#[wasm_bindgen]
pub fn reward_curve(sigma: f64, invalid_penalty: f64, points: usize) -> Result<String, JsError> {
    if sigma.is_nan() || sigma <= 0.0 || points < 2 {
        return Err(JsError::new("sigma must be positive and points at least 2"));
    }
    let curve: Vec<_> = (0..points)
        .map(|i| {
            let var = 0.25 * i as f64 / (points - 1) as f64;
            json!([var, challenger_reward(true, var, sigma, invalid_penalty)])
        })
        .collect();
    let invalid = challenger_reward(false, 0.0, sigma, invalid_penalty);
    Ok(json!({ "curve": curve, "invalid": invalid }).to_string())
}

/// An offline run driven one iteration at a time.
#[wasm_bindgen]
pub struct TreeGrowth {
    engine: Engine,
}

#[wasm_bindgen]
impl TreeGrowth {
    #[wasm_bindgen(constructor)]
    pub fn new(max_depth: usize, paths: usize, window: usize, random: bool, seed: u64) -> Result<TreeGrowth, JsError> {
        let cfg = RunConfig {
            max_depth,
            paths_per_iteration: paths,
            window,
            seed,
            exploration_mode: if random { ExplorationMode::Random } else { ExplorationMode::Reward },
            iterations: usize::MAX,
            workers: 1,
            ..RunConfig::default()
        };
        let engine = Engine::mock(cfg).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(TreeGrowth { engine })
    }

    /// Runs one iteration and returns its summary.
    pub fn step(&mut self) -> Result<String, JsError> {
        let r = self.engine.run_iteration().map_err(|e| JsError::new(&e.to_string()))?;
        Ok(json!({
            "iteration": r.iteration + 1,
            "learnable_rate": r.mean_g,
            "processed": r.processed,
            "skipped": r.skipped,
            "total_nodes": r.total_nodes,
            "node_counts": r.node_counts,
            "skill": r.skill,
        })
        .to_string())
    }

    /// Current topic tree as nested `{label, alpha, beta, children}` objects.
    pub fn tree(&self) -> String {
        render_node(&self.engine.tree, DOMAIN_ID).to_string()
    }
}

fn render_node(tree: &DomainTree, id: NodeId) -> serde_json::Value {
    let node = &tree.nodes[&id];
    let (a, b) = node.posterior.effective();
    let children: Vec<_> = node
        .child_ids
        .iter()
        .filter(|c| tree.nodes[*c].kind == NodeKind::Topic)
        .map(|&c| render_node(tree, c))
        .collect();
    json!({ "label": node.label, "alpha": a, "beta": b, "children": children })
}
