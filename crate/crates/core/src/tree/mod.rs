//! The layered concept tree.
//!
//! Level 0 is a virtual root, level 1 the domain node, level `max_depth` the
//! knowledge points. Every non-leaf topic node owns one unk child, a
//! placeholder whose selection asks the policy for a new sibling concept.

mod expansion;
mod posterior;
mod sampling;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expansion::{
    duplicate_key, expand_unk, label_similarity, validate_label, ExpandOutcome, ExpansionContext, ExpansionStats,
    LabelCheck,
};
pub use posterior::PosteriorState;
pub use sampling::{choose_child, sample_path, Choice, SamplingMode};

use crate::clients::ClientError;

pub type NodeId = u64;

pub const ROOT_LABEL: &str = "<root>";
pub const UNK_LABEL: &str = "<unk>";
pub const ROOT_ID: NodeId = 0;
pub const DOMAIN_ID: NodeId = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    VirtualRoot,
    Topic,
    Unk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub label: String,
    pub level: usize,
    pub kind: NodeKind,
    pub parent_id: Option<NodeId>,
    pub child_ids: Vec<NodeId>,
    pub posterior: PosteriorState,
    pub active: bool,
}

/// A root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub node_ids: Vec<NodeId>,
    pub leaf_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("node {0} has no selectable children")]
    NoActiveChildren(NodeId),
    #[error("no valid label for parent {parent} within {attempts} attempts")]
    RetryBudgetExceeded { parent: NodeId, attempts: usize },
    #[error("label {label:?} already exists under node {parent}")]
    DuplicateLabel { parent: NodeId, label: String },
    #[error("node {0} cannot take children")]
    NotExpandable(NodeId),
    #[error("node {0} has no active unk child")]
    NoUnk(NodeId),
    #[error("policy call failed: {0}")]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTree {
    pub max_depth: usize,
    pub window: usize,
    pub next_id: NodeId,
    pub nodes: BTreeMap<NodeId, TreeNode>,
}

impl DomainTree {
    /// Virtual root, domain node and the domain's unk child.
    pub fn new(domain_label: &str, max_depth: usize, window: usize) -> Self {
        assert!(max_depth >= 2, "max_depth must be at least 2");
        let mut tree = Self { max_depth, window, next_id: 0, nodes: BTreeMap::new() };
        let root = tree.push_node(ROOT_LABEL, 0, NodeKind::VirtualRoot, None);
        tree.push_topic(root, domain_label);
        tree
    }

    fn push_node(&mut self, label: &str, level: usize, kind: NodeKind, parent: Option<NodeId>) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            TreeNode {
                id,
                label: label.to_owned(),
                level,
                kind,
                parent_id: parent,
                child_ids: Vec::new(),
                posterior: PosteriorState::default(),
                active: true,
            },
        );
        if let Some(p) = parent {
            self.nodes.get_mut(&p).expect("parent exists").child_ids.push(id);
        }
        id
    }

    fn push_topic(&mut self, parent: NodeId, label: &str) -> NodeId {
        let level = self.nodes[&parent].level + 1;
        let id = self.push_node(label, level, NodeKind::Topic, Some(parent));
        if level < self.max_depth {
            self.push_node(UNK_LABEL, level + 1, NodeKind::Unk, Some(id));
        }
        id
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(&id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_leaf_level(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(|n| n.level == self.max_depth)
    }

    /// Topic children in insertion order.
    pub fn topic_children(&self, id: NodeId) -> Vec<&TreeNode> {
        self.nodes
            .get(&id)
            .map(|n| n.child_ids.iter().map(|c| &self.nodes[c]).filter(|c| c.kind == NodeKind::Topic).collect())
            .unwrap_or_default()
    }

    pub fn child_labels(&self, id: NodeId) -> Vec<String> {
        self.topic_children(id).into_iter().map(|c| c.label.clone()).collect()
    }

    pub fn unk_child(&self, id: NodeId) -> Option<NodeId> {
        self.nodes.get(&id)?.child_ids.iter().copied().find(|c| self.nodes[c].kind == NodeKind::Unk)
    }

    /// Labels from the domain node down to `id`.
    pub fn label_path(&self, id: NodeId) -> Vec<String> {
        let mut labels = Vec::new();
        let mut cur = self.nodes.get(&id);
        while let Some(n) = cur {
            if n.kind == NodeKind::Topic {
                labels.push(n.label.clone());
            }
            cur = n.parent_id.and_then(|p| self.nodes.get(&p));
        }
        labels.reverse();
        labels
    }

    pub fn path_labels(&self, path: &Path) -> Vec<String> {
        self.label_path(path.leaf_id)
    }

    /// Adds a topic child (plus its unk when below the leaf level).
    pub fn insert_topic(&mut self, parent: NodeId, label: &str) -> Result<NodeId, TreeError> {
        let p = self.node(parent)?;
        if p.kind == NodeKind::Unk || p.level >= self.max_depth {
            return Err(TreeError::NotExpandable(parent));
        }
        let key = duplicate_key(label);
        if self.topic_children(parent).iter().any(|c| duplicate_key(&c.label) == key) {
            return Err(TreeError::DuplicateLabel { parent, label: label.to_owned() });
        }
        Ok(self.push_topic(parent, label))
    }

    pub fn deactivate_unk(&mut self, parent: NodeId) -> Result<(), TreeError> {
        let unk = self.unk_child(parent).ok_or(TreeError::NoUnk(parent))?;
        self.nodes.get_mut(&unk).expect("unk exists").active = false;
        Ok(())
    }

    /// One learnability observation on every node of the path.
    pub fn record_observation(&mut self, path: &Path, learnable: bool) -> Result<(), TreeError> {
        if let Some(missing) = path.node_ids.iter().find(|id| !self.nodes.contains_key(id)) {
            return Err(TreeError::UnknownNode(*missing));
        }
        for id in &path.node_ids {
            self.nodes.get_mut(id).expect("checked above").posterior.record(learnable, self.window);
        }
        Ok(())
    }

    /// Topic nodes per level (virtual root and unk excluded).
    pub fn node_count_by_level(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for n in self.nodes.values().filter(|n| n.kind == NodeKind::Topic && n.active) {
            *counts.entry(n.level).or_insert(0) += 1;
        }
        counts
    }

    pub fn topic_count(&self) -> usize {
        self.node_count_by_level().values().sum()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Topic && n.level == self.max_depth)
            .map(|n| n.id)
            .collect()
    }

    /// Whether a leaf can still be reached (or grown) below `id`.
    pub fn is_viable(&self, id: NodeId) -> bool {
        let Some(n) = self.nodes.get(&id) else { return false };
        match n.kind {
            NodeKind::Unk => n.active,
            _ if n.level == self.max_depth => true,
            _ => n.child_ids.iter().any(|c| self.is_viable(*c)),
        }
    }

    /// Changes the window length, dropping the oldest observations that no longer fit.
    pub fn set_window(&mut self, window: usize) {
        self.window = window;
        for n in self.nodes.values_mut() {
            while n.posterior.window.len() > window {
                n.posterior.window.pop_front();
            }
        }
    }

    /// Checks the structural invariants; returns one message per violation.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let roots: Vec<_> = self.nodes.values().filter(|n| n.kind == NodeKind::VirtualRoot).collect();
        if roots.len() != 1 || roots[0].id != ROOT_ID || roots[0].level != 0 || roots[0].parent_id.is_some() {
            problems.push("exactly one virtual root at level 0 without parent".to_owned());
        }
        for n in self.nodes.values() {
            if n.id >= self.next_id {
                problems.push(format!("node {} beyond next_id", n.id));
            }
            if let Some(p) = n.parent_id {
                match self.nodes.get(&p) {
                    Some(parent) if parent.level + 1 == n.level && parent.child_ids.contains(&n.id) => {}
                    _ => problems.push(format!("node {} has an inconsistent parent link", n.id)),
                }
            } else if n.kind != NodeKind::VirtualRoot {
                problems.push(format!("node {} has no parent", n.id));
            }
            if n.level > self.max_depth {
                problems.push(format!("node {} below the leaf level", n.id));
            }
            if n.posterior.window.len() > self.window {
                problems.push(format!("node {} window overflow", n.id));
            }
            if n.posterior.cumulative_alpha < 1 || n.posterior.cumulative_beta < 1 {
                problems.push(format!("node {} posterior below prior", n.id));
            }
            for c in &n.child_ids {
                if self.nodes.get(c).map(|cn| cn.parent_id) != Some(Some(n.id)) {
                    problems.push(format!("node {} lists foreign child {c}", n.id));
                }
            }
            match n.kind {
                NodeKind::Unk => {
                    if !n.child_ids.is_empty() || n.posterior != PosteriorState::default() {
                        problems.push(format!("unk {} has children or observations", n.id));
                    }
                }
                NodeKind::Topic if n.level == self.max_depth => {
                    if !n.child_ids.is_empty() {
                        problems.push(format!("leaf {} has children", n.id));
                    }
                }
                NodeKind::Topic => {
                    let unks = n.child_ids.iter().filter(|c| self.nodes[c].kind == NodeKind::Unk).count();
                    if unks != 1 {
                        problems.push(format!("topic {} has {unks} unk children", n.id));
                    }
                }
                NodeKind::VirtualRoot => {
                    if n.child_ids.iter().any(|c| self.nodes[c].kind == NodeKind::Unk) {
                        problems.push("virtual root has an unk child".to_owned());
                    }
                }
            }
            let mut keys: Vec<String> = self.topic_children(n.id).iter().map(|c| duplicate_key(&c.label)).collect();
            let before = keys.len();
            keys.sort();
            keys.dedup();
            if keys.len() != before {
                problems.push(format!("node {} has duplicate child labels", n.id));
            }
        }
        problems
    }

    /// Checks that `path` runs parent to child from the root to a leaf.
    pub fn check_path(&self, path: &Path) -> bool {
        path.node_ids.len() == self.max_depth + 1
            && path.node_ids.first() == Some(&ROOT_ID)
            && path.node_ids.last() == Some(&path.leaf_id)
            && path.node_ids.windows(2).all(|w| self.nodes.get(&w[1]).is_some_and(|n| n.parent_id == Some(w[0])))
            && self
                .nodes
                .get(&path.leaf_id)
                .is_some_and(|n| n.kind == NodeKind::Topic && n.level == self.max_depth)
    }
}
