//! Growing the tree when an unk placeholder is selected.

use serde::{Deserialize, Serialize};

use super::{DomainTree, NodeId, TreeError};
use crate::clients::{policy_generate, PolicyClient, PolicyRequest, Role, WikiValidator};
use crate::config::RunConfig;
use crate::prompts::{expansion_prompt, parse_proposition, ExpansionPrompt, Proposition};
use crate::rng::derive_seed;

fn fold(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key under which sibling labels must be distinct: case-fold, whitespace
/// collapse, trailing punctuation stripped.
pub fn duplicate_key(label: &str) -> String {
    fold(label).trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_owned()
}

/// `1 - levenshtein / max_len` over case-folded, whitespace-collapsed strings.
pub fn label_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&fold(a), &fold(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelCheck {
    pub accepted: bool,
    /// Best similarity over the returned titles; `None` when there were none.
    pub s_max: Option<f64>,
    pub unavailable: bool,
}

/// Accepts a non-leaf label iff some looked-up title is at least `tau_wiki`
/// similar. No titles, or an unreachable service, means rejection.
pub fn validate_label(candidate: &str, validator: &dyn WikiValidator, tau_wiki: f64) -> LabelCheck {
    let lookup = validator.lookup(candidate);
    let s_max = lookup.titles.iter().map(|t| label_similarity(candidate, t)).fold(None, |m: Option<f64>, s| {
        Some(m.map_or(s, |m| m.max(s)))
    });
    LabelCheck { accepted: !lookup.unavailable && s_max.is_some_and(|s| s >= tau_wiki), s_max, unavailable: lookup.unavailable }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpandOutcome {
    Inserted(NodeId),
    /// The policy answered "No More"; the unk is now inactive.
    Exhausted,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionStats {
    pub attempts: usize,
    pub inserted: usize,
    pub duplicates: usize,
    pub wiki_rejections: usize,
    pub wiki_unavailable: usize,
    pub malformed: usize,
    pub exhausted: usize,
    pub budget_exceeded: usize,
}

impl ExpansionStats {
    pub fn add(&mut self, o: &ExpansionStats) {
        self.attempts += o.attempts;
        self.inserted += o.inserted;
        self.duplicates += o.duplicates;
        self.wiki_rejections += o.wiki_rejections;
        self.wiki_unavailable += o.wiki_unavailable;
        self.malformed += o.malformed;
        self.exhausted += o.exhausted;
        self.budget_exceeded += o.budget_exceeded;
    }

    /// Proposals that did not become nodes.
    pub fn rejections(&self) -> usize {
        self.duplicates + self.wiki_rejections + self.malformed
    }
}

pub struct ExpansionContext<'a> {
    pub policy: &'a dyn PolicyClient,
    pub wiki: &'a dyn WikiValidator,
    pub cfg: &'a RunConfig,
}

/// Asks the policy for a new child of `parent`, up to the configured number
/// of attempts.
pub fn expand_unk(
    tree: &mut DomainTree,
    parent: NodeId,
    ctx: &ExpansionContext<'_>,
    seed: u64,
    stats: &mut ExpansionStats,
) -> Result<ExpandOutcome, TreeError> {
    let node = tree.node(parent)?;
    if node.level + 1 > tree.max_depth {
        return Err(TreeError::NotExpandable(parent));
    }
    let unk = tree.unk_child(parent).ok_or(TreeError::NoUnk(parent))?;
    if !tree.nodes[&unk].active {
        return Err(TreeError::NoUnk(parent));
    }
    let leaf_level = node.level + 1 == tree.max_depth;
    let path = tree.label_path(parent);
    let siblings: Vec<String> = node
        .parent_id
        .map(|gp| tree.child_labels(gp).into_iter().filter(|l| *l != node.label).collect())
        .unwrap_or_default();
    let cfg = ctx.cfg;
    for attempt in 0..cfg.expansion_retries {
        stats.attempts += 1;
        let existing = tree.child_labels(parent);
        let prompt = expansion_prompt(&ExpansionPrompt {
            domain: &path[0],
            path: &path,
            parent: path.last().expect("topic path"),
            existing_children: &existing,
            siblings: &siblings,
            leaf_level,
        });
        let request = PolicyRequest {
            prompt,
            num_samples: 1,
            temperature: cfg.temperature,
            max_tokens: cfg.policy_max_tokens,
            role: Role::Expander,
            seed: derive_seed(seed, &[attempt as u64]),
        };
        let response = policy_generate(ctx.policy, &request, cfg.client_retries)?;
        match parse_proposition(&response[0]) {
            Proposition::NoMore => {
                tree.deactivate_unk(parent)?;
                stats.exhausted += 1;
                return Ok(ExpandOutcome::Exhausted);
            }
            Proposition::Malformed => stats.malformed += 1,
            Proposition::Label(label) => {
                let key = duplicate_key(&label);
                if existing.iter().any(|e| duplicate_key(e) == key) {
                    stats.duplicates += 1;
                    continue;
                }
                if !leaf_level {
                    let check = validate_label(&label, ctx.wiki, cfg.tau_wiki);
                    if check.unavailable {
                        stats.wiki_unavailable += 1;
                    }
                    if !check.accepted {
                        stats.wiki_rejections += 1;
                        continue;
                    }
                }
                let id = tree.insert_topic(parent, &label)?;
                stats.inserted += 1;
                return Ok(ExpandOutcome::Inserted(id));
            }
        }
    }
    stats.budget_exceeded += 1;
    Err(TreeError::RetryBudgetExceeded { parent, attempts: cfg.expansion_retries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::scripted::{ScriptedPolicy, StaticWiki};
    use crate::tree::DOMAIN_ID;

    fn ctx<'a>(policy: &'a ScriptedPolicy, wiki: &'a StaticWiki, cfg: &'a RunConfig) -> ExpansionContext<'a> {
        ExpansionContext { policy, wiki, cfg }
    }

    #[test]
    fn bracketed_proposition_is_inserted() {
        let mut t = DomainTree::new("Mathematics", 4, 5);
        let parent = t.insert_topic(DOMAIN_ID, "Equations and Inequalities").unwrap();
        let policy = ScriptedPolicy::new([vec!["[Proposition Start]Quadratic Equations[Proposition End]"]]);
        let wiki = StaticWiki::default().with("Quadratic Equations", &["Quadratic equation"]);
        let cfg = RunConfig::default();
        let mut stats = ExpansionStats::default();
        let out = expand_unk(&mut t, parent, &ctx(&policy, &wiki, &cfg), 0, &mut stats).unwrap();
        let ExpandOutcome::Inserted(id) = out else { panic!("{out:?}") };
        assert_eq!(t.nodes[&id].label, "Quadratic Equations");
        assert_eq!(t.nodes[&id].level, 3);
        assert!(t.unk_child(id).is_some());
        let prompt = &policy.requests.lock().unwrap()[0].prompt;
        assert!(prompt.contains("Mathematics -> Equations and Inequalities"));
        assert!(t.audit().is_empty());
    }

    #[test]
    fn no_more_deactivates_the_unk() {
        let mut t = DomainTree::new("Mathematics", 4, 5);
        let policy = ScriptedPolicy::new([vec!["No More"]]);
        let wiki = StaticWiki::default();
        let cfg = RunConfig::default();
        let mut stats = ExpansionStats::default();
        assert_eq!(expand_unk(&mut t, DOMAIN_ID, &ctx(&policy, &wiki, &cfg), 0, &mut stats), Ok(ExpandOutcome::Exhausted));
        assert!(!t.nodes[&t.unk_child(DOMAIN_ID).unwrap()].active);
    }

    #[test]
    fn duplicates_are_retried_until_the_budget_runs_out() {
        let mut t = DomainTree::new("Mathematics", 4, 5);
        t.insert_topic(DOMAIN_ID, "Polynomials").unwrap();
        let dup = "[Proposition Start]Polynomials[Proposition End]";
        let policy = ScriptedPolicy::new([vec![dup], vec!["garbage"], vec![dup]]);
        let wiki = StaticWiki::default();
        let cfg = RunConfig::default();
        let mut stats = ExpansionStats::default();
        let err = expand_unk(&mut t, DOMAIN_ID, &ctx(&policy, &wiki, &cfg), 0, &mut stats).unwrap_err();
        assert_eq!(err, TreeError::RetryBudgetExceeded { parent: DOMAIN_ID, attempts: 3 });
        assert_eq!((stats.duplicates, stats.malformed, stats.budget_exceeded), (2, 1, 1));
        assert_eq!(policy.remaining(), 0);
    }

    #[test]
    fn leaf_level_skips_validation() {
        let mut t = DomainTree::new("Mathematics", 2, 5);
        let policy = ScriptedPolicy::new([vec!["[Proposition Start]Pigeonhole Principle[Proposition End]"]]);
        let wiki = StaticWiki { unavailable: true, ..Default::default() };
        let cfg = RunConfig { max_depth: 2, ..RunConfig::default() };
        let mut stats = ExpansionStats::default();
        assert!(matches!(
            expand_unk(&mut t, DOMAIN_ID, &ctx(&policy, &wiki, &cfg), 0, &mut stats),
            Ok(ExpandOutcome::Inserted(_))
        ));
        assert!(policy.requests.lock().unwrap()[0].prompt.contains("Pigeonhole Principle"));
    }

    #[test]
    fn validation_rules() {
        let wiki = StaticWiki::default()
            .with("Pythagorean Theorem", &["Pythagorean theorem", "Pythagorean triple"])
            .with("Flurbmath Lemma", &["Fermat's little theorem", "Lemma (mathematics)"]);
        let ok = validate_label("Pythagorean Theorem", &wiki, 0.8);
        assert!(ok.accepted);
        assert_eq!(ok.s_max, Some(1.0));
        assert!(!validate_label("Flurbmath Lemma", &wiki, 0.8).accepted);
        let none = validate_label("Nothing", &wiki, 0.8);
        assert!(!none.accepted && none.s_max.is_none());
        let down = StaticWiki { unavailable: true, ..wiki };
        let r = validate_label("Pythagorean Theorem", &down, 0.8);
        assert!(!r.accepted && r.unavailable);
    }

    #[test]
    fn duplicate_key_normalization() {
        assert_eq!(duplicate_key("  Quadratic   EQUATIONS.!"), "quadratic equations");
    }
}
