//! Property tests against independent reference computations.

use std::collections::BTreeMap;

use proptest::prelude::*;

use selfplay_tree::corpus::{clean_boilerplate, glob_match, normalize_text};
use selfplay_tree::export::compute_advantages;
use selfplay_tree::rng::stream;
use selfplay_tree::selfplay::{challenger_reward, solvability};
use selfplay_tree::tree::{
    choose_child, duplicate_key, Choice, DomainTree, NodeId, NodeKind, Path, SamplingMode, DOMAIN_ID, ROOT_ID,
};

/// Replays a 0/1 history the slow way: keep everything, read the tail.
fn replay(history: &[bool], window: usize) -> ((u64, u64), (u64, u64)) {
    let ones = history.iter().filter(|&&g| g).count() as u64;
    let cumulative = (1 + ones, 1 + history.len() as u64 - ones);
    let tail = &history[history.len().saturating_sub(window)..];
    let t_ones = tail.iter().filter(|&&g| g).count() as u64;
    (cumulative, (1 + t_ones, 1 + tail.len() as u64 - t_ones))
}

fn chain(depth: usize, window: usize) -> (DomainTree, Path) {
    let mut t = DomainTree::new("D", depth, window);
    let mut ids = vec![ROOT_ID, DOMAIN_ID];
    let mut cur = DOMAIN_ID;
    for l in 2..=depth {
        cur = t.insert_topic(cur, &format!("n{l}")).unwrap();
        ids.push(cur);
    }
    (t, Path { node_ids: ids, leaf_id: cur })
}

proptest! {
    #[test]
    fn posterior_matches_replay(history in prop::collection::vec(any::<bool>(), 0..80), window in 1usize..25, depth in 2usize..5) {
        let (mut t, path) = chain(depth, window);
        for &g in &history {
            t.record_observation(&path, g).unwrap();
        }
        let (cum, eff) = replay(&history, window);
        for id in &path.node_ids {
            let p = &t.nodes[id].posterior;
            prop_assert_eq!((p.cumulative_alpha, p.cumulative_beta), cum);
            prop_assert_eq!(p.effective(), eff);
        }
        // Exactly L + 1 nodes carry observations; unk nodes stay at the prior.
        let touched = t.nodes.values().filter(|n| n.posterior.observations() > 0).count();
        prop_assert_eq!(touched, if history.is_empty() { 0 } else { depth + 1 });
        prop_assert!(t.audit().is_empty());
    }

    #[test]
    fn cleaning_is_idempotent(parts in prop::collection::vec(prop_oneof![
        Just("<p>".to_owned()), Just("</p>".to_owned()), Just("<div class=\"ad\">".to_owned()), Just("</div>".to_owned()),
        Just("<script>".to_owned()), Just("</script>".to_owned()), Just("<nav>".to_owned()), Just("</nav>".to_owned()),
        Just("&lt;".to_owned()), Just("&amp;".to_owned()), Just("&gt;".to_owned()), Just("<".to_owned()), Just(">".to_owned()),
        Just("<sup>".to_owned()), Just("<!--".to_owned()), Just("-->".to_owned()), Just("\"".to_owned()),
        "[a-z ]{0,8}", "[ -~]{0,6}",
    ], 0..30)) {
        let raw: String = parts.concat();
        let once = clean_boilerplate(&raw);
        prop_assert_eq!(clean_boilerplate(&once), once.clone());
        prop_assert_eq!(once.split_whitespace().collect::<Vec<_>>().join(" "), once.clone());
        let bytes = once.as_bytes();
        for w in bytes.windows(2) {
            prop_assert!(!(w[0] == b'<' && (w[1].is_ascii_alphabetic() || b"/!?".contains(&w[1]))), "tag-like text in {:?}", once);
        }
    }

    #[test]
    fn advantages_sum_to_zero_and_ignore_shifts(rewards in prop::collection::vec(-5.0f64..5.0, 1..64), shift in -100.0f64..100.0) {
        let a = compute_advantages(&rewards).unwrap();
        prop_assert!(a.iter().sum::<f64>().abs() <= 1e-9);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = compute_advantages(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn challenger_reward_peaks_at_the_boundary(bits in prop::collection::vec(0u8..2, 1..16), sigma in 0.001f64..1.0) {
        let (p, var) = solvability(&bits);
        let ones = bits.iter().filter(|&&b| b == 1).count() as f64;
        let n = bits.len() as f64;
        prop_assert!((p - ones / n).abs() < 1e-15);
        prop_assert!((var - (ones / n) * (1.0 - ones / n)).abs() < 1e-15);
        let r = challenger_reward(true, var, sigma, -0.1);
        prop_assert!(r > 0.0 && r <= 1.0);
        prop_assert!(r <= challenger_reward(true, 0.25, sigma, -0.1));
        prop_assert_eq!(challenger_reward(false, var, sigma, -0.1), -0.1);
    }

    #[test]
    fn glob_agrees_with_regex(pattern in "[ab*?./]{0,8}", text in "[ab./]{0,10}") {
        let mut re = String::from("(?is)^");
        for c in pattern.chars() {
            match c {
                '*' => re.push_str(".*"),
                '?' => re.push('.'),
                c => re.push_str(&regex::escape(&c.to_string())),
            }
        }
        re.push('$');
        let oracle = regex::Regex::new(&re).unwrap().is_match(&text);
        prop_assert_eq!(glob_match(&pattern, &text), oracle);
    }

    #[test]
    fn duplicate_key_is_a_normal_form(label in "[ A-Za-z.,;!?]{0,20}") {
        let k = duplicate_key(&label);
        prop_assert_eq!(duplicate_key(&k), k.clone());
        prop_assert_eq!(duplicate_key(&label.to_uppercase()), k.clone());
        prop_assert_eq!(normalize_text(&k), k);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Insert { parent: usize, label: u8 },
    Deactivate { parent: usize },
    Observe { pick: u64, g: bool },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (any::<usize>(), 0u8..6).prop_map(|(parent, label)| Op::Insert { parent, label }),
        1 => any::<usize>().prop_map(|parent| Op::Deactivate { parent }),
        2 => (any::<u64>(), any::<bool>()).prop_map(|(pick, g)| Op::Observe { pick, g }),
    ]
}

/// A random full path through existing topics, if one exists.
fn random_path(t: &DomainTree, pick: u64) -> Option<Path> {
    let mut ids = vec![ROOT_ID, DOMAIN_ID];
    let mut cur = DOMAIN_ID;
    let mut k = pick;
    while !t.is_leaf_level(cur) {
        let kids = t.topic_children(cur);
        if kids.is_empty() {
            return None;
        }
        cur = kids[(k % kids.len() as u64) as usize].id;
        k /= 7;
        ids.push(cur);
    }
    Some(Path { node_ids: ids, leaf_id: cur })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tree_invariants_survive_random_operations(ops in prop::collection::vec(op(), 0..60), depth in 2usize..5, window in 1usize..8) {
        let mut t = DomainTree::new("Mathematics", depth, window);
        let mut observations = 0u64;
        for op in ops {
            let expandable: Vec<NodeId> = t
                .nodes
                .values()
                .filter(|n| n.kind == NodeKind::Topic && n.level < depth)
                .map(|n| n.id)
                .collect();
            match op {
                Op::Insert { parent, label } => {
                    let p = expandable[parent % expandable.len()];
                    let name = ["Algebra", "algebra.", "Geometry", "Number  theory", "Number Theory!", "Topology"][label as usize];
                    let before = t.child_labels(p).iter().map(|l| duplicate_key(l)).collect::<Vec<_>>();
                    let res = t.insert_topic(p, name);
                    prop_assert_eq!(res.is_ok(), !before.contains(&duplicate_key(name)));
                }
                Op::Deactivate { parent } => {
                    let p = expandable[parent % expandable.len()];
                    t.deactivate_unk(p).unwrap();
                }
                Op::Observe { pick, g } => {
                    if let Some(path) = random_path(&t, pick) {
                        prop_assert!(t.check_path(&path));
                        t.record_observation(&path, g).unwrap();
                        observations += 1;
                    }
                }
            }
            prop_assert!(t.audit().is_empty(), "{:?}", t.audit());
        }
        prop_assert_eq!(t.nodes[&ROOT_ID].posterior.observations(), observations);
        let labels: BTreeMap<NodeId, String> = t.nodes.iter().map(|(id, n)| (*id, n.label.clone())).collect();
        let back: DomainTree = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(back.nodes.iter().map(|(id, n)| (*id, n.label.clone())).collect::<BTreeMap<_, _>>(), labels);
    }

    #[test]
    fn chosen_child_is_always_selectable(ops in prop::collection::vec(op(), 0..40), seed in any::<u64>(), thompson in any::<bool>()) {
        let mut t = DomainTree::new("M", 3, 5);
        for op in ops {
            match op {
                Op::Insert { label, .. } => { let _ = t.insert_topic(DOMAIN_ID, &format!("c{label}")); }
                Op::Deactivate { .. } => t.deactivate_unk(DOMAIN_ID).unwrap(),
                Op::Observe { pick, g } => {
                    if let Some(p) = random_path(&t, pick) {
                        t.record_observation(&p, g).unwrap();
                    }
                }
            }
        }
        let mode = if thompson { SamplingMode::Thompson } else { SamplingMode::Uniform };
        let mut rng = stream(seed, &[]);
        match choose_child(&t, DOMAIN_ID, mode, &mut rng) {
            Ok(Choice::Topic(id)) => prop_assert!(t.is_viable(id) && t.nodes[&id].parent_id == Some(DOMAIN_ID)),
            Ok(Choice::Unk(id)) => prop_assert!(t.nodes[&id].active && t.unk_child(DOMAIN_ID) == Some(id)),
            Err(_) => prop_assert!(!t.is_viable(DOMAIN_ID)),
        }
    }
}
