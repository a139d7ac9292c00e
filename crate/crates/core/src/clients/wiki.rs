//! Offline encyclopedia title lookup.
//!
//! [`MockWiki`] answers prefix queries from a fixed gazetteer of article titles
//! and, when given a [`ConceptUniverse`], from every label that universe
//! considers real. Unknown or invented names get no titles back.

use std::sync::Arc;

use super::sim::ConceptUniverse;
use super::{WikiLookup, WikiValidator};

pub const GAZETTEER: &str = include_str!("../../fixtures/gazetteer.txt");
pub const MAX_TITLES: usize = 10;
const PREFIX_CHARS: usize = 4;

#[derive(Debug, Clone)]
pub struct MockWiki {
    pub titles: Vec<String>,
    pub universe: Option<Arc<ConceptUniverse>>,
    /// Simulates an unreachable service.
    pub unavailable: bool,
}

impl Default for MockWiki {
    fn default() -> Self {
        Self::new(None)
    }
}

fn fold(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First letter kept, the rest lower-cased, the way article titles are written.
pub fn article_case(label: &str) -> String {
    let mut chars = label.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars.as_str().to_lowercase().chars()).collect(),
        None => String::new(),
    }
}

impl MockWiki {
    pub fn new(universe: Option<Arc<ConceptUniverse>>) -> Self {
        let titles = GAZETTEER
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        Self { titles, universe, unavailable: false }
    }
}

impl WikiValidator for MockWiki {
    fn lookup(&self, term: &str) -> WikiLookup {
        if self.unavailable {
            return WikiLookup { titles: Vec::new(), unavailable: true };
        }
        let key = fold(term);
        if key.is_empty() {
            return WikiLookup::default();
        }
        let prefix: String = key.chars().take(PREFIX_CHARS).collect();
        let mut titles = Vec::new();
        if self.universe.as_ref().is_some_and(|u| u.is_real(term.trim())) {
            titles.push(article_case(&key));
        }
        for t in &self.titles {
            if titles.len() >= MAX_TITLES {
                break;
            }
            if fold(t).starts_with(&prefix) && !titles.contains(t) {
                titles.push(t.clone());
            }
        }
        WikiLookup { titles, unavailable: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn prefix_lookup_over_gazetteer() {
        let w = MockWiki::default();
        let got = w.lookup("Pigeonhole principle").titles;
        assert_eq!(got, vec!["Pigeonhole principle".to_string()]);
        assert!(w.lookup("Quaxel Manifolds").titles.is_empty());
        assert!(w.lookup("   ").titles.is_empty());
    }

    #[test]
    fn universe_labels_are_found() {
        let u = Arc::new(ConceptUniverse::from_config(&RunConfig::default()));
        let w = MockWiki::new(Some(u));
        let got = w.lookup("Algebra Methods").titles;
        assert_eq!(got[0], "Algebra methods");
        assert!(got.contains(&"Algebra".to_string()));
    }

    #[test]
    fn outage_is_reported() {
        let w = MockWiki { unavailable: true, ..MockWiki::default() };
        assert!(w.lookup("Algebra").unavailable);
    }
}
