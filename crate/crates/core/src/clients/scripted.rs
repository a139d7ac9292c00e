//! Hand-scripted collaborators for tests: canned policy batches, a static web
//! with call counters, and a static title lookup.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ClientError, PageFetcher, PolicyClient, PolicyRequest, SearchClient, SearchHit, WikiLookup, WikiValidator};
use crate::corpus::WebPage;

/// Pops one canned batch per call and remembers every request.
#[derive(Debug, Default)]
pub struct ScriptedPolicy {
    batches: Mutex<VecDeque<Result<Vec<String>, ClientError>>>,
    pub requests: Mutex<Vec<PolicyRequest>>,
}

impl ScriptedPolicy {
    pub fn new<I, B>(batches: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: IntoIterator,
        B::Item: Into<String>,
    {
        let batches = batches
            .into_iter()
            .map(|b| Ok(b.into_iter().map(Into::into).collect()))
            .collect();
        Self { batches: Mutex::new(batches), requests: Mutex::new(Vec::new()) }
    }

    pub fn push_error(&self, e: ClientError) {
        self.batches.lock().unwrap().push_back(Err(e));
    }

    pub fn remaining(&self) -> usize {
        self.batches.lock().unwrap().len()
    }
}

impl PolicyClient for ScriptedPolicy {
    fn generate(&self, request: &PolicyRequest) -> Result<Vec<String>, ClientError> {
        self.requests.lock().unwrap().push(request.clone());
        self.batches
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(ClientError::Unavailable("script exhausted".into())))
    }
}

/// Policy backed by a closure.
pub struct FnPolicy<F>(pub F);

impl<F> PolicyClient for FnPolicy<F>
where
    F: Fn(&PolicyRequest) -> Result<Vec<String>, ClientError> + Send + Sync,
{
    fn generate(&self, request: &PolicyRequest) -> Result<Vec<String>, ClientError> {
        (self.0)(request)
    }
}

/// Fixed search results and pages. A query without an entry gets `default_hits`.
#[derive(Debug, Default)]
pub struct StaticWeb {
    pub results: BTreeMap<String, Vec<SearchHit>>,
    pub default_hits: Vec<SearchHit>,
    pub pages: BTreeMap<String, WebPage>,
    pub search_calls: AtomicUsize,
    pub fetch_calls: AtomicUsize,
}

impl StaticWeb {
    /// Adds a page and lists it among the default results.
    pub fn add_page(&mut self, url: &str, title: &str, body: &str) {
        self.default_hits.push(SearchHit { url: url.into(), title: title.into() });
        self.pages.insert(
            url.into(),
            WebPage { url: url.into(), title: title.into(), raw_body: body.into(), fetched_at: 0 },
        );
    }

    pub fn searches(&self) -> usize {
        self.search_calls.load(Ordering::SeqCst)
    }

    pub fn fetches(&self) -> usize {
        self.fetch_calls.load(Ordering::SeqCst)
    }
}

impl SearchClient for StaticWeb {
    fn search(&self, query: &str, count: usize) -> Result<Vec<SearchHit>, ClientError> {
        self.search_calls.fetch_add(1, Ordering::SeqCst);
        let hits = self.results.get(query).unwrap_or(&self.default_hits);
        Ok(hits.iter().take(count).cloned().collect())
    }
}

impl PageFetcher for StaticWeb {
    fn fetch(&self, url: &str) -> Result<WebPage, ClientError> {
        self.fetch_calls.fetch_add(1, Ordering::SeqCst);
        self.pages.get(url).cloned().ok_or_else(|| ClientError::Transport(format!("404 {url}")))
    }
}

/// Term-to-titles table.
#[derive(Debug, Default, Clone)]
pub struct StaticWiki {
    pub entries: BTreeMap<String, Vec<String>>,
    pub unavailable: bool,
}

impl StaticWiki {
    pub fn with(mut self, term: &str, titles: &[&str]) -> Self {
        self.entries.insert(term.to_owned(), titles.iter().map(|t| t.to_string()).collect());
        self
    }
}

impl WikiValidator for StaticWiki {
    fn lookup(&self, term: &str) -> WikiLookup {
        WikiLookup {
            titles: self.entries.get(term).cloned().unwrap_or_default(),
            unavailable: self.unavailable,
        }
    }
}
