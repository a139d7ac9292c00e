//! Leaf-aligned document pools: search, URL filtering, fetch, title relevance,
//! boilerplate removal, truncation and exact-duplicate removal.

mod clean;
mod url_filter;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use clean::{clean_boilerplate, html_title};
pub use url_filter::{filter_url, glob_match, match_target, url_verdict, UrlRules, UrlVerdict, DEFAULT_RULES};

use crate::clients::{ClientError, Embedder, PageFetcher, SearchClient, TokenCounter};
use crate::config::RunConfig;
use crate::tree::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebPage {
    pub url: String,
    pub title: String,
    /// HTML or plain text.
    pub raw_body: String,
    /// Seconds since the Unix epoch; 0 for offline pages.
    pub fetched_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub leaf_id: NodeId,
    pub source_url: String,
    pub title: String,
    pub text: String,
    pub token_count: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPool {
    pub leaf_id: NodeId,
    pub documents: Vec<CorpusDocument>,
    /// Iteration at which the pool was (re)built.
    pub refreshed_at: u64,
}

impl CorpusPool {
    pub fn new(leaf_id: NodeId, refreshed_at: u64) -> Self {
        Self { leaf_id, documents: Vec::new(), refreshed_at }
    }

    pub fn contains_hash(&self, hash: &str) -> bool {
        self.documents.iter().any(|d| d.content_hash == hash)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no document survived filtering for leaf {leaf_id}")]
    EmptyPool { leaf_id: NodeId, stats: PipelineStats },
    #[error("search failed: {0}")]
    Search(ClientError),
}

/// Case-fold + whitespace collapse.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Hex SHA-256 of the normalized text.
pub fn content_digest(text: &str) -> String {
    hex::encode(&Sha256::digest(normalize_text(text).as_bytes())[..])
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine between the leaf label and the page title, and whether it clears
/// `tau_emb`. Empty titles and embedder failures fail with score 0.
pub fn relevance_gate(leaf_label: &str, title: &str, embedder: &dyn Embedder, tau_emb: f64) -> (bool, f64) {
    if title.trim().is_empty() {
        return (false, 0.0);
    }
    let score = match (embedder.embed(leaf_label), embedder.embed(title)) {
        (Ok(a), Ok(b)) => cosine(&a, &b),
        _ => return (false, 0.0),
    };
    (score >= tau_emb, score)
}

/// Accepts `candidate` into `pool` unless its normalized digest is already there.
pub fn normalize_dedup(pool: &mut CorpusPool, candidate: CorpusDocument) -> bool {
    if pool.contains_hash(&candidate.content_hash) {
        return false;
    }
    pool.documents.push(candidate);
    true
}

/// Keeps the head of the document so it has at most `max_tokens` tokens.
pub fn truncate_document(mut doc: CorpusDocument, tokenizer: &dyn TokenCounter, max_tokens: usize) -> CorpusDocument {
    if tokenizer.count(&doc.text) > max_tokens {
        doc.text = tokenizer.truncate(&doc.text, max_tokens);
        doc.content_hash = content_digest(&doc.text);
    }
    doc.token_count = tokenizer.count(&doc.text);
    doc
}

/// Why a retrieved candidate did or did not enter the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFate {
    Accepted,
    MalformedUrl,
    Denied,
    FetchFailed,
    Irrelevant,
    EmptyText,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub url: String,
    pub title: String,
    pub fate: CandidateFate,
    pub relevance: Option<f64>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub retrieved: usize,
    pub malformed_url: usize,
    pub denied: usize,
    pub fetch_failed: usize,
    pub irrelevant: usize,
    pub empty_text: usize,
    pub duplicate: usize,
    pub truncated: usize,
    pub accepted: usize,
}

impl PipelineStats {
    fn count(&mut self, fate: CandidateFate) {
        match fate {
            CandidateFate::Accepted => self.accepted += 1,
            CandidateFate::MalformedUrl => self.malformed_url += 1,
            CandidateFate::Denied => self.denied += 1,
            CandidateFate::FetchFailed => self.fetch_failed += 1,
            CandidateFate::Irrelevant => self.irrelevant += 1,
            CandidateFate::EmptyText => self.empty_text += 1,
            CandidateFate::Duplicate => self.duplicate += 1,
        }
    }

    pub fn add(&mut self, other: &PipelineStats) {
        self.retrieved += other.retrieved;
        self.malformed_url += other.malformed_url;
        self.denied += other.denied;
        self.fetch_failed += other.fetch_failed;
        self.irrelevant += other.irrelevant;
        self.empty_text += other.empty_text;
        self.duplicate += other.duplicate;
        self.truncated += other.truncated;
        self.accepted += other.accepted;
    }
}

#[derive(Debug, Clone)]
pub struct PoolBuild {
    pub pool: CorpusPool,
    pub stats: PipelineStats,
    pub trace: Vec<CandidateTrace>,
}

/// Collaborators and settings for [`build_pool`].
pub struct PipelineContext<'a> {
    pub search: &'a dyn SearchClient,
    pub fetcher: &'a dyn PageFetcher,
    pub embedder: &'a dyn Embedder,
    pub tokens: &'a dyn TokenCounter,
    pub rules: &'a UrlRules,
    pub cfg: &'a RunConfig,
}

pub fn search_query(leaf_label: &str, parent_label: Option<&str>, parent_prefix: bool) -> String {
    match parent_label {
        Some(p) if parent_prefix => format!("{p} {leaf_label}"),
        _ => leaf_label.to_owned(),
    }
}

fn with_retries<T>(retries: usize, mut f: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
    let mut attempt = 0;
    loop {
        match f() {
            Err(e) if e.is_retryable() && attempt < retries => attempt += 1,
            other => return other,
        }
    }
}

/// Runs the full retrieval pipeline for one leaf. Candidates are processed in
/// search-rank order, so the first copy of duplicated content wins.
pub fn build_pool(
    leaf_id: NodeId,
    leaf_label: &str,
    parent_label: Option<&str>,
    ctx: &PipelineContext<'_>,
    iteration: u64,
) -> Result<PoolBuild, CorpusError> {
    let cfg = ctx.cfg;
    let query = search_query(leaf_label, parent_label, cfg.query_parent_prefix);
    let hits = with_retries(cfg.client_retries, || ctx.search.search(&query, cfg.search_results))
        .map_err(CorpusError::Search)?;
    let mut pool = CorpusPool::new(leaf_id, iteration);
    let mut stats = PipelineStats { retrieved: hits.len(), ..Default::default() };
    let mut trace = Vec::with_capacity(hits.len());
    for hit in hits {
        let mut t = CandidateTrace {
            url: hit.url.clone(),
            title: hit.title.clone(),
            fate: CandidateFate::Accepted,
            relevance: None,
            truncated: false,
        };
        t.fate = 'stages: {
            match ctx.rules.verdict(&hit.url) {
                UrlVerdict::Malformed => break 'stages CandidateFate::MalformedUrl,
                UrlVerdict::Denied => break 'stages CandidateFate::Denied,
                UrlVerdict::Allowed => {}
            }
            let Ok(page) = with_retries(cfg.client_retries, || ctx.fetcher.fetch(&hit.url)) else {
                break 'stages CandidateFate::FetchFailed;
            };
            let title = if page.title.trim().is_empty() { hit.title.clone() } else { page.title.clone() };
            t.title = title.clone();
            let (pass, score) = relevance_gate(leaf_label, &title, ctx.embedder, cfg.tau_emb);
            t.relevance = Some(score);
            if !pass {
                break 'stages CandidateFate::Irrelevant;
            }
            let text = clean_boilerplate(&page.raw_body);
            if text.is_empty() {
                break 'stages CandidateFate::EmptyText;
            }
            let doc = CorpusDocument {
                leaf_id,
                source_url: hit.url.clone(),
                title,
                content_hash: content_digest(&text),
                token_count: 0,
                text,
            };
            let before = ctx.tokens.count(&doc.text);
            let doc = truncate_document(doc, ctx.tokens, cfg.max_doc_tokens);
            t.truncated = doc.token_count < before;
            if t.truncated {
                stats.truncated += 1;
            }
            if normalize_dedup(&mut pool, doc) {
                CandidateFate::Accepted
            } else {
                CandidateFate::Duplicate
            }
        };
        stats.count(t.fate);
        trace.push(t);
    }
    if pool.documents.is_empty() {
        return Err(CorpusError::EmptyPool { leaf_id, stats });
    }
    Ok(PoolBuild { pool, stats, trace })
}

pub fn pool_path(dir: &Path, leaf_id: NodeId) -> PathBuf {
    dir.join(format!("{leaf_id}.jsonl"))
}

/// Writes `pools/<leaf_id>.jsonl`, one document per line.
pub fn write_pool(dir: &Path, pool: &CorpusPool) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(fs::File::create(pool_path(dir, pool.leaf_id))?);
    for doc in &pool.documents {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_pool(dir: &Path, leaf_id: NodeId, refreshed_at: u64) -> std::io::Result<CorpusPool> {
    let file = fs::File::open(pool_path(dir, leaf_id))?;
    let mut pool = CorpusPool::new(leaf_id, refreshed_at);
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDocument = serde_json::from_str(&line)?;
        if doc.leaf_id != leaf_id {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "document from another leaf"));
        }
        pool.documents.push(doc);
    }
    Ok(pool)
}

/// Re-checks every stored document against the stage predicates.
pub fn audit_pool(pool: &CorpusPool, rules: &UrlRules, embedder: &dyn Embedder, leaf_label: &str, cfg: &RunConfig) -> Vec<String> {
    let mut problems = Vec::new();
    let mut hashes = BTreeSet::new();
    for d in &pool.documents {
        if d.leaf_id != pool.leaf_id {
            problems.push(format!("{}: wrong leaf", d.source_url));
        }
        if rules.verdict(&d.source_url) != UrlVerdict::Allowed {
            problems.push(format!("{}: url not allowed", d.source_url));
        }
        if !relevance_gate(leaf_label, &d.title, embedder, cfg.tau_emb).0 {
            problems.push(format!("{}: title below relevance threshold", d.source_url));
        }
        if d.token_count > cfg.max_doc_tokens || d.text.split_whitespace().count() != d.token_count {
            problems.push(format!("{}: token count", d.source_url));
        }
        if d.content_hash != content_digest(&d.text) || !hashes.insert(d.content_hash.clone()) {
            problems.push(format!("{}: digest", d.source_url));
        }
        if d.text.contains('<') && clean_boilerplate(&d.text) != d.text {
            problems.push(format!("{}: markup left", d.source_url));
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::scripted::StaticWeb;
    use crate::clients::{HashEmbedder, WhitespaceTokenizer};

    fn doc(text: &str) -> CorpusDocument {
        CorpusDocument {
            leaf_id: 1,
            source_url: "https://a.org/x".into(),
            title: "t".into(),
            text: text.into(),
            token_count: text.split_whitespace().count(),
            content_hash: content_digest(text),
        }
    }

    #[test]
    fn dedup_uses_normalized_digest() {
        let mut pool = CorpusPool::new(1, 0);
        assert!(normalize_dedup(&mut pool, doc("Euler line")));
        assert!(!normalize_dedup(&mut pool, doc("Euler line")));
        assert!(!normalize_dedup(&mut pool, doc("  EULER \n line ")));
        assert!(normalize_dedup(&mut pool, doc("Nine point circle")));
    }

    #[test]
    fn truncation_keeps_head_and_is_inclusive() {
        let t = WhitespaceTokenizer;
        let words = |n: usize| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let d = truncate_document(doc(&words(6000)), &t, 5992);
        assert_eq!(d.token_count, 5992);
        assert!(d.text.starts_with("w0 w1 ") && d.text.ends_with(" w5991"));
        assert_eq!(d.content_hash, content_digest(&d.text));
        assert_eq!(truncate_document(doc(&words(5992)), &t, 5992).text, words(5992));
        assert_eq!(truncate_document(doc(&words(100)), &t, 5992).token_count, 100);
    }

    #[test]
    fn relevance_extremes() {
        let e = HashEmbedder::default();
        let (pass, s) = relevance_gate("Pigeonhole Principle", "Pigeonhole Principle", &e, 0.5);
        assert!(pass && (s - 1.0).abs() < 1e-12);
        assert_eq!(relevance_gate("x", "  ", &e, 0.5), (false, 0.0));
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn five_candidates_leave_one_document() {
        let mut web = StaticWeb::default();
        let body = "<p>The pigeonhole principle says n+1 objects in n boxes share a box.</p>";
        web.add_page("https://en.wikipedia.org/wiki/Pigeonhole_principle", "Pigeonhole principle", body);
        web.add_page("https://huggingface.co/datasets/x/pigeonhole", "Pigeonhole principle", body);
        web.add_page("https://artofproblemsolving.com/wiki/Pigeonhole", "Pigeonhole principle", body);
        web.add_page("https://shop.example.com/deals", "Weekly deals on garden furniture", "<p>Chairs</p>");
        web.add_page("https://mirror.example.net/Pigeonhole_principle", "Pigeonhole principle", body);
        let cfg = RunConfig::default();
        let rules = UrlRules::defaults();
        let ctx = PipelineContext {
            search: &web,
            fetcher: &web,
            embedder: &HashEmbedder::default(),
            tokens: &WhitespaceTokenizer,
            rules: &rules,
            cfg: &cfg,
        };
        let build = build_pool(7, "Pigeonhole Principle", None, &ctx, 3).unwrap();
        assert_eq!(build.pool.documents.len(), 1);
        assert_eq!(build.pool.refreshed_at, 3);
        assert_eq!((build.stats.denied, build.stats.irrelevant, build.stats.duplicate), (2, 1, 1));
        assert!(audit_pool(&build.pool, &rules, ctx.embedder, "Pigeonhole Principle", &cfg).is_empty());
    }

    #[test]
    fn everything_denied_is_an_empty_pool() {
        let mut web = StaticWeb::default();
        web.add_page("https://huggingface.co/datasets/a", "Pigeonhole principle", "<p>x</p>");
        let cfg = RunConfig::default();
        let rules = UrlRules::defaults();
        let ctx = PipelineContext {
            search: &web,
            fetcher: &web,
            embedder: &HashEmbedder::default(),
            tokens: &WhitespaceTokenizer,
            rules: &rules,
            cfg: &cfg,
        };
        assert!(matches!(build_pool(1, "Pigeonhole principle", None, &ctx, 0), Err(CorpusError::EmptyPool { .. })));
        assert_eq!(web.fetches(), 0);
    }

    #[test]
    fn pools_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let mut pool = CorpusPool::new(4, 2);
        pool.documents.push(CorpusDocument { leaf_id: 4, ..doc("alpha beta") });
        write_pool(dir.path(), &pool).unwrap();
        assert_eq!(read_pool(dir.path(), 4, 2).unwrap(), pool);
        let line = fs::read_to_string(pool_path(dir.path(), 4)).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["content_hash", "leaf_id", "source_url", "text", "title", "token_count"]);
    }
}
