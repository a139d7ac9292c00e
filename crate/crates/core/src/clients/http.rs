//! HTTP-backed collaborators.
//!
//! * policy: OpenAI-compatible `POST {endpoint}/chat/completions` with `n`,
//!   `temperature`, `max_tokens` and `seed`;
//! * search: `GET {endpoint}?q=..&count=..` answering `{"results": [{"url", "title"}]}`;
//! * fetch: plain `GET`, title taken from `<title>`;
//! * embeddings: OpenAI-compatible `POST {endpoint}/embeddings`;
//! * title lookup: MediaWiki `action=opensearch`.
//!
//! Credentials come only from the environment: `POLICY_API_KEY`,
//! `SEARCH_API_KEY`, `EMBED_API_KEY` (all optional, sent as bearer tokens).

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::{
    ClientError, Embedder, PageFetcher, PolicyClient, PolicyRequest, SearchClient, SearchHit, WikiLookup,
    WikiValidator,
};
use crate::config::RunConfig;
use crate::corpus::WebPage;

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .build()
        .into()
}

fn map_err(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            ClientError::Unavailable(format!("status {code}"))
        }
        ureq::Error::StatusCode(code) => ClientError::Decode(format!("status {code}")),
        ureq::Error::Json(e) => ClientError::Decode(e.to_string()),
        other => ClientError::Transport(other.to_string()),
    }
}

fn bearer(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|k| !k.is_empty()).map(|k| format!("Bearer {k}"))
}

fn join(base: &str, tail: &str) -> String {
    format!("{}/{tail}", base.trim_end_matches('/'))
}

pub struct HttpPolicy {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    key: Option<String>,
}

impl HttpPolicy {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            agent: agent(cfg.http_timeout_secs),
            endpoint: cfg.policy_endpoint.clone(),
            model: cfg.policy_model.clone(),
            key: bearer("POLICY_API_KEY"),
        }
    }
}

/// Completions in `index` order from a chat-completions response body.
pub fn parse_chat_completion(body: &Value) -> Result<Vec<String>, ClientError> {
    let choices = body["choices"]
        .as_array()
        .ok_or_else(|| ClientError::Decode("missing choices".into()))?;
    let mut out: Vec<(u64, String)> = choices
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let text = c["message"]["content"]
                .as_str()
                .ok_or_else(|| ClientError::Decode("choice without content".into()))?;
            Ok((c["index"].as_u64().unwrap_or(i as u64), text.to_owned()))
        })
        .collect::<Result<_, ClientError>>()?;
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, t)| t).collect())
}

pub fn chat_request_body(model: &str, req: &PolicyRequest) -> Value {
    json!({
        "model": model,
        "messages": [{"role": "user", "content": req.prompt}],
        "n": req.num_samples,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "seed": req.seed,
    })
}

impl PolicyClient for HttpPolicy {
    fn generate(&self, request: &PolicyRequest) -> Result<Vec<String>, ClientError> {
        request.check()?;
        let mut call = self.agent.post(join(&self.endpoint, "chat/completions"));
        if let Some(k) = &self.key {
            call = call.header("Authorization", k);
        }
        let mut resp = call.send_json(chat_request_body(&self.model, request)).map_err(map_err)?;
        let body: Value = resp.body_mut().read_json().map_err(map_err)?;
        parse_chat_completion(&body)
    }
}

pub struct HttpWeb {
    agent: ureq::Agent,
    search_endpoint: String,
    key: Option<String>,
}

impl HttpWeb {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            agent: agent(cfg.http_timeout_secs),
            search_endpoint: cfg.search_endpoint.clone(),
            key: bearer("SEARCH_API_KEY"),
        }
    }
}

impl SearchClient for HttpWeb {
    fn search(&self, query: &str, count: usize) -> Result<Vec<SearchHit>, ClientError> {
        let mut call = self
            .agent
            .get(&self.search_endpoint)
            .query("q", query)
            .query("count", count.to_string());
        if let Some(k) = &self.key {
            call = call.header("Authorization", k);
        }
        let body: Value = call.call().map_err(map_err)?.body_mut().read_json().map_err(map_err)?;
        let results = body["results"]
            .as_array()
            .ok_or_else(|| ClientError::Decode("missing results".into()))?;
        Ok(results
            .iter()
            .filter_map(|r| {
                Some(SearchHit { url: r["url"].as_str()?.to_owned(), title: r["title"].as_str().unwrap_or("").to_owned() })
            })
            .take(count)
            .collect())
    }
}

/// Text of the first `<title>` element, whitespace collapsed.
impl PageFetcher for HttpWeb {
    fn fetch(&self, url: &str) -> Result<WebPage, ClientError> {
        let raw_body = self.agent.get(url).call().map_err(map_err)?.body_mut().read_to_string().map_err(map_err)?;
        let fetched_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Ok(WebPage { url: url.to_owned(), title: crate::corpus::html_title(&raw_body), raw_body, fetched_at })
    }
}

pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            agent: agent(cfg.http_timeout_secs),
            endpoint: cfg.embed_endpoint.clone(),
            model: cfg.embed_model.clone(),
            key: bearer("EMBED_API_KEY"),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let mut call = self.agent.post(join(&self.endpoint, "embeddings"));
        if let Some(k) = &self.key {
            call = call.header("Authorization", k);
        }
        let mut resp = call.send_json(json!({"model": self.model, "input": text})).map_err(map_err)?;
        let body: Value = resp.body_mut().read_json().map_err(map_err)?;
        body["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| ClientError::Decode("missing embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| ClientError::Decode("non-numeric embedding".into())))
            .collect()
    }
}

pub struct HttpWiki {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpWiki {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { agent: agent(cfg.http_timeout_secs), endpoint: cfg.wiki_endpoint.clone() }
    }
}

impl WikiValidator for HttpWiki {
    fn lookup(&self, term: &str) -> WikiLookup {
        let resp = self
            .agent
            .get(&self.endpoint)
            .query("action", "opensearch")
            .query("search", term)
            .query("limit", "10")
            .query("namespace", "0")
            .query("format", "json")
            .call();
        let body: Option<Value> = resp.ok().and_then(|mut r| r.body_mut().read_json().ok());
        match body.as_ref().and_then(|b| b.get(1)).and_then(Value::as_array) {
            Some(titles) => WikiLookup {
                titles: titles.iter().filter_map(|t| t.as_str().map(str::to_owned)).collect(),
                unavailable: false,
            },
            None => WikiLookup { titles: Vec::new(), unavailable: true },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_completion_choices_are_ordered_by_index() {
        let body = json!({"choices": [
            {"index": 1, "message": {"role": "assistant", "content": "second"}},
            {"index": 0, "message": {"role": "assistant", "content": "first"}}
        ]});
        assert_eq!(parse_chat_completion(&body).unwrap(), vec!["first", "second"]);
        assert!(parse_chat_completion(&json!({})).is_err());
    }
}
