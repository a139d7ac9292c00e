//! Offline stand-ins for the policy model and the web.
//!
//! [`ConceptUniverse`] fixes which labels "exist" under each parent,
//! [`SimLandscape`] gives every leaf a latent difficulty and tracks a scalar
//! learner skill, [`SimPolicy`] answers expansion, challenger and solver prompts
//! from those two, and [`SimWeb`] serves search results and HTML pages.
//! Every response is a pure function of the request and the run seed.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde_json::json;

use super::{ClientError, PageFetcher, PolicyClient, PolicyRequest, Role, SearchClient, SearchHit};
use crate::config::{LandscapeKind, PromptVariant, RunConfig};
use crate::corpus::WebPage;
use crate::prompts::{self, PATH_SEPARATOR};
use crate::rng::{derive_seed, kind, stream, text_digest, StreamRng};

pub const AREAS: [&str; 12] = [
    "Algebra",
    "Geometry",
    "Number Theory",
    "Combinatorics",
    "Calculus",
    "Probability",
    "Trigonometry",
    "Linear Algebra",
    "Statistics",
    "Discrete Mathematics",
    "Analysis",
    "Topology",
];
const SUBDOMAIN_SUFFIXES: [&str; 8] = [
    "Foundations",
    "Identities",
    "Inequalities",
    "Transformations",
    "Structures",
    "Methods",
    "Applications",
    "Invariants",
];
const KNOWLEDGE_SUFFIXES: [&str; 8] = [
    "Theorem",
    "Lemma",
    "Construction",
    "Classical Example",
    "Algorithm",
    "Definition",
    "Criterion",
    "Formula",
];
const HALLUCINATED_PREFIXES: [&str; 4] = ["Quaxel", "Flurbian", "Zentrovian", "Blorptic"];
const HALLUCINATED_NOUNS: [&str; 4] = ["Manifolds", "Lemma Systems", "Calculi", "Spectra"];

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Which labels exist under which parent.
///
/// Level-2 labels are the first `branch_fanout` entries of [`AREAS`]. A deeper
/// label is `"{parent} {suffix}"`; a parent gets between `min_fanout` and
/// `max_fanout` children (chosen by a hash of its label), with knowledge-point
/// suffixes at the leaf level and sub-domain suffixes above it.
#[derive(Debug, Clone)]
pub struct ConceptUniverse {
    pub max_depth: usize,
    pub branch_fanout: usize,
    pub min_fanout: usize,
    pub max_fanout: usize,
}

impl ConceptUniverse {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            max_depth: cfg.max_depth,
            branch_fanout: cfg.sim_branch_fanout.min(AREAS.len()),
            min_fanout: cfg.sim_min_fanout.min(SUBDOMAIN_SUFFIXES.len()),
            max_fanout: cfg.sim_max_fanout.min(SUBDOMAIN_SUFFIXES.len()),
        }
    }

    pub fn branches(&self) -> Vec<String> {
        AREAS[..self.branch_fanout].iter().map(|s| s.to_string()).collect()
    }

    /// Children of the last label in `path` (domain first).
    pub fn children(&self, path: &[String]) -> Vec<String> {
        let level = path.len() + 1;
        if level > self.max_depth || path.is_empty() {
            return Vec::new();
        }
        if level == 2 {
            return self.branches();
        }
        let parent = path.last().expect("non-empty path");
        let h = text_digest(parent);
        let span = (self.max_fanout - self.min_fanout + 1) as u64;
        let n = self.min_fanout + (h % span) as usize;
        let suffixes: &[&str] = if level == self.max_depth { &KNOWLEDGE_SUFFIXES } else { &SUBDOMAIN_SUFFIXES };
        let offset = (h >> 8) as usize % suffixes.len();
        (0..n)
            .map(|j| format!("{parent} {}", suffixes[(offset + j) % suffixes.len()]))
            .collect()
    }

    /// Whether a label is built from known areas and suffixes.
    pub fn is_real(&self, label: &str) -> bool {
        if AREAS.iter().any(|a| a.eq_ignore_ascii_case(label)) {
            return true;
        }
        SUBDOMAIN_SUFFIXES.iter().chain(KNOWLEDGE_SUFFIXES.iter()).any(|s| {
            label.len() > s.len() + 1
                && label.is_char_boundary(label.len() - s.len() - 1)
                && label[label.len() - s.len()..].eq_ignore_ascii_case(s)
                && label.as_bytes()[label.len() - s.len() - 1] == b' '
                && self.is_real(&label[..label.len() - s.len() - 1])
        })
    }
}

/// Latent difficulties plus a scalar learner skill.
///
/// Solver accuracy on a question of difficulty `d` is
/// `1 / (1 + exp(-kappa * (skill - d)))`.
#[derive(Debug)]
pub struct SimLandscape {
    pub kind: LandscapeKind,
    pub kappa: f64,
    pub skill_rate: f64,
    pub initial_skill: f64,
    pub seed: u64,
    learnable: BTreeSet<String>,
    branch_count: usize,
    learnable_count: usize,
    skill_bits: AtomicU64,
}

impl SimLandscape {
    pub fn new(cfg: &RunConfig, universe: &ConceptUniverse) -> Self {
        let branches = universe.branches();
        let start = (derive_seed(cfg.seed, &[kind::LANDSCAPE]) % branches.len() as u64) as usize;
        let learnable = (0..cfg.sim_learnable_branches)
            .map(|i| branches[(start + i) % branches.len()].to_lowercase())
            .collect();
        Self {
            kind: cfg.sim_landscape,
            kappa: cfg.sim_kappa,
            skill_rate: cfg.sim_skill_rate,
            initial_skill: cfg.sim_initial_skill,
            seed: cfg.seed,
            learnable,
            branch_count: branches.len(),
            learnable_count: cfg.sim_learnable_branches,
            skill_bits: AtomicU64::new(cfg.sim_initial_skill.to_bits()),
        }
    }

    pub fn skill(&self) -> f64 {
        f64::from_bits(self.skill_bits.load(Ordering::SeqCst))
    }

    pub fn set_skill(&self, skill: f64) {
        self.skill_bits.store(skill.to_bits(), Ordering::SeqCst);
    }

    /// One iteration of "training": `skill += rate * trained_signal / batch`,
    /// where `trained_signal` sums the mean absolute solver advantage of every
    /// trained document. Never decreases skill.
    pub fn advance(&self, trained_signal: f64, batch: usize) {
        let delta = self.skill_rate * trained_signal.max(0.0) / batch.max(1) as f64;
        self.set_skill(self.skill() + delta);
    }

    pub fn is_learnable_branch(&self, branch: &str) -> bool {
        let key = branch.to_lowercase();
        if self.learnable.contains(&key) || AREAS.iter().any(|a| a.eq_ignore_ascii_case(branch)) {
            return self.learnable.contains(&key);
        }
        // Unknown branch: stationary hash assignment.
        let h = derive_seed(self.seed, &[kind::LANDSCAPE, text_digest(&key)]);
        (h % self.branch_count.max(1) as u64) < self.learnable_count as u64
    }

    /// Latent difficulty of the leaf at the end of `path` (domain first).
    pub fn difficulty(&self, path: &[String]) -> f64 {
        let jitter = unit(derive_seed(self.seed, &[kind::LANDSCAPE, text_digest(&path.join(PATH_SEPARATOR))])) - 0.5;
        let near = self.initial_skill + NEAR_OFFSET + 0.2 * jitter;
        match self.kind {
            LandscapeKind::Uniform => near,
            LandscapeKind::Extreme => self.initial_skill + 10.0,
            LandscapeKind::Clustered => {
                let branch = path.get(1).map(String::as_str).unwrap_or("");
                if self.is_learnable_branch(branch) {
                    near
                } else {
                    self.initial_skill + HARD_OFFSET + 0.2 * jitter
                }
            }
        }
    }

    pub fn accuracy_at(&self, difficulty: f64) -> f64 {
        logistic_accuracy(self.kappa, self.skill(), difficulty)
    }

    pub fn sim_solver_accuracy(&self, path: &[String]) -> f64 {
        self.accuracy_at(self.difficulty(path))
    }
}

/// Offset of the hard branches above the initial skill: solvable about one time
/// in twelve, so their groups are rarely skipped but rarely learnable.
pub const HARD_OFFSET: f64 = 0.6;
/// Offset of the learnable leaves: close to even odds at the start.
pub const NEAR_OFFSET: f64 = 0.1;

pub fn logistic_accuracy(kappa: f64, skill: f64, difficulty: f64) -> f64 {
    1.0 / (1.0 + (-kappa * (skill - difficulty)).exp())
}

/// Deterministic policy driven by the universe and the landscape.
pub struct SimPolicy {
    pub universe: Arc<ConceptUniverse>,
    pub landscape: Arc<SimLandscape>,
    pub variant: PromptVariant,
    pub invalid_rate: f64,
    pub hallucination_rate: f64,
    pub seed: u64,
}

const DUPLICATE_RATE: f64 = 0.1;
const MALFORMED_RATE: f64 = 0.05;

impl SimPolicy {
    pub fn new(cfg: &RunConfig, universe: Arc<ConceptUniverse>, landscape: Arc<SimLandscape>) -> Self {
        Self {
            universe,
            landscape,
            variant: cfg.prompt_variant,
            invalid_rate: cfg.sim_invalid_rate,
            hallucination_rate: cfg.sim_hallucination_rate,
            seed: cfg.seed,
        }
    }

    fn expand(&self, prompt: &str, rng: &mut StreamRng) -> String {
        let Some(view) = prompts::parse_expansion_prompt(prompt) else {
            return "I am not sure what to propose.".into();
        };
        let existing: BTreeSet<String> = view.existing_children.iter().map(|c| c.to_lowercase()).collect();
        let remaining: Vec<String> = self
            .universe
            .children(&view.path)
            .into_iter()
            .filter(|c| !existing.contains(&c.to_lowercase()))
            .collect();
        if remaining.is_empty() {
            return prompts::NO_MORE.into();
        }
        let roll: f64 = rng.random();
        let label = if !view.leaf_level && roll < self.hallucination_rate {
            format!(
                "{} {}",
                HALLUCINATED_PREFIXES[rng.random_range(0..HALLUCINATED_PREFIXES.len())],
                HALLUCINATED_NOUNS[rng.random_range(0..HALLUCINATED_NOUNS.len())]
            )
        } else if roll < self.hallucination_rate + DUPLICATE_RATE && !view.existing_children.is_empty() {
            view.existing_children[rng.random_range(0..view.existing_children.len())].clone()
        } else if roll < self.hallucination_rate + DUPLICATE_RATE + MALFORMED_RATE {
            return remaining[0].clone();
        } else {
            remaining[rng.random_range(0..remaining.len())].clone()
        };
        format!("{}{label}{}", prompts::PROPOSITION_START, prompts::PROPOSITION_END)
    }

    fn challenge(&self, prompt: &str, rng: &mut StreamRng) -> String {
        let path = prompts::parse_challenger_path(prompt).unwrap_or_default();
        let leaf = path.last().cloned().unwrap_or_default();
        let difficulty = self.landscape.difficulty(&path) + rng.random_range(-0.05..0.05);
        let case: u32 = rng.random();
        let mut question = format!(
            "In the setting of {leaf}, case {case:08x} at level {difficulty:.4}: carry out the construction \
             and report the resulting integer."
        );
        let answer = match self.variant {
            PromptVariant::Freeform => (case % 997).to_string(),
            PromptVariant::Mcq => {
                question.push_str(" A) first value B) second value C) third value D) fourth value");
                char::from(b'A' + (case % 4) as u8).to_string()
            }
        };
        let mut record = json!({
            "identified_answer": answer,
            "answer_quote": format!("{leaf} ..."),
            "hardening_process": "combined two results from the text",
            "question": question,
            "correct_answer": answer,
            "self_test_solution": "checked by working the construction",
            "knowledge_and_reasoning_steps": ["recall the statement", "apply it twice", "simplify"],
            "question_difficulty": "hard",
        });
        if self.variant == PromptVariant::Freeform {
            record["answer_type"] = json!("numeric");
        }
        if rng.random::<f64>() < self.invalid_rate {
            match rng.random_range(0..4) {
                0 => return format!("```json\n{record}\n```"),
                1 => record["question"] = json!(format!("According to the text, {question}")),
                2 => record["correct_answer"] = json!(""),
                _ => {
                    let s = record.to_string();
                    return s[..s.len() / 2].to_owned();
                }
            }
        }
        record.to_string()
    }

    fn solve(&self, prompt: &str, rng: &mut StreamRng) -> String {
        let Some((case, difficulty)) = parse_case(prompt) else {
            return "I could not parse the problem. \\boxed{0}".into();
        };
        let correct = rng.random::<f64>() < self.landscape.accuracy_at(difficulty);
        let answer = match self.variant {
            PromptVariant::Freeform => {
                let right = case % 997;
                if correct { right } else { right + 1 + rng.random_range(0..5) }.to_string()
            }
            PromptVariant::Mcq => {
                let right = case % 4;
                let pick = if correct { right } else { (right + 1 + rng.random_range(0..3)) % 4 };
                char::from(b'A' + pick as u8).to_string()
            }
        };
        format!("Working through the construction step by step.\nThe final result is \\boxed{{{answer}}}.")
    }
}

fn parse_case(prompt: &str) -> Option<(u32, f64)> {
    let rest = &prompt[prompt.find("case ")? + 5..];
    let (hex, rest) = rest.split_once(" at level ")?;
    let level = rest.split(':').next()?;
    Some((u32::from_str_radix(hex, 16).ok()?, level.parse().ok()?))
}

impl PolicyClient for SimPolicy {
    fn generate(&self, request: &PolicyRequest) -> Result<Vec<String>, ClientError> {
        request.check()?;
        let role_tag = match request.role {
            Role::Expander => kind::EXPAND,
            Role::Challenger => kind::CHALLENGER,
            Role::Solver => kind::SOLVER,
        };
        let digest = text_digest(&request.prompt);
        Ok((0..request.num_samples as u64)
            .map(|k| {
                let mut rng = stream(self.seed, &[role_tag, digest, request.seed, k]);
                match request.role {
                    Role::Expander => self.expand(&request.prompt, &mut rng),
                    Role::Challenger => self.challenge(&request.prompt, &mut rng),
                    Role::Solver => self.solve(&request.prompt, &mut rng),
                }
            })
            .collect())
    }
}

pub fn slug(label: &str) -> String {
    label
        .to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Number of search results [`SimWeb`] knows for any query.
pub const SIM_RESULTS: usize = 10;
/// Words in the oversized lecture-notes page.
pub const LONG_PAGE_WORDS: usize = 7000;

/// Simulated search engine and page server.
///
/// For a query `q` the ranked results are, in order: an encyclopedia article,
/// a reference page, a deny-listed dataset page, an off-topic forum page, a
/// mirror whose main content duplicates the encyclopedia, a deny-listed
/// answer-key page, a wiki page, oversized lecture notes, a malformed URL and
/// an off-topic shop page.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimWeb;

impl SimWeb {
    /// Every result the engine knows for `query`, best first.
    pub fn listing(query: &str) -> Vec<SearchHit> {
        let s = slug(query);
        let hit = |url: String, title: String| SearchHit { url, title };
        let all = vec![
            hit(format!("https://en.wikipedia.org/wiki/{s}"), format!("{query} - Wikipedia")),
            hit(format!("https://mathworld.wolfram.com/{s}.html"), format!("{query} -- from Wolfram MathWorld")),
            hit(format!("https://huggingface.co/datasets/mathbench/{s}"), format!("{query} benchmark split")),
            hit(format!("https://forum.example.com/t/{s}-thread"), "Celebrity gossip roundup".to_string()),
            hit(format!("https://mirror.wikiclone.net/wiki/{s}"), format!("{query} - Wikipedia mirror")),
            hit(format!("https://artofproblemsolving.com/wiki/{s}_answers"), format!("{query} answer key")),
            hit(format!("https://brilliant.org/wiki/{s}/"), format!("{query} | Brilliant Math & Science Wiki")),
            hit(format!("https://notes.example.edu/{s}/full-notes"), format!("{query}: complete lecture notes")),
            hit(format!("ht!tp//broken url/{s}"), format!("{query} (broken link)")),
            hit("https://shop.example.com/deals".to_string(), "Weekly deals on garden furniture".to_string()),
        ];
        all
    }
}

impl SearchClient for SimWeb {
    fn search(&self, query: &str, count: usize) -> Result<Vec<SearchHit>, ClientError> {
        Ok(Self::listing(query).into_iter().take(count).collect())
    }
}

fn topic_sentences(topic: &str, seed: u64, words_wanted: usize) -> String {
    const TEMPLATES: [&str; 8] = [
        "{t} is a standard topic studied in school and early university courses.",
        "A typical exercise on {t} asks for the value of a quantity defined in {k} steps.",
        "The classical statement of {t} relates several objects through a short chain of identities.",
        "Competition problems often combine {t} with counting arguments and case analysis.",
        "One proof of {t} proceeds by induction on the size {k} of the configuration.",
        "Worked example {k}: applying {t} twice and simplifying gives the final integer.",
        "Historically {t} was refined over many textbooks before reaching its modern form.",
        "Common mistakes with {t} include dropping boundary cases and sign errors.",
    ];
    let mut out = String::new();
    let mut i = 0u64;
    let mut words = 0;
    while words < words_wanted {
        let h = derive_seed(seed, &[i]);
        let s = TEMPLATES[(h % TEMPLATES.len() as u64) as usize]
            .replace("{t}", topic)
            .replace("{k}", &(h % 17 + 2).to_string());
        words += s.split_whitespace().count();
        if !out.is_empty() {
            out.push_str(if i.is_multiple_of(4) { "</p>\n<p>" } else { " " });
        }
        out.push_str(&s);
        i += 1;
    }
    format!("<p>{out}</p>")
}

/// Wraps main content in site chrome (head, nav, ads, footer).
pub fn render_page(site: &str, title: &str, heading: &str, body_html: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><title>{title}</title>\n<style>body {{ font-family: serif; }}</style>\n\
         <script>window.analytics = {{ track: function() {{}} }};</script></head>\n<body>\n\
         <nav class=\"top\"><a href=\"/\">{site} home</a> | <a href=\"/random\">Random page</a></nav>\n\
         <div class=\"ad-banner\">Sponsored: learn faster with {site} premium</div>\n\
         <main><h1>{heading}</h1>\n{body_html}\n</main>\n\
         <aside class=\"sidebar\">Related pages on {site}</aside>\n\
         <footer>&copy; {site}. Privacy policy &amp; terms.</footer>\n</body></html>"
    )
}

impl PageFetcher for SimWeb {
    fn fetch(&self, url: &str) -> Result<WebPage, ClientError> {
        let rest = url
            .strip_prefix("https://")
            .ok_or_else(|| ClientError::Transport(format!("unsupported url {url}")))?;
        let (host, path) = rest.split_once('/').unwrap_or((rest, ""));
        let segment = |i: usize| path.split('/').nth(i).unwrap_or("").to_owned();
        let (key, words) = match host {
            "en.wikipedia.org" | "mirror.wikiclone.net" => (segment(1), 160),
            "mathworld.wolfram.com" => (segment(0).trim_end_matches(".html").to_owned(), 120),
            "brilliant.org" => (segment(1), 220),
            "notes.example.edu" => (segment(0), LONG_PAGE_WORDS),
            "forum.example.com" => (segment(1).trim_end_matches("-thread").to_owned(), 80),
            "huggingface.co" => (segment(2), 60),
            "artofproblemsolving.com" => (segment(1).trim_end_matches("_answers").to_owned(), 60),
            "shop.example.com" => ("garden_furniture".to_owned(), 40),
            _ => return Err(ClientError::Transport(format!("host not found: {host}"))),
        };
        let topic = key.replace('_', " ");
        // Mirror and original share their main content.
        let content_seed = text_digest(&format!("{}#{key}", if host == "mirror.wikiclone.net" { "en.wikipedia.org" } else { host }));
        let body = topic_sentences(&topic, content_seed, words);
        let title = Self::listing(&topic)
            .into_iter()
            .find(|h| h.url == url)
            .map_or_else(|| topic.clone(), |h| h.title);
        Ok(WebPage {
            url: url.to_owned(),
            raw_body: render_page(host, &html_escape::encode_text(&title), &topic, &body),
            title,
            fetched_at: 0,
        })
    }
}
