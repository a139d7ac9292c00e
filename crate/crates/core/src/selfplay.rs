//! Challenger and solver roles on one document: QA generation and filtering,
//! multi-sample solving, shaped rewards, role balancing, the skip rule and the
//! learnability bit fed back to the tree.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clients::verifier::{choice_letter, parse_number};
use crate::clients::{policy_generate, AnswerType, AnswerVerifier, PolicyClient, PolicyRequest, Role};
use crate::config::RunConfig;
use crate::corpus::CorpusDocument;
use crate::prompts::{challenger_prompt, solver_prompt, BANNED_PHRASES};
use crate::rng::{derive_seed, kind, stream};

pub const MAX_FREEFORM_ANSWER_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    /// Not exactly one JSON object.
    Parse,
    /// Wrapped in code fences.
    Format,
    /// Missing question or reference answer.
    Unverifiable,
    /// Question points back at the source text.
    SelfContainment,
    /// Answer type unknown or not matching the answer.
    AnswerType,
    /// The policy call itself failed.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaCandidate {
    pub question: String,
    pub reference_answer: String,
    pub answer_type: Option<AnswerType>,
    pub valid: bool,
    pub reason: Option<InvalidReason>,
    pub difficulty_label: Option<String>,
    pub raw_response: String,
}

impl QaCandidate {
    fn invalid(raw: &str, reason: InvalidReason) -> Self {
        Self {
            question: String::new(),
            reference_answer: String::new(),
            answer_type: None,
            valid: false,
            reason: Some(reason),
            difficulty_label: None,
            raw_response: raw.to_owned(),
        }
    }
}

/// Drops a leading `<think>...</think>` block some models emit.
fn strip_reasoning(raw: &str) -> &str {
    let t = raw.trim_start();
    match (t.starts_with("<think>"), t.find("</think>")) {
        (true, Some(end)) => &t[end + "</think>".len()..],
        _ => raw,
    }
}

fn parse_answer_type(s: &str) -> Option<AnswerType> {
    match s.trim().to_ascii_lowercase().as_str() {
        "numeric" | "number" | "integer" => Some(AnswerType::Numeric),
        "expression" | "symbolic" | "formula" => Some(AnswerType::Expression),
        "choice" | "mcq" | "multiple_choice" | "multiple-choice" => Some(AnswerType::Choice),
        "string" | "text" | "short_answer" => Some(AnswerType::String),
        _ => None,
    }
}

fn is_choice_answer(ans: &str) -> bool {
    ans.chars().count() <= 3 && choice_letter(ans).is_some()
}

fn answer_fits(ty: AnswerType, ans: &str) -> bool {
    match ty {
        AnswerType::Numeric => parse_number(ans).is_some(),
        AnswerType::Choice => is_choice_answer(ans),
        AnswerType::Expression | AnswerType::String => ans.chars().count() <= MAX_FREEFORM_ANSWER_CHARS,
    }
}

/// The rule-based QA filter.
pub fn validate_qa(raw_response: &str) -> QaCandidate {
    let body = strip_reasoning(raw_response).trim();
    if body.starts_with("```") {
        return QaCandidate::invalid(raw_response, InvalidReason::Format);
    }
    let Ok(Value::Object(map)) = serde_json::from_str::<Value>(body) else {
        return QaCandidate::invalid(raw_response, InvalidReason::Parse);
    };
    let text = |key: &str| match map.get(key) {
        Some(Value::String(s)) => s.trim().to_owned(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    };
    let question = text("question");
    let answer = text("correct_answer");
    if question.is_empty() || answer.is_empty() {
        return QaCandidate::invalid(raw_response, InvalidReason::Unverifiable);
    }
    let lower = question.to_lowercase();
    if BANNED_PHRASES.iter().any(|p| lower.contains(p)) {
        return QaCandidate::invalid(raw_response, InvalidReason::SelfContainment);
    }
    let declared = map.get("answer_type").and_then(Value::as_str);
    let ty = match declared {
        Some(d) => parse_answer_type(d),
        None if is_choice_answer(&answer) => Some(AnswerType::Choice),
        None if parse_number(&answer).is_some() => Some(AnswerType::Numeric),
        None => Some(AnswerType::String),
    };
    let Some(ty) = ty.filter(|t| answer_fits(*t, &answer)) else {
        return QaCandidate::invalid(raw_response, InvalidReason::AnswerType);
    };
    QaCandidate {
        question,
        reference_answer: answer,
        answer_type: Some(ty),
        valid: true,
        reason: None,
        difficulty_label: map.get("question_difficulty").and_then(Value::as_str).map(str::to_owned),
        raw_response: raw_response.to_owned(),
    }
}

/// G challenger samples on one document, each run through [`validate_qa`].
/// Returns the prompt alongside the candidates.
pub fn generate_qa(
    document: &CorpusDocument,
    path_labels: &[String],
    policy: &dyn PolicyClient,
    cfg: &RunConfig,
    seed: u64,
) -> (String, Vec<QaCandidate>) {
    let prompt = challenger_prompt(cfg.prompt_variant, path_labels, &document.text);
    let request = PolicyRequest {
        prompt: prompt.clone(),
        num_samples: cfg.challenger_samples,
        temperature: cfg.temperature,
        max_tokens: cfg.policy_max_tokens,
        role: Role::Challenger,
        seed,
    };
    let candidates = match policy_generate(policy, &request, cfg.client_retries) {
        Ok(responses) => responses.iter().map(|r| validate_qa(r)).collect(),
        Err(e) => (0..cfg.challenger_samples)
            .map(|_| QaCandidate::invalid(&format!("<{e}>"), InvalidReason::Transport))
            .collect(),
    };
    (prompt, candidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub qa: QaCandidate,
    pub prompt: String,
    pub responses: Vec<String>,
    pub correctness: Vec<u8>,
    /// Samples scored 0 because the policy or the verifier failed.
    pub flagged: usize,
    pub p_hat: f64,
    pub variance: f64,
}

/// `(p̂, p̂(1 - p̂))` of a correctness vector.
pub fn solvability(correctness: &[u8]) -> (f64, f64) {
    if correctness.is_empty() {
        return (0.0, 0.0);
    }
    let p = correctness.iter().map(|&c| f64::from(c)).sum::<f64>() / correctness.len() as f64;
    (p, p * (1.0 - p))
}

impl SolveOutcome {
    pub fn from_correctness(qa: QaCandidate, prompt: String, responses: Vec<String>, correctness: Vec<u8>, flagged: usize) -> Self {
        let (p_hat, variance) = solvability(&correctness);
        Self { qa, prompt, responses, correctness, flagged, p_hat, variance }
    }
}

/// K solver samples on the question alone, each checked against the reference.
pub fn solve(qa: &QaCandidate, policy: &dyn PolicyClient, verifier: &dyn AnswerVerifier, cfg: &RunConfig, seed: u64) -> SolveOutcome {
    let k = cfg.solver_samples;
    let prompt = solver_prompt(&qa.question, &cfg.solver_instruction);
    let request = PolicyRequest {
        prompt: prompt.clone(),
        num_samples: k,
        temperature: cfg.temperature,
        max_tokens: cfg.policy_max_tokens,
        role: Role::Solver,
        seed,
    };
    let Ok(responses) = policy_generate(policy, &request, cfg.client_retries) else {
        return SolveOutcome::from_correctness(qa.clone(), prompt, vec![String::new(); k], vec![0; k], k);
    };
    let ty = qa.answer_type.unwrap_or(AnswerType::String);
    let mut flagged = 0;
    let correctness = responses
        .iter()
        .map(|r| match verifier.verify(r, &qa.reference_answer, ty) {
            Ok(ok) => u8::from(ok),
            Err(_) => {
                flagged += 1;
                0
            }
        })
        .collect();
    SolveOutcome::from_correctness(qa.clone(), prompt, responses, correctness, flagged)
}

/// `exp(-(variance - 0.25)^2 / sigma)` for a valid QA, `rho` otherwise.
pub fn challenger_reward(valid: bool, variance: f64, sigma: f64, rho: f64) -> f64 {
    if valid {
        (-(variance - 0.25).powi(2) / sigma).exp()
    } else {
        rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGroup {
    pub role: Role,
    pub prompt: String,
    pub responses: Vec<String>,
    pub rewards: Vec<f64>,
    /// Document digest plus the QA indices the group covers.
    pub document: String,
    pub qa_ids: Vec<usize>,
}

pub fn solver_rewards(outcome: &SolveOutcome) -> Vec<f64> {
    outcome.correctness.iter().map(|&c| f64::from(c)).collect()
}

/// Uniform pick among `n` valid QAs; `None` when there are none.
pub fn balance_roles<R: Rng>(n: usize, rng: &mut R) -> Option<usize> {
    (n > 0).then(|| rng.random_range(0..n))
}

/// Skip iff every valid QA has zero variance (vacuously true with none).
pub fn document_skip_rule(outcomes: &[SolveOutcome]) -> bool {
    outcomes.iter().all(|o| o.variance == 0.0)
}

pub fn learnability_signal(outcome: &SolveOutcome, tau_var: f64) -> bool {
    outcome.variance >= tau_var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAudit {
    pub valid: bool,
    pub reason: Option<InvalidReason>,
    pub answer_type: Option<AnswerType>,
    pub question: String,
    pub reference_answer: String,
    pub correctness: Option<Vec<u8>>,
    pub variance: Option<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoValidQa,
    ZeroVariance,
}

/// One line of the self-play audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayAudit {
    pub iteration: u64,
    pub slot: usize,
    pub leaf_id: u64,
    pub path: Vec<String>,
    pub source_url: String,
    pub content_hash: String,
    pub candidates: Vec<CandidateAudit>,
    pub skipped: Option<SkipReason>,
    pub selected: Option<usize>,
    pub g: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentResult {
    pub audit: SelfPlayAudit,
    /// Challenger group first, then the balanced solver group; empty when skipped.
    pub groups: Vec<RewardGroup>,
    pub learnable: Option<bool>,
    /// Mean |advantage| of the exported solver group.
    pub solver_signal: f64,
}

/// Full self-play on one document.
#[allow(clippy::too_many_arguments)]
pub fn process_document(
    document: &CorpusDocument,
    path_labels: &[String],
    policy: &dyn PolicyClient,
    verifier: &dyn AnswerVerifier,
    cfg: &RunConfig,
    seed: u64,
    iteration: u64,
    slot: usize,
) -> DocumentResult {
    let (prompt, candidates) = generate_qa(document, path_labels, policy, cfg, derive_seed(seed, &[kind::CHALLENGER]));
    let mut outcomes: Vec<(usize, SolveOutcome)> = Vec::new();
    for (i, qa) in candidates.iter().enumerate().filter(|(_, q)| q.valid) {
        outcomes.push((i, solve(qa, policy, verifier, cfg, derive_seed(seed, &[kind::SOLVER, i as u64]))));
    }
    let variance_of = |i: usize| outcomes.iter().find(|(j, _)| *j == i).map(|(_, o)| o.variance);
    let challenger: Vec<f64> = candidates
        .iter()
        .enumerate()
        .map(|(i, q)| challenger_reward(q.valid, variance_of(i).unwrap_or(0.0), cfg.sigma, cfg.invalid_penalty))
        .collect();
    let audits = candidates
        .iter()
        .enumerate()
        .map(|(i, q)| CandidateAudit {
            valid: q.valid,
            reason: q.reason,
            answer_type: q.answer_type,
            question: q.question.clone(),
            reference_answer: q.reference_answer.clone(),
            correctness: outcomes.iter().find(|(j, _)| *j == i).map(|(_, o)| o.correctness.clone()),
            variance: variance_of(i),
            reward: challenger[i],
        })
        .collect();
    let mut audit = SelfPlayAudit {
        iteration,
        slot,
        leaf_id: document.leaf_id,
        path: path_labels.to_vec(),
        source_url: document.source_url.clone(),
        content_hash: document.content_hash.clone(),
        candidates: audits,
        skipped: None,
        selected: None,
        g: None,
    };
    let solved: Vec<SolveOutcome> = outcomes.iter().map(|(_, o)| o.clone()).collect();
    if outcomes.is_empty() || document_skip_rule(&solved) {
        audit.skipped = Some(if outcomes.is_empty() { SkipReason::NoValidQa } else { SkipReason::ZeroVariance });
        return DocumentResult { audit, groups: Vec::new(), learnable: None, solver_signal: 0.0 };
    }
    let mut rng = stream(seed, &[kind::BALANCE]);
    let pick = balance_roles(outcomes.len(), &mut rng).expect("non-empty valid set");
    let (qa_index, selected) = &outcomes[pick];
    let learnable = learnability_signal(selected, cfg.tau_var);
    audit.selected = Some(*qa_index);
    audit.g = Some(u8::from(learnable));
    let solver = solver_rewards(selected);
    let mean = solver.iter().sum::<f64>() / solver.len() as f64;
    let solver_signal = solver.iter().map(|r| (r - mean).abs()).sum::<f64>() / solver.len() as f64;
    let groups = vec![
        RewardGroup {
            role: Role::Challenger,
            prompt,
            responses: candidates.iter().map(|c| c.raw_response.clone()).collect(),
            rewards: challenger,
            document: document.content_hash.clone(),
            qa_ids: (0..candidates.len()).collect(),
        },
        RewardGroup {
            role: Role::Solver,
            prompt: selected.prompt.clone(),
            responses: selected.responses.clone(),
            rewards: solver,
            document: document.content_hash.clone(),
            qa_ids: vec![*qa_index],
        },
    ];
    DocumentResult { audit, groups, learnable: Some(learnable), solver_signal }
}
