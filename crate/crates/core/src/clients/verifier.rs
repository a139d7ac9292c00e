//! Reference answer checker: final-answer extraction, normalized exact match,
//! numeric comparison with an absolute tolerance, and choice-letter extraction.

use super::{AnswerType, AnswerVerifier, ClientError};

pub const NUMERIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceVerifier;

impl AnswerVerifier for ReferenceVerifier {
    fn verify(&self, response: &str, reference: &str, answer_type: AnswerType) -> Result<bool, ClientError> {
        let Some(answer) = extract_final_answer(response) else {
            return Ok(false);
        };
        Ok(match answer_type {
            AnswerType::Choice => match (choice_letter(&answer), choice_letter(reference)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            },
            _ => match (parse_number(&answer), parse_number(reference)) {
                (Some(a), Some(b)) => (a - b).abs() <= NUMERIC_TOLERANCE,
                _ => normalize_answer(&answer) == normalize_answer(reference),
            },
        })
    }
}

/// Content of the last `\boxed{...}`, else the text after a trailing
/// "answer is"/"Answer:" marker, else the last non-empty line.
pub fn extract_final_answer(response: &str) -> Option<String> {
    if let Some(start) = response.rfind("\\boxed{") {
        let body = &response[start + "\\boxed{".len()..];
        let mut depth = 1usize;
        for (i, ch) in body.char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(body[..i].trim().to_owned());
                    }
                }
                _ => {}
            }
        }
        return None;
    }
    let lower = response.to_lowercase();
    for marker in ["answer is", "answer:"] {
        if let Some(pos) = lower.rfind(marker) {
            let tail = response[pos + marker.len()..].lines().next().unwrap_or("").trim();
            if !tail.is_empty() {
                return Some(tail.to_owned());
            }
        }
    }
    response
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_owned)
}

pub fn normalize_answer(s: &str) -> String {
    let mut t = s.trim().trim_matches('$').to_lowercase();
    for pat in ["\\left", "\\right", "\\!", "\\,", "\\;", "\\displaystyle"] {
        t = t.replace(pat, "");
    }
    let t: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    t.trim_end_matches('.').to_owned()
}

/// Parses integers, decimals (with thousands separators), `a/b` and `\frac{a}{b}`.
pub fn parse_number(s: &str) -> Option<f64> {
    let t = normalize_answer(s).replace(',', "");
    if let Some(rest) = t.strip_prefix("\\frac{").or_else(|| t.strip_prefix("\\dfrac{")) {
        let (num, den) = rest.strip_suffix('}')?.split_once("}{")?;
        return ratio(num, den);
    }
    if let Some((num, den)) = t.split_once('/') {
        return ratio(num, den);
    }
    let v: f64 = t.parse().ok()?;
    v.is_finite().then_some(v)
}

fn ratio(num: &str, den: &str) -> Option<f64> {
    let n: f64 = num.trim_matches(|c| c == '(' || c == ')').parse().ok()?;
    let d: f64 = den.trim_matches(|c| c == '(' || c == ')').parse().ok()?;
    (d != 0.0 && n.is_finite()).then(|| n / d)
}

/// Accepts `B`, `(B)`, `B)`, `B.` and `B) some option text`.
pub fn choice_letter(s: &str) -> Option<char> {
    let t = s.trim().trim_start_matches('(');
    let mut chars = t.chars();
    let first = chars.next()?.to_ascii_uppercase();
    if !('A'..='D').contains(&first) {
        return None;
    }
    match chars.next() {
        None => Some(first),
        Some(c) if !c.is_alphanumeric() => Some(first),
        _ => None,
    }
}
