//! Prompt templates and response parsing for the three policy roles.

use crate::config::PromptVariant;

pub const PROPOSITION_START: &str = "[Proposition Start]";
pub const PROPOSITION_END: &str = "[Proposition End]";
pub const NO_MORE: &str = "No More";
pub const PATH_BEGIN: &str = "[BEGINNING OF THE LABEL PATH]";
pub const PATH_END: &str = "[END OF THE LABEL PATH]";
pub const DOC_BEGIN: &str = "[BEGINNING OF THE DOCUMENT]";
pub const DOC_END: &str = "[END OF THE DOCUMENT]";
pub const PATH_SEPARATOR: &str = " -> ";
const NODE_PATH_LINE: &str = "The current node path is: ";
const EXISTING_LINE: &str = "Existing children: ";
const MAX_LABEL_CHARS: usize = 120;

/// Phrases a self-contained question must not use.
pub const BANNED_PHRASES: [&str; 5] = [
    "according to the text",
    "in the document",
    "as mentioned",
    "the passage states",
    "based on the analysis",
];

pub const QA_FIELDS_COMMON: [&str; 7] = [
    "identified_answer",
    "answer_quote",
    "hardening_process",
    "question",
    "correct_answer",
    "self_test_solution",
    "knowledge_and_reasoning_steps",
];

pub struct ExpansionPrompt<'a> {
    pub domain: &'a str,
    /// Labels from the domain node down to the parent.
    pub path: &'a [String],
    pub parent: &'a str,
    pub existing_children: &'a [String],
    /// Other children of the parent's own parent.
    pub siblings: &'a [String],
    /// The new node will sit at the leaf level.
    pub leaf_level: bool,
}

fn json_list(items: &[String]) -> String {
    serde_json::to_string(items).expect("string list serializes")
}

pub fn expansion_prompt(p: &ExpansionPrompt<'_>) -> String {
    let path = p.path.join(PATH_SEPARATOR);
    let parent = p.parent;
    let domain = p.domain;
    let mut s = format!(
        "You are helping to build a hierarchical knowledge tree for the main domain: {domain}.\n\
         {NODE_PATH_LINE}{path}\n\n"
    );
    if p.leaf_level {
        s.push_str(&format!(
            "Your task: propose ONE NEW ATOMIC KNOWLEDGE POINT to become a direct child of \"{parent}\".\n\
             A knowledge point is the smallest unit from which exam or contest problems can be built: \
             a named theorem, lemma or proposition, a standard definition, a classical example, or a \
             standard algorithm or construction.\n\n"
        ));
    } else {
        s.push_str(&format!(
            "Your task: propose ONE NEW SUB-DOMAIN to become a direct child of \"{parent}\".\n\
             The tree targets school and early-university {domain} and is used to write exam-style and \
             competition-style problems (multiple-choice or short-answer).\n\n"
        ));
        if !p.siblings.is_empty() {
            s.push_str(&format!(
                "Sibling sub-domains next to \"{parent}\" (soft guidance only): {}\n\
                 Use them to avoid near-copies of a sibling and topics that belong under a sibling instead.\n\n",
                json_list(p.siblings)
            ));
        }
    }
    let unit = if p.leaf_level { "knowledge point" } else { "sub-domain" };
    s.push_str(&format!(
        "Requirements:\n\
         1. Scope: strictly narrower than \"{parent}\"; it should read like a {}.\n\
         2. Level: standard curriculum material; nothing research-only or non-canonical.\n\
         3. Local de-duplication: it must not be identical or almost identical to an existing child.\n\
         {EXISTING_LINE}{}\n\
         4. Naming: short, clear, conventional names.\n\
         5. No hallucination: never invent theorem names or unusual terminology; prefer a classical topic when unsure.\n\
         6. Domain purity: stay inside {domain}.\n\n\
         If no further meaningful {unit} exists under \"{parent}\" that is not already covered, fits the scope and is \
         standard, output exactly \"{NO_MORE}\".\n\n\
         Response format: exactly one label between {PROPOSITION_START} and {PROPOSITION_END}, for example:\n\
         {PROPOSITION_START}{}{PROPOSITION_END}\n\n\
         Now give your label.",
        if p.leaf_level { "short standalone textbook entry" } else { "chapter or section title in a textbook" },
        json_list(p.existing_children),
        if p.leaf_level { "Pigeonhole Principle" } else { "Quadratic Equations" },
    ));
    s
}

/// What a mock (or a log reader) can recover from an expansion prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionView {
    pub path: Vec<String>,
    pub existing_children: Vec<String>,
    pub leaf_level: bool,
}

pub fn parse_expansion_prompt(prompt: &str) -> Option<ExpansionView> {
    let path_line = prompt.lines().find_map(|l| l.strip_prefix(NODE_PATH_LINE))?;
    let existing = prompt.lines().find_map(|l| l.strip_prefix(EXISTING_LINE))?;
    Some(ExpansionView {
        path: path_line.split(PATH_SEPARATOR).map(str::to_owned).collect(),
        existing_children: serde_json::from_str(existing).ok()?,
        leaf_level: prompt.contains("ATOMIC KNOWLEDGE POINT"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proposition {
    Label(String),
    NoMore,
    Malformed,
}

pub fn parse_proposition(response: &str) -> Proposition {
    let trimmed = response.trim();
    if trimmed.trim_matches('"') == NO_MORE {
        return Proposition::NoMore;
    }
    let Some(start) = trimmed.find(PROPOSITION_START) else {
        return Proposition::Malformed;
    };
    let rest = &trimmed[start + PROPOSITION_START.len()..];
    let Some(end) = rest.find(PROPOSITION_END) else {
        return Proposition::Malformed;
    };
    if rest[end..].matches(PROPOSITION_START).count() > 0 {
        return Proposition::Malformed;
    }
    let label = rest[..end].trim();
    if label.is_empty() || label.contains('\n') || label.chars().count() > MAX_LABEL_CHARS {
        return Proposition::Malformed;
    }
    Proposition::Label(label.to_owned())
}

pub fn challenger_prompt(variant: PromptVariant, path: &[String], document: &str) -> String {
    let path = path.join(PATH_SEPARATOR);
    let banned = BANNED_PHRASES.map(|p| format!("\"{p}\"")).join(", ");
    let mut s = format!(
        "Write ONE CHALLENGING question using two inputs: a LABEL PATH that narrows the domain, \
         and a background TEXT about its most specific knowledge point.\n\n\
         ## Label path\n{PATH_BEGIN}\n{path}\n{PATH_END}\n\
         Labels run from the broadest (left) to an atomic knowledge point (right). The question must \
         belong to this path and mainly test the rightmost label; earlier labels may add context and steps. \
         Ignore parts of the text that do not fit the path.\n\n\
         ## Text\n{DOC_BEGIN}\n{document}\n{DOC_END}\n\n\
         ## Instructions\n\
         1. Find non-trivial content about the knowledge point: relations between several objects, \
         multi-step derivations, interactions between definitions and theorems. Avoid bare definitions \
         and single copied facts.\n\
         2. Harden the question before writing it and describe how in \"hardening_process\".\n\
         3. The question must be fully self-contained, written as for a closed-book exam. Never use phrases \
         such as {banned}.\n\
         4. Aim for HARD or EXTRA HARD: several concepts, multiple reasoning steps, not answerable by lookup.\n"
    );
    match variant {
        PromptVariant::Mcq => s.push_str(
            "5. Make it multiple choice with options A) to D) of similar length and consistent units; \
             distractors should come from plausible partial reasoning. \"correct_answer\" is the option letter.\n\
             6. Solve your own question as a student would, record it in \"self_test_solution\", and redesign \
             it if options can be eliminated without understanding.\n\n",
        ),
        PromptVariant::Freeform => s.push_str(
            "5. The answer is free-form and typed: a numeric value, a symbolic expression, or a short string \
             fixed by the text. Give its kind in \"answer_type\" (numeric, expression or string).\n\
             6. Solve your own question as a student would and record it in \"self_test_solution\".\n\n",
        ),
    }
    let mut fields: Vec<&str> = QA_FIELDS_COMMON.to_vec();
    if variant == PromptVariant::Freeform {
        fields.insert(5, "answer_type");
    }
    fields.push("question_difficulty");
    s.push_str(&format!(
        "## Output\nOutput ONLY one valid JSON object, starting with {{ and ending with }}. \
         Do NOT wrap it in ``` fences or json markers. Required fields: {}.",
        fields.iter().map(|f| format!("\"{f}\"")).collect::<Vec<_>>().join(", ")
    ));
    s
}

/// Label path embedded in a challenger prompt.
pub fn parse_challenger_path(prompt: &str) -> Option<Vec<String>> {
    let start = prompt.find(PATH_BEGIN)? + PATH_BEGIN.len();
    let end = prompt[start..].find(PATH_END)? + start;
    Some(prompt[start..end].trim().split(PATH_SEPARATOR).map(str::to_owned).collect())
}

/// Question plus a fixed answer-format instruction. The document never appears here.
pub fn solver_prompt(question: &str, instruction: &str) -> String {
    format!("{question}\n\n{instruction}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bracketed_label() {
        assert_eq!(
            parse_proposition("[Proposition Start]Quadratic Equations[Proposition End]"),
            Proposition::Label("Quadratic Equations".into())
        );
        assert_eq!(
            parse_proposition("Sure.\n[Proposition Start] Vieta's Formulas [Proposition End]\n"),
            Proposition::Label("Vieta's Formulas".into())
        );
    }

    #[test]
    fn no_more_must_be_exact() {
        assert_eq!(parse_proposition("No More"), Proposition::NoMore);
        assert_eq!(parse_proposition("  \"No More\"\n"), Proposition::NoMore);
        assert_eq!(parse_proposition("no more"), Proposition::Malformed);
        assert_eq!(parse_proposition("No More topics here"), Proposition::Malformed);
    }

    #[test]
    fn malformed_shapes() {
        assert_eq!(parse_proposition("Quadratic Equations"), Proposition::Malformed);
        assert_eq!(parse_proposition("[Proposition Start]x"), Proposition::Malformed);
        assert_eq!(parse_proposition("[Proposition Start] [Proposition End]"), Proposition::Malformed);
        assert_eq!(
            parse_proposition("[Proposition Start]a[Proposition End][Proposition Start]b[Proposition End]"),
            Proposition::Malformed
        );
    }

    #[test]
    fn expansion_prompt_round_trips_through_view() {
        let path = vec!["Mathematics".to_string(), "Algebra".to_string()];
        let existing = vec!["Polynomials".to_string()];
        for leaf in [false, true] {
            let prompt = expansion_prompt(&ExpansionPrompt {
                domain: "Mathematics",
                path: &path,
                parent: "Algebra",
                existing_children: &existing,
                siblings: &["Geometry".to_string()],
                leaf_level: leaf,
            });
            let view = parse_expansion_prompt(&prompt).unwrap();
            assert_eq!(view.path, path);
            assert_eq!(view.existing_children, existing);
            assert_eq!(view.leaf_level, leaf);
            assert!(prompt.contains("[Proposition Start]"));
            assert!(prompt.contains("\"No More\""));
        }
    }

    #[test]
    fn challenger_prompt_carries_path_and_document() {
        let path = vec!["Mathematics".into(), "Combinatorics".into(), "Pigeonhole Principle".into()];
        let p = challenger_prompt(PromptVariant::Freeform, &path, "BODY TEXT");
        assert_eq!(parse_challenger_path(&p).unwrap(), path);
        assert!(p.contains("BODY TEXT"));
        assert!(p.contains("\"answer_type\""));
        let mcq = challenger_prompt(PromptVariant::Mcq, &path, "BODY TEXT");
        assert!(!mcq.contains("\"answer_type\""));
        for phrase in BANNED_PHRASES {
            assert!(p.contains(phrase));
        }
    }
}
