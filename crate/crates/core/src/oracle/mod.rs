//! The language-model boundary.
//!
//! Agents never talk to a model directly; they go through [`Oracle`], which
//! assembles a prompt for each query kind, sends it to an [`OracleProvider`],
//! and parses the raw text reply into a typed answer with a defined fallback
//! when the reply is malformed. Three providers exist:
//!
//! - [`heuristic::HeuristicOracle`] — deterministic, offline; answers from
//!   the query's structured fields using hashed bag-of-words similarity.
//! - [`transcript`] — wrappers that record every call to JSONL or replay a
//!   recorded file byte-for-byte.
//! - [`remote::RemoteOracle`] — an HTTP chat-completions backend configured
//!   through environment variables.

pub mod embed;
pub mod heuristic;
pub mod prompt;
pub mod remote;
pub mod transcript;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gui::ActionKind;

/// Field keys carried on queries for providers that answer structurally.
pub mod fields {
    pub const COMMAND: &str = "command";
    pub const QUESTION: &str = "question";
    pub const PAGE: &str = "page";
    pub const PAGE_BEFORE: &str = "page_before";
    pub const CANDIDATE_TEXT: &str = "candidate_text";
    pub const CANDIDATE_DESC: &str = "candidate_desc";
    pub const CANDIDATE_SIBLINGS: &str = "candidate_siblings";
    pub const CANDIDATE_TARGETS: &str = "candidate_targets";
    pub const ACTION: &str = "action";
    pub const LESSONS: &str = "lessons";
    pub const TEXTBOX_TEXT: &str = "textbox_text";
    pub const TEXTBOX_DESC: &str = "textbox_desc";
    pub const PARAMETERS_JSON: &str = "parameters_json";
    pub const LAST_OP_TEXT: &str = "last_op_text";
    pub const LESSON_KIND: &str = "lesson_kind";
    pub const ERRONEOUS_TEXT: &str = "erroneous_text";
    pub const INTENT: &str = "intent";
    pub const CORRECT_PATH: &str = "correct_path";
}

/// Marker that makes a lesson count as a warning against an element; the
/// scorer caps any candidate whose text appears in such a lesson.
pub const NEGATION_MARKER: &str = "does not help";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Understanding,
    Likert,
    TextParameter,
    Completeness,
    Correctness,
    Lesson,
}

impl OracleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::Understanding => "understanding",
            OracleKind::Likert => "likert",
            OracleKind::TextParameter => "text_parameter",
            OracleKind::Completeness => "completeness",
            OracleKind::Correctness => "correctness",
            OracleKind::Lesson => "lesson",
        }
    }
}

/// One request to the model: the assembled prompt plus the structured fields
/// it was assembled from (used by the deterministic provider).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleQuery {
    pub kind: OracleKind,
    pub prompt: String,
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle transport: {0}")]
    Transport(String),
    #[error("oracle configuration: {0}")]
    Config(String),
    #[error("transcript {file} line {line}: {detail}")]
    Transcript {
        file: String,
        line: usize,
        detail: String,
    },
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
}

/// A model backend: embeds text and answers queries with raw text.
pub trait OracleProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError>;
    fn respond(&self, query: &OracleQuery) -> Result<String, OracleError>;
}

/// Parsed command understanding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Understanding {
    pub intent: String,
    /// (name, value) pairs, sorted by name.
    pub parameters: Vec<(String, String)>,
}

impl Understanding {
    pub fn parameter_values(&self) -> Vec<String> {
        self.parameters.iter().map(|(_, v)| v.clone()).collect()
    }
}

/// Correctness verdict for the latest operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessVerdict {
    pub correct: bool,
    /// 0–9; meaningful only when `correct` is false. 0 blames earlier steps.
    pub penalty: u8,
}

/// Inputs for scoring one candidate operation.
pub struct LikertInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    /// Deduplicated question text (see [`embed::question_text`]).
    pub question: &'a str,
    pub page: &'a str,
    pub action: ActionKind,
    pub candidate_text: &'a str,
    pub candidate_desc: &'a str,
    pub candidate_siblings: &'a [String],
    pub candidate_targets: &'a [String],
    pub task_knowledge: &'a [String],
    pub lessons: &'a [String],
}

pub struct TextParameterInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub textbox_text: &'a str,
    pub textbox_desc: &'a str,
    pub parameters: &'a [(String, String)],
    pub task_knowledge: &'a [String],
}

pub struct CorrectnessInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub question: &'a str,
    pub last_op: &'a str,
    /// Label of the element the last operation acted on.
    pub last_op_text: &'a str,
    pub page_before: &'a str,
    pub page_after: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LessonKind {
    /// Misleading element: acting on it does not advance this intent.
    Environment,
    /// Right element, wrong time: ordering matters.
    Execution,
}

impl LessonKind {
    fn as_str(self) -> &'static str {
        match self {
            LessonKind::Environment => "environment",
            LessonKind::Execution => "execution",
        }
    }
}

pub struct LessonInputs<'a> {
    pub command: &'a str,
    pub intent: &'a str,
    pub kind: LessonKind,
    /// Description of the erroneous operation.
    pub erroneous_op: &'a str,
    /// Label of the erroneous element.
    pub erroneous_text: &'a str,
    /// Descriptions of the operations executed this run, in order.
    pub experiences: &'a [String],
    /// Descriptions of the correct path's operations (empty when unknown).
    pub correct_path: &'a [String],
}

/// Typed front-end over a provider: prompt assembly + fallback parsing.
#[derive(Clone)]
pub struct Oracle {
    provider: Arc<dyn OracleProvider>,
}

impl Oracle {
    pub fn new(provider: Arc<dyn OracleProvider>) -> Self {
        Oracle { provider }
    }

    pub fn provider(&self) -> Arc<dyn OracleProvider> {
        Arc::clone(&self.provider)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError> {
        self.provider.embed(text)
    }

    /// Cosine similarity between two texts under the provider's embedding.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f32, OracleError> {
        Ok(embed::cosine(&self.embed(a)?, &self.embed(b)?))
    }

    /// Intent + parameters for a command. A malformed reply is retried once,
    /// then falls back to the whole command as intent with no parameters.
    pub fn understand_command(&self, command: &str) -> Result<Understanding, OracleError> {
        let query = OracleQuery {
            kind: OracleKind::Understanding,
            prompt: prompt::understanding_prompt(command),
            fields: BTreeMap::from([(fields::COMMAND.to_string(), command.to_string())]),
        };
        for _ in 0..2 {
            let raw = self.provider.respond(&query)?;
            if let Some(u) = parse_understanding(&raw) {
                return Ok(u);
            }
        }
        Ok(Understanding {
            intent: command.to_string(),
            parameters: Vec::new(),
        })
    }

    /// 1–7 helpfulness score for a candidate operation. Replies are clamped
    /// into range; a reply with no integer at all falls back to 4 (neutral).
    pub fn likert(&self, inp: &LikertInputs<'_>) -> Result<u8, OracleError> {
        let query = OracleQuery {
            kind: OracleKind::Likert,
            prompt: prompt::likert_prompt(&prompt::LikertPromptInputs {
                command: inp.command,
                intent: inp.intent,
                task_knowledge: inp.task_knowledge,
                lessons: inp.lessons,
                page: inp.page,
                action: inp.action,
                candidate_text: inp.candidate_text,
                candidate_desc: inp.candidate_desc,
                candidate_siblings: inp.candidate_siblings,
                candidate_targets: inp.candidate_targets,
            }),
            fields: BTreeMap::from([
                (fields::COMMAND.to_string(), inp.command.to_string()),
                (fields::QUESTION.to_string(), inp.question.to_string()),
                (fields::PAGE.to_string(), inp.page.to_string()),
                (fields::ACTION.to_string(), inp.action.as_str().to_string()),
                (fields::CANDIDATE_TEXT.to_string(), inp.candidate_text.to_string()),
                (fields::CANDIDATE_DESC.to_string(), inp.candidate_desc.to_string()),
                (
                    fields::CANDIDATE_SIBLINGS.to_string(),
                    inp.candidate_siblings.join("; "),
                ),
                (
                    fields::CANDIDATE_TARGETS.to_string(),
                    inp.candidate_targets.join("; "),
                ),
                (fields::LESSONS.to_string(), inp.lessons.join("\n")),
            ]),
        };
        let raw = self.provider.respond(&query)?;
        Ok(parse_likert(&raw))
    }

    /// The parameter value to type into a textbox; empty when none applies.
    pub fn text_parameter(&self, inp: &TextParameterInputs<'_>) -> Result<String, OracleError> {
        let query = OracleQuery {
            kind: OracleKind::TextParameter,
            prompt: prompt::text_parameter_prompt(&prompt::TextParameterPromptInputs {
                command: inp.command,
                intent: inp.intent,
                task_knowledge: inp.task_knowledge,
                textbox_text: inp.textbox_text,
                textbox_desc: inp.textbox_desc,
                parameters: inp.parameters,
            }),
            fields: BTreeMap::from([
                (fields::COMMAND.to_string(), inp.command.to_string()),
                (fields::TEXTBOX_TEXT.to_string(), inp.textbox_text.to_string()),
                (fields::TEXTBOX_DESC.to_string(), inp.textbox_desc.to_string()),
                (
                    fields::PARAMETERS_JSON.to_string(),
                    serde_json::to_string(&inp.parameters).expect("pairs serialize"),
                ),
            ]),
        };
        let raw = self.provider.respond(&query)?;
        let value = raw.trim();
        if value.is_empty() || value.eq_ignore_ascii_case(prompt::SENTINEL_NONE) {
            Ok(String::new())
        } else {
            Ok(value.to_string())
        }
    }

    /// Whether the task already looks accomplished. Fallback: false.
    pub fn completeness(
        &self,
        command: &str,
        intent: &str,
        page: &str,
    ) -> Result<bool, OracleError> {
        let query = OracleQuery {
            kind: OracleKind::Completeness,
            prompt: prompt::completeness_prompt(command, intent, page),
            fields: BTreeMap::from([
                (fields::COMMAND.to_string(), command.to_string()),
                (fields::PAGE.to_string(), page.to_string()),
            ]),
        };
        let raw = self.provider.respond(&query)?;
        Ok(parse_yes_no(&raw).unwrap_or(false))
    }

    /// Whether the last operation kept the run on track, with a backtracking
    /// penalty when it did not. Fallback: correct, penalty 0.
    pub fn correctness(
        &self,
        inp: &CorrectnessInputs<'_>,
    ) -> Result<CorrectnessVerdict, OracleError> {
        let query = OracleQuery {
            kind: OracleKind::Correctness,
            prompt: prompt::correctness_prompt(&prompt::CorrectnessPromptInputs {
                command: inp.command,
                intent: inp.intent,
                last_op: inp.last_op,
                page_before: inp.page_before,
                page_after: inp.page_after,
            }),
            fields: BTreeMap::from([
                (fields::COMMAND.to_string(), inp.command.to_string()),
                (fields::QUESTION.to_string(), inp.question.to_string()),
                (fields::PAGE_BEFORE.to_string(), inp.page_before.to_string()),
                (fields::PAGE.to_string(), inp.page_after.to_string()),
                (fields::LAST_OP_TEXT.to_string(), inp.last_op_text.to_string()),
            ]),
        };
        let raw = self.provider.respond(&query)?;
        Ok(parse_correctness(&raw).unwrap_or(CorrectnessVerdict {
            correct: true,
            penalty: 0,
        }))
    }

    /// One-sentence lesson about an erroneous step; empty string means the
    /// provider produced nothing worth storing.
    pub fn lesson(&self, inp: &LessonInputs<'_>) -> Result<String, OracleError> {
        let query = OracleQuery {
            kind: OracleKind::Lesson,
            prompt: prompt::lesson_prompt(&prompt::LessonPromptInputs {
                command: inp.command,
                intent: inp.intent,
                experiences: inp.experiences,
                erroneous_step: inp.erroneous_op,
                ground_truth: inp.correct_path,
            }),
            fields: BTreeMap::from([
                (fields::COMMAND.to_string(), inp.command.to_string()),
                (fields::INTENT.to_string(), inp.intent.to_string()),
                (fields::LESSON_KIND.to_string(), inp.kind.as_str().to_string()),
                (fields::ERRONEOUS_TEXT.to_string(), inp.erroneous_text.to_string()),
                (fields::CORRECT_PATH.to_string(), inp.correct_path.join(" then ")),
            ]),
        };
        let raw = self.provider.respond(&query)?;
        let lesson = raw.trim();
        if lesson.eq_ignore_ascii_case(prompt::SENTINEL_NONE) {
            Ok(String::new())
        } else {
            Ok(lesson.to_string())
        }
    }
}

// ── raw-reply parsing ────────────────────────────────────────────────────

fn parse_understanding(raw: &str) -> Option<Understanding> {
    let v: serde_json::Value = serde_json::from_str(raw.trim()).ok()?;
    let intent = v.get("intent")?.as_str()?.to_string();
    let mut parameters = Vec::new();
    if let Some(obj) = v.get("parameters").and_then(|p| p.as_object()) {
        for (name, value) in obj {
            parameters.push((name.clone(), value.as_str()?.to_string()));
        }
    }
    parameters.sort();
    Some(Understanding { intent, parameters })
}

/// First integer in the reply, clamped to 1–7; 4 when none is present.
fn parse_likert(raw: &str) -> u8 {
    let mut digits = String::new();
    for ch in raw.chars() {
        if ch.is_ascii_digit() {
            digits.push(ch);
        } else if !digits.is_empty() {
            break;
        }
    }
    match digits.parse::<u64>() {
        Ok(n) => n.clamp(1, 7) as u8,
        Err(_) => 4,
    }
}

fn parse_yes_no(raw: &str) -> Option<bool> {
    let first = raw.trim().split(|c: char| !c.is_alphanumeric()).next()?;
    if first.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if first.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

fn parse_correctness(raw: &str) -> Option<CorrectnessVerdict> {
    let v: serde_json::Value = serde_json::from_str(raw.trim()).ok()?;
    let correct = v.get("correct")?.as_bool()?;
    let penalty = v.get("penalty").and_then(|p| p.as_u64()).unwrap_or(0).min(9) as u8;
    Some(CorrectnessVerdict { correct, penalty })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A canned provider for exercising the parse/fallback layer.
    struct Canned(Vec<String>, std::sync::Mutex<usize>);

    impl Canned {
        fn new(replies: &[&str]) -> Self {
            Canned(
                replies.iter().map(|s| s.to_string()).collect(),
                std::sync::Mutex::new(0),
            )
        }
    }

    impl OracleProvider for Canned {
        fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError> {
            Ok(embed::embed_text(text))
        }
        fn respond(&self, _query: &OracleQuery) -> Result<String, OracleError> {
            let mut cur = self.1.lock().unwrap();
            let reply = self.0[(*cur).min(self.0.len() - 1)].clone();
            *cur += 1;
            Ok(reply)
        }
    }

    #[test]
    fn understanding_retries_once_then_falls_back() {
        let oracle = Oracle::new(Arc::new(Canned::new(&[
            "not json",
            "{\"intent\": \"import contacts\", \"parameters\": {\"file name\": \"a.vcf\"}}",
        ])));
        let u = oracle.understand_command("import contacts from a.vcf").unwrap();
        assert_eq!(u.intent, "import contacts");
        assert_eq!(u.parameters, vec![("file name".to_string(), "a.vcf".to_string())]);

        let oracle = Oracle::new(Arc::new(Canned::new(&["not json", "still not json"])));
        let u = oracle.understand_command("do the thing").unwrap();
        assert_eq!(u.intent, "do the thing");
        assert!(u.parameters.is_empty());
    }

    #[test]
    fn likert_parses_and_clamps() {
        assert_eq!(parse_likert("6"), 6);
        assert_eq!(parse_likert("Score: 7 out of 7"), 7);
        assert_eq!(parse_likert("42"), 7);
        assert_eq!(parse_likert("0"), 1);
        assert_eq!(parse_likert("no digits here"), 4);
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("yes"), Some(true));
        assert_eq!(parse_yes_no("No, not yet"), Some(false));
        assert_eq!(parse_yes_no("maybe"), None);
    }

    #[test]
    fn correctness_fallback_is_lenient() {
        let oracle = Oracle::new(Arc::new(Canned::new(&["garbage"])));
        let v = oracle
            .correctness(&CorrectnessInputs {
                command: "c",
                intent: "i",
                question: "q",
                last_op: "click 'X'",
                last_op_text: "X",
                page_before: "",
                page_after: "",
            })
            .unwrap();
        assert!(v.correct);
        assert_eq!(v.penalty, 0);
        assert_eq!(
            parse_correctness("{\"correct\": false, \"penalty\": 11}"),
            Some(CorrectnessVerdict { correct: false, penalty: 9 })
        );
    }

    #[test]
    fn text_parameter_none_maps_to_empty() {
        let oracle = Oracle::new(Arc::new(Canned::new(&["none"])));
        let v = oracle
            .text_parameter(&TextParameterInputs {
                command: "c",
                intent: "i",
                textbox_text: "",
                textbox_desc: "Name",
                parameters: &[],
                task_knowledge: &[],
            })
            .unwrap();
        assert_eq!(v, "");
    }

    #[test]
    fn completeness_fallback_is_false() {
        let oracle = Oracle::new(Arc::new(Canned::new(&["perhaps?"])));
        assert!(!oracle.completeness("c", "i", "page").unwrap());
    }
}
