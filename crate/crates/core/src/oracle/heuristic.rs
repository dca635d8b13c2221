//! Deterministic offline oracle.
//!
//! Answers every query from the structured fields using surface heuristics
//! and hashed bag-of-words similarity — no network, no randomness, so full
//! runs are reproducible byte-for-byte. Replies use the same raw-text
//! formats a hosted model is prompted to produce, which keeps the parsing
//! layer on one code path for all providers.

use std::collections::BTreeMap;

use crate::env::AppDoc;
use crate::gui::parse_serialized_page;
use crate::oracle::embed::{cosine, embed_text, tokenize};
use crate::oracle::{fields, OracleError, OracleKind, OracleProvider, OracleQuery, NEGATION_MARKER};

/// Similarity at or above which a page still counts as relevant to the task.
pub const RELEVANCE_FLOOR: f32 = 0.30;

/// Backtracking penalty when a strictly better alternative was visible.
pub const PENALTY_OBVIOUS: u8 = 9;
/// Backtracking penalty when the step was wrong but defensible.
pub const PENALTY_PLAIN: u8 = 4;
/// Penalty signalling the page was already off track before the step.
pub const PENALTY_BLAME_EARLIER: u8 = 0;

pub struct HeuristicOracle {
    /// Completion cue per command: the static text that appears on screen
    /// exactly when the command's effect has materialized.
    cues: BTreeMap<String, String>,
}

impl HeuristicOracle {
    pub fn new() -> Self {
        HeuristicOracle { cues: BTreeMap::new() }
    }

    pub fn with_cue(mut self, command: impl Into<String>, cue: impl Into<String>) -> Self {
        self.cues.insert(command.into(), cue.into());
        self
    }

    /// Collects completion cues from every task of an app.
    pub fn for_app(app: &AppDoc) -> Self {
        let mut cues = BTreeMap::new();
        for task in &app.tasks {
            cues.insert(task.command.clone(), task.completion_cue.clone());
        }
        HeuristicOracle { cues }
    }
}

impl Default for HeuristicOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl OracleProvider for HeuristicOracle {
    fn embed(&self, text: &str) -> Result<Vec<f32>, OracleError> {
        Ok(embed_text(text))
    }

    fn respond(&self, query: &OracleQuery) -> Result<String, OracleError> {
        let get = |key: &str| query.fields.get(key).map(String::as_str).unwrap_or("");
        Ok(match query.kind {
            OracleKind::Understanding => understand(get(fields::COMMAND)),
            OracleKind::Likert => {
                let sim = candidate_similarity(
                    get(fields::QUESTION),
                    get(fields::CANDIDATE_TEXT),
                    get(fields::CANDIDATE_DESC),
                    get(fields::CANDIDATE_SIBLINGS),
                    get(fields::CANDIDATE_TARGETS),
                );
                let mut score = likert_from_similarity(sim);
                let text = get(fields::CANDIDATE_TEXT);
                let warned = !text.is_empty()
                    && get(fields::LESSONS)
                        .lines()
                        .any(|l| l.contains(NEGATION_MARKER) && l.contains(text));
                if warned {
                    score = score.min(2);
                }
                score.to_string()
            }
            OracleKind::TextParameter => {
                let parameters: Vec<(String, String)> =
                    serde_json::from_str(get(fields::PARAMETERS_JSON)).unwrap_or_default();
                choose_text_parameter(
                    get(fields::TEXTBOX_TEXT),
                    get(fields::TEXTBOX_DESC),
                    &parameters,
                )
            }
            OracleKind::Completeness => {
                let done = self
                    .cues
                    .get(get(fields::COMMAND))
                    .is_some_and(|cue| get(fields::PAGE).contains(cue));
                if done { "yes" } else { "no" }.to_string()
            }
            OracleKind::Correctness => judge_correctness(
                get(fields::QUESTION),
                get(fields::PAGE_BEFORE),
                get(fields::PAGE),
                get(fields::LAST_OP_TEXT),
            ),
            OracleKind::Lesson => {
                let intent = get(fields::INTENT);
                let text = get(fields::ERRONEOUS_TEXT);
                match get(fields::LESSON_KIND) {
                    "environment" => format!("Clicking '{text}' {NEGATION_MARKER} with: {intent}"),
                    _ => format!(
                        "When working on '{intent}', the right order is: {}.",
                        get(fields::CORRECT_PATH)
                    ),
                }
            }
        })
    }
}

// ── command understanding ────────────────────────────────────────────────

const TRAILING_PREPOSITIONS: &[&str] =
    &["from", "to", "into", "with", "as", "for", "in", "on", "of", "at"];

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

fn is_file_name(token: &str) -> bool {
    let Some(dot) = token.rfind('.') else {
        return false;
    };
    let (stem, ext) = (&token[..dot], &token[dot + 1..]);
    !stem.is_empty()
        && stem
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && (1..=4).contains(&ext.len())
        && ext.chars().all(|c| c.is_ascii_alphanumeric())
}

fn is_phone(token: &str) -> bool {
    token.len() >= 7 && token.chars().all(|c| c.is_ascii_digit())
}

fn is_person_name(token: &str, index: usize) -> bool {
    if index == 0 || token.len() < 2 {
        return false; // sentence-initial capitals are not names
    }
    let mut chars = token.chars();
    chars.next().is_some_and(|c| c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_lowercase())
}

/// Surface-pattern command understanding: file names, long digit runs, and
/// non-initial capitalized words become parameters; the intent phrase is the
/// command with parameter tokens removed, punctuation cleaned, trailing
/// prepositions trimmed, lowercased. Returns the raw JSON reply.
fn understand(command: &str) -> String {
    let raw_tokens: Vec<&str> = command.split_whitespace().collect();
    let mut parameters: BTreeMap<String, String> = BTreeMap::new();
    let mut claimed = vec![false; raw_tokens.len()];
    for (i, raw) in raw_tokens.iter().enumerate() {
        let token = strip_punct(raw);
        if token.is_empty() {
            continue;
        }
        let slot = if is_file_name(token) {
            "file name"
        } else if is_phone(token) {
            "phone"
        } else if is_person_name(token, i) {
            "name"
        } else {
            continue;
        };
        if !parameters.contains_key(slot) {
            parameters.insert(slot.to_string(), token.to_string());
            claimed[i] = true;
        }
    }

    let mut intent_tokens: Vec<String> = raw_tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| !claimed[*i])
        .map(|(_, raw)| {
            raw.chars()
                .filter(|c| !matches!(c, ',' | '.' | ';' | ':' | '!' | '?'))
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect();
    while let Some(last) = intent_tokens.last() {
        if TRAILING_PREPOSITIONS.contains(&last.as_str()) {
            intent_tokens.pop();
        } else {
            break;
        }
    }
    let intent = intent_tokens.join(" ");

    serde_json::json!({
        "intent": intent,
        "parameters": parameters,
    })
    .to_string()
}

// ── candidate scoring ────────────────────────────────────────────────────

/// Fixed breakpoints mapping cosine similarity to the 1–7 scale.
pub fn likert_from_similarity(sim: f32) -> u8 {
    if sim >= 0.55 {
        7
    } else if sim >= 0.45 {
        6
    } else if sim >= 0.35 {
        5
    } else if sim >= 0.25 {
        4
    } else if sim >= 0.15 {
        3
    } else if sim >= 0.05 {
        2
    } else {
        1
    }
}

/// Best similarity between the question and several views of a candidate:
/// its own text+description, description alone, and compositions with
/// sibling texts and reachable targets. Taking the max lets a candidate win
/// through whichever facet actually relates to the task.
pub fn candidate_similarity(
    question: &str,
    text: &str,
    desc: &str,
    siblings: &str,
    targets: &str,
) -> f32 {
    let q = embed_text(question);
    let variants = [
        format!("{text} {desc}"),
        desc.to_string(),
        format!("{text} {desc} {siblings}"),
        format!("{text} {desc} {targets}"),
        format!("{text} {desc} {siblings} {targets}"),
    ];
    let mut best = 0.0f32;
    for v in &variants {
        if v.trim().is_empty() {
            continue;
        }
        best = best.max(cosine(&q, &embed_text(v)));
    }
    best
}

// ── text parameter choice ────────────────────────────────────────────────

fn choose_text_parameter(
    textbox_text: &str,
    textbox_desc: &str,
    parameters: &[(String, String)],
) -> String {
    let box_tokens = tokenize(&format!("{textbox_text} {textbox_desc}"));
    let mut best: Option<(usize, &str)> = None;
    for (name, value) in parameters {
        let overlap = tokenize(name)
            .iter()
            .filter(|t| box_tokens.contains(t))
            .count();
        if overlap > 0 && best.map_or(true, |(b, _)| overlap > b) {
            best = Some((overlap, value));
        }
    }
    match best {
        Some((_, value)) => value.to_string(),
        None => "none".to_string(),
    }
}

// ── correctness judgement ────────────────────────────────────────────────

struct Judged {
    label: String,
    interactive: bool,
    similarity: f32,
    has_targets: bool,
}

fn judge_elements(question_vec: &[f32], page: &str) -> Vec<Judged> {
    let Ok(parsed) = parse_serialized_page(page) else {
        return Vec::new();
    };
    parsed
        .iter()
        .map(|e| {
            let own = format!("{} {}", e.text, e.description);
            let sim = cosine(question_vec, &embed_text(&own))
                .max(cosine(question_vec, &embed_text(&e.description)));
            Judged {
                label: e.label().to_string(),
                interactive: e.interactive(),
                similarity: sim,
                has_targets: !e.targets.is_empty(),
            }
        })
        .collect()
}

/// A page stays relevant when any element — labels included — relates to the
/// question, or when GUI understanding marked reachable targets on it.
fn page_relevant(elements: &[Judged]) -> bool {
    elements
        .iter()
        .any(|e| e.similarity >= RELEVANCE_FLOOR || e.has_targets)
}

fn judge_correctness(question: &str, page_before: &str, page_after: &str, last_op_text: &str) -> String {
    let q = embed_text(question);
    let after = judge_elements(&q, page_after);
    if page_relevant(&after) {
        return serde_json::json!({"correct": true, "penalty": 0}).to_string();
    }
    let before = judge_elements(&q, page_before);
    let penalty = if !page_relevant(&before) {
        PENALTY_BLAME_EARLIER
    } else {
        let acted_sim = before
            .iter()
            .find(|e| e.label == last_op_text)
            .map(|e| e.similarity)
            .unwrap_or(0.0);
        let better_alternative = before
            .iter()
            .any(|e| e.interactive && e.similarity > acted_sim);
        if better_alternative {
            PENALTY_OBVIOUS
        } else {
            PENALTY_PLAIN
        }
    };
    serde_json::json!({"correct": false, "penalty": penalty}).to_string()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::gui::{serialize_page, ActionKind, GuiElement, GuiPage, Role};
    use crate::oracle::embed::question_text;
    use crate::oracle::{
        CorrectnessInputs, LikertInputs, Oracle, TextParameterInputs, Understanding,
    };

    fn oracle() -> Oracle {
        Oracle::new(Arc::new(HeuristicOracle::new()))
    }

    fn query(kind: OracleKind, pairs: &[(&str, &str)]) -> OracleQuery {
        OracleQuery {
            kind,
            prompt: String::new(),
            fields: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    // ── understanding ───────────────────────────────────────────────────

    #[test]
    fn understands_file_import_command() {
        let u = oracle()
            .understand_command("import contacts from contacts.vcf")
            .unwrap();
        assert_eq!(
            u,
            Understanding {
                intent: "import contacts".to_string(),
                parameters: vec![("file name".to_string(), "contacts.vcf".to_string())],
            }
        );
    }

    #[test]
    fn understands_name_and_phone() {
        let u = oracle()
            .understand_command("save Bob, 4445556666 as a new contact")
            .unwrap();
        assert_eq!(u.intent, "save as a new contact");
        assert_eq!(
            u.parameters,
            vec![
                ("name".to_string(), "Bob".to_string()),
                ("phone".to_string(), "4445556666".to_string()),
            ]
        );
    }

    #[test]
    fn command_without_parameters_keeps_full_intent() {
        let u = oracle().understand_command("unlock with my face").unwrap();
        assert_eq!(u.intent, "unlock with my face");
        assert!(u.parameters.is_empty());
    }

    #[test]
    fn sentence_initial_capital_is_not_a_name() {
        let u = oracle().understand_command("Open the settings").unwrap();
        assert!(u.parameters.is_empty());
        assert_eq!(u.intent, "open the settings");
    }

    #[test]
    fn token_classifiers() {
        assert!(is_file_name("contacts.vcf"));
        assert!(is_file_name("a-b_c.txt"));
        assert!(!is_file_name("ends."));
        assert!(!is_file_name(".vcf"));
        assert!(!is_file_name("nodot"));
        assert!(!is_file_name("toolong.abcde"));
        assert!(is_phone("4445556666"));
        assert!(!is_phone("123456"));
        assert!(!is_phone("12345a7"));
        assert!(is_person_name("Alice", 1));
        assert!(!is_person_name("Alice", 0));
        assert!(!is_person_name("ALICE", 1));
        assert!(!is_person_name("aLice", 1));
    }

    // ── likert ──────────────────────────────────────────────────────────

    #[test]
    fn likert_breakpoints_are_frozen() {
        assert_eq!(likert_from_similarity(0.56), 7);
        assert_eq!(likert_from_similarity(0.55), 7);
        assert_eq!(likert_from_similarity(0.54), 6);
        assert_eq!(likert_from_similarity(0.45), 6);
        assert_eq!(likert_from_similarity(0.44), 5);
        assert_eq!(likert_from_similarity(0.35), 5);
        assert_eq!(likert_from_similarity(0.34), 4);
        assert_eq!(likert_from_similarity(0.25), 4);
        assert_eq!(likert_from_similarity(0.24), 3);
        assert_eq!(likert_from_similarity(0.15), 3);
        assert_eq!(likert_from_similarity(0.14), 2);
        assert_eq!(likert_from_similarity(0.05), 2);
        assert_eq!(likert_from_similarity(0.04), 1);
        assert_eq!(likert_from_similarity(0.0), 1);
    }

    #[test]
    fn likert_gives_top_score_to_clearly_matching_candidate() {
        // question {import, contacts, from, vcf} vs "Import from file":
        // dot 2, norms 2 and sqrt(3) → 0.577 ≥ 0.55 → 7.
        let question = question_text(
            "import contacts from contacts.vcf",
            "import contacts",
            &["contacts.vcf".to_string()],
        );
        let score = oracle()
            .likert(&LikertInputs {
                command: "import contacts from contacts.vcf",
                intent: "import contacts",
                question: &question,
                page: "",
                action: ActionKind::Click,
                candidate_text: "Import from file",
                candidate_desc: "",
                candidate_siblings: &[],
                candidate_targets: &[],
                task_knowledge: &[],
                lessons: &[],
            })
            .unwrap();
        assert_eq!(score, 7);
    }

    #[test]
    fn likert_desc_only_variant_can_carry_a_hub_button() {
        // The button text shares nothing with the question, but the
        // description names what lies behind it.
        let sim = candidate_similarity(
            "turn on sim lock",
            "More security",
            "sim lock, app pinning, encryption",
            "",
            "",
        );
        // Exact: dot 2 over norms 2·sqrt(5) = 0.4472 — likert band 5.
        assert!((sim - 0.4472136).abs() < 1e-6, "got {sim}");
        assert_eq!(likert_from_similarity(sim), 5);
        let text_only = candidate_similarity("turn on sim lock", "More security", "", "", "");
        assert!(sim > text_only, "description must lift the score");
    }

    #[test]
    fn likert_caps_candidates_warned_against_by_lessons() {
        let question = "import contacts from vcf";
        let inputs = |lessons: &'static [String]| LikertInputs {
            command: "import contacts from contacts.vcf",
            intent: "import contacts",
            question,
            page: "",
            action: ActionKind::Click,
            candidate_text: "Import from file",
            candidate_desc: "",
            candidate_siblings: &[],
            candidate_targets: &[],
            task_knowledge: &[],
            lessons,
        };
        assert_eq!(oracle().likert(&inputs(&[])).unwrap(), 7);

        let warning =
            vec![format!("Clicking 'Import from file' {NEGATION_MARKER} with: import contacts")];
        let warned = oracle()
            .likert(&LikertInputs { lessons: &warning, ..inputs(&[]) })
            .unwrap();
        assert_eq!(warned, 2);

        // A lesson without the negation marker is advice, not a warning.
        let advice = vec!["When working on 'import contacts', the right order is: click 'Import from file'.".to_string()];
        let advised = oracle()
            .likert(&LikertInputs { lessons: &advice, ..inputs(&[]) })
            .unwrap();
        assert_eq!(advised, 7);
    }

    #[test]
    fn likert_targets_variant_rescues_an_opaque_button() {
        let question = "enable app pinning";
        let bare = candidate_similarity(question, "More", "", "", "");
        let with_targets = candidate_similarity(question, "More", "", "", "App pinning; SIM lock");
        assert!(bare < 0.05);
        assert!(with_targets > bare);
    }

    // ── text parameter ──────────────────────────────────────────────────

    #[test]
    fn text_parameter_matches_box_description_to_parameter_name() {
        let parameters = vec![
            ("name".to_string(), "Bob".to_string()),
            ("phone".to_string(), "4445556666".to_string()),
        ];
        let ask = |desc: &str| {
            oracle()
                .text_parameter(&TextParameterInputs {
                    command: "save Bob, 4445556666 as a new contact",
                    intent: "save as a new contact",
                    textbox_text: "",
                    textbox_desc: desc,
                    parameters: &parameters,
                    task_knowledge: &[],
                })
                .unwrap()
        };
        assert_eq!(ask("Name"), "Bob");
        assert_eq!(ask("Phone number"), "4445556666");
        assert_eq!(ask("Email address"), "");
    }

    #[test]
    fn text_parameter_prefers_larger_overlap() {
        let parameters = vec![
            ("file name".to_string(), "contacts.vcf".to_string()),
            ("name".to_string(), "Bob".to_string()),
        ];
        let got = choose_text_parameter("", "File name", &parameters);
        assert_eq!(got, "contacts.vcf", "two-token overlap beats one");
    }

    // ── completeness ────────────────────────────────────────────────────

    #[test]
    fn completeness_reads_the_cue_from_the_page() {
        let oracle = Oracle::new(Arc::new(
            HeuristicOracle::new().with_cue("import contacts from contacts.vcf", "Contacts imported"),
        ));
        let page_done = "<label id=\"e1\" text=\"Contacts imported\"></label>";
        let page_not = "<label id=\"e1\" text=\"Pick a file\"></label>";
        assert!(oracle
            .completeness("import contacts from contacts.vcf", "import contacts", page_done)
            .unwrap());
        assert!(!oracle
            .completeness("import contacts from contacts.vcf", "import contacts", page_not)
            .unwrap());
        // Unknown command → fallback false.
        assert!(!oracle.completeness("other", "other", page_done).unwrap());
    }

    // ── correctness ─────────────────────────────────────────────────────

    fn page(elements: Vec<GuiElement>) -> String {
        serialize_page(&GuiPage::new(
            GuiElement::new("e0", Role::Container).with_children(elements),
        ))
    }

    fn button(id: &str, text: &str) -> GuiElement {
        GuiElement::new(id, Role::Button).with_text(text)
    }

    fn label(id: &str, text: &str) -> GuiElement {
        GuiElement::new(id, Role::Label).with_text(text)
    }

    #[test]
    fn correctness_accepts_a_relevant_page() {
        let question = "import contacts from vcf";
        let after = page(vec![button("e1", "Import from file"), button("e2", "Export to file")]);
        let v = oracle()
            .correctness(&CorrectnessInputs {
                command: "import contacts from contacts.vcf",
                intent: "import contacts",
                question,
                last_op: "click 'Fix & Manage'",
                last_op_text: "Fix & Manage",
                page_before: &page(vec![button("e1", "Add"), button("e2", "Fix & Manage")]),
                page_after: &after,
            })
            .unwrap();
        assert!(v.correct);
        assert_eq!(v.penalty, 0);
    }

    #[test]
    fn correctness_counts_labels_toward_relevance() {
        // No interactive element relates, but the page header does.
        let question = question_text(
            "save Bob, 4445556666 as a new contact",
            "save as a new contact",
            &["Bob".to_string(), "4445556666".to_string()],
        );
        let after = page(vec![
            label("e1", "New contact"),
            GuiElement::new("e2", Role::Textbox).with_description("Name"),
            button("e3", "Save"),
        ]);
        let v = oracle()
            .correctness(&CorrectnessInputs {
                command: "save Bob, 4445556666 as a new contact",
                intent: "save as a new contact",
                question: &question,
                last_op: "click 'Add'",
                last_op_text: "Add",
                page_before: &page(vec![button("e1", "Add")]),
                page_after: &after,
            })
            .unwrap();
        assert!(v.correct, "label 'New contact' keeps the form relevant");
    }

    #[test]
    fn correctness_blames_earlier_steps_when_before_page_was_already_off() {
        let question = "import contacts from vcf";
        let off1 = page(vec![button("e1", "Brightness"), button("e2", "Volume")]);
        let off2 = page(vec![button("e1", "Wallpaper")]);
        let v = oracle()
            .correctness(&CorrectnessInputs {
                command: "import contacts from contacts.vcf",
                intent: "import contacts",
                question,
                last_op: "click 'Brightness'",
                last_op_text: "Brightness",
                page_before: &off1,
                page_after: &off2,
            })
            .unwrap();
        assert!(!v.correct);
        assert_eq!(v.penalty, PENALTY_BLAME_EARLIER);
    }

    #[test]
    fn correctness_penalty_depends_on_visible_alternatives() {
        let question = "import contacts from vcf";
        // Before-page relevant via the label; the acted element and the
        // alternative both score equally → no strictly better option → 4.
        let before_no_better = page(vec![
            label("e1", "Contacts"),
            button("e2", "Add", ).with_description("add new contacts"),
            button("e3", "Fix & Manage").with_description("import and export"),
        ]);
        let after_off = page(vec![label("e1", "New contact"), button("e2", "Save")]);
        let v = oracle()
            .correctness(&CorrectnessInputs {
                command: "import contacts from contacts.vcf",
                intent: "import contacts",
                question,
                last_op: "click 'Add'",
                last_op_text: "Add",
                page_before: &before_no_better,
                page_after: &after_off,
            })
            .unwrap();
        assert!(!v.correct);
        assert_eq!(v.penalty, PENALTY_PLAIN);

        // Now the alternative clearly outscores the acted element → 9.
        let before_better = page(vec![
            label("e1", "Contacts"),
            button("e2", "Add"),
            button("e3", "Import contacts from file"),
        ]);
        let v = oracle()
            .correctness(&CorrectnessInputs {
                command: "import contacts from contacts.vcf",
                intent: "import contacts",
                question,
                last_op: "click 'Add'",
                last_op_text: "Add",
                page_before: &before_better,
                page_after: &after_off,
            })
            .unwrap();
        assert!(!v.correct);
        assert_eq!(v.penalty, PENALTY_OBVIOUS);
    }

    #[test]
    fn correctness_targets_mark_a_page_relevant() {
        let question = "turn on sim lock";
        let mut hub = button("e1", "Apps");
        hub.targets = vec!["SIM lock".to_string()];
        let after = page(vec![hub]);
        let v = oracle()
            .correctness(&CorrectnessInputs {
                command: "turn on sim lock",
                intent: "turn on sim lock",
                question,
                last_op: "click 'Settings'",
                last_op_text: "Settings",
                page_before: &page(vec![button("e1", "Settings")]),
                page_after: &after,
            })
            .unwrap();
        assert!(v.correct, "reachable targets keep a page relevant");
    }

    // ── lessons ─────────────────────────────────────────────────────────

    #[test]
    fn lessons_have_frozen_shapes() {
        let provider = HeuristicOracle::new();
        let env_lesson = provider
            .respond(&query(
                OracleKind::Lesson,
                &[
                    (fields::LESSON_KIND, "environment"),
                    (fields::ERRONEOUS_TEXT, "Add"),
                    (fields::INTENT, "import contacts"),
                ],
            ))
            .unwrap();
        assert_eq!(env_lesson, "Clicking 'Add' does not help with: import contacts");
        assert!(env_lesson.contains(NEGATION_MARKER));

        let exec_lesson = provider
            .respond(&query(
                OracleKind::Lesson,
                &[
                    (fields::LESSON_KIND, "execution"),
                    (fields::ERRONEOUS_TEXT, "Save"),
                    (fields::INTENT, "save as a new contact"),
                    (fields::CORRECT_PATH, "click 'Add' then input 'Bob' into 'Name' then click 'Save'"),
                ],
            ))
            .unwrap();
        assert!(!exec_lesson.contains(NEGATION_MARKER));
        assert!(exec_lesson.contains("right order"));
        assert!(exec_lesson.contains("click 'Add'"));
    }

    #[test]
    fn provider_is_deterministic() {
        let provider = HeuristicOracle::new();
        let q = query(
            OracleKind::Likert,
            &[
                (fields::QUESTION, "import contacts from vcf"),
                (fields::CANDIDATE_TEXT, "Import from file"),
            ],
        );
        assert_eq!(provider.respond(&q).unwrap(), provider.respond(&q).unwrap());
    }
}
