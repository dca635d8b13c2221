//! Long-term knowledge accumulated across tasks.
//!
//! Five append-only stores, all insertion-ordered and persisted as JSONL:
//!
//! - **sequences** — templated operation sequences from completed tasks,
//!   consumed by replay.
//! - **task knowledge** — per-task parameter assignments, rendered into
//!   prompts as worked examples.
//! - **environment lessons** — warnings about misleading elements (these
//!   carry the negation marker that caps candidate scores).
//! - **execution lessons** — ordering advice from steps that were right but
//!   mistimed.
//! - **triplets** — observed page transitions (before page, operation,
//!   after page), the raw material for GUI understanding.
//!
//! Provenance is `(task_id, seq)` where `seq` is a global insertion counter:
//! reruns of the same suite produce byte-identical stores, which wall-clock
//! stamps would break.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::resolve_placeholders;
use crate::gui::{parse_serialized_page, ActionKind, GuiPage, PageFingerprint};
use crate::oracle::embed::cosine;
use crate::oracle::{Oracle, OracleError};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge io {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("knowledge file {file} line {line}: {detail}")]
    Parse {
        file: String,
        line: usize,
        detail: String,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

// ── records ──────────────────────────────────────────────────────────────

/// One step of a stored sequence; texts and parameters are templates with
/// `<parameter>` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceStep {
    pub action: ActionKind,
    pub element_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecSequence {
    pub task_id: String,
    pub seq: u64,
    pub intent: String,
    pub steps: Vec<SequenceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskKnowledgeItem {
    pub task_id: String,
    pub seq: u64,
    pub command: String,
    pub intent: String,
    pub parameters: Vec<(String, String)>,
}

impl TaskKnowledgeItem {
    /// One prompt line, e.g. `For 'import contacts': file name = contacts.vcf`.
    pub fn render(&self) -> String {
        if self.parameters.is_empty() {
            format!("For '{}': no parameters were needed", self.intent)
        } else {
            let params = self
                .parameters
                .iter()
                .map(|(n, v)| format!("{n} = {v}"))
                .collect::<Vec<_>>()
                .join(", ");
            format!("For '{}': {params}", self.intent)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lesson {
    pub task_id: String,
    pub seq: u64,
    pub intent: String,
    pub text: String,
}

/// An observed page transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub task_id: String,
    pub seq: u64,
    pub before_fp: PageFingerprint,
    pub after_fp: PageFingerprint,
    pub before_page: String,
    pub after_page: String,
    pub action: ActionKind,
    pub element_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
}

// ── templating ───────────────────────────────────────────────────────────

/// Replaces parameter values with `<name>` placeholders, longest value
/// first so nested values cannot corrupt each other.
pub fn templatize(text: &str, parameters: &[(String, String)]) -> String {
    let mut ordered: Vec<&(String, String)> =
        parameters.iter().filter(|(_, v)| !v.is_empty()).collect();
    ordered.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let mut out = text.to_string();
    for (name, value) in ordered {
        out = out.replace(value.as_str(), &format!("<{name}>"));
    }
    out
}

/// Fills `<name>` placeholders from the map; `None` when one is missing.
pub fn instantiate(template: &str, parameters: &BTreeMap<String, String>) -> Option<String> {
    resolve_placeholders(template, parameters)
}

// ── the knowledge base ───────────────────────────────────────────────────

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KnowledgeBase {
    sequences: Vec<ExecSequence>,
    task_items: Vec<TaskKnowledgeItem>,
    env_lessons: Vec<Lesson>,
    exec_lessons: Vec<Lesson>,
    triplets: Vec<Triplet>,
    next_seq: u64,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    pub fn sequences(&self) -> &[ExecSequence] {
        &self.sequences
    }

    pub fn task_items(&self) -> &[TaskKnowledgeItem] {
        &self.task_items
    }

    pub fn env_lessons(&self) -> &[Lesson] {
        &self.env_lessons
    }

    pub fn exec_lessons(&self) -> &[Lesson] {
        &self.exec_lessons
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn add_sequence(
        &mut self,
        task_id: &str,
        intent: &str,
        steps: Vec<SequenceStep>,
    ) -> &ExecSequence {
        let seq = self.next_seq();
        self.sequences.push(ExecSequence {
            task_id: task_id.to_string(),
            seq,
            intent: intent.to_string(),
            steps,
        });
        self.sequences.last().expect("just pushed")
    }

    pub fn add_task_item(
        &mut self,
        task_id: &str,
        command: &str,
        intent: &str,
        parameters: Vec<(String, String)>,
    ) {
        let seq = self.next_seq();
        self.task_items.push(TaskKnowledgeItem {
            task_id: task_id.to_string(),
            seq,
            command: command.to_string(),
            intent: intent.to_string(),
            parameters,
        });
    }

    pub fn add_env_lesson(&mut self, task_id: &str, intent: &str, text: &str) {
        let seq = self.next_seq();
        self.env_lessons.push(Lesson {
            task_id: task_id.to_string(),
            seq,
            intent: intent.to_string(),
            text: text.to_string(),
        });
    }

    pub fn add_exec_lesson(&mut self, task_id: &str, intent: &str, text: &str) {
        let seq = self.next_seq();
        self.exec_lessons.push(Lesson {
            task_id: task_id.to_string(),
            seq,
            intent: intent.to_string(),
            text: text.to_string(),
        });
    }

    /// Records a transition unless an equivalent one is already stored.
    /// Returns true when the triplet was new.
    #[allow(clippy::too_many_arguments)]
    pub fn add_triplet(
        &mut self,
        task_id: &str,
        before_fp: PageFingerprint,
        after_fp: PageFingerprint,
        before_page: String,
        after_page: String,
        action: ActionKind,
        element_text: String,
        parameter: Option<String>,
    ) -> bool {
        let duplicate = self.triplets.iter().any(|t| {
            t.before_fp == before_fp
                && t.after_fp == after_fp
                && t.action == action
                && t.element_text == element_text
        });
        if duplicate {
            return false;
        }
        let seq = self.next_seq();
        self.triplets.push(Triplet {
            task_id: task_id.to_string(),
            seq,
            before_fp,
            after_fp,
            before_page,
            after_page,
            action,
            element_text,
            parameter,
        });
        true
    }

    // ── retrieval ────────────────────────────────────────────────────────

    /// The stored sequence whose intent is most similar to `intent`, with
    /// its similarity. Ties keep the earliest-stored sequence.
    pub fn best_sequence(
        &self,
        oracle: &Oracle,
        intent: &str,
    ) -> Result<Option<(&ExecSequence, f32)>, OracleError> {
        let query = oracle.embed(intent)?;
        let mut best: Option<(&ExecSequence, f32)> = None;
        for seq in &self.sequences {
            let sim = cosine(&query, &oracle.embed(&seq.intent)?);
            if best.map_or(true, |(_, b)| sim > b) {
                best = Some((seq, sim));
            }
        }
        Ok(best)
    }

    /// Task-knowledge prompt lines whose intent is similar enough to the
    /// current one. Insertion order is preserved.
    pub fn relevant_task_lines(
        &self,
        oracle: &Oracle,
        intent: &str,
        threshold: f32,
    ) -> Result<Vec<String>, OracleError> {
        let query = oracle.embed(intent)?;
        let mut lines = Vec::new();
        for item in &self.task_items {
            if cosine(&query, &oracle.embed(&item.intent)?) >= threshold {
                lines.push(item.render());
            }
        }
        Ok(lines)
    }

    /// Lesson texts relevant to the current intent: environment lessons
    /// first, then execution lessons, each in insertion order.
    pub fn relevant_lessons(
        &self,
        oracle: &Oracle,
        intent: &str,
        threshold: f32,
    ) -> Result<Vec<String>, OracleError> {
        let query = oracle.embed(intent)?;
        let mut lines = Vec::new();
        for lesson in self.env_lessons.iter().chain(self.exec_lessons.iter()) {
            if cosine(&query, &oracle.embed(&lesson.intent)?) >= threshold {
                lines.push(lesson.text.clone());
            }
        }
        Ok(lines)
    }

    /// GUI understanding: for each clickable element of `page`, walk stored
    /// triplets up to `max_depth` hops (first hop matched by element text,
    /// later hops by page fingerprint) and collect texts of reachable
    /// elements whose weighted composition — own text and description three
    /// times, parent and sibling labels once — relates to the command at or
    /// above `threshold`.
    pub fn targets_for_page(
        &self,
        oracle: &Oracle,
        page: &GuiPage,
        page_fp: &PageFingerprint,
        command: &str,
        threshold: f32,
        max_depth: usize,
    ) -> Result<BTreeMap<String, Vec<String>>, OracleError> {
        let command_vec = oracle.embed(command)?;
        let mut result: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for element in page.iter().filter(|e| e.clickable) {
            let label = element.label();
            if label.is_empty() {
                continue;
            }
            let mut targets: Vec<String> = Vec::new();
            // First hop: transitions taken from this page via this element.
            let mut frontier: Vec<&PageFingerprint> = Vec::new();
            let mut visited: Vec<&PageFingerprint> = vec![page_fp];
            for t in &self.triplets {
                if t.before_fp == *page_fp && t.element_text == label {
                    self.collect_relevant(oracle, &command_vec, &t.after_page, threshold, &mut targets)?;
                    if !visited.contains(&&t.after_fp) {
                        visited.push(&t.after_fp);
                        frontier.push(&t.after_fp);
                    }
                }
            }
            // Deeper hops: any stored transition out of a reached page.
            for _ in 1..max_depth {
                let mut next: Vec<&PageFingerprint> = Vec::new();
                for fp in &frontier {
                    for t in &self.triplets {
                        if t.before_fp == **fp {
                            self.collect_relevant(
                                oracle,
                                &command_vec,
                                &t.after_page,
                                threshold,
                                &mut targets,
                            )?;
                            if !visited.contains(&&t.after_fp) {
                                visited.push(&t.after_fp);
                                next.push(&t.after_fp);
                            }
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
            if !targets.is_empty() {
                result.insert(label.to_string(), targets);
            }
        }
        Ok(result)
    }

    fn collect_relevant(
        &self,
        oracle: &Oracle,
        command_vec: &[f32],
        page_text: &str,
        threshold: f32,
        targets: &mut Vec<String>,
    ) -> Result<(), OracleError> {
        let Ok(parsed) = parse_serialized_page(page_text) else {
            return Ok(());
        };
        collect_relevant_in(oracle, command_vec, &parsed.root, None, threshold, targets)
    }

    // ── persistence ──────────────────────────────────────────────────────

    /// Writes the five stores as JSONL files in `dir` (created if needed),
    /// each atomically via a temp file. File names are fixed:
    /// `sequences.jsonl`, `task_knowledge.jsonl`, `env_lessons.jsonl`,
    /// `exec_lessons.jsonl`, `triplets.jsonl`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), KnowledgeError> {
        std::fs::create_dir_all(dir).map_err(|source| KnowledgeError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_store(dir, "sequences", &self.sequences)?;
        write_store(dir, "task_knowledge", &self.task_items)?;
        write_store(dir, "env_lessons", &self.env_lessons)?;
        write_store(dir, "exec_lessons", &self.exec_lessons)?;
        write_store(dir, "triplets", &self.triplets)?;
        Ok(())
    }

    /// Loads stores from `dir`. Missing files (or a missing directory)
    /// load as empty stores; malformed lines fail with file and line.
    pub fn load_dir(dir: &Path) -> Result<Self, KnowledgeError> {
        let mut kb = KnowledgeBase::new();
        kb.sequences = read_store(dir, "sequences")?;
        kb.task_items = read_store(dir, "task_knowledge")?;
        kb.env_lessons = read_store(dir, "env_lessons")?;
        kb.exec_lessons = read_store(dir, "exec_lessons")?;
        kb.triplets = read_store(dir, "triplets")?;
        kb.next_seq = kb
            .sequences
            .iter()
            .map(|s| s.seq)
            .chain(kb.task_items.iter().map(|t| t.seq))
            .chain(kb.env_lessons.iter().map(|l| l.seq))
            .chain(kb.exec_lessons.iter().map(|l| l.seq))
            .chain(kb.triplets.iter().map(|t| t.seq))
            .max()
            .unwrap_or(0);
        Ok(kb)
    }
}

/// Weighted composition similarity for one element subtree, recursing so
/// every element of the page is judged with its own parent/sibling context.
fn collect_relevant_in(
    oracle: &Oracle,
    command_vec: &[f32],
    element: &crate::gui::GuiElement,
    parent: Option<&crate::gui::GuiElement>,
    threshold: f32,
    targets: &mut Vec<String>,
) -> Result<(), OracleError> {
    let label = element.label();
    if !label.is_empty() {
        let own = format!("{} {}", element.text, element.description);
        let mut composition = format!("{own} {own} {own}");
        if let Some(p) = parent {
            composition.push(' ');
            composition.push_str(p.label());
            for sibling in &p.children {
                if !std::ptr::eq(sibling, element) {
                    composition.push(' ');
                    composition.push_str(sibling.label());
                }
            }
        }
        let sim = cosine(command_vec, &oracle.embed(&composition)?);
        if sim >= threshold && !targets.iter().any(|t| t == label) {
            targets.push(label.to_string());
        }
    }
    for child in &element.children {
        collect_relevant_in(oracle, command_vec, child, Some(element), threshold, targets)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    format_version: u32,
    store: String,
}

fn store_path(dir: &Path, store: &str) -> std::path::PathBuf {
    dir.join(format!("{store}.jsonl"))
}

fn write_store<T: Serialize>(dir: &Path, store: &str, rows: &[T]) -> Result<(), KnowledgeError> {
    let path = store_path(dir, store);
    let io_err = |source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = serde_json::to_string(&StoreHeader {
        format_version: FORMAT_VERSION,
        store: store.to_string(),
    })
    .expect("header serializes");
    out.push('\n');
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("store row serializes"));
        out.push('\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, out).map_err(io_err)?;
    std::fs::rename(&tmp, &path).map_err(io_err)?;
    Ok(())
}

fn read_store<T: serde::de::DeserializeOwned>(
    dir: &Path,
    store: &str,
) -> Result<Vec<T>, KnowledgeError> {
    let path = store_path(dir, store);
    let file = path.display().to_string();
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(KnowledgeError::Io { path: file, source }),
    };
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or_else(|| KnowledgeError::Parse {
        file: file.clone(),
        line: 1,
        detail: "empty store file".to_string(),
    })?;
    let header: StoreHeader =
        serde_json::from_str(header_line).map_err(|e| KnowledgeError::Parse {
            file: file.clone(),
            line: 1,
            detail: format!("bad header: {e}"),
        })?;
    if header.format_version != FORMAT_VERSION {
        return Err(KnowledgeError::Parse {
            file,
            line: 1,
            detail: format!("unsupported format_version {}", header.format_version),
        });
    }
    if header.store != store {
        return Err(KnowledgeError::Parse {
            file,
            line: 1,
            detail: format!("expected store '{store}', found '{}'", header.store),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line).map_err(|e| KnowledgeError::Parse {
                file: file.clone(),
                line: idx + 1,
                detail: e.to_string(),
            })?,
        );
    }
    Ok(rows)
}
