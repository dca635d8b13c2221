//! The explore-learn agent.
//!
//! A run has a fast path and a slow path. The fast path (replay) fires when
//! stored knowledge holds an operation sequence whose intent matches the new
//! command closely enough: parameters are substituted into the templates and
//! the steps are executed directly. The slow path explores: each iteration
//! scores every candidate operation on the current page, applies the best
//! one, then checks completeness (is the task done?) and correctness (did
//! that step keep us on track?). Incorrect steps are reverted, and repeated
//! failures accumulate penalties that steer scoring away from dead ends:
//!
//! ```text
//! final = (likert + tiebreak) / (1 + repetition + backtracking)
//! ```
//!
//! After completion the run is summarized into long-term knowledge: the
//! minimal parameter-covering path becomes a templated sequence, parameter
//! assignments become worked examples, and erroneous steps become lessons.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{AppDoc, EnvError, Environment};
use crate::experience::{CheckOutcome, EdgeKind, ExperienceGraph};
use crate::gui::{
    fingerprint_page, mark_new_elements, serialize_page, ActionKind, GuiElement, GuiPage,
    Operation, PageFingerprint,
};
use crate::knowledge::{templatize, KnowledgeBase, SequenceStep};
use crate::oracle::embed::{cosine, question_text, tiebreak_bonus};
use crate::oracle::{
    CorrectnessInputs, LessonInputs, LessonKind, LikertInputs, Oracle, OracleError,
    TextParameterInputs, Understanding,
};

/// How many transition hops GUI understanding follows when computing
/// reachable targets.
pub const MAX_TARGET_HOPS: usize = 4;

/// The candidate scoring formula:
/// `(likert + tiebreak) / (1 + repetition + backtracking)`.
///
/// `likert` is the 1–7 judged fitness, `tiebreak` the similarity bonus in
/// [0, 1], `repetition` the fixed penalty for re-proposing a standing step,
/// and `backtracking` the penalty accumulated against this operation by the
/// checker.
pub fn final_score(likert: u8, tiebreak: f64, repetition: f64, backtracking: f64) -> f64 {
    (f64::from(likert) + tiebreak) / (1.0 + repetition + backtracking)
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Similarity thresholds for consuming stored knowledge. The defaults suit
/// the built-in hashed bag-of-words embedding; real embedding models cluster
/// much tighter, so [`Thresholds::remote`] raises every bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Reachable-target relevance during GUI understanding.
    pub target: f32,
    /// Task-knowledge examples quoted into prompts.
    pub example: f32,
    /// Lessons quoted into prompts.
    pub lesson: f32,
    /// Intent match required before a stored sequence is replayed.
    pub replay_intent: f32,
}

impl Thresholds {
    pub fn heuristic() -> Self {
        Thresholds {
            target: 0.55,
            example: 0.60,
            lesson: 0.50,
            replay_intent: 0.90,
        }
    }

    pub fn remote() -> Self {
        Thresholds {
            target: 0.80,
            example: 0.82,
            lesson: 0.78,
            replay_intent: 0.90,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::heuristic()
    }
}

/// What happens when the agent believes the task is complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfirmationPolicy {
    /// No confirmer in the loop: accept the completeness verdict.
    #[default]
    Ignore,
    /// A confirmer approves: accept.
    Confirm,
    /// A confirmer rejects: bar this end state for the rest of the run and
    /// keep working.
    NotCompleted,
    /// A confirmer aborts the run.
    ForceTerminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Maximum operations per run, undo steps included.
    pub step_limit: usize,
    /// Score divisor contribution for re-proposing a still-standing step.
    pub repetition_penalty: f64,
    /// Accumulated backtracking penalty at which a failing step is accepted
    /// anyway (the checker may be wrong; there may be no other way through).
    pub tolerance: f64,
    /// Run the correctness check and backtrack on failures.
    pub enable_checking: bool,
    /// Consume stored knowledge: replay, lessons, examples, GUI targets.
    pub enable_knowledge: bool,
    /// Produce knowledge: record transitions, summarize completed runs.
    pub summarize: bool,
    pub confirmation: ConfirmationPolicy,
    pub thresholds: Thresholds,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            step_limit: 20,
            repetition_penalty: 10.0,
            tolerance: 9.0,
            enable_checking: true,
            enable_knowledge: true,
            summarize: true,
            confirmation: ConfirmationPolicy::Ignore,
            thresholds: Thresholds::default(),
        }
    }
}

impl AgentConfig {
    /// Ablated configuration: scoring only — no checking, no backtracking,
    /// no knowledge in or out.
    pub fn baseline() -> Self {
        AgentConfig {
            enable_checking: false,
            enable_knowledge: false,
            summarize: false,
            ..AgentConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    StepLimitExceeded,
    ForceTerminated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub task_id: String,
    pub command: String,
    pub intent: String,
    /// (name, value) pairs the agent understood from the command.
    pub parameters: Vec<(String, String)>,
    pub status: RunStatus,
    /// The environment's own completion verdict at the end of the run —
    /// ground truth for grading, independent of the agent's belief.
    pub ground_truth_success: bool,
    pub via_replay: bool,
    pub graph: ExperienceGraph,
    pub final_fingerprint: PageFingerprint,
    /// Step indices of the minimal parameter-covering forward path, when the
    /// run completed and one exists; empty otherwise.
    pub correct_path: Vec<usize>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Total operations executed, undo steps included.
    pub fn executed_steps(&self) -> usize {
        self.graph.step_count()
    }
}

/// Accumulated backtracking penalties, keyed by the state an operation was
/// taken from plus the operation's identity. Re-proposing a penalized
/// operation at the same state divides its score; other states are
/// unaffected.
#[derive(Debug, Clone, Default)]
pub struct PenaltyLedger {
    map: BTreeMap<(String, ActionKind, String, String), f64>,
}

impl PenaltyLedger {
    pub fn new() -> Self {
        PenaltyLedger::default()
    }

    fn key(
        source: &PageFingerprint,
        action: ActionKind,
        element_label: &str,
        parameter: Option<&str>,
    ) -> (String, ActionKind, String, String) {
        (
            source.0.clone(),
            action,
            element_label.to_string(),
            parameter.unwrap_or_default().to_string(),
        )
    }

    pub fn accumulated(
        &self,
        source: &PageFingerprint,
        action: ActionKind,
        element_label: &str,
        parameter: Option<&str>,
    ) -> f64 {
        self.map
            .get(&Self::key(source, action, element_label, parameter))
            .copied()
            .unwrap_or(0.0)
    }

    /// Adds `amount` and returns the new total for this key.
    pub fn charge(
        &mut self,
        source: &PageFingerprint,
        action: ActionKind,
        element_label: &str,
        parameter: Option<&str>,
        amount: f64,
    ) -> f64 {
        let entry = self
            .map
            .entry(Self::key(source, action, element_label, parameter))
            .or_insert(0.0);
        *entry += amount;
        *entry
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn max_accumulated(&self) -> f64 {
        self.map.values().copied().fold(0.0, f64::max)
    }
}

/// Runs one task end to end: replay when stored knowledge allows it,
/// exploration otherwise, then summarization into `kb`.
pub fn run_task(
    oracle: &Oracle,
    config: &AgentConfig,
    app: &Arc<AppDoc>,
    task_id: &str,
    kb: &mut KnowledgeBase,
) -> Result<RunReport, AgentError> {
    let mut env = Environment::new(Arc::clone(app), task_id)?;
    let command = env.task().command.clone();
    let understanding = oracle.understand_command(&command)?;
    let question = question_text(
        &command,
        &understanding.intent,
        &understanding.parameter_values(),
    );

    if config.enable_knowledge {
        if let Some(report) = try_replay(
            oracle,
            config,
            kb,
            &env,
            task_id,
            &command,
            &understanding,
        )? {
            return Ok(report);
        }
    }

    let mut explorer = Explorer {
        oracle,
        config,
        kb,
        env: &mut env,
        task_id: task_id.to_string(),
        command,
        understanding,
        question,
        graph: None,
        ledger: PenaltyLedger::new(),
        barred: BTreeSet::new(),
        step_pages: BTreeMap::new(),
        task_lines: Vec::new(),
        lesson_lines: Vec::new(),
    };
    explorer.run()
}

// ── replay ───────────────────────────────────────────────────────────────

/// Executes the best-matching stored sequence on a scratch copy of the
/// environment. Any miss — weak intent match, an uninstantiable template, a
/// missing element, a failing operation, or no completion at the end —
/// abandons the attempt and hands control to exploration.
fn try_replay(
    oracle: &Oracle,
    config: &AgentConfig,
    kb: &mut KnowledgeBase,
    env: &Environment,
    task_id: &str,
    command: &str,
    understanding: &Understanding,
) -> Result<Option<RunReport>, AgentError> {
    let Some((sequence, sim)) = kb.best_sequence(oracle, &understanding.intent)? else {
        return Ok(None);
    };
    if sim < config.thresholds.replay_intent || sequence.steps.is_empty() {
        return Ok(None);
    }
    let params: BTreeMap<String, String> = understanding.parameters.iter().cloned().collect();
    let mut plan: Vec<(ActionKind, String, Option<String>)> = Vec::new();
    for step in &sequence.steps {
        let Some(label) = crate::knowledge::instantiate(&step.element_text, &params) else {
            return Ok(None);
        };
        let parameter = match &step.parameter {
            Some(p) => match crate::knowledge::instantiate(p, &params) {
                Some(v) => Some(v),
                None => return Ok(None),
            },
            None => None,
        };
        plan.push((step.action, label, parameter));
    }

    let mut scratch = env.clone();
    let mut graph = ExperienceGraph::new(scratch.current_fingerprint());
    let mut triplets: Vec<(PageFingerprint, PageFingerprint, String, String, ActionKind, String, Option<String>)> =
        Vec::new();
    for (action, label, parameter) in &plan {
        let page = scratch.observe();
        let Some(element) = page.find_by_label(label) else {
            return Ok(None);
        };
        let op = Operation {
            action: *action,
            target: element.id.clone(),
            parameter: parameter.clone(),
        };
        let before_fp = fingerprint_page(&page);
        let before_ser = serialize_page(&page);
        if scratch.apply(&op).is_err() {
            return Ok(None);
        }
        let after_fp = scratch.current_fingerprint();
        let after_ser = scratch.current_serialization();
        let params_used = params_used_by(&understanding.parameters, &op, label);
        graph.record_forward(
            before_fp.clone(),
            after_fp.clone(),
            op.clone(),
            label.clone(),
            None,
            None,
            params_used,
        );
        triplets.push((
            before_fp,
            after_fp,
            before_ser,
            after_ser,
            *action,
            label.clone(),
            parameter.clone(),
        ));
    }
    let final_page = scratch.current_serialization();
    if !oracle.completeness(command, &understanding.intent, &final_page)? {
        return Ok(None);
    }

    // Commit: the scratch walk is the run. Replay records transitions but
    // never re-summarizes — the knowledge that drove it already exists.
    if config.summarize {
        for (before_fp, after_fp, before, after, action, label, parameter) in triplets {
            kb.add_triplet(task_id, before_fp, after_fp, before, after, action, label, parameter);
        }
    }
    let correct_path: Vec<usize> = graph.forward_edges().map(|e| e.step_index).collect();
    let final_fingerprint = scratch.current_fingerprint();
    let ground_truth_success = scratch.check_success();
    Ok(Some(RunReport {
        task_id: task_id.to_string(),
        command: command.to_string(),
        intent: understanding.intent.clone(),
        parameters: understanding.parameters.clone(),
        status: RunStatus::Completed,
        ground_truth_success,
        via_replay: true,
        graph,
        final_fingerprint,
        correct_path,
    }))
}

/// Names of parameters this operation consumed: typed as the parameter, or
/// appearing verbatim in the element's label.
fn params_used_by(
    parameters: &[(String, String)],
    op: &Operation,
    label: &str,
) -> Vec<String> {
    parameters
        .iter()
        .filter(|(_, value)| {
            !value.is_empty()
                && (op.parameter.as_deref() == Some(value.as_str()) || label.contains(value))
        })
        .map(|(name, _)| name.clone())
        .collect()
}

// ── exploration ──────────────────────────────────────────────────────────

/// One scored candidate operation.
struct Candidate {
    op: Operation,
    label: String,
    likert: u8,
    score: f64,
}

/// An actionable element found on the page, before oracle scoring.
struct Seed {
    id: String,
    action: ActionKind,
    text: String,
    desc: String,
    siblings: Vec<String>,
    targets: Vec<String>,
}

fn collect_seeds(root: &GuiElement) -> Vec<Seed> {
    fn walk(el: &GuiElement, parent: Option<&GuiElement>, out: &mut Vec<Seed>) {
        let siblings: Vec<String> = parent
            .map(|p| {
                p.children
                    .iter()
                    .filter(|c| !std::ptr::eq(*c, el))
                    .map(|c| c.label().to_string())
                    .filter(|l| !l.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        let seed = |action: ActionKind| Seed {
            id: el.id.clone(),
            action,
            text: el.text.clone(),
            desc: el.description.clone(),
            siblings: siblings.clone(),
            targets: el.targets.clone(),
        };
        if el.clickable && !el.label().is_empty() {
            out.push(seed(ActionKind::Click));
        }
        if el.editable {
            out.push(seed(ActionKind::TextInput));
        }
        if el.scrollable {
            out.push(seed(ActionKind::ScrollForward));
        }
        for child in &el.children {
            walk(child, Some(el), out);
        }
    }
    let mut out = Vec::new();
    walk(root, None, &mut out);
    out
}

/// Best cosine similarity between the question and the candidate's facets
/// (own text+description, description alone, plus sibling and target
/// compositions), computed through the provider's embedding.
fn best_facet_similarity(
    oracle: &Oracle,
    question_vec: &[f32],
    text: &str,
    desc: &str,
    siblings: &str,
    targets: &str,
) -> Result<f32, OracleError> {
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
        best = best.max(cosine(question_vec, &oracle.embed(v)?));
    }
    Ok(best)
}

struct Explorer<'a> {
    oracle: &'a Oracle,
    config: &'a AgentConfig,
    kb: &'a mut KnowledgeBase,
    env: &'a mut Environment,
    task_id: String,
    command: String,
    understanding: Understanding,
    question: String,
    graph: Option<ExperienceGraph>,
    ledger: PenaltyLedger,
    /// End states a confirmer rejected; completeness claims there are void.
    barred: BTreeSet<String>,
    /// Annotated before/after serializations per forward step, for re-checks
    /// while unwinding.
    step_pages: BTreeMap<usize, (String, String)>,
    task_lines: Vec<String>,
    lesson_lines: Vec<String>,
}

impl Explorer<'_> {
    fn graph(&mut self) -> &mut ExperienceGraph {
        self.graph.as_mut().expect("graph initialized in run()")
    }

    fn run(&mut self) -> Result<RunReport, AgentError> {
        self.graph = Some(ExperienceGraph::new(self.env.current_fingerprint()));
        if self.config.enable_knowledge {
            self.task_lines = self.kb.relevant_task_lines(
                self.oracle,
                &self.understanding.intent,
                self.config.thresholds.example,
            )?;
            self.lesson_lines = self.kb.relevant_lessons(
                self.oracle,
                &self.understanding.intent,
                self.config.thresholds.lesson,
            )?;
        }

        let mut page = self.env.observe();
        let mut fp = fingerprint_page(&page);
        let mut annotated = self.annotate(None, &page, &fp)?;
        let status = loop {
            if self.graph().step_count() >= self.config.step_limit {
                break RunStatus::StepLimitExceeded;
            }
            let candidates = self.score_candidates(&annotated, &fp)?;
            let Some(best) = pick_best(candidates) else {
                // Nowhere to act. Step back if possible; give up otherwise.
                if self.env.journal_len() == 0 {
                    break RunStatus::StepLimitExceeded;
                }
                self.undo_last_step()?;
                page = self.env.observe();
                fp = fingerprint_page(&page);
                annotated = self.annotate(None, &page, &fp)?;
                continue;
            };

            // Apply the chosen operation.
            let before_annotated = serialize_page(&annotated);
            let before_plain = serialize_page(&page);
            self.env.apply(&best.op)?;
            let after_page = self.env.observe();
            let after_fp = fingerprint_page(&after_page);
            let after_plain = serialize_page(&after_page);
            let params_used =
                params_used_by(&self.understanding.parameters, &best.op, &best.label);
            let step = self.graph.as_mut().unwrap().record_forward(
                fp.clone(),
                after_fp.clone(),
                best.op.clone(),
                best.label.clone(),
                Some(best.likert),
                Some(best.score),
                params_used,
            );
            if self.config.summarize {
                self.kb.add_triplet(
                    &self.task_id,
                    fp.clone(),
                    after_fp.clone(),
                    before_plain,
                    after_plain,
                    best.op.action,
                    best.label.clone(),
                    best.op.parameter.clone(),
                );
            }
            let after_annotated_page = self.annotate(Some(&page), &after_page, &after_fp)?;
            let after_annotated = serialize_page(&after_annotated_page);
            self.step_pages
                .insert(step, (before_annotated.clone(), after_annotated.clone()));

            // Completeness, then the confirmation policy.
            let cue_seen = self.oracle.completeness(
                &self.command,
                &self.understanding.intent,
                &after_annotated,
            )?;
            let accepted = cue_seen && !self.barred.contains(&after_fp.0);
            let mut done = None;
            if accepted {
                match self.config.confirmation {
                    ConfirmationPolicy::Ignore | ConfirmationPolicy::Confirm => {
                        done = Some(RunStatus::Completed);
                    }
                    ConfirmationPolicy::NotCompleted => {
                        self.barred.insert(after_fp.0.clone());
                    }
                    ConfirmationPolicy::ForceTerminate => {
                        done = Some(RunStatus::ForceTerminated);
                    }
                }
            }
            if let Some(status) = done {
                self.graph().set_check(
                    step,
                    CheckOutcome {
                        completed: true,
                        correct: true,
                        penalty: 0,
                    },
                );
                break status;
            }

            // Correctness; failures trigger backtracking.
            let mut backtracked = false;
            if self.config.enable_checking {
                let edge = self.graph().edge(step).unwrap().clone();
                let verdict = self.oracle.correctness(&CorrectnessInputs {
                    command: &self.command,
                    intent: &self.understanding.intent,
                    question: &self.question,
                    last_op: &edge.description,
                    last_op_text: &edge.element_label,
                    page_before: &before_annotated,
                    page_after: &after_annotated,
                })?;
                self.graph().set_check(
                    step,
                    CheckOutcome {
                        completed: cue_seen,
                        correct: verdict.correct,
                        penalty: verdict.penalty,
                    },
                );
                if !verdict.correct {
                    self.backtrack(f64::from(verdict.penalty))?;
                    backtracked = true;
                }
            } else {
                self.graph().set_check(
                    step,
                    CheckOutcome {
                        completed: cue_seen,
                        correct: true,
                        penalty: 0,
                    },
                );
            }

            if backtracked {
                page = self.env.observe();
                fp = fingerprint_page(&page);
                annotated = self.annotate(None, &page, &fp)?;
            } else {
                page = after_page;
                fp = after_fp;
                annotated = after_annotated_page;
            }
        };

        let final_fingerprint = self.env.current_fingerprint();
        let ground_truth_success = self.env.check_success();
        let mut correct_path = Vec::new();
        if status == RunStatus::Completed {
            let names: Vec<String> = self
                .understanding
                .parameters
                .iter()
                .map(|(n, _)| n.clone())
                .collect();
            let graph = self.graph.as_ref().unwrap();
            correct_path = graph
                .shortest_correct_path(&final_fingerprint, &names)
                .or_else(|| graph.shortest_correct_path(&final_fingerprint, &[]))
                .unwrap_or_default();
            if self.config.summarize {
                self.summarize(&correct_path)?;
            }
        }

        Ok(RunReport {
            task_id: self.task_id.clone(),
            command: self.command.clone(),
            intent: self.understanding.intent.clone(),
            parameters: self.understanding.parameters.clone(),
            status,
            ground_truth_success,
            via_replay: false,
            graph: self.graph.take().unwrap(),
            final_fingerprint,
            correct_path,
        })
    }

    /// Annotates a freshly observed page: new-element flags relative to the
    /// previous page, and reachable-target texts from stored transitions.
    fn annotate(
        &self,
        previous: Option<&GuiPage>,
        page: &GuiPage,
        fp: &PageFingerprint,
    ) -> Result<GuiPage, AgentError> {
        let mut annotated = match previous {
            Some(prev) => mark_new_elements(prev, page),
            None => page.clone(),
        };
        if self.config.enable_knowledge && !self.kb.triplets().is_empty() {
            let targets = self.kb.targets_for_page(
                self.oracle,
                page,
                fp,
                &self.command,
                self.config.thresholds.target,
                MAX_TARGET_HOPS,
            )?;
            if !targets.is_empty() {
                annotated.for_each_mut(|el| {
                    let label = el.label().to_string();
                    if let Some(t) = targets.get(&label) {
                        el.targets = t.clone();
                    }
                });
            }
        }
        Ok(annotated)
    }

    /// Enumerates and scores every candidate operation on the page.
    fn score_candidates(
        &mut self,
        annotated: &GuiPage,
        fp: &PageFingerprint,
    ) -> Result<Vec<Candidate>, AgentError> {
        let page_ser = serialize_page(annotated);
        let question_vec = self.oracle.embed(&self.question)?;
        let mut out = Vec::new();
        for seed in collect_seeds(&annotated.root) {
            let op = match seed.action {
                ActionKind::Click => Operation::click(&seed.id),
                ActionKind::TextInput => {
                    let value = self.oracle.text_parameter(&TextParameterInputs {
                        command: &self.command,
                        intent: &self.understanding.intent,
                        textbox_text: &seed.text,
                        textbox_desc: &seed.desc,
                        parameters: &self.understanding.parameters,
                        task_knowledge: &self.task_lines,
                    })?;
                    if value.is_empty() {
                        continue; // nothing worth typing here
                    }
                    Operation::text_input(&seed.id, value)
                }
                ActionKind::ScrollForward => Operation::scroll_forward(&seed.id),
                _ => continue,
            };
            let label = if seed.text.is_empty() {
                seed.desc.clone()
            } else {
                seed.text.clone()
            };
            let likert = self.oracle.likert(&LikertInputs {
                command: &self.command,
                intent: &self.understanding.intent,
                question: &self.question,
                page: &page_ser,
                action: seed.action,
                candidate_text: &seed.text,
                candidate_desc: &seed.desc,
                candidate_siblings: &seed.siblings,
                candidate_targets: &seed.targets,
                task_knowledge: &self.task_lines,
                lessons: &self.lesson_lines,
            })?;
            let sim = best_facet_similarity(
                self.oracle,
                &question_vec,
                &seed.text,
                &seed.desc,
                &seed.siblings.join("; "),
                &seed.targets.join("; "),
            )?;
            let repetition = if self.repeats_standing_step(&op, &label, &seed.desc) {
                self.config.repetition_penalty
            } else {
                0.0
            };
            let backtracking =
                self.ledger
                    .accumulated(fp, op.action, &label, op.parameter.as_deref());
            let score = final_score(
                likert,
                f64::from(tiebreak_bonus(sim)),
                repetition,
                backtracking,
            );
            out.push(Candidate {
                op,
                label,
                likert,
                score,
            });
        }
        Ok(out)
    }

    /// True when this candidate re-proposes a forward step that is still in
    /// effect. Text input matches regardless of the typed value, and a
    /// filled textbox is recognized by its description as well as its label.
    fn repeats_standing_step(&mut self, op: &Operation, label: &str, desc: &str) -> bool {
        self.graph().active_forward_edges().any(|e| {
            e.op.action == op.action
                && (e.element_label == label || (!desc.is_empty() && e.element_label == desc))
                && (op.action == ActionKind::TextInput || e.op.parameter == op.parameter)
        })
    }

    /// Reverts the most recent standing forward step and records the undo.
    fn undo_last_step(&mut self) -> Result<usize, AgentError> {
        let undo_op = self
            .env
            .undo_op_for_last()?
            .expect("caller checked the journal is non-empty");
        let page = self.env.observe();
        let from_fp = fingerprint_page(&page);
        let label = page
            .find_by_id(&undo_op.target)
            .map(|e| e.label().to_string())
            .unwrap_or_default();
        let undone_step = self
            .graph()
            .edges()
            .iter()
            .rev()
            .find(|e| e.kind == EdgeKind::Forward && !e.undone)
            .map(|e| e.step_index)
            .expect("a standing forward step matches the journal top");
        self.env.apply(&undo_op)?;
        let to_fp = self.env.current_fingerprint();
        Ok(self
            .graph
            .as_mut()
            .unwrap()
            .record_undo(from_fp, to_fp, undo_op, label, undone_step))
    }

    /// Charges the failing step and unwinds. A zero penalty means the state
    /// was already off track before this step, so blame walks backwards:
    /// each undone predecessor is re-judged until one is charged or the run
    /// is back at the start. A step whose accumulated penalty reaches the
    /// tolerance is accepted where it stands — every alternative has been
    /// tried, so the checker's verdict is overridden once and exploration
    /// continues from the disputed state.
    fn backtrack(&mut self, first_penalty: f64) -> Result<(), AgentError> {
        let mut penalty = first_penalty;
        loop {
            let Some(edge) = self
                .graph()
                .edges()
                .iter()
                .rev()
                .find(|e| e.kind == EdgeKind::Forward && !e.undone)
                .cloned()
            else {
                return Ok(());
            };
            let total = self.ledger.charge(
                &edge.from,
                edge.op.action,
                &edge.element_label,
                edge.op.parameter.as_deref(),
                penalty,
            );
            if total >= self.config.tolerance {
                return Ok(()); // forced acceptance: keep the step
            }
            self.undo_last_step()?;
            if penalty > 0.0 {
                return Ok(());
            }
            // Blame the predecessor: re-judge the step that produced the
            // state we just returned to.
            let Some(prev) = self
                .graph()
                .edges()
                .iter()
                .rev()
                .find(|e| e.kind == EdgeKind::Forward && !e.undone)
                .cloned()
            else {
                return Ok(());
            };
            let before = self
                .step_pages
                .get(&prev.step_index)
                .map(|(b, _)| b.clone())
                .unwrap_or_default();
            let after = self.env.current_serialization();
            let verdict = self.oracle.correctness(&CorrectnessInputs {
                command: &self.command,
                intent: &self.understanding.intent,
                question: &self.question,
                last_op: &prev.description,
                last_op_text: &prev.element_label,
                page_before: &before,
                page_after: &after,
            })?;
            if verdict.correct {
                return Ok(());
            }
            penalty = f64::from(verdict.penalty);
        }
    }

    /// Distills the completed run into long-term knowledge: a templated
    /// sequence over the correct path, the parameter assignments, and one
    /// lesson per erroneous step.
    fn summarize(&mut self, correct_path: &[usize]) -> Result<(), AgentError> {
        let graph = self.graph.as_ref().unwrap();
        let intent = self.understanding.intent.clone();

        let steps: Vec<SequenceStep> = correct_path
            .iter()
            .filter_map(|s| graph.edge(*s))
            .map(|e| SequenceStep {
                action: e.op.action,
                element_text: templatize(&e.element_label, &self.understanding.parameters),
                parameter: e
                    .op
                    .parameter
                    .as_ref()
                    .map(|p| templatize(p, &self.understanding.parameters)),
            })
            .collect();
        if !steps.is_empty() {
            self.kb.add_sequence(&self.task_id, &intent, steps);
        }
        self.kb.add_task_item(
            &self.task_id,
            &self.command,
            &intent,
            self.understanding.parameters.clone(),
        );

        let path_labels: Vec<&str> = correct_path
            .iter()
            .filter_map(|s| graph.edge(*s))
            .map(|e| e.element_label.as_str())
            .collect();
        let path_descriptions: Vec<String> = correct_path
            .iter()
            .filter_map(|s| graph.edge(*s))
            .map(|e| e.description.clone())
            .collect();
        let experiences: Vec<String> =
            graph.edges().iter().map(|e| e.description.clone()).collect();

        let mut added: Vec<String> = Vec::new();
        for wrong in graph.erroneous_forward_steps(correct_path) {
            let edge = graph.edge(wrong).unwrap().clone();
            let kind = if path_labels.contains(&edge.element_label.as_str()) {
                LessonKind::Execution
            } else {
                LessonKind::Environment
            };
            let text = self.oracle.lesson(&LessonInputs {
                command: &self.command,
                intent: &intent,
                kind,
                erroneous_op: &edge.description,
                erroneous_text: &edge.element_label,
                experiences: &experiences,
                correct_path: &path_descriptions,
            })?;
            if text.is_empty() || added.contains(&text) {
                continue;
            }
            let already = match kind {
                LessonKind::Environment => {
                    self.kb.env_lessons().iter().any(|l| l.text == text)
                }
                LessonKind::Execution => {
                    self.kb.exec_lessons().iter().any(|l| l.text == text)
                }
            };
            if already {
                continue;
            }
            match kind {
                LessonKind::Environment => self.kb.add_env_lesson(&self.task_id, &intent, &text),
                LessonKind::Execution => self.kb.add_exec_lesson(&self.task_id, &intent, &text),
            }
            added.push(text);
        }
        Ok(())
    }
}

/// First strict maximum by score: earlier candidates (document order) win
/// ties, so stable page layouts give stable decisions.
fn pick_best(candidates: Vec<Candidate>) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for c in candidates {
        match &best {
            Some(b) if c.score <= b.score => {}
            _ => best = Some(c),
        }
    }
    best
}
