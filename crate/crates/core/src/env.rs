//! Simulated app environment.
//!
//! Apps are declarative JSON documents: named pages of element definitions,
//! click transitions guarded by variable equality, variable effects, and a
//! set of tasks with golden operation sequences. The environment renders the
//! current page as a pruned [`GuiPage`] with positional ids (`e0`, `e1`, …
//! in pre-order), so two visits to the same state produce byte-identical
//! serializations and therefore equal fingerprints.
//!
//! Every forward operation pushes an inverse entry onto a journal; undo
//! operations pop the journal in LIFO order, which makes backtracking sound:
//! applying an operation and then its undo counterpart always restores the
//! previous page fingerprint (text cleared back to its prior content, lists
//! scrolled back, navigation returned to the source page).
//!
//! Strings in element texts, list items, transition guards/effects, and
//! golden steps may contain `<placeholder>` references that resolve against
//! the active task's parameters. A string with an unresolvable placeholder
//! is treated as inactive (transition cannot fire, list item is omitted).

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gui::{
    fingerprint_page, prune_page, serialize_page, ActionKind, GuiElement, GuiPage, Operation,
    Role,
};

// ── schema ───────────────────────────────────────────────────────────────

/// A full app document as loaded from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppDoc {
    pub name: String,
    pub initial_page: String,
    #[serde(default)]
    pub variables: BTreeMap<String, String>,
    pub pages: BTreeMap<String, PageDef>,
    #[serde(default)]
    pub transitions: Vec<TransitionDef>,
    #[serde(default)]
    pub tasks: Vec<TaskDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageDef {
    pub elements: Vec<ElementDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementDef {
    pub role: Role,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub desc: String,
    /// Variable whose value is shown as this element's text (and written by
    /// text input when the element is a textbox).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<String>,
    /// Explicitly inert: clickable in the UI but wired to no transition.
    #[serde(default)]
    pub dead: bool,
    /// List items (texts, placeholders allowed). Lists only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<String>>,
    /// Visible window size. Lists only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ElementDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionDef {
    pub from: String,
    /// Label of the clicked element (placeholders allowed).
    pub element: String,
    pub to: String,
    /// Conjunction of variable equalities. A guard value of "" matches an
    /// unset variable. Values may be placeholders.
    #[serde(default)]
    pub guard: BTreeMap<String, String>,
    /// Variable assignments applied on transition. Values may be placeholders.
    #[serde(default)]
    pub effects: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    /// Natural-language command, literal (no placeholders).
    pub command: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
    /// Static text that appears in the page serialization exactly when the
    /// task has been accomplished.
    pub completion_cue: String,
    /// Ground-truth completion condition, checked against the raw state
    /// rather than visible text. Tasks without one fall back to the cue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<SuccessDef>,
    /// Reference operation sequence used for grading, never shown to agents.
    #[serde(default)]
    pub golden: Vec<GoldenStep>,
}

/// Conjunction over the current page and variable values. Values may be
/// placeholders resolved from the task's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessDef {
    pub page: String,
    #[serde(default)]
    pub variables: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenStep {
    pub action: ActionKind,
    /// Label of the element to act on (placeholders allowed).
    pub element: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid app document: {0}")]
    Invalid(String),
    #[error("app JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no element with id '{0}' on the current page")]
    UnknownElement(String),
    #[error("element '{element}' does not support {action}")]
    Unsupported { element: String, action: ActionKind },
    #[error("text input requires a parameter")]
    MissingParameter,
    #[error("ambiguous transitions from '{page}' via '{element}'")]
    AmbiguousTransition { page: String, element: String },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("undo mismatch: journal expects {expected}, got {got}")]
    UndoMismatch { expected: ActionKind, got: ActionKind },
    #[error("unknown task '{0}'")]
    UnknownTask(String),
}

// ── placeholder resolution ───────────────────────────────────────────────

/// Resolves `<name>` placeholders against `params`. Returns `None` when any
/// placeholder has no binding, marking the whole string inactive.
pub fn resolve_placeholders(s: &str, params: &BTreeMap<String, String>) -> Option<String> {
    if !s.contains('<') {
        return Some(s.to_string());
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let close = tail.find('>')?;
        let key = &tail[..close];
        out.push_str(params.get(key)?);
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Some(out)
}

fn placeholder_names(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(open) = rest.find('<') {
        let tail = &rest[open + 1..];
        match tail.find('>') {
            Some(close) => {
                out.push(tail[..close].to_string());
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }
    out
}

// ── environment ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct ElementMeta {
    label: String,
    clickable: bool,
    editable: bool,
    binding: Option<String>,
    /// Scroll-state key for lists: (page name, definition path).
    list_key: Option<(String, String)>,
}

#[derive(Debug, Clone)]
struct JournalEntry {
    action: ActionKind,
    prior_page: String,
    var_restores: Vec<(String, String)>,
    scroll_restores: Vec<((String, String), usize)>,
}

/// A live environment: one app, one active task, mutable state.
#[derive(Debug, Clone)]
pub struct Environment {
    app: Arc<AppDoc>,
    task: TaskDef,
    current: String,
    vars: BTreeMap<String, String>,
    scrolls: BTreeMap<(String, String), usize>,
    journal: Vec<JournalEntry>,
    cache: Option<(GuiPage, BTreeMap<String, ElementMeta>)>,
}

impl Environment {
    /// Creates an environment for `task_id`, resetting all app state.
    pub fn new(app: Arc<AppDoc>, task_id: &str) -> Result<Environment, EnvError> {
        let task = app
            .tasks
            .iter()
            .find(|t| t.id == task_id)
            .cloned()
            .ok_or_else(|| EnvError::UnknownTask(task_id.to_string()))?;
        Ok(Environment {
            current: app.initial_page.clone(),
            vars: app.variables.clone(),
            scrolls: BTreeMap::new(),
            journal: Vec::new(),
            cache: None,
            app,
            task,
        })
    }

    pub fn app(&self) -> &AppDoc {
        &self.app
    }

    pub fn task(&self) -> &TaskDef {
        &self.task
    }

    pub fn current_page_name(&self) -> &str {
        &self.current
    }

    /// Canonical digest of the state that rendering and transitions read:
    /// current page, variable store, and scroll offsets. Environments with
    /// equal digests render identically and accept the same operations,
    /// which makes this the ground truth for undo round-trip checks. (The
    /// undo journal is deliberately excluded: apply pushes and undo pops,
    /// so its depth reflects history, not behavior.)
    pub fn state_digest(&self) -> String {
        format!(
            "page={}|vars={:?}|scrolls={:?}",
            self.current, self.vars, self.scrolls
        )
    }

    /// Renders the current page: resolve bindings and placeholders, slice
    /// list windows, prune, then assign positional ids in pre-order.
    pub fn observe(&mut self) -> GuiPage {
        self.rendered().0.clone()
    }

    fn rendered(&mut self) -> &(GuiPage, BTreeMap<String, ElementMeta>) {
        if self.cache.is_none() {
            self.cache = Some(self.render());
        }
        self.cache.as_ref().unwrap()
    }

    fn render(&self) -> (GuiPage, BTreeMap<String, ElementMeta>) {
        let page_def = &self.app.pages[&self.current];
        let mut meta_by_path: BTreeMap<String, ElementMeta> = BTreeMap::new();
        let mut children = Vec::new();
        for (i, def) in page_def.elements.iter().enumerate() {
            children.push(self.render_element(def, &format!("{i}"), &mut meta_by_path));
        }
        let root = GuiElement::new("root", Role::Container).with_children(children);
        let mut page = prune_page(&GuiPage::new(root));

        // Positional ids after pruning, so equal trees serialize equally.
        let mut counter = 0usize;
        let mut meta: BTreeMap<String, ElementMeta> = BTreeMap::new();
        page.for_each_mut(|e| {
            let new_id = format!("e{counter}");
            counter += 1;
            if let Some(m) = meta_by_path.get(&e.id) {
                meta.insert(new_id.clone(), m.clone());
            }
            e.id = new_id;
        });
        (page, meta)
    }

    fn render_element(
        &self,
        def: &ElementDef,
        path: &str,
        meta: &mut BTreeMap<String, ElementMeta>,
    ) -> GuiElement {
        let text = match &def.binding {
            Some(var) => self.vars.get(var).cloned().unwrap_or_default(),
            None => resolve_placeholders(&def.text, &self.task.parameters)
                .unwrap_or_else(|| def.text.clone()),
        };
        let mut el = GuiElement::new(path, def.role)
            .with_text(text)
            .with_description(def.desc.clone());

        if def.role == Role::List {
            let window = def.window.unwrap_or(usize::MAX);
            let items: Vec<String> = def
                .items
                .clone()
                .unwrap_or_default()
                .iter()
                .filter_map(|item| resolve_placeholders(item, &self.task.parameters))
                .collect();
            let key = (self.current.clone(), path.to_string());
            let max_offset = items.len().saturating_sub(window);
            let offset = self.scrolls.get(&key).copied().unwrap_or(0).min(max_offset);
            for (i, item) in items.iter().skip(offset).take(window).enumerate() {
                let child_path = format!("{path}.{i}");
                let child = GuiElement::new(&child_path, Role::Button).with_text(item.clone());
                meta.insert(
                    child_path.clone(),
                    ElementMeta {
                        label: child.label().to_string(),
                        clickable: true,
                        editable: false,
                        binding: None,
                        list_key: None,
                    },
                );
                el.children.push(child);
            }
            meta.insert(
                path.to_string(),
                ElementMeta {
                    label: el.label().to_string(),
                    clickable: false,
                    editable: false,
                    binding: None,
                    list_key: Some(key),
                },
            );
            return el;
        }

        for (i, child_def) in def.children.iter().enumerate() {
            let child_path = format!("{path}.{i}");
            el.children
                .push(self.render_element(child_def, &child_path, meta));
        }
        meta.insert(
            path.to_string(),
            ElementMeta {
                label: el.label().to_string(),
                clickable: el.clickable,
                editable: el.editable,
                binding: def.binding.clone(),
                list_key: None,
            },
        );
        el
    }

    /// Applies one operation. Forward operations journal their inverse;
    /// undo operations pop and revert the most recent journal entry.
    pub fn apply(&mut self, op: &Operation) -> Result<(), EnvError> {
        if op.action.is_undo() {
            return self.apply_undo(op);
        }
        let meta = {
            let (page, metas) = self.rendered();
            if page.find_by_id(&op.target).is_none() {
                return Err(EnvError::UnknownElement(op.target.clone()));
            }
            metas
                .get(&op.target)
                .cloned()
                .ok_or_else(|| EnvError::UnknownElement(op.target.clone()))?
        };
        match op.action {
            ActionKind::Click => self.apply_click(&meta),
            ActionKind::TextInput => self.apply_text_input(&meta, op),
            ActionKind::ScrollForward => self.apply_scroll(&meta, true),
            _ => unreachable!("undo handled above"),
        }
    }

    fn apply_click(&mut self, meta: &ElementMeta) -> Result<(), EnvError> {
        if !meta.clickable {
            return Err(EnvError::Unsupported {
                element: meta.label.clone(),
                action: ActionKind::Click,
            });
        }
        let params = &self.task.parameters;
        let mut matched: Vec<&TransitionDef> = Vec::new();
        for t in self.app.transitions.iter().filter(|t| t.from == self.current) {
            let Some(label) = resolve_placeholders(&t.element, params) else {
                continue; // inactive for this task
            };
            if label != meta.label {
                continue;
            }
            let guard_ok = t.guard.iter().all(|(var, want)| {
                match resolve_placeholders(want, params) {
                    Some(want) => self.vars.get(var).cloned().unwrap_or_default() == want,
                    None => false,
                }
            });
            if guard_ok {
                matched.push(t);
            }
        }
        if matched.len() > 1 {
            return Err(EnvError::AmbiguousTransition {
                page: self.current.clone(),
                element: meta.label.clone(),
            });
        }
        let mut entry = JournalEntry {
            action: ActionKind::Click,
            prior_page: self.current.clone(),
            var_restores: Vec::new(),
            scroll_restores: Vec::new(),
        };
        if let Some(t) = matched.first() {
            for (var, value) in &t.effects {
                if let Some(value) = resolve_placeholders(value, params) {
                    let prior = self.vars.get(var).cloned().unwrap_or_default();
                    entry.var_restores.push((var.clone(), prior));
                    self.vars.insert(var.clone(), value);
                }
            }
            self.current = t.to.clone();
        }
        // Dead click: no matching transition — the journal entry still
        // records it so undo stays LIFO-sound (a no-op reverts a no-op).
        self.journal.push(entry);
        self.cache = None;
        Ok(())
    }

    fn apply_text_input(&mut self, meta: &ElementMeta, op: &Operation) -> Result<(), EnvError> {
        if !meta.editable {
            return Err(EnvError::Unsupported {
                element: meta.label.clone(),
                action: ActionKind::TextInput,
            });
        }
        let value = op.parameter.clone().ok_or(EnvError::MissingParameter)?;
        let binding = meta.binding.clone().ok_or_else(|| EnvError::Unsupported {
            element: meta.label.clone(),
            action: ActionKind::TextInput,
        })?;
        let prior = self.vars.get(&binding).cloned().unwrap_or_default();
        self.journal.push(JournalEntry {
            action: ActionKind::TextInput,
            prior_page: self.current.clone(),
            var_restores: vec![(binding.clone(), prior)],
            scroll_restores: Vec::new(),
        });
        self.vars.insert(binding, value);
        self.cache = None;
        Ok(())
    }

    fn apply_scroll(&mut self, meta: &ElementMeta, _forward: bool) -> Result<(), EnvError> {
        let Some(key) = meta.list_key.clone() else {
            return Err(EnvError::Unsupported {
                element: meta.label.clone(),
                action: ActionKind::ScrollForward,
            });
        };
        let (window, item_count) = self.list_dimensions(&key);
        let prior = self.scrolls.get(&key).copied().unwrap_or(0);
        let max_offset = item_count.saturating_sub(window);
        let next = (prior + window).min(max_offset);
        self.journal.push(JournalEntry {
            action: ActionKind::ScrollForward,
            prior_page: self.current.clone(),
            var_restores: Vec::new(),
            scroll_restores: vec![(key.clone(), prior)],
        });
        self.set_scroll(key, next);
        self.cache = None;
        Ok(())
    }

    /// Offset zero is canonically "no entry", so state comparisons never
    /// depend on whether a list has been scrolled and scrolled back.
    fn set_scroll(&mut self, key: (String, String), offset: usize) {
        if offset == 0 {
            self.scrolls.remove(&key);
        } else {
            self.scrolls.insert(key, offset);
        }
    }

    fn list_dimensions(&self, key: &(String, String)) -> (usize, usize) {
        let def = self.find_def(&key.0, &key.1);
        let window = def.and_then(|d| d.window).unwrap_or(usize::MAX);
        let count = def
            .and_then(|d| d.items.as_ref())
            .map(|items| {
                items
                    .iter()
                    .filter(|i| resolve_placeholders(i, &self.task.parameters).is_some())
                    .count()
            })
            .unwrap_or(0);
        (window, count)
    }

    fn find_def(&self, page: &str, path: &str) -> Option<&ElementDef> {
        let indices: Vec<usize> = path.split('.').filter_map(|p| p.parse().ok()).collect();
        let mut defs = &self.app.pages.get(page)?.elements;
        let mut current: Option<&ElementDef> = None;
        for idx in indices {
            current = defs.get(idx);
            defs = &current?.children;
        }
        current
    }

    fn apply_undo(&mut self, op: &Operation) -> Result<(), EnvError> {
        let top = self.journal.last().ok_or(EnvError::NothingToUndo)?;
        let expected = top
            .action
            .undo_counterpart()
            .expect("journal only holds forward actions");
        if op.action != expected {
            return Err(EnvError::UndoMismatch {
                expected,
                got: op.action,
            });
        }
        let entry = self.journal.pop().unwrap();
        self.current = entry.prior_page;
        for (var, prior) in entry.var_restores {
            self.vars.insert(var, prior);
        }
        for (key, prior) in entry.scroll_restores {
            self.set_scroll(key, prior);
        }
        self.cache = None;
        Ok(())
    }

    /// The undo operation that reverts the most recent forward operation,
    /// aimed at the current page (target resolved to a live element id when
    /// one is needed).
    pub fn undo_op_for_last(&mut self) -> Result<Option<Operation>, EnvError> {
        let Some(top) = self.journal.last() else {
            return Ok(None);
        };
        let action = top
            .action
            .undo_counterpart()
            .expect("journal only holds forward actions");
        let target = match action {
            // Navigate up acts on the page as a whole.
            ActionKind::NavigateUp => "root".to_string(),
            ActionKind::ClearText => {
                let binding = top.var_restores.first().map(|(v, _)| v.clone());
                self.find_id_by(|m| m.binding.is_some() && m.binding == binding)
                    .unwrap_or_else(|| "root".to_string())
            }
            ActionKind::ScrollBackward => {
                let key = top.scroll_restores.first().map(|(k, _)| k.clone());
                self.find_id_by(|m| m.list_key.is_some() && m.list_key == key)
                    .unwrap_or_else(|| "root".to_string())
            }
            _ => unreachable!(),
        };
        Ok(Some(Operation {
            action,
            target,
            parameter: None,
        }))
    }

    fn find_id_by(&mut self, pred: impl Fn(&ElementMeta) -> bool) -> Option<String> {
        let (_, metas) = self.rendered();
        metas.iter().find(|(_, m)| pred(m)).map(|(id, _)| id.clone())
    }

    pub fn journal_len(&self) -> usize {
        self.journal.len()
    }

    /// Serialization of the current page (no annotations), used for cue
    /// checks and debugging.
    pub fn current_serialization(&mut self) -> String {
        serialize_page(&self.observe())
    }

    pub fn current_fingerprint(&mut self) -> crate::gui::PageFingerprint {
        fingerprint_page(&self.observe())
    }

    /// True when the active task's completion cue appears on the current page.
    pub fn completion_cue_visible(&mut self) -> bool {
        let cue = self.task.completion_cue.clone();
        self.current_serialization().contains(&cue)
    }

    /// Ground-truth completion test against the raw state: the task's
    /// success condition when it has one (named page is current and every
    /// listed variable holds its resolved value), the completion cue
    /// otherwise.
    pub fn check_success(&mut self) -> bool {
        let Some(success) = self.task.success.clone() else {
            return self.completion_cue_visible();
        };
        if self.current_page_name() != success.page {
            return false;
        }
        success.variables.iter().all(|(var, want)| {
            match resolve_placeholders(want, &self.task.parameters) {
                Some(resolved) => self.vars.get(var) == Some(&resolved),
                None => false,
            }
        })
    }
}

// ── loading & validation ─────────────────────────────────────────────────

/// Parses and validates an app document.
pub fn load_app_from_str(json: &str) -> Result<Arc<AppDoc>, EnvError> {
    let app: AppDoc = serde_json::from_str(json)?;
    validate_app(&app)?;
    Ok(Arc::new(app))
}

pub fn load_app_from_path(path: &std::path::Path) -> Result<Arc<AppDoc>, EnvError> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| EnvError::Invalid(format!("read {}: {e}", path.display())))?;
    load_app_from_str(&json)
}

fn validate_app(app: &AppDoc) -> Result<(), EnvError> {
    let fail = |msg: String| Err(EnvError::Invalid(msg));
    if !app.pages.contains_key(&app.initial_page) {
        return fail(format!("initial page '{}' not defined", app.initial_page));
    }
    // Collect placeholder names used anywhere, to cross-check task params.
    let mut used_placeholders: Vec<String> = Vec::new();

    for t in &app.transitions {
        if !app.pages.contains_key(&t.from) {
            return fail(format!("transition from unknown page '{}'", t.from));
        }
        if !app.pages.contains_key(&t.to) {
            return fail(format!("transition to unknown page '{}'", t.to));
        }
        used_placeholders.extend(placeholder_names(&t.element));
        for (var, value) in t.guard.iter().chain(t.effects.iter()) {
            if !app.variables.contains_key(var) {
                return fail(format!(
                    "transition {} -> {} references undeclared variable '{var}'",
                    t.from, t.to
                ));
            }
            used_placeholders.extend(placeholder_names(value));
        }
    }

    // Pairwise exclusivity: for transitions sharing (from, element) as
    // opaque strings, some guard key must be provably different under every
    // parameterization. Placeholder values are validated non-empty, so a
    // placeholder is provably different from "" and from nothing else.
    for (i, a) in app.transitions.iter().enumerate() {
        for b in app.transitions.iter().skip(i + 1) {
            if a.from != b.from || a.element != b.element {
                continue;
            }
            let exclusive = a.guard.iter().any(|(var, av)| {
                b.guard.get(var).is_some_and(|bv| {
                    let a_ph = av.contains('<');
                    let b_ph = bv.contains('<');
                    (!a_ph && !b_ph && av != bv)
                        || (a_ph && !b_ph && bv.is_empty())
                        || (b_ph && !a_ph && av.is_empty())
                })
            });
            if !exclusive {
                return fail(format!(
                    "transitions from '{}' via '{}' have overlapping guards",
                    a.from, a.element
                ));
            }
        }
    }

    for (page_name, page) in &app.pages {
        for (i, def) in page.elements.iter().enumerate() {
            validate_element(app, page_name, def, &format!("{i}"), &mut used_placeholders)?;
        }
    }

    for task in &app.tasks {
        if task.command.trim().is_empty() {
            return fail(format!("task '{}' has an empty command", task.id));
        }
        if task.completion_cue.trim().is_empty() {
            return fail(format!("task '{}' has an empty completion cue", task.id));
        }
        for (name, value) in &task.parameters {
            if value.trim().is_empty() {
                return fail(format!("task '{}' parameter '{name}' is empty", task.id));
            }
        }
        if app.tasks.iter().filter(|t| t.id == task.id).count() > 1 {
            return fail(format!("duplicate task id '{}'", task.id));
        }
        if let Some(success) = &task.success {
            if !app.pages.contains_key(&success.page) {
                return fail(format!(
                    "task '{}' success condition names unknown page '{}'",
                    task.id, success.page
                ));
            }
            for (var, value) in &success.variables {
                if !app.variables.contains_key(var) {
                    return fail(format!(
                        "task '{}' success condition references undeclared variable '{var}'",
                        task.id
                    ));
                }
                for name in placeholder_names(value) {
                    if !task.parameters.contains_key(&name) {
                        return fail(format!(
                            "task '{}' success condition uses unknown parameter '<{name}>'",
                            task.id
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

fn validate_element(
    app: &AppDoc,
    page_name: &str,
    def: &ElementDef,
    path: &str,
    used_placeholders: &mut Vec<String>,
) -> Result<(), EnvError> {
    let fail = |msg: String| Err(EnvError::Invalid(msg));
    used_placeholders.extend(placeholder_names(&def.text));
    if let Some(var) = &def.binding {
        if !app.variables.contains_key(var) {
            return fail(format!(
                "page '{page_name}' element {path} binds undeclared variable '{var}'"
            ));
        }
    }
    if def.role == Role::List {
        if def.items.is_none() {
            return fail(format!("page '{page_name}' list {path} has no items"));
        }
        if !def.children.is_empty() {
            return fail(format!(
                "page '{page_name}' list {path} must use items, not children"
            ));
        }
        for item in def.items.as_deref().unwrap_or_default() {
            used_placeholders.extend(placeholder_names(item));
        }
    } else if def.items.is_some() || def.window.is_some() {
        return fail(format!(
            "page '{page_name}' element {path} has list fields but role {}",
            def.role
        ));
    }

    // Wiring check: clickables outside lists must either match a transition
    // (comparing opaque placeholder forms) or be declared dead. List items
    // are exempt — inert entries are a normal part of list content.
    let (clickable, _, _) = def.role.default_flags();
    if clickable {
        let label = if def.text.is_empty() { &def.desc } else { &def.text };
        let wired = app
            .transitions
            .iter()
            .any(|t| t.from == page_name && t.element == *label);
        if wired && def.dead {
            return fail(format!(
                "page '{page_name}' element '{label}' is dead but has a transition"
            ));
        }
        if !wired && !def.dead {
            return fail(format!(
                "page '{page_name}' clickable '{label}' has no transition and is not dead"
            ));
        }
    }
    for (i, child) in def.children.iter().enumerate() {
        validate_element(app, page_name, child, &format!("{path}.{i}"), used_placeholders)?;
    }
    Ok(())
}

/// Runs every task's golden sequence on a fresh environment and checks both
/// the completion cue and the ground-truth success condition hold at the
/// end. Call after [`load_app_from_str`]; kept separate so loading stays
/// cheap in tight loops.
pub fn validate_goldens(app: &Arc<AppDoc>) -> Result<(), EnvError> {
    for task in &app.tasks {
        let mut env = Environment::new(Arc::clone(app), &task.id)?;
        for (i, step) in task.golden.iter().enumerate() {
            if !step.action.is_forward() {
                return Err(EnvError::Invalid(format!(
                    "task '{}' golden step {} uses undo action {}",
                    task.id,
                    i + 1,
                    step.action
                )));
            }
            let label = resolve_placeholders(&step.element, &task.parameters)
                .ok_or_else(|| {
                    EnvError::Invalid(format!(
                        "task '{}' golden step {} has unresolvable element '{}'",
                        task.id,
                        i + 1,
                        step.element
                    ))
                })?;
            let page = env.observe();
            let el = page.find_by_label(&label).ok_or_else(|| {
                EnvError::Invalid(format!(
                    "task '{}' golden step {}: no element '{label}' on page '{}'",
                    task.id,
                    i + 1,
                    env.current_page_name()
                ))
            })?;
            let parameter = match &step.parameter {
                Some(p) => Some(resolve_placeholders(p, &task.parameters).ok_or_else(|| {
                    EnvError::Invalid(format!(
                        "task '{}' golden step {} has unresolvable parameter '{p}'",
                        task.id,
                        i + 1
                    ))
                })?),
                None => None,
            };
            let op = Operation {
                action: step.action,
                target: el.id.clone(),
                parameter,
            };
            env.apply(&op).map_err(|e| {
                EnvError::Invalid(format!(
                    "task '{}' golden step {} failed: {e}",
                    task.id,
                    i + 1
                ))
            })?;
        }
        if !env.completion_cue_visible() {
            return Err(EnvError::Invalid(format!(
                "task '{}' golden sequence does not reach its completion cue",
                task.id
            )));
        }
        if !env.check_success() {
            return Err(EnvError::Invalid(format!(
                "task '{}' golden sequence does not satisfy its success condition",
                task.id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_app_json() -> String {
        serde_json::json!({
            "name": "demo",
            "initial_page": "home",
            "variables": {"name_field": "", "save_status": ""},
            "pages": {
                "home": {"elements": [
                    {"role": "label", "text": "Demo home"},
                    {"role": "button", "text": "Add"},
                    {"role": "button", "text": "Files", "desc": "file picker"}
                ]},
                "form": {"elements": [
                    {"role": "label", "text": "New entry"},
                    {"role": "textbox", "desc": "Name", "binding": "name_field"},
                    {"role": "button", "text": "Save"}
                ]},
                "saved": {"elements": [
                    {"role": "label", "text": "Entry saved"},
                    {"role": "button", "text": "OK", "dead": true}
                ]},
                "empty_warning": {"elements": [
                    {"role": "label", "text": "Nothing was stored"}
                ]},
                "files": {"elements": [
                    {"role": "label", "text": "Pick a file"},
                    {"role": "list", "desc": "files", "window": 2,
                     "items": ["<file name>", "old_numbers.vcf", "notes.txt", "report.pdf"]}
                ]},
                "imported": {"elements": [
                    {"role": "label", "text": "File imported"},
                    {"role": "label", "binding": "save_status"}
                ]}
            },
            "transitions": [
                {"from": "home", "element": "Add", "to": "form"},
                {"from": "home", "element": "Files", "to": "files"},
                {"from": "form", "element": "Save", "to": "saved",
                 "guard": {"name_field": "<name>"}},
                {"from": "form", "element": "Save", "to": "empty_warning",
                 "guard": {"name_field": ""}},
                {"from": "files", "element": "<file name>", "to": "imported",
                 "effects": {"save_status": "<file name>"}}
            ],
            "tasks": [
                {"id": "save", "command": "save Alice",
                 "parameters": {"name": "Alice"},
                 "completion_cue": "Entry saved",
                 "success": {"page": "saved", "variables": {"name_field": "<name>"}},
                 "golden": [
                    {"action": "click", "element": "Add"},
                    {"action": "text_input", "element": "Name", "parameter": "<name>"},
                    {"action": "click", "element": "Save"}
                 ]},
                {"id": "import", "command": "import contacts.vcf",
                 "parameters": {"file name": "contacts.vcf"},
                 "completion_cue": "File imported",
                 "golden": [
                    {"action": "click", "element": "Files"},
                    {"action": "click", "element": "<file name>"}
                 ]}
            ]
        })
        .to_string()
    }

    fn demo_app() -> Arc<AppDoc> {
        let app = load_app_from_str(&demo_app_json()).expect("demo app loads");
        validate_goldens(&app).expect("demo goldens pass");
        app
    }

    fn click_label(env: &mut Environment, label: &str) {
        let page = env.observe();
        let el = page.find_by_label(label).unwrap_or_else(|| panic!("no '{label}'"));
        env.apply(&Operation::click(&el.id)).expect("click applies");
    }

    #[test]
    fn placeholders_resolve_or_deactivate() {
        let params: BTreeMap<String, String> =
            [("file name".to_string(), "contacts.vcf".to_string())].into();
        assert_eq!(
            resolve_placeholders("open <file name> now", &params).as_deref(),
            Some("open contacts.vcf now")
        );
        assert_eq!(resolve_placeholders("plain", &params).as_deref(), Some("plain"));
        assert_eq!(resolve_placeholders("<missing>", &params), None);
    }

    #[test]
    fn check_success_inspects_state_not_text() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        assert!(!env.check_success(), "fresh state never succeeds");
        click_label(&mut env, "Add");
        let page = env.observe();
        let el = page.find_by_label("Name").unwrap();
        env.apply(&Operation::text_input(&el.id, "Alice")).unwrap();
        assert!(!env.check_success(), "right value but wrong page");
        click_label(&mut env, "Save");
        assert!(env.check_success());

        // Tasks without an explicit condition fall back to the cue.
        let mut env = Environment::new(demo_app(), "import").unwrap();
        assert!(!env.check_success());
        click_label(&mut env, "Files");
        click_label(&mut env, "contacts.vcf");
        assert!(env.check_success());
    }

    #[test]
    fn positional_ids_are_assigned_preorder() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        let page = env.observe();
        let ids: Vec<String> = page.iter().map(|e| e.id.clone()).collect();
        assert_eq!(ids, vec!["e0", "e1", "e2", "e3"]);
        assert_eq!(page.find_by_id("e2").unwrap().text, "Add");
    }

    #[test]
    fn revisiting_a_state_reproduces_the_fingerprint() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        let fp_home = env.current_fingerprint();
        click_label(&mut env, "Add");
        let fp_form = env.current_fingerprint();
        assert_ne!(fp_home, fp_form);
        let undo = env.undo_op_for_last().unwrap().unwrap();
        assert_eq!(undo.action, ActionKind::NavigateUp);
        env.apply(&undo).unwrap();
        assert_eq!(env.current_fingerprint(), fp_home);
        click_label(&mut env, "Add");
        assert_eq!(env.current_fingerprint(), fp_form);
    }

    #[test]
    fn text_input_round_trips_through_clear() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Add");
        let fp_before = env.current_fingerprint();
        let page = env.observe();
        let textbox = page.find_by_label("Name").unwrap();
        env.apply(&Operation::text_input(&textbox.id, "Alice")).unwrap();
        let page = env.observe();
        assert_eq!(page.find_by_label("Name").unwrap().text, "Alice");
        let undo = env.undo_op_for_last().unwrap().unwrap();
        assert_eq!(undo.action, ActionKind::ClearText);
        env.apply(&undo).unwrap();
        assert_eq!(env.current_fingerprint(), fp_before);
    }

    #[test]
    fn guards_choose_between_save_outcomes() {
        // Empty name → warning page.
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Add");
        click_label(&mut env, "Save");
        assert_eq!(env.current_page_name(), "empty_warning");

        // Name filled with the task's parameter value → saved.
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Add");
        let page = env.observe();
        let textbox = page.find_by_label("Name").unwrap();
        env.apply(&Operation::text_input(&textbox.id, "Alice")).unwrap();
        click_label(&mut env, "Save");
        assert_eq!(env.current_page_name(), "saved");
        assert!(env.completion_cue_visible());
    }

    #[test]
    fn guard_mismatch_when_text_is_not_the_parameter() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Add");
        let page = env.observe();
        let textbox = page.find_by_label("Name").unwrap();
        env.apply(&Operation::text_input(&textbox.id, "Bob")).unwrap();
        click_label(&mut env, "Save");
        // Neither guard matches ("Bob" ≠ "Alice", "Bob" ≠ "") → dead click.
        assert_eq!(env.current_page_name(), "form");
    }

    #[test]
    fn dead_click_is_a_noop_and_undo_reverts_nothing() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Add");
        click_label(&mut env, "Save"); // empty name → warning page (has no buttons)
        let mut env2 = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env2, "Add");
        // Dead button on the saved page: reach it via the import app path is
        // not possible here, so exercise the dead OK button directly.
        let mut env3 = Environment::new(demo_app(), "save").unwrap();
        env3.current = "saved".to_string();
        env3.cache = None;
        let fp = env3.current_fingerprint();
        click_label(&mut env3, "OK");
        assert_eq!(env3.current_fingerprint(), fp, "dead click changes nothing");
        let undo = env3.undo_op_for_last().unwrap().unwrap();
        env3.apply(&undo).unwrap();
        assert_eq!(env3.current_fingerprint(), fp);
        let _ = env; // silence unused warnings in older compilers
        let _ = env2;
    }

    #[test]
    fn list_windows_slice_and_scroll_with_clamping() {
        let mut env = Environment::new(demo_app(), "import").unwrap();
        click_label(&mut env, "Files");
        let page = env.observe();
        let texts: Vec<&str> = page
            .iter()
            .filter(|e| e.role == Role::Button)
            .map(|e| e.text.as_str())
            .collect();
        assert_eq!(texts, vec!["contacts.vcf", "old_numbers.vcf"]);

        let list_id = page.iter().find(|e| e.role == Role::List).unwrap().id.clone();
        env.apply(&Operation::scroll_forward(&list_id)).unwrap();
        let page = env.observe();
        let texts: Vec<&str> = page
            .iter()
            .filter(|e| e.role == Role::Button)
            .map(|e| e.text.as_str())
            .collect();
        assert_eq!(texts, vec!["notes.txt", "report.pdf"]);

        // Clamped at the end: scrolling again keeps the last full window.
        let list_id = page.iter().find(|e| e.role == Role::List).unwrap().id.clone();
        env.apply(&Operation::scroll_forward(&list_id)).unwrap();
        let page = env.observe();
        let texts: Vec<&str> = page
            .iter()
            .filter(|e| e.role == Role::Button)
            .map(|e| e.text.as_str())
            .collect();
        assert_eq!(texts, vec!["notes.txt", "report.pdf"]);

        // Undo both scrolls restores the first window.
        for _ in 0..2 {
            let undo = env.undo_op_for_last().unwrap().unwrap();
            assert_eq!(undo.action, ActionKind::ScrollBackward);
            env.apply(&undo).unwrap();
        }
        let page = env.observe();
        let texts: Vec<&str> = page
            .iter()
            .filter(|e| e.role == Role::Button)
            .map(|e| e.text.as_str())
            .collect();
        assert_eq!(texts, vec!["contacts.vcf", "old_numbers.vcf"]);
    }

    #[test]
    fn placeholder_items_vanish_for_tasks_without_the_parameter() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Files");
        let page = env.observe();
        let texts: Vec<&str> = page
            .iter()
            .filter(|e| e.role == Role::Button)
            .map(|e| e.text.as_str())
            .collect();
        assert_eq!(texts, vec!["old_numbers.vcf", "notes.txt"]);
    }

    #[test]
    fn placeholder_transition_fires_with_effects() {
        let mut env = Environment::new(demo_app(), "import").unwrap();
        click_label(&mut env, "Files");
        click_label(&mut env, "contacts.vcf");
        assert_eq!(env.current_page_name(), "imported");
        assert!(env.current_serialization().contains("contacts.vcf"));
        assert!(env.completion_cue_visible());
    }

    #[test]
    fn wrong_action_and_unknown_target_error() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        let page = env.observe();
        let label_id = page.iter().find(|e| e.role == Role::Label).unwrap().id.clone();
        assert!(matches!(
            env.apply(&Operation::click(&label_id)),
            Err(EnvError::Unsupported { .. })
        ));
        assert!(matches!(
            env.apply(&Operation::click("e99")),
            Err(EnvError::UnknownElement(_))
        ));
        assert!(matches!(
            env.apply(&Operation {
                action: ActionKind::NavigateUp,
                target: "root".to_string(),
                parameter: None
            }),
            Err(EnvError::NothingToUndo)
        ));
    }

    #[test]
    fn undo_kind_must_match_journal_top() {
        let mut env = Environment::new(demo_app(), "save").unwrap();
        click_label(&mut env, "Add");
        let err = env
            .apply(&Operation {
                action: ActionKind::ClearText,
                target: "e0".to_string(),
                parameter: None,
            })
            .unwrap_err();
        assert!(matches!(err, EnvError::UndoMismatch { .. }));
    }

    #[test]
    fn validation_rejects_overlapping_guards() {
        let mut doc: serde_json::Value = serde_json::from_str(&demo_app_json()).unwrap();
        doc["transitions"].as_array_mut().unwrap().push(serde_json::json!({
            "from": "form", "element": "Save", "to": "home",
            "guard": {"name_field": "<name>"}
        }));
        let err = load_app_from_str(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("overlapping guards"), "{err}");
    }

    #[test]
    fn validation_rejects_unwired_clickables_and_bad_bindings() {
        let mut doc: serde_json::Value = serde_json::from_str(&demo_app_json()).unwrap();
        doc["pages"]["home"]["elements"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({"role": "button", "text": "Ghost"}));
        let err = load_app_from_str(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("no transition"), "{err}");

        let mut doc: serde_json::Value = serde_json::from_str(&demo_app_json()).unwrap();
        doc["pages"]["form"]["elements"][1]["binding"] = serde_json::json!("nope");
        let err = load_app_from_str(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("undeclared variable"), "{err}");
    }

    #[test]
    fn golden_validation_catches_broken_sequences() {
        let mut doc: serde_json::Value = serde_json::from_str(&demo_app_json()).unwrap();
        doc["tasks"][0]["golden"]
            .as_array_mut()
            .unwrap()
            .remove(1); // skip the name input → guard fails → cue unreachable
        let app = load_app_from_str(&doc.to_string()).unwrap();
        let err = validate_goldens(&app).unwrap_err();
        assert!(
            err.to_string().contains("does not reach its completion cue"),
            "{err}"
        );
    }

    #[test]
    fn any_forward_walk_fully_undone_restores_the_initial_fingerprint() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        runner
            .run(
                &proptest::collection::vec(0usize..100, 0..12),
                |choices| {
                    let mut env = Environment::new(demo_app(), "import").unwrap();
                    let initial = env.current_fingerprint();
                    let mut applied = 0;
                    for pick in choices {
                        let page = env.observe();
                        // Enumerate forward-capable elements.
                        let mut ops: Vec<Operation> = Vec::new();
                        for e in page.iter() {
                            if e.clickable {
                                ops.push(Operation::click(&e.id));
                            }
                            if e.editable {
                                ops.push(Operation::text_input(&e.id, "xyz"));
                            }
                            if e.scrollable {
                                ops.push(Operation::scroll_forward(&e.id));
                            }
                        }
                        if ops.is_empty() {
                            break;
                        }
                        let op = ops[pick % ops.len()].clone();
                        env.apply(&op).unwrap();
                        applied += 1;
                    }
                    prop_assert_eq!(env.journal_len(), applied);
                    for _ in 0..applied {
                        let undo = env.undo_op_for_last().unwrap().unwrap();
                        env.apply(&undo).unwrap();
                    }
                    prop_assert_eq!(env.current_fingerprint(), initial);
                    prop_assert_eq!(env.journal_len(), 0);
                    Ok(())
                },
            )
            .unwrap();
    }
}
