//! GUI element trees and the canonical page representation.
//!
//! Pages are trees of [`GuiElement`]s. Before an agent sees a page it is
//! pruned (layout noise removed), diffed against the previous page to mark
//! newly appeared elements, and serialized into a canonical HTML-like text
//! form. Page identity is a stable 64-bit fingerprint of that serialization
//! with the dynamic annotations (`new`, `targets`) stripped.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash;

/// Element roles. The role doubles as the serialization tag name and implies
/// the default interactivity of environment-instantiated elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Container,
    Label,
    Button,
    Textbox,
    List,
    Switch,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Container => "container",
            Role::Label => "label",
            Role::Button => "button",
            Role::Textbox => "textbox",
            Role::List => "list",
            Role::Switch => "switch",
        }
    }

    pub fn from_str(s: &str) -> Option<Role> {
        Some(match s {
            "container" => Role::Container,
            "label" => Role::Label,
            "button" => Role::Button,
            "textbox" => Role::Textbox,
            "list" => Role::List,
            "switch" => Role::Switch,
            _ => return None,
        })
    }

    /// Default interactivity flags for this role: (clickable, editable, scrollable).
    pub fn default_flags(self) -> (bool, bool, bool) {
        match self {
            Role::Button | Role::Switch => (true, false, false),
            Role::Textbox => (false, true, false),
            Role::List => (false, false, true),
            Role::Container | Role::Label => (false, false, false),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One node of a GUI tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiElement {
    pub id: String,
    pub role: Role,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub editable: bool,
    #[serde(default)]
    pub scrollable: bool,
    /// Set by [`mark_new_elements`]: this element appeared since the previous page.
    #[serde(default)]
    pub new_flag: bool,
    /// Set by GUI understanding: texts of relevant elements reachable through this one.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default)]
    pub children: Vec<GuiElement>,
}

impl GuiElement {
    pub fn new(id: impl Into<String>, role: Role) -> Self {
        let (clickable, editable, scrollable) = role.default_flags();
        GuiElement {
            id: id.into(),
            role,
            text: String::new(),
            description: String::new(),
            clickable,
            editable,
            scrollable,
            new_flag: false,
            targets: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = text.into();
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_children(mut self, children: Vec<GuiElement>) -> Self {
        self.children = children;
        self
    }

    pub fn interactive(&self) -> bool {
        self.clickable || self.editable || self.scrollable
    }

    /// The human-facing label: text when present, description otherwise.
    /// Used for operation descriptions, golden-step matching, and metrics.
    pub fn label(&self) -> &str {
        if self.text.is_empty() {
            &self.description
        } else {
            &self.text
        }
    }

    /// Structural identity used when matching elements across pages: the
    /// simulator reissues ids, so identity is (role, text, description).
    pub fn triple(&self) -> (Role, &str, &str) {
        (self.role, &self.text, &self.description)
    }

    /// Pre-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = &GuiElement> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let next = stack.pop()?;
            for child in next.children.iter().rev() {
                stack.push(child);
            }
            Some(next)
        })
    }

    pub fn find_by_id(&self, id: &str) -> Option<&GuiElement> {
        self.iter().find(|e| e.id == id)
    }

    fn iter_mut_apply(&mut self, f: &mut impl FnMut(&mut GuiElement)) {
        f(self);
        for child in &mut self.children {
            child.iter_mut_apply(f);
        }
    }
}

/// A full page: a pruned element tree rooted at a single container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiPage {
    pub root: GuiElement,
}

impl GuiPage {
    pub fn new(root: GuiElement) -> Self {
        GuiPage { root }
    }

    pub fn iter(&self) -> impl Iterator<Item = &GuiElement> {
        self.root.iter()
    }

    pub fn find_by_id(&self, id: &str) -> Option<&GuiElement> {
        self.root.find_by_id(id)
    }

    /// First element (pre-order) whose text equals `label`, falling back to
    /// description equality. Matching is exact.
    pub fn find_by_label(&self, label: &str) -> Option<&GuiElement> {
        self.iter()
            .find(|e| e.text == label)
            .or_else(|| self.iter().find(|e| e.description == label))
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut GuiElement)) {
        self.root.iter_mut_apply(&mut f);
    }
}

/// Stable identity of a page state: 64-bit FNV-1a over the canonical
/// serialization with `new`/`targets` stripped, rendered as 16 hex chars.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PageFingerprint(pub String);

impl fmt::Display for PageFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The six supported actions. The first three move the task forward; the
/// last three undo their counterparts during backtracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    TextInput,
    ScrollForward,
    NavigateUp,
    ClearText,
    ScrollBackward,
}

impl ActionKind {
    pub fn is_forward(self) -> bool {
        matches!(
            self,
            ActionKind::Click | ActionKind::TextInput | ActionKind::ScrollForward
        )
    }

    pub fn is_undo(self) -> bool {
        !self.is_forward()
    }

    /// The undo action that reverts this forward action.
    pub fn undo_counterpart(self) -> Option<ActionKind> {
        Some(match self {
            ActionKind::Click => ActionKind::NavigateUp,
            ActionKind::TextInput => ActionKind::ClearText,
            ActionKind::ScrollForward => ActionKind::ScrollBackward,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::TextInput => "text_input",
            ActionKind::ScrollForward => "scroll_forward",
            ActionKind::NavigateUp => "navigate_up",
            ActionKind::ClearText => "clear_text",
            ActionKind::ScrollBackward => "scroll_backward",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete operation on a page element. `parameter` carries text-input
/// content; it stays `None` until the parameter is decided.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub action: ActionKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
}

impl Operation {
    pub fn click(target: impl Into<String>) -> Self {
        Operation {
            action: ActionKind::Click,
            target: target.into(),
            parameter: None,
        }
    }

    pub fn text_input(target: impl Into<String>, parameter: impl Into<String>) -> Self {
        Operation {
            action: ActionKind::TextInput,
            target: target.into(),
            parameter: Some(parameter.into()),
        }
    }

    pub fn scroll_forward(target: impl Into<String>) -> Self {
        Operation {
            action: ActionKind::ScrollForward,
            target: target.into(),
            parameter: None,
        }
    }

    /// One-line human description given the target element's label.
    pub fn describe(&self, element_label: &str) -> String {
        match self.action {
            ActionKind::Click => format!("click '{element_label}'"),
            ActionKind::TextInput => match &self.parameter {
                Some(p) => format!("input '{p}' into '{element_label}'"),
                None => format!("input into '{element_label}'"),
            },
            ActionKind::ScrollForward => format!("scroll '{element_label}' forward"),
            ActionKind::NavigateUp => "navigate up".to_string(),
            ActionKind::ClearText => format!("clear '{element_label}'"),
            ActionKind::ScrollBackward => format!("scroll '{element_label}' backward"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GuiError {
    #[error("page serialization parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

// ── pruning ──────────────────────────────────────────────────────────────

/// True when the element and all its descendants are non-interactive and
/// carry neither text nor description ("low interaction importance").
fn low_interaction(e: &GuiElement) -> bool {
    !e.interactive()
        && e.text.is_empty()
        && e.description.is_empty()
        && e.children.iter().all(low_interaction)
}

/// Removes every element that has low interaction importance *and* low
/// layout importance (no siblings, or all siblings also low-interaction).
/// The root is exempt so a page always keeps its root.
pub fn prune_page(page: &GuiPage) -> GuiPage {
    let mut root = page.root.clone();
    prune_children(&mut root);
    GuiPage::new(root)
}

fn prune_children(parent: &mut GuiElement) {
    let lows: Vec<bool> = parent.children.iter().map(low_interaction).collect();
    let all_low = lows.iter().all(|&l| l);
    let mut idx = 0;
    parent.children.retain(|_| {
        let low = lows[idx];
        idx += 1;
        // Low layout importance: only child, or every sibling is low too.
        let removable = low && (lows.len() == 1 || all_low);
        !removable
    });
    for child in &mut parent.children {
        prune_children(child);
    }
}

// ── new-element marking ──────────────────────────────────────────────────

/// Returns `after` with `new_flag` set on every element whose
/// (role, text, description) has no structural match in `before`.
/// Children of matched parents pair positionally first, then by multiset;
/// unmatched elements are flagged along with their entire subtree.
pub fn mark_new_elements(before: &GuiPage, after: &GuiPage) -> GuiPage {
    let mut root = after.root.clone();
    root.iter_mut_apply(&mut |e| e.new_flag = false);
    if root.triple() == before.root.triple() {
        mark_children(&before.root, &mut root);
    } else {
        flag_subtree(&mut root);
    }
    GuiPage::new(root)
}

fn flag_subtree(e: &mut GuiElement) {
    e.iter_mut_apply(&mut |el| el.new_flag = true);
}

fn mark_children(before: &GuiElement, after: &mut GuiElement) {
    let n_after = after.children.len();
    let n_before = before.children.len();
    let mut used = vec![false; n_before];
    let mut pair: Vec<Option<usize>> = vec![None; n_after];

    // Positional matches within the shared ancestor chain.
    for i in 0..n_after {
        if i < n_before && before.children[i].triple() == after.children[i].triple() {
            pair[i] = Some(i);
            used[i] = true;
        }
    }
    // Multiset fallback among the remaining siblings.
    for i in 0..n_after {
        if pair[i].is_none() {
            for j in 0..n_before {
                if !used[j] && before.children[j].triple() == after.children[i].triple() {
                    pair[i] = Some(j);
                    used[j] = true;
                    break;
                }
            }
        }
    }
    for (i, child) in after.children.iter_mut().enumerate() {
        match pair[i] {
            Some(j) => mark_children(&before.children[j], child),
            None => flag_subtree(child),
        }
    }
}

// ── canonical serialization ──────────────────────────────────────────────

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\n' => out.push_str("&#10;"),
            _ => out.push(ch),
        }
    }
    out
}

fn unescape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let (token, advance) = if rest.starts_with("&amp;") {
            ('&', 5)
        } else if rest.starts_with("&quot;") {
            ('"', 6)
        } else if rest.starts_with("&lt;") {
            ('<', 4)
        } else if rest.starts_with("&gt;") {
            ('>', 4)
        } else if rest.starts_with("&#10;") {
            ('\n', 5)
        } else {
            ('&', 1)
        };
        out.push(token);
        rest = &rest[advance..];
    }
    out.push_str(rest);
    out
}

fn serialize_element(e: &GuiElement, depth: usize, dynamic: bool, out: &mut String) {
    let indent = "  ".repeat(depth);
    out.push_str(&indent);
    out.push('<');
    out.push_str(e.role.as_str());
    out.push_str(&format!(" id=\"{}\"", escape_attr(&e.id)));
    if !e.text.is_empty() {
        out.push_str(&format!(" text=\"{}\"", escape_attr(&e.text)));
    }
    if !e.description.is_empty() {
        out.push_str(&format!(" desc=\"{}\"", escape_attr(&e.description)));
    }
    if dynamic {
        if e.new_flag {
            out.push_str(" new=\"true\"");
        }
        if !e.targets.is_empty() {
            out.push_str(&format!(" targets=\"{}\"", escape_attr(&e.targets.join("; "))));
        }
    }
    out.push('>');
    if e.children.is_empty() {
        out.push_str(&format!("</{}>", e.role.as_str()));
    } else {
        for child in &e.children {
            out.push('\n');
            serialize_element(child, depth + 1, dynamic, out);
        }
        out.push('\n');
        out.push_str(&indent);
        out.push_str(&format!("</{}>", e.role.as_str()));
    }
}

/// Canonical HTML-like serialization: one tag per element, attributes in
/// fixed order (id, text, desc, new, targets), two-space indentation, LF
/// newlines. Byte-identical for equal inputs.
pub fn serialize_page(page: &GuiPage) -> String {
    let mut out = String::new();
    serialize_element(&page.root, 0, true, &mut out);
    out
}

/// Fingerprint over the canonical serialization with `new` and `targets`
/// stripped, so dynamic annotations never influence page identity.
pub fn fingerprint_page(page: &GuiPage) -> PageFingerprint {
    let mut out = String::new();
    serialize_element(&page.root, 0, false, &mut out);
    PageFingerprint(hash::digest_hex(out.as_bytes()))
}

// ── parsing (inverse of serialize_page) ──────────────────────────────────

/// Parses a canonical serialization back into a page. Interactivity flags
/// are restored from roles, which is exact for environment-produced pages.
pub fn parse_serialized_page(text: &str) -> Result<GuiPage, GuiError> {
    let mut stack: Vec<GuiElement> = Vec::new();
    let mut root: Option<GuiElement> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_start_matches(' ');
        let err = |detail: &str| GuiError::Parse {
            line: lineno + 1,
            detail: detail.to_string(),
        };
        if line.starts_with("</") {
            let done = stack.pop().ok_or_else(|| err("unmatched closing tag"))?;
            attach(&mut stack, &mut root, done);
            continue;
        }
        if !line.starts_with('<') {
            return Err(err("expected a tag"));
        }
        let inline_close = line.ends_with('>') && line.contains("></");
        let open_end = line.find('>').ok_or_else(|| err("unterminated tag"))?;
        let inner = &line[1..open_end];
        let (role_str, attrs) = match inner.find(' ') {
            Some(sp) => (&inner[..sp], &inner[sp + 1..]),
            None => (inner, ""),
        };
        let role = Role::from_str(role_str).ok_or_else(|| err("unknown role"))?;
        let mut el = GuiElement::new(String::new(), role);
        for (key, value) in parse_attrs(attrs).map_err(|detail| GuiError::Parse {
            line: lineno + 1,
            detail,
        })? {
            match key.as_str() {
                "id" => el.id = value,
                "text" => el.text = value,
                "desc" => el.description = value,
                "new" => el.new_flag = value == "true",
                "targets" => el.targets = value.split("; ").map(str::to_string).collect(),
                other => {
                    return Err(err(&format!("unknown attribute '{other}'")));
                }
            }
        }
        if inline_close {
            attach(&mut stack, &mut root, el);
        } else {
            stack.push(el);
        }
    }
    if !stack.is_empty() {
        return Err(GuiError::Parse {
            line: text.lines().count(),
            detail: "unclosed tag".to_string(),
        });
    }
    root.ok_or(GuiError::Parse {
        line: 0,
        detail: "empty page".to_string(),
    })
    .map(GuiPage::new)
}

fn attach(stack: &mut Vec<GuiElement>, root: &mut Option<GuiElement>, el: GuiElement) {
    match stack.last_mut() {
        Some(parent) => parent.children.push(el),
        None => *root = Some(el),
    }
}

fn parse_attrs(mut s: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    loop {
        s = s.trim_start();
        if s.is_empty() {
            return Ok(out);
        }
        let eq = s.find("=\"").ok_or("malformed attribute")?;
        let key = s[..eq].to_string();
        let rest = &s[eq + 2..];
        let close = rest.find('"').ok_or("unterminated attribute value")?;
        out.push((key, unescape_attr(&rest[..close])));
        s = &rest[close + 1..];
    }
}
