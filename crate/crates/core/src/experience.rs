//! Per-task experience graph.
//!
//! Every run builds a graph: nodes are page fingerprints, edges are the
//! operations executed between them, numbered by a 1-based step index that
//! counts forward and undo operations alike. Undoing a step marks its
//! forward edge, which matters for scoring (undone operations stop drawing
//! the repetition penalty) — but undone edges remain real, observed app
//! transitions, so path extraction may still traverse them.
//!
//! After a run succeeds, the shortest correct path is extracted: the
//! shortest forward-edge path from the start node to the success node that
//! covers every command parameter, with ties broken toward the
//! lexicographically smallest step-index sequence. Forward edges off that
//! path are the run's erroneous steps.

use serde::{Deserialize, Serialize};

use crate::gui::{Operation, PageFingerprint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Forward,
    Undo,
}

/// Outcome of the after-step checks, snapshotted onto the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub completed: bool,
    pub correct: bool,
    pub penalty: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperienceEdge {
    pub step_index: usize,
    pub kind: EdgeKind,
    pub from: PageFingerprint,
    pub to: PageFingerprint,
    pub op: Operation,
    pub element_label: String,
    /// Human description, e.g. `input 'Bob' into 'Name'`.
    pub description: String,
    pub likert: Option<u8>,
    pub score: Option<f64>,
    pub check: Option<CheckOutcome>,
    /// Names of command parameters this step consumed (typed into a box, or
    /// appearing verbatim in the element's label).
    pub params_used: Vec<String>,
    /// Forward edges: true once backtracking reverted this step.
    pub undone: bool,
    /// Undo edges: the step index of the forward edge they reverted.
    pub undoes_step: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperienceGraph {
    start: PageFingerprint,
    nodes: Vec<PageFingerprint>,
    edges: Vec<ExperienceEdge>,
}

impl ExperienceGraph {
    pub fn new(start: PageFingerprint) -> Self {
        ExperienceGraph {
            nodes: vec![start.clone()],
            start,
            edges: Vec::new(),
        }
    }

    pub fn start(&self) -> &PageFingerprint {
        &self.start
    }

    pub fn nodes(&self) -> &[PageFingerprint] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ExperienceEdge] {
        &self.edges
    }

    pub fn edge(&self, step_index: usize) -> Option<&ExperienceEdge> {
        self.edges.iter().find(|e| e.step_index == step_index)
    }

    /// Total operations recorded (forward and undo).
    pub fn step_count(&self) -> usize {
        self.edges.len()
    }

    fn touch_node(&mut self, fp: &PageFingerprint) {
        if !self.nodes.contains(fp) {
            self.nodes.push(fp.clone());
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record_forward(
        &mut self,
        from: PageFingerprint,
        to: PageFingerprint,
        op: Operation,
        element_label: String,
        likert: Option<u8>,
        score: Option<f64>,
        params_used: Vec<String>,
    ) -> usize {
        let step_index = self.edges.len() + 1;
        self.touch_node(&from);
        self.touch_node(&to);
        let description = op.describe(&element_label);
        self.edges.push(ExperienceEdge {
            step_index,
            kind: EdgeKind::Forward,
            from,
            to,
            op,
            element_label,
            description,
            likert,
            score,
            check: None,
            params_used,
            undone: false,
            undoes_step: None,
        });
        step_index
    }

    /// Records an undo edge and marks the forward edge it reverts.
    pub fn record_undo(
        &mut self,
        from: PageFingerprint,
        to: PageFingerprint,
        op: Operation,
        element_label: String,
        undoes_step: usize,
    ) -> usize {
        let step_index = self.edges.len() + 1;
        self.touch_node(&from);
        self.touch_node(&to);
        let description = op.describe(&element_label);
        self.edges.push(ExperienceEdge {
            step_index,
            kind: EdgeKind::Undo,
            from,
            to,
            op,
            element_label,
            description,
            likert: None,
            score: None,
            check: None,
            params_used: Vec::new(),
            undone: false,
            undoes_step: Some(undoes_step),
        });
        if let Some(edge) = self.edges.iter_mut().find(|e| e.step_index == undoes_step) {
            edge.undone = true;
        }
        step_index
    }

    pub fn set_check(&mut self, step_index: usize, outcome: CheckOutcome) {
        if let Some(edge) = self.edges.iter_mut().find(|e| e.step_index == step_index) {
            edge.check = Some(outcome);
        }
    }

    pub fn forward_edges(&self) -> impl Iterator<Item = &ExperienceEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Forward)
    }

    /// Forward edges that are still in effect (not reverted).
    pub fn active_forward_edges(&self) -> impl Iterator<Item = &ExperienceEdge> {
        self.forward_edges().filter(|e| !e.undone)
    }

    /// Shortest forward-edge path from the start node to `end` whose edges
    /// jointly consume every parameter in `required_params`; ties broken by
    /// the lexicographically smallest step-index sequence. Returns step
    /// indices in order, or `None` when no covering path exists.
    pub fn shortest_correct_path(
        &self,
        end: &PageFingerprint,
        required_params: &[String],
    ) -> Option<Vec<usize>> {
        let full_mask: u32 = if required_params.len() >= 32 {
            u32::MAX
        } else {
            (1u32 << required_params.len()) - 1
        };
        let edge_mask = |e: &ExperienceEdge| -> u32 {
            let mut m = 0;
            for (i, p) in required_params.iter().enumerate().take(32) {
                if e.params_used.contains(p) {
                    m |= 1 << i;
                }
            }
            m
        };

        // Level-order search over (node, coverage mask) states. Each level
        // is expanded in lexicographic path order, so the first goal found
        // is the lexicographically smallest among all shortest paths.
        let mut seen: Vec<(PageFingerprint, u32)> = Vec::new();
        let mut level: Vec<(PageFingerprint, u32, Vec<usize>)> =
            vec![(self.start.clone(), 0, Vec::new())];
        seen.push((self.start.clone(), 0));
        loop {
            // Goal test on the current level (paths within a level are
            // generated in sorted order).
            for (node, mask, path) in &level {
                if node == end && *mask == full_mask {
                    return Some(path.clone());
                }
            }
            let mut next: Vec<(PageFingerprint, u32, Vec<usize>)> = Vec::new();
            for (node, mask, path) in &level {
                let mut outgoing: Vec<&ExperienceEdge> =
                    self.forward_edges().filter(|e| &e.from == node).collect();
                outgoing.sort_by_key(|e| e.step_index);
                for e in outgoing {
                    let new_mask = mask | edge_mask(e);
                    let mut new_path = path.clone();
                    new_path.push(e.step_index);
                    next.push((e.to.clone(), new_mask, new_path));
                }
            }
            if next.is_empty() {
                return None;
            }
            next.sort_by(|a, b| a.2.cmp(&b.2));
            let mut deduped: Vec<(PageFingerprint, u32, Vec<usize>)> = Vec::new();
            for (node, mask, path) in next {
                let state = (node.clone(), mask);
                if seen.contains(&state)
                    || deduped.iter().any(|(n, m, _)| *n == node && *m == mask)
                {
                    continue;
                }
                deduped.push((node, mask, path));
            }
            for (node, mask, _) in &deduped {
                seen.push((node.clone(), *mask));
            }
            if deduped.is_empty() {
                return None;
            }
            level = deduped;
        }
    }

    /// Forward steps that did not make it onto the given path.
    pub fn erroneous_forward_steps(&self, path: &[usize]) -> Vec<usize> {
        self.forward_edges()
            .map(|e| e.step_index)
            .filter(|s| !path.contains(s))
            .collect()
    }
}
