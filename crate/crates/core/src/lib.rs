//! Core library for an explore-learn GUI automation agent.
//!
//! Module map:
//! - [`gui`] — element trees, pruning, diff marking, canonical serialization,
//!   page fingerprints.
//! - [`env`] — a declarative simulated app environment with guarded
//!   transitions, an undo journal, and golden task sequences.
//! - [`oracle`] — the language-model boundary: prompt assembly, a
//!   deterministic heuristic provider, transcript record/replay, and an
//!   HTTP-backed remote provider.
//! - [`experience`] — the per-task experience graph and shortest correct
//!   path extraction.
//! - [`knowledge`] — long-term stores (sequences, task knowledge, lessons,
//!   page-transition triplets) with templating and JSONL persistence.
//! - [`agent`] — the explore-learn loop: replay, forward exploration,
//!   completeness/correctness checking, backtracking, summarization.
//! - [`eval`] — step accuracy / redundancy metrics, suite and sweep runners,
//!   deterministic reports.

#![forbid(unsafe_code)]

pub mod agent;
pub mod env;
pub mod eval;
pub mod experience;
pub mod gui;
pub mod hash;
pub mod knowledge;
pub mod oracle;
