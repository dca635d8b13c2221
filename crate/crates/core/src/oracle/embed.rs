//! Hashed bag-of-words text embeddings.
//!
//! The deterministic oracle embeds text as a 256-dimensional token-count
//! vector: each lowercase alphanumeric token increments the dimension
//! selected by its FNV-1a hash. Cosine similarity over these vectors drives
//! candidate scoring, target retrieval, lesson retrieval, and relevance
//! checks. Remote embedding models plug in through the same provider
//! interface and simply return higher-dimensional vectors.

use crate::hash::fnv1a_64;

/// Dimension of the hashed bag-of-words embedding space.
pub const EMBED_DIM: usize = 256;

/// Lowercase alphanumeric tokens, split on every other character.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Token-count embedding: dimension `fnv1a(token) % 256` counts occurrences.
pub fn embed_text(text: &str) -> Vec<f32> {
    let mut v = vec![0.0f32; EMBED_DIM];
    for token in tokenize(text) {
        let idx = (fnv1a_64(token.as_bytes()) % EMBED_DIM as u64) as usize;
        v[idx] += 1.0;
    }
    v
}

/// Cosine similarity; zero vectors yield 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Maps cosine similarity from [-1, 1] to a [0, 1] tie-break bonus.
pub fn tiebreak_bonus(cos: f32) -> f32 {
    (cos + 1.0) / 2.0
}

/// The question text used for scoring and relevance: the deduplicated
/// tokens of command, intent phrase, and parameter values, in first-seen
/// order. Deduplication keeps repeated phrasing from inflating matches.
pub fn question_text(command: &str, intent: &str, parameter_values: &[String]) -> String {
    let mut seen: Vec<String> = Vec::new();
    let push_tokens = |text: &str, seen: &mut Vec<String>| {
        for t in tokenize(text) {
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
    };
    push_tokens(command, &mut seen);
    push_tokens(intent, &mut seen);
    for v in parameter_values {
        push_tokens(v, &mut seen);
    }
    seen.join(" ")
}
