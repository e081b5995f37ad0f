//! Literal cleanup and abstract de-inversion.
//!
//! Snapshot records store abstracts as an inverted index (token to list of
//! word positions). [`invert_abstract`] reconstructs the plain text. Free
//! text fields can carry control characters and stray backslashes that the
//! bulk grammars would choke on or that bloat diffs; [`clean_literal`]
//! applies one idempotent cleanup pass before anything reaches a literal.

use std::collections::BTreeMap;

use crate::model::{Iri, IriViolation};

/// Inverted abstract: token to ascending word positions.
pub type InvertedAbstract = BTreeMap<String, Vec<u32>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicatePosition {
    pub position: u32,
    pub kept: String,
    pub dropped: String,
}

/// Rebuilds the abstract text: tokens placed at their positions, sorted
/// ascending, joined by single spaces. Position gaps collapse. When two
/// tokens claim the same position the lexicographically smaller one wins
/// and the collision is reported.
pub fn invert_abstract(index: &InvertedAbstract) -> (String, Vec<DuplicatePosition>) {
    let mut placed: Vec<(u32, &str)> = Vec::new();
    for (token, positions) in index {
        for &pos in positions {
            placed.push((pos, token.as_str()));
        }
    }
    placed.sort_unstable();

    let mut text = String::new();
    let mut duplicates = Vec::new();
    let mut last: Option<(u32, &str)> = None;
    for (pos, token) in placed {
        match last {
            Some((prev_pos, prev_token)) if prev_pos == pos => {
                duplicates.push(DuplicatePosition {
                    position: pos,
                    kept: prev_token.to_string(),
                    dropped: token.to_string(),
                });
                continue;
            }
            _ => {}
        }
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(token);
        last = Some((pos, token));
    }
    (text, duplicates)
}

/// Builds an inverted index from plain text, token per whitespace-separated
/// word. Inverse of [`invert_abstract`] for gap-free texts.
pub fn build_inverted_index(text: &str) -> InvertedAbstract {
    let mut index = InvertedAbstract::new();
    for (pos, token) in text.split_whitespace().enumerate() {
        index.entry(token.to_string()).or_default().push(pos as u32);
    }
    index
}

/// Field context for cleanup; URLs additionally lose backslashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanContext {
    Title,
    Abstract,
    Name,
    Url,
    Other,
}

/// One-pass literal cleanup: strips C0 controls and DEL (keeping tabs),
/// turns newlines and carriage returns into spaces, drops backslashes in
/// URL context, trims, and collapses runs of spaces. Idempotent.
pub fn clean_literal(raw: &str, context: CleanContext) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\n' | '\r' => out.push(' '),
            '\u{0}'..='\u{8}' | '\u{b}'..='\u{1f}' | '\u{7f}' => {}
            '\\' if context == CleanContext::Url => {}
            _ => out.push(c),
        }
    }
    let trimmed = out.trim();
    let mut collapsed = String::with_capacity(trimmed.len());
    let mut in_run = false;
    for c in trimmed.chars() {
        if c == ' ' {
            if !in_run {
                collapsed.push(' ');
            }
            in_run = true;
        } else {
            collapsed.push(c);
            in_run = false;
        }
    }
    collapsed
}

/// Validates a raw string as an absolute IRI after trimming.
pub fn validate_iri_candidate(raw: &str) -> Result<Iri, IriViolation> {
    Iri::new(raw.trim())
}
