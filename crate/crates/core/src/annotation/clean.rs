//! Post-processing of parsed events: normalization, non-textual and
//! boilerplate filters, duplicate removal, and chunk grounding.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieval::bm25::analyze;

use super::parse::{AnnotatedEvent, Provenance};

pub const DEFAULT_STOP_PHRASES: &[&str] = &["no acute process"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig {
    /// Events equal to one of these (case and trailing punctuation ignored)
    /// are dropped.
    pub stop_phrases: Vec<String>,
    /// Drop events that share no token with any prompt chunk instead of
    /// only counting them.
    pub drop_ungrounded: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            stop_phrases: DEFAULT_STOP_PHRASES.iter().map(|s| s.to_string()).collect(),
            drop_ungrounded: false,
        }
    }
}

impl CleanConfig {
    /// Read a stop-phrase file: one phrase per line, `#` starts a comment.
    pub fn load_stop_phrases(path: &Path) -> std::io::Result<Vec<String>> {
        Ok(std::fs::read_to_string(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub output: usize,
    /// Events whose columns were swapped back during parsing.
    pub repaired: usize,
    pub normalized: usize,
    pub dropped_non_textual: usize,
    pub dropped_stop_phrase: usize,
    pub dropped_duplicate: usize,
    pub ungrounded: usize,
    pub dropped_ungrounded: usize,
}

impl CleanReport {
    pub fn merge(&mut self, other: &CleanReport) {
        self.input += other.input;
        self.output += other.output;
        self.repaired += other.repaired;
        self.normalized += other.normalized;
        self.dropped_non_textual += other.dropped_non_textual;
        self.dropped_stop_phrase += other.dropped_stop_phrase;
        self.dropped_duplicate += other.dropped_duplicate;
        self.ungrounded += other.ungrounded;
        self.dropped_ungrounded += other.dropped_ungrounded;
    }

    pub fn as_map(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("input", self.input),
            ("output", self.output),
            ("repaired", self.repaired),
            ("normalized", self.normalized),
            ("dropped_non_textual", self.dropped_non_textual),
            ("dropped_stop_phrase", self.dropped_stop_phrase),
            ("dropped_duplicate", self.dropped_duplicate),
            ("ungrounded", self.ungrounded),
            ("dropped_ungrounded", self.dropped_ungrounded),
        ])
    }
}

/// Collapse whitespace, drop stray pipe fragments and sequence markers.
pub fn normalize_event_text(text: &str) -> String {
    text.replace("[TIME]", " ")
        .replace("[EVENT]", " ")
        .split(|c: char| c.is_whitespace() || c == '|')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn phrase_key(text: &str) -> String {
    text.trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Clean one note's events. Order of survivors is preserved.
///
/// Normalization runs first so that duplicate detection sees canonical text;
/// this keeps `clean` idempotent.
pub fn clean(events: Vec<AnnotatedEvent>, config: &CleanConfig) -> (Vec<AnnotatedEvent>, CleanReport) {
    let stop: HashSet<String> = config.stop_phrases.iter().map(|p| phrase_key(p)).collect();
    let mut report = CleanReport {
        input: events.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(events.len());
    for mut ev in events {
        let normalized = normalize_event_text(&ev.event);
        if normalized != ev.event {
            report.normalized += 1;
            ev.event = normalized;
        }
        if ev.provenance == Provenance::Repaired {
            report.repaired += 1;
        }
        if !ev.event.chars().any(char::is_alphabetic) {
            report.dropped_non_textual += 1;
            continue;
        }
        if stop.contains(&phrase_key(&ev.event)) {
            report.dropped_stop_phrase += 1;
            continue;
        }
        // -0.0 and 0.0 are the same timestamp
        let key = (ev.event.clone(), (ev.time_hours + 0.0).to_bits());
        if !seen.insert(key) {
            report.dropped_duplicate += 1;
            continue;
        }
        if ev.source_chunk_id.is_none() {
            report.ungrounded += 1;
            if config.drop_ungrounded {
                report.dropped_ungrounded += 1;
                continue;
            }
        }
        out.push(ev);
    }
    report.output = out.len();
    (out, report)
}

/// Point each event at the prompt chunk sharing the most distinct terms with
/// it (earliest chunk on ties). Events sharing no term stay `None`.
pub fn attribute_sources<S: AsRef<str>>(events: &mut [AnnotatedEvent], chunks: &[(usize, S)]) {
    let chunk_terms: Vec<(usize, HashSet<String>)> = chunks
        .iter()
        .map(|(id, text)| (*id, analyze(text.as_ref()).into_iter().collect()))
        .collect();
    for ev in events {
        let terms: HashSet<String> = analyze(&ev.event).into_iter().collect();
        let mut best: Option<(usize, usize)> = None;
        for (id, ct) in &chunk_terms {
            let overlap = terms.intersection(ct).count();
            if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((*id, overlap));
            }
        }
        ev.source_chunk_id = best.map(|(id, _)| id);
    }
}
