//! Parser for `event | hours` lines in raw LLM output.
//!
//! The parser is total: every non-blank, non-fence line is a candidate and
//! ends up either accepted or rejected with a reason. Rows whose columns
//! are swapped (`-72 | fever`) are put back in order here, since this is
//! the only stage that still sees both columns as text.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Parsed,
    Repaired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub event: String,
    /// Hours relative to admission; negative means before admission.
    pub time_hours: f64,
    pub source_chunk_id: Option<usize>,
    pub provenance: Provenance,
}

impl AnnotatedEvent {
    pub fn new(event: impl Into<String>, time_hours: f64) -> Self {
        AnnotatedEvent {
            event: event.into(),
            time_hours,
            source_chunk_id: None,
            provenance: Provenance::Parsed,
        }
    }

    /// `event | hours`, the line format the parser reads.
    pub fn to_line(&self) -> String {
        format!("{} | {}", self.event, self.time_hours)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingSeparator,
    EmptyEvent,
    InvalidTimestamp,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::MissingSeparator => "missing_separator",
            RejectReason::EmptyEvent => "empty_event",
            RejectReason::InvalidTimestamp => "invalid_timestamp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub line: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub candidates: usize,
    pub accepted: Vec<AnnotatedEvent>,
    pub rejected: Vec<Rejected>,
    /// Repair rule name -> number of lines it fixed.
    pub repairs: BTreeMap<String, usize>,
}

pub const REPAIR_COLUMN_SWAP: &str = "column_swap";

pub fn parse_response(raw: &str) -> ParseReport {
    let mut report = ParseReport::default();
    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            continue;
        }
        let body = strip_markup(trimmed);
        if body.is_empty() {
            continue;
        }
        report.candidates += 1;
        match parse_line(body) {
            Ok((event, swapped)) => {
                if swapped {
                    *report.repairs.entry(REPAIR_COLUMN_SWAP.to_string()).or_default() += 1;
                }
                report.accepted.push(event);
            }
            Err(reason) => report.rejected.push(Rejected {
                line: line.to_string(),
                reason,
            }),
        }
    }
    report
}

fn parse_line(body: &str) -> Result<(AnnotatedEvent, bool), RejectReason> {
    let (left, right) = body.rsplit_once('|').ok_or(RejectReason::MissingSeparator)?;
    let left = clean_field(left);
    let right = clean_field(right);
    if let Some(hours) = parse_hours(right) {
        if left.is_empty() {
            return Err(RejectReason::EmptyEvent);
        }
        return Ok((AnnotatedEvent::new(left, hours), false));
    }
    // swapped columns: number under Event, text under Time
    if let Some(hours) = parse_hours(left) {
        if right.chars().any(char::is_alphabetic) && parse_hours(right).is_none() {
            let mut ev = AnnotatedEvent::new(right, hours);
            ev.provenance = Provenance::Repaired;
            return Ok((ev, true));
        }
    }
    Err(RejectReason::InvalidTimestamp)
}

/// Strip list bullets, numbering, and markdown table borders from the start
/// (and table borders from the end) until nothing more comes off.
fn strip_markup(mut s: &str) -> &str {
    loop {
        let before = s;
        s = s.trim();
        if let Some(rest) = s.strip_prefix('|') {
            s = rest;
        }
        if s.ends_with('|') && s.len() > 1 {
            s = &s[..s.len() - 1];
        }
        for bullet in ["- ", "* ", "+ ", "• ", "· "] {
            if let Some(rest) = s.strip_prefix(bullet).filter(|r| !starts_with_pipe(r)) {
                s = rest;
            }
        }
        s = strip_numbering(s);
        if s == before {
            return s;
        }
    }
}

fn strip_numbering(s: &str) -> &str {
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return s;
    }
    let rest = &s[digits..];
    match rest.as_bytes() {
        [b'.' | b')', ws, ..] if ws.is_ascii_whitespace() && !starts_with_pipe(&rest[1..]) => &rest[1..],
        _ => s,
    }
}

// a marker directly followed by the separator is the event itself
fn starts_with_pipe(s: &str) -> bool {
    s.trim_start().starts_with('|')
}

fn clean_field(s: &str) -> &str {
    let s = s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '`' | '"' | '\''));
    let stripped = strip_markup(s);
    if stripped.len() != s.len() {
        clean_field(stripped)
    } else {
        s
    }
}

/// Integers or decimals with an optional leading sign. A Unicode minus is
/// accepted. Anything else (`NaN`, `in`, `inf`, units) is refused.
pub fn parse_hours(s: &str) -> Option<f64> {
    let s = s.trim();
    let (sign, body) = if let Some(rest) = s.strip_prefix('\u{2212}') {
        ("-", rest)
    } else if let Some(rest) = s.strip_prefix(['-', '+']) {
        (&s[..1], rest)
    } else {
        ("", s)
    };
    let mut digits = 0;
    let mut dots = 0;
    for c in body.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => dots += 1,
            _ => return None,
        }
    }
    if digits == 0 || dots > 1 {
        return None;
    }
    let value: f64 = format!("{sign}{body}").parse().ok()?;
    value.is_finite().then_some(value)
}
