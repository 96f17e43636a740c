//! Time bins, correlation-labelled event pairs, `[TIME]/[EVENT]` sequences,
//! and note-level train/validation/test splits.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TimelineError;

pub const TIME_MARKER: &str = "[TIME]";
pub const EVENT_MARKER: &str = "[EVENT]";

/// Interior bin boundaries in hours. The outer edges are ±∞, so the eight
/// boundaries yield nine half-open intervals `[lo, hi)` indexed 0..=8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScheme {
    boundaries: Vec<f64>,
}

impl Default for BinScheme {
    fn default() -> Self {
        BinScheme {
            boundaries: vec![-60.0, -30.0, -15.0, 0.0, 15.0, 30.0, 60.0, 120.0],
        }
    }
}

impl BinScheme {
    pub fn new(boundaries: Vec<f64>) -> Option<Self> {
        let ok = !boundaries.is_empty()
            && boundaries.iter().all(|b| b.is_finite())
            && boundaries.windows(2).all(|w| w[0] < w[1]);
        ok.then_some(BinScheme { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Index of the interval containing `hours`.
    pub fn bin(&self, hours: f64) -> Result<u8, TimelineError> {
        if !hours.is_finite() {
            return Err(TimelineError::NonFiniteTime(hours));
        }
        Ok(self.boundaries.partition_point(|&b| b <= hours) as u8)
    }
}

/// [`BinScheme::bin`] under the default boundaries.
pub fn bin_time(hours: f64) -> Result<u8, TimelineError> {
    BinScheme::default().bin(hours)
}

/// Correlation label for `a` preceding `b` in the document: 0 when the
/// timestamps are equal, 1 when `b` is later, 2 when `b` is earlier.
pub fn label_pair(time_a: f64, time_b: f64) -> u8 {
    match time_b.partial_cmp(&time_a) {
        Some(Ordering::Equal) => 0,
        Some(Ordering::Greater) => 1,
        Some(Ordering::Less) => 2,
        None => panic!("label_pair needs finite times, got {time_a} and {time_b}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub note_id: String,
    pub hadm_id: String,
    pub event: String,
    pub time_hours: f64,
    pub time_bin: u8,
}

impl EventRecord {
    pub fn new(
        note_id: impl Into<String>,
        hadm_id: impl Into<String>,
        event: impl Into<String>,
        time_hours: f64,
        scheme: &BinScheme,
    ) -> Result<Self, TimelineError> {
        Ok(EventRecord {
            note_id: note_id.into(),
            hadm_id: hadm_id.into(),
            event: event.into(),
            time_hours,
            time_bin: scheme.bin(time_hours)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPair {
    pub event_a: String,
    pub event_b: String,
    pub y: u8,
    pub t: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStrategy {
    /// Consecutive events only.
    Adjacent,
    /// Every ordered pair (i < j).
    All,
    /// Pairs at most `w` positions apart.
    Window(usize),
}

/// Build pairs from one note's events, given in document order as
/// `(event, hours)`.
pub fn make_pairs<S: AsRef<str>>(
    events: &[(S, f64)],
    strategy: PairStrategy,
    scheme: &BinScheme,
) -> Result<Vec<EventPair>, TimelineError> {
    let reach = match strategy {
        PairStrategy::Adjacent => 1,
        PairStrategy::All => events.len(),
        PairStrategy::Window(w) => w,
    };
    let mut pairs = Vec::new();
    for (i, (a, ta)) in events.iter().enumerate() {
        let t = scheme.bin(*ta)?;
        for (b, tb) in events.iter().skip(i + 1).take(reach) {
            if !tb.is_finite() {
                return Err(TimelineError::NonFiniteTime(*tb));
            }
            pairs.push(EventPair {
                event_a: a.as_ref().to_string(),
                event_b: b.as_ref().to_string(),
                y: label_pair(*ta, *tb),
                t,
            });
        }
    }
    Ok(pairs)
}

/// Render `[TIME] t [EVENT] e` segments, stably sorted by time.
pub fn format_sequence<S: AsRef<str>>(events: &[(S, f64)]) -> String {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&i, &j| events[i].1.total_cmp(&events[j].1));
    order
        .iter()
        .map(|&i| {
            let (e, t) = &events[i];
            format!("{TIME_MARKER} {} {EVENT_MARKER} {}", t, e.as_ref())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inverse of [`format_sequence`]. Returns `None` if the text does not
/// follow the `[TIME] t [EVENT] e` grammar.
pub fn scan_sequence(text: &str) -> Option<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    if rest.is_empty() {
        return Some(out);
    }
    while !rest.is_empty() {
        rest = rest.strip_prefix(TIME_MARKER)?.trim_start();
        let (time, tail) = rest.split_once(EVENT_MARKER)?;
        let time: f64 = time.trim().parse().ok()?;
        let (event, next) = match tail.find(TIME_MARKER) {
            Some(pos) => (&tail[..pos], &tail[pos..]),
            None => (tail, ""),
        };
        out.push((event.trim().to_string(), time));
        rest = next;
    }
    Some(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Sizes for `n` items under `fractions`, by largest remainder (ties go to
/// the earlier set).
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3], TimelineError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(TimelineError::BadFractions(fractions));
    }
    let quotas = fractions.map(|f| f * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Deduplicate and sort `ids`, shuffle with a seeded ChaCha8 stream, then
/// cut contiguous train/validation/test slices.
pub fn split<S: AsRef<str>>(ids: &[S], fractions: [f64; 3], seed: u64) -> Result<Split, TimelineError> {
    let unique: BTreeSet<&str> = ids.iter().map(|s| s.as_ref()).collect();
    let mut ids: Vec<String> = unique.into_iter().map(str::to_string).collect();
    let [n_train, n_val, _] = split_sizes(ids.len(), fractions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let test = ids.split_off(n_train + n_val);
    let validation = ids.split_off(n_train);
    Ok(Split {
        train: ids,
        validation,
        test,
    })
}
