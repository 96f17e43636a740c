//! Dataset statistics, the per-stage chunk funnel, and concordance between
//! two annotation sets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::StatsError;
use crate::retrieval::embedding::{embed_all, EmbeddingProvider};
use crate::retrieval::cosine;
use crate::timeline::EventRecord;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_events: usize,
    pub notes: usize,
    pub min_events_per_note: usize,
    pub max_events_per_note: usize,
    pub mean_events_per_note: f64,
    pub mean_tokens_per_event: f64,
    pub max_tokens_per_event: usize,
    /// Share of events before admission (time < 0), in percent.
    pub pct_negative: f64,
    pub pct_zero: f64,
    pub pct_positive: f64,
    pub bin_counts: Vec<usize>,
}

/// Notes are keyed by `hadm_id`.
pub fn summarize(records: &[EventRecord]) -> DatasetStats {
    if records.is_empty() {
        return DatasetStats::default();
    }
    let mut per_note: HashMap<&str, usize> = HashMap::new();
    let (mut neg, mut zero, mut pos) = (0usize, 0usize, 0usize);
    let mut tokens = 0usize;
    let mut max_tokens = 0usize;
    let mut bins: Vec<usize> = Vec::new();
    for r in records {
        *per_note.entry(r.hadm_id.as_str()).or_default() += 1;
        if r.time_hours < 0.0 {
            neg += 1;
        } else if r.time_hours == 0.0 {
            zero += 1;
        } else {
            pos += 1;
        }
        let n = r.event.split_whitespace().count();
        tokens += n;
        max_tokens = max_tokens.max(n);
        let b = r.time_bin as usize;
        if bins.len() <= b {
            bins.resize(b + 1, 0);
        }
        bins[b] += 1;
    }
    bins.resize(bins.len().max(9), 0);
    let total = records.len() as f64;
    let pct = |c: usize| 100.0 * c as f64 / total;
    DatasetStats {
        total_events: records.len(),
        notes: per_note.len(),
        min_events_per_note: per_note.values().copied().min().unwrap_or(0),
        max_events_per_note: per_note.values().copied().max().unwrap_or(0),
        mean_events_per_note: total / per_note.len() as f64,
        mean_tokens_per_event: tokens as f64 / total,
        max_tokens_per_event: max_tokens,
        pct_negative: pct(neg),
        pct_zero: pct(zero),
        pct_positive: pct(pos),
        bin_counts: bins,
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 10] = [
            ("total events", self.total_events.to_string()),
            ("notes", self.notes.to_string()),
            ("min events/note", self.min_events_per_note.to_string()),
            ("max events/note", self.max_events_per_note.to_string()),
            ("mean events/note", format!("{:.2}", self.mean_events_per_note)),
            ("mean tokens/event", format!("{:.2}", self.mean_tokens_per_event)),
            ("max tokens/event", self.max_tokens_per_event.to_string()),
            ("% before admission", format!("{:.2}", self.pct_negative)),
            ("% at admission", format!("{:.2}", self.pct_zero)),
            ("% after admission", format!("{:.2}", self.pct_positive)),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<20} {v:>12}")?;
        }
        for (i, c) in self.bin_counts.iter().enumerate() {
            writeln!(f, "{:<20} {c:>12}", format!("time_bin {i}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Original,
    Bm25,
    Semantic,
    Fused,
    Llm,
    Cleaned,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Original,
        Stage::Bm25,
        Stage::Semantic,
        Stage::Fused,
        Stage::Llm,
        Stage::Cleaned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Original => "original",
            Stage::Bm25 => "bm25",
            Stage::Semantic => "semantic",
            Stage::Fused => "fused",
            Stage::Llm => "llm",
            Stage::Cleaned => "cleaned",
        }
    }
}

impl FromStr for Stage {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| StatsError::StageMismatch(s.to_string()))
    }
}

/// Chunk ids per stage for one note.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NoteStages {
    pub note_id: String,
    pub stages: BTreeMap<Stage, HashSet<usize>>,
}

impl NoteStages {
    pub fn new(note_id: impl Into<String>) -> Self {
        NoteStages {
            note_id: note_id.into(),
            stages: BTreeMap::new(),
        }
    }

    /// Insert by stage label; unknown labels are rejected.
    pub fn insert(&mut self, label: &str, ids: impl IntoIterator<Item = usize>) -> Result<(), StatsError> {
        let stage: Stage = label.parse()?;
        self.stages.entry(stage).or_default().extend(ids);
        Ok(())
    }

    fn size(&self, stage: Stage) -> usize {
        self.stages.get(&stage).map_or(0, HashSet::len)
    }

    fn get(&self, stage: Stage) -> Option<&HashSet<usize>> {
        self.stages.get(&stage)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunnelStats {
    /// stage -> (set size -> number of notes)
    pub histograms: BTreeMap<Stage, BTreeMap<usize, usize>>,
    pub mean_sizes: BTreeMap<Stage, f64>,
    pub warnings: Vec<String>,
}

impl FunnelStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,size,notes\n");
        for (stage, hist) in &self.histograms {
            for (size, notes) in hist {
                out.push_str(&format!("{},{size},{notes}\n", stage.as_str()));
            }
        }
        out
    }
}

impl fmt::Display for FunnelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>8} {:>8} {:>10}", "stage", "notes", "min", "max", "mean")?;
        for (stage, hist) in &self.histograms {
            let notes: usize = hist.values().sum();
            let min = hist.keys().next().copied().unwrap_or(0);
            let max = hist.keys().next_back().copied().unwrap_or(0);
            let mean = self.mean_sizes.get(stage).copied().unwrap_or(0.0);
            writeln!(f, "{:<10} {notes:>8} {min:>8} {max:>8} {mean:>10.2}", stage.as_str())?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Histogram the per-note stage sizes and flag stage invariant breaches.
/// Only stages present for a note are counted for it.
pub fn funnel(notes: &[NoteStages], top_k: usize) -> FunnelStats {
    let mut stats = FunnelStats::default();
    let mut sums: BTreeMap<Stage, usize> = BTreeMap::new();
    for note in notes {
        for (stage, ids) in &note.stages {
            *stats
                .histograms
                .entry(*stage)
                .or_default()
                .entry(ids.len())
                .or_default() += 1;
            *sums.entry(*stage).or_default() += ids.len();
        }
        let mut warn = |msg: String| {
            log::warn!("funnel {}: {msg}", note.note_id);
            stats.warnings.push(format!("{}: {msg}", note.note_id));
        };
        let original = note.size(Stage::Original);
        if note.get(Stage::Bm25).is_some() && note.size(Stage::Bm25) > top_k.min(original) {
            warn(format!("bm25 has {} chunks, above min(k, original) = {}", note.size(Stage::Bm25), top_k.min(original)));
        }
        if note.get(Stage::Fused).is_some()
            && note.size(Stage::Fused) > note.size(Stage::Bm25) + note.size(Stage::Semantic)
        {
            warn("fused is larger than bm25 + semantic".into());
        }
        if note.get(Stage::Cleaned).is_some() && note.size(Stage::Cleaned) > note.size(Stage::Llm) {
            warn(format!(
                "cleaned ({}) exceeds llm ({})",
                note.size(Stage::Cleaned),
                note.size(Stage::Llm)
            ));
        }
        for (inner, outer) in [
            (Stage::Bm25, Stage::Original),
            (Stage::Semantic, Stage::Original),
            (Stage::Llm, Stage::Fused),
            (Stage::Cleaned, Stage::Llm),
        ] {
            if let (Some(i), Some(o)) = (note.get(inner), note.get(outer)) {
                if !i.is_subset(o) {
                    warn(format!("{} is not a subset of {}", inner.as_str(), outer.as_str()));
                }
            }
        }
    }
    for (stage, hist) in &stats.histograms {
        let notes: usize = hist.values().sum();
        stats
            .mean_sizes
            .insert(*stage, sums[stage] as f64 / notes as f64);
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMetric {
    Spearman,
    Pearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    /// Closest pairs first, each event used once.
    Greedy,
    /// Maximum number of matches, then minimum total distance.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceOptions {
    /// Largest cosine distance (1 - cosine) that still counts as a match.
    pub max_distance: f64,
    pub metric: CorrelationMetric,
    pub assignment: Assignment,
}

impl Default for ConcordanceOptions {
    fn default() -> Self {
        ConcordanceOptions {
            max_distance: 0.1,
            metric: CorrelationMetric::Spearman,
            assignment: Assignment::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reference: usize,
    pub candidate: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub reference_events: usize,
    pub candidate_events: usize,
    pub matched: usize,
    pub match_rate: f64,
    /// Rank (or linear) correlation of matched timestamps; `None` with fewer
    /// than two matches or when either side is constant.
    pub time_concordance: Option<f64>,
    pub options: ConcordanceOptions,
    pub pairs: Vec<MatchedPair>,
}

impl fmt::Display for ConcordanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>10}", "reference events", self.reference_events)?;
        writeln!(f, "{:<18} {:>10}", "candidate events", self.candidate_events)?;
        writeln!(f, "{:<18} {:>10}", "matched", self.matched)?;
        writeln!(f, "{:<18} {:>10.4}", "match rate", self.match_rate)?;
        let conc = self
            .time_concordance
            .map_or("n/a".to_string(), |c| format!("{c:.4}"));
        writeln!(f, "{:<18} {:>10}", "time concordance", conc)
    }
}

/// Compare a candidate annotation set against a reference one.
pub fn concordance<S: AsRef<str>>(
    reference: &[(S, f64)],
    candidate: &[(S, f64)],
    provider: &dyn EmbeddingProvider,
    options: ConcordanceOptions,
) -> Result<ConcordanceReport, StatsError> {
    if reference.is_empty() {
        return Err(StatsError::EmptySide("reference"));
    }
    if candidate.is_empty() {
        return Err(StatsError::EmptySide("candidate"));
    }
    let texts: Vec<String> = reference
        .iter()
        .chain(candidate)
        .map(|(e, _)| e.as_ref().to_string())
        .collect();
    let vectors = embed_all(provider, &texts, 64, 1)?;
    let (ref_vecs, cand_vecs) = vectors.split_at(reference.len());

    let mut distances = vec![vec![f64::INFINITY; candidate.len()]; reference.len()];
    for (i, r) in ref_vecs.iter().enumerate() {
        for (j, c) in cand_vecs.iter().enumerate() {
            if let Ok(cos) = cosine(r.as_slice(), c.as_slice()) {
                distances[i][j] = 1.0 - cos;
            }
        }
    }
    let pairs = match options.assignment {
        Assignment::Greedy => greedy_match(&distances, options.max_distance),
        Assignment::Optimal => optimal_match(&distances, options.max_distance),
    };
    let xs: Vec<f64> = pairs.iter().map(|p| reference[p.reference].1).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| candidate[p.candidate].1).collect();
    let time_concordance = match options.metric {
        CorrelationMetric::Spearman => spearman(&xs, &ys),
        CorrelationMetric::Pearson => pearson(&xs, &ys),
    };
    Ok(ConcordanceReport {
        reference_events: reference.len(),
        candidate_events: candidate.len(),
        matched: pairs.len(),
        match_rate: pairs.len() as f64 / reference.len() as f64,
        time_concordance,
        options,
        pairs,
    })
}

/// `distances[r][c]`; pairs above `max_distance` never match.
pub fn greedy_match(distances: &[Vec<f64>], max_distance: f64) -> Vec<MatchedPair> {
    let mut edges: Vec<MatchedPair> = distances
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter().enumerate().filter(|(_, d)| **d <= max_distance).map(move |(c, &d)| MatchedPair {
                reference: r,
                candidate: c,
                distance: d,
            })
        })
        .collect();
    edges.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.reference.cmp(&b.reference))
            .then(a.candidate.cmp(&b.candidate))
    });
    let mut used_r = HashSet::new();
    let mut used_c = HashSet::new();
    let mut out: Vec<MatchedPair> = edges
        .into_iter()
        .filter(|e| {
            if used_r.contains(&e.reference) || used_c.contains(&e.candidate) {
                return false;
            }
            used_r.insert(e.reference);
            used_c.insert(e.candidate);
            true
        })
        .collect();
    out.sort_by_key(|p| p.reference);
    out
}

/// Hungarian assignment on a padded square matrix. Infeasible cells cost
/// more than any full set of feasible ones, so the match count is maximized
/// before the total distance is minimized.
pub fn optimal_match(distances: &[Vec<f64>], max_distance: f64) -> Vec<MatchedPair> {
    let rows = distances.len();
    let cols = distances.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let feasible = |r: usize, c: usize| r < rows && c < cols && distances[r][c] <= max_distance;
    let big = 2.0 * n as f64 + 1.0 + max_distance.abs() * n as f64;
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| if feasible(r, c) { distances[r][c] } else { big }).collect())
        .collect();
    let assignment = hungarian(&cost);
    let mut out: Vec<MatchedPair> = assignment
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| feasible(r, c))
        .map(|(r, c)| MatchedPair {
            reference: r,
            candidate: c,
            distance: distances[r][c],
        })
        .collect();
    out.sort_by_key(|p| p.reference);
    out
}

/// Minimum-cost perfect assignment; returns the column for each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials, column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&ranks(xs), &ranks(ys))
}
