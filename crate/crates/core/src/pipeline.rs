//! File-backed pipeline stages. Each stage reads what earlier stages left in
//! the output directory, writes its own files, and records a manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::prompt::hex;
use crate::annotation::{self, AnnotatedEvent, CleanConfig, CleanReport, LlmProvider, PromptBundle, Provenance};
use crate::chunking::{chunk_note, ChunkRecord};
use crate::config::{EmbeddingKind, LlmKind, PipelineConfig, ENV_EMBEDDING_TOKEN, ENV_LLM_API_KEY};
use crate::corpus::{self, CaseDocument, JoinReport};
use crate::error::{ConfigError, DataError, Error, Result, RowProblem};
use crate::parallel::map_bounded;
use crate::retrieval::bm25::{analyze, Bm25Index};
use crate::retrieval::embedding::{embed_all, EmbeddingProvider, HashEmbedder, HttpEmbedder};
use crate::retrieval::{fuse, semantic_filter, Channel, RetrievalRecord, RetrievalResult};
use crate::stats::{self, ConcordanceReport, MatchedPair, NoteStages, Stage};
use crate::timeline::{self, BinScheme, EventRecord};

pub const DOCUMENTS: &str = "documents.jsonl";
pub const CHUNKS: &str = "chunks.jsonl";
pub const JOIN_REPORT: &str = "join_report.json";
pub const RETRIEVAL: &str = "retrieval.jsonl";
pub const RAW_DIR: &str = "raw";
pub const PARSED: &str = "parsed.jsonl";
pub const PARSE_REPORT: &str = "parse_report.json";
pub const EVENTS: &str = "events.jsonl";
pub const CLEAN_REPORT: &str = "clean_report.json";
pub const EVENTS_CSV: &str = "events.csv";
pub const PAIRS_CSV: &str = "pairs.csv";
pub const SEQUENCES: &str = "sequences.txt";
pub const SEQUENCE_IDS: &str = "sequences_ids.txt";
pub const SPLIT: &str = "split.json";
pub const STATS_JSON: &str = "stats.json";
pub const STATS_TXT: &str = "stats.txt";
pub const FUNNEL_CSV: &str = "funnel.csv";
pub const FUNNEL_JSON: &str = "funnel.json";
pub const CONCORDANCE_JSON: &str = "concordance.json";
pub const CONCORDANCE_TXT: &str = "concordance.txt";
pub const MANIFEST_DIR: &str = "manifests";

pub const EVENTS_CSV_HEADER: [&str; 4] = ["Hadm_id", "Event", "Time", "Time_bin"];
pub const PAIRS_CSV_HEADER: [&str; 4] = ["event_a", "event_b", "y", "t"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Chunk,
    Retrieve,
    Annotate,
    Clean,
    Bin,
    Pairs,
    Sequences,
    Split,
    Stats,
    Concordance,
}

impl StageName {
    /// Stages chained by `all`, in order. Concordance needs two external
    /// annotation sets and is run on its own.
    pub const CHAIN: [StageName; 9] = [
        StageName::Chunk,
        StageName::Retrieve,
        StageName::Annotate,
        StageName::Clean,
        StageName::Bin,
        StageName::Pairs,
        StageName::Sequences,
        StageName::Split,
        StageName::Stats,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Chunk => "chunk",
            StageName::Retrieve => "retrieve",
            StageName::Annotate => "annotate",
            StageName::Clean => "clean",
            StageName::Bin => "bin",
            StageName::Pairs => "pairs",
            StageName::Sequences => "sequences",
            StageName::Split => "split",
            StageName::Stats => "stats",
            StageName::Concordance => "concordance",
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        StageName::CHAIN
            .into_iter()
            .chain([StageName::Concordance])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// One annotated event as stored between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub note_id: String,
    pub hadm_id: String,
    pub event: String,
    pub time_hours: f64,
    pub source_chunk_id: Option<usize>,
    pub provenance: Provenance,
}

impl EventRow {
    fn new(doc: &CaseDocument, ev: AnnotatedEvent) -> Self {
        EventRow {
            note_id: doc.note_id().to_string(),
            hadm_id: doc.hadm_id().to_string(),
            event: ev.event,
            time_hours: ev.time_hours,
            source_chunk_id: ev.source_chunk_id,
            provenance: ev.provenance,
        }
    }

    fn annotated(&self) -> AnnotatedEvent {
        AnnotatedEvent {
            event: self.event.clone(),
            time_hours: self.time_hours,
            source_chunk_id: self.source_chunk_id,
            provenance: self.provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteParse {
    pub note_id: String,
    pub prompt_hash: String,
    pub attempts: u32,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: Vec<annotation::parse::Rejected>,
    pub repairs: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseTotals {
    pub notes: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    pub repairs: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub totals: ParseTotals,
    /// Notes with no retrieved chunks; they are not sent to the model.
    pub skipped: Vec<String>,
    pub notes: Vec<NoteParse>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanSummary {
    pub totals: CleanReport,
    pub notes: BTreeMap<String, CleanReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub prompt_template_version: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Concordance over every note present in the reference set; events only
/// match within the same `Hadm_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConcordance {
    pub reference_events: usize,
    pub candidate_events: usize,
    pub matched: usize,
    pub match_rate: f64,
    pub time_concordance: Option<f64>,
    pub options: stats::ConcordanceOptions,
    pub notes: BTreeMap<String, ConcordanceReport>,
}

impl fmt::Display for CorpusConcordance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>10}", "notes", self.notes.len())?;
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

pub struct Pipeline {
    config: PipelineConfig,
    input: Option<PathBuf>,
    output: PathBuf,
    llm: Option<Box<dyn LlmProvider>>,
    embedder: Option<Box<dyn EmbeddingProvider>>,
    scheme: BinScheme,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, input: Option<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Pipeline {
            config,
            input,
            output: output.into(),
            llm: None,
            embedder: None,
            scheme: BinScheme::default(),
        }
    }

    /// Use this LLM instead of the one described by the config.
    pub fn with_llm(mut self, llm: impl LlmProvider + 'static) -> Self {
        self.llm = Some(Box::new(llm));
        self
    }

    /// Use this embedder instead of the one described by the config.
    pub fn with_embedder(mut self, embedder: impl EmbeddingProvider + 'static) -> Self {
        self.embedder = Some(Box::new(embedder));
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.output
    }

    pub fn run_all(&mut self) -> Result<()> {
        for stage in StageName::CHAIN {
            self.run(stage)?;
        }
        Ok(())
    }

    pub fn run(&mut self, stage: StageName) -> Result<()> {
        log::info!("stage {stage}");
        fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        match stage {
            StageName::Chunk => self.chunk(),
            StageName::Retrieve => self.retrieve(),
            StageName::Annotate => self.annotate(),
            StageName::Clean => self.clean(),
            StageName::Bin => self.bin(),
            StageName::Pairs => self.pairs(),
            StageName::Sequences => self.sequences(),
            StageName::Split => self.split(),
            StageName::Stats => self.stats(),
            StageName::Concordance => Err(Error::Config(ConfigError::new(
                "concordance",
                "needs --reference and --candidate",
            ))),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }

    fn input_file(&self, configured: &Option<PathBuf>, stem: &str) -> Result<(PathBuf, corpus::Format)> {
        if let Some(p) = configured {
            return Ok((p.clone(), corpus::Format::from_path(p)));
        }
        let dir = self
            .input
            .as_ref()
            .ok_or_else(|| ConfigError::new("--input", format!("no input directory for {stem}")))?;
        corpus::find_input(dir, stem).ok_or_else(|| {
            Error::Data(DataError::Io {
                path: dir.join(format!("{stem}.jsonl")),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("no {stem}.jsonl or {stem}.csv")),
            })
        })
    }

    fn chunk(&mut self) -> Result<()> {
        let (notes_path, notes_fmt) = self.input_file(&self.config.corpus.notes, "notes")?;
        let (queries_path, queries_fmt) = self.input_file(&self.config.corpus.queries, "queries")?;
        let notes = corpus::load_notes(&notes_path, notes_fmt)?;
        let queries = corpus::load_queries(&queries_path, queries_fmt, self.config.corpus.strict_queries)?;
        let (docs, report) = corpus::join(&notes, &queries);
        let cfg = &self.config.chunking;
        let chunks: Vec<ChunkRecord> = docs
            .iter()
            .flat_map(|d| chunk_note(d.note_id(), &d.note.text, cfg.chunk_size, cfg.context_tokens))
            .map(|c| ChunkRecord::from(&c))
            .collect();
        write_jsonl(&self.path(DOCUMENTS), &docs)?;
        write_jsonl(&self.path(CHUNKS), &chunks)?;
        write_json(&self.path(JOIN_REPORT), &report)?;
        let inputs = [notes_path, queries_path]
            .into_iter()
            .map(|p| (file_name(&p), p))
            .collect();
        self.manifest(StageName::Chunk, inputs, &[DOCUMENTS, CHUNKS, JOIN_REPORT])
    }

    pub fn documents(&self) -> Result<Vec<CaseDocument>> {
        read_jsonl(&self.path(DOCUMENTS))
    }

    pub fn join_report(&self) -> Result<JoinReport> {
        read_json(&self.path(JOIN_REPORT))
    }

    pub fn chunks(&self) -> Result<Vec<ChunkRecord>> {
        read_jsonl(&self.path(CHUNKS))
    }

    fn embedder(&self) -> Result<Box<dyn EmbeddingProvider + '_>> {
        if let Some(e) = &self.embedder {
            return Ok(Box::new(e));
        }
        let cfg = &self.config.embedding;
        match cfg.provider {
            EmbeddingKind::Mock => Ok(Box::new(HashEmbedder::new(cfg.dimension, cfg.seed))),
            EmbeddingKind::Http => {
                let endpoint = self.config.embedding_endpoint().ok_or_else(|| {
                    ConfigError::new("embedding.endpoint", "required by the semantic channel (or set provider = \"mock\")")
                })?;
                Ok(Box::new(HttpEmbedder::new(
                    endpoint,
                    std::env::var(ENV_EMBEDDING_TOKEN).ok(),
                    cfg.dimension,
                    Duration::from_secs(cfg.timeout_secs),
                )))
            }
        }
    }

    fn llm(&self) -> Result<Box<dyn LlmProvider + '_>> {
        if let Some(l) = &self.llm {
            return Ok(Box::new(l));
        }
        let cfg = &self.config.llm;
        match cfg.provider {
            LlmKind::Replay => {
                let dir = cfg
                    .replay_dir
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("llm.replay_dir", "required by the replay provider"))?;
                let replay = annotation::ReplayLlm::from_dir(dir)
                    .map_err(|e| ConfigError::new("llm.replay_dir", format!("{}: {e}", dir.display())))?;
                Ok(Box::new(replay))
            }
            LlmKind::Http => {
                let endpoint = self
                    .config
                    .llm_endpoint()
                    .ok_or_else(|| ConfigError::new("llm.endpoint", "required by the http provider"))?;
                Ok(Box::new(annotation::HttpLlm::new(
                    endpoint,
                    std::env::var(ENV_LLM_API_KEY).ok(),
                    Duration::from_secs(cfg.timeout_secs),
                )))
            }
        }
    }

    fn retrieve(&mut self) -> Result<()> {
        let docs = self.documents()?;
        let by_note = group_chunks(self.chunks()?);
        let embedder = if self.config.semantic.enabled {
            Some(self.embedder()?)
        } else {
            None
        };
        let ecfg = &self.config.embedding;
        let mut rows: Vec<RetrievalRecord> = Vec::new();
        for doc in &docs {
            let Some(chunks) = by_note.get(doc.note_id()) else {
                continue;
            };
            let index = Bm25Index::from_texts(
                doc.note_id(),
                chunks.iter().map(|c| (c.chunk_id, c.rendered.as_str())),
                self.config.bm25_params(),
            )?;
            let bm25 = index.top_k(&analyze(&doc.query.text), self.config.bm25.top_k);
            let semantic = match &embedder {
                Some(e) => {
                    let mut texts = vec![doc.query.text.clone()];
                    texts.extend(chunks.iter().map(|c| c.rendered.clone()));
                    let mut vectors = embed_all(e.as_ref(), &texts, ecfg.batch_size, ecfg.concurrency)?;
                    let chunk_vecs: Vec<_> = chunks.iter().map(|c| c.chunk_id).zip(vectors.drain(1..)).collect();
                    semantic_filter(
                        doc.note_id(),
                        &vectors[0],
                        &chunk_vecs,
                        self.config.semantic_threshold(),
                    )?
                }
                None => RetrievalResult::empty(doc.note_id(), Channel::Semantic),
            };
            let fused = fuse(&bm25, &semantic)?;
            rows.extend(bm25.records());
            rows.extend(semantic.records());
            rows.extend(fused.records());
        }
        drop(embedder);
        write_jsonl(&self.path(RETRIEVAL), &rows)?;
        self.manifest_in_out(StageName::Retrieve, &[DOCUMENTS, CHUNKS], &[RETRIEVAL])
    }

    pub fn retrieval(&self) -> Result<Vec<RetrievalRecord>> {
        read_jsonl(&self.path(RETRIEVAL))
    }

    /// The prompt each note will be annotated with: the fused chunks in
    /// document order. Notes without retrieved chunks are absent.
    pub fn prompts(&self) -> Result<Vec<(CaseDocument, Vec<ChunkRecord>, PromptBundle)>> {
        let docs = self.documents()?;
        let mut by_note = group_chunks(self.chunks()?);
        let mut fused: HashMap<String, Vec<usize>> = HashMap::new();
        for r in self.retrieval()? {
            if r.channel == Channel::Fused {
                fused.entry(r.note_id).or_default().push(r.chunk_id);
            }
        }
        let mut out = Vec::new();
        for doc in docs {
            let Some(mut ids) = fused.remove(doc.note_id()) else {
                continue;
            };
            ids.sort_unstable();
            let chunks = by_note.remove(doc.note_id()).unwrap_or_default();
            let selected: Vec<ChunkRecord> = chunks.into_iter().filter(|c| ids.binary_search(&c.chunk_id).is_ok()).collect();
            if selected.is_empty() {
                continue;
            }
            let texts: Vec<&str> = selected.iter().map(|c| c.text.as_str()).collect();
            let bundle = annotation::build_prompt(&doc, &texts)?;
            out.push((doc, selected, bundle));
        }
        Ok(out)
    }

    fn annotate(&mut self) -> Result<()> {
        let docs = self.documents()?;
        let prompts = self.prompts()?;
        let llm = self.llm()?;
        let settings = self.config.llm_settings();
        let policy = self.config.retry_policy();
        let results = map_bounded(&prompts, self.config.llm.concurrency, |_, (doc, _, bundle)| {
            log::debug!("annotating {}", doc.note_id());
            annotation::annotate(llm.as_ref(), bundle, &settings, &policy)
        });
        drop(llm);

        let raw_dir = self.path(RAW_DIR);
        if raw_dir.exists() {
            fs::remove_dir_all(&raw_dir).map_err(|e| Error::io(&raw_dir, e))?;
        }
        fs::create_dir_all(&raw_dir).map_err(|e| Error::io(&raw_dir, e))?;

        let mut summary = ParseSummary::default();
        let mut rows = Vec::new();
        let mut raw_names = Vec::new();
        for ((doc, chunks, bundle), result) in prompts.iter().zip(results) {
            let ann = result?;
            let name = format!("{RAW_DIR}/{}.txt", safe_file_stem(doc.note_id()));
            write_file(&self.path(&name), ann.raw.as_bytes())?;
            raw_names.push(name);
            let mut report = annotation::parse_response(&ann.raw);
            let grounding: Vec<(usize, &str)> = chunks.iter().map(|c| (c.chunk_id, c.text.as_str())).collect();
            annotation::attribute_sources(&mut report.accepted, &grounding);
            let t = &mut summary.totals;
            t.notes += 1;
            t.candidates += report.candidates;
            t.accepted += report.accepted.len();
            t.rejected += report.rejected.len();
            for r in &report.rejected {
                *t.rejected_by_reason.entry(r.reason.to_string()).or_default() += 1;
            }
            for (k, v) in &report.repairs {
                *t.repairs.entry(k.clone()).or_default() += v;
            }
            summary.notes.push(NoteParse {
                note_id: doc.note_id().to_string(),
                prompt_hash: bundle.content_hash(),
                attempts: ann.attempts,
                candidates: report.candidates,
                accepted: report.accepted.len(),
                rejected: report.rejected,
                repairs: report.repairs,
            });
            rows.extend(report.accepted.into_iter().map(|ev| EventRow::new(doc, ev)));
        }
        let prompted: std::collections::HashSet<&str> = prompts.iter().map(|(d, _, _)| d.note_id()).collect();
        summary.skipped = docs
            .iter()
            .map(|d| d.note_id())
            .filter(|id| !prompted.contains(id))
            .map(str::to_string)
            .collect();
        for id in &summary.skipped {
            log::warn!("note {id}: no retrieved chunks, not annotated");
        }
        write_jsonl(&self.path(PARSED), &rows)?;
        write_json(&self.path(PARSE_REPORT), &summary)?;
        let mut outputs = vec![PARSED, PARSE_REPORT];
        outputs.extend(raw_names.iter().map(String::as_str));
        self.manifest_in_out(StageName::Annotate, &[DOCUMENTS, CHUNKS, RETRIEVAL], &outputs)
    }

    pub fn parsed(&self) -> Result<Vec<EventRow>> {
        read_jsonl(&self.path(PARSED))
    }

    fn clean_config(&self) -> Result<CleanConfig> {
        let mut cfg = CleanConfig {
            drop_ungrounded: self.config.clean.drop_ungrounded,
            ..CleanConfig::default()
        };
        if let Some(p) = &self.config.clean.stop_phrase_file {
            cfg.stop_phrases = CleanConfig::load_stop_phrases(p)
                .map_err(|e| ConfigError::new("clean.stop_phrase_file", format!("{}: {e}", p.display())))?;
        }
        Ok(cfg)
    }

    fn clean(&mut self) -> Result<()> {
        let cfg = self.clean_config()?;
        let mut summary = CleanSummary::default();
        let mut out = Vec::new();
        for group in group_rows(self.parsed()?) {
            let first = group[0].clone();
            let events = group.iter().map(EventRow::annotated).collect();
            let (kept, report) = annotation::clean(events, &cfg);
            summary.totals.merge(&report);
            summary.notes.insert(first.note_id.clone(), report);
            out.extend(kept.into_iter().map(|ev| EventRow {
                event: ev.event,
                time_hours: ev.time_hours,
                source_chunk_id: ev.source_chunk_id,
                provenance: ev.provenance,
                ..first.clone()
            }));
        }
        write_jsonl(&self.path(EVENTS), &out)?;
        write_json(&self.path(CLEAN_REPORT), &summary)?;
        let mut inputs: BTreeMap<String, PathBuf> = BTreeMap::new();
        inputs.insert(PARSED.into(), self.path(PARSED));
        if let Some(p) = &self.config.clean.stop_phrase_file {
            inputs.insert(file_name(p), p.clone());
        }
        self.manifest(StageName::Clean, inputs, &[EVENTS, CLEAN_REPORT])
    }

    pub fn events(&self) -> Result<Vec<EventRow>> {
        read_jsonl(&self.path(EVENTS))
    }

    pub fn event_records(&self) -> Result<Vec<EventRecord>> {
        self.events()?
            .into_iter()
            .map(|r| Ok(EventRecord::new(r.note_id, r.hadm_id, r.event, r.time_hours, &self.scheme)?))
            .collect()
    }

    fn bin(&mut self) -> Result<()> {
        let path = self.path(EVENTS_CSV);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EVENTS_CSV_HEADER).map_err(csv_err(&path))?;
        for r in self.event_records()? {
            w.write_record([r.hadm_id, r.event, r.time_hours.to_string(), r.time_bin.to_string()])
                .map_err(csv_err(&path))?;
        }
        write_file(&path, &w.into_inner().map_err(|e| Error::data(e.to_string()))?)?;
        self.manifest_in_out(StageName::Bin, &[EVENTS], &[EVENTS_CSV])
    }

    fn pairs(&mut self) -> Result<()> {
        let path = self.path(PAIRS_CSV);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(PAIRS_CSV_HEADER).map_err(csv_err(&path))?;
        for group in group_rows(self.events()?) {
            let events: Vec<(&str, f64)> = group.iter().map(|r| (r.event.as_str(), r.time_hours)).collect();
            for p in timeline::make_pairs(&events, self.config.pairs.strategy, &self.scheme)? {
                w.write_record([p.event_a, p.event_b, p.y.to_string(), p.t.to_string()])
                    .map_err(csv_err(&path))?;
            }
        }
        write_file(&path, &w.into_inner().map_err(|e| Error::data(e.to_string()))?)?;
        self.manifest_in_out(StageName::Pairs, &[EVENTS], &[PAIRS_CSV])
    }

    fn sequences(&mut self) -> Result<()> {
        let mut seqs = String::new();
        let mut ids = String::new();
        for group in group_rows(self.events()?) {
            let events: Vec<(&str, f64)> = group.iter().map(|r| (r.event.as_str(), r.time_hours)).collect();
            seqs.push_str(&timeline::format_sequence(&events));
            seqs.push('\n');
            ids.push_str(&group[0].note_id);
            ids.push('\n');
        }
        write_file(&self.path(SEQUENCES), seqs.as_bytes())?;
        write_file(&self.path(SEQUENCE_IDS), ids.as_bytes())?;
        self.manifest_in_out(StageName::Sequences, &[EVENTS], &[SEQUENCES, SEQUENCE_IDS])
    }

    fn split(&mut self) -> Result<()> {
        let ids: Vec<String> = group_rows(self.events()?).into_iter().map(|g| g[0].note_id.clone()).collect();
        let s = timeline::split(&ids, self.config.split.fractions, self.config.split.seed)?;
        write_json(&self.path(SPLIT), &s)?;
        self.manifest_in_out(StageName::Split, &[EVENTS], &[SPLIT])
    }

    fn stats(&mut self) -> Result<()> {
        let records = self.event_records()?;
        let dataset = stats::summarize(&records);

        let mut notes: Vec<NoteStages> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut slot = |notes: &mut Vec<NoteStages>, id: &str| -> usize {
            *index.entry(id.to_string()).or_insert_with(|| {
                notes.push(NoteStages::new(id));
                notes.len() - 1
            })
        };
        for d in self.documents()? {
            let i = slot(&mut notes, d.note_id());
            notes[i].stages.entry(Stage::Original).or_default();
        }
        for c in self.chunks()? {
            let i = slot(&mut notes, &c.note_id);
            notes[i].insert(Stage::Original.as_str(), [c.chunk_id])?;
        }
        for r in self.retrieval()? {
            let i = slot(&mut notes, &r.note_id);
            notes[i].insert(r.channel.as_str(), [r.chunk_id])?;
        }
        let parsed = self.parsed()?;
        let events = self.events()?;
        for (label, rows) in [(Stage::Llm, &parsed), (Stage::Cleaned, &events)] {
            for r in rows {
                let i = slot(&mut notes, &r.note_id);
                notes[i].insert(label.as_str(), r.source_chunk_id)?;
            }
        }
        let funnel = stats::funnel(&notes, self.config.bm25.top_k);
        for w in &funnel.warnings {
            log::warn!("{w}");
        }
        write_json(&self.path(STATS_JSON), &dataset)?;
        write_json(&self.path(FUNNEL_JSON), &funnel)?;
        write_file(&self.path(FUNNEL_CSV), funnel.to_csv().as_bytes())?;
        write_file(&self.path(STATS_TXT), format!("{dataset}\n{funnel}").as_bytes())?;
        self.manifest_in_out(
            StageName::Stats,
            &[DOCUMENTS, CHUNKS, RETRIEVAL, PARSED, EVENTS],
            &[STATS_JSON, STATS_TXT, FUNNEL_JSON, FUNNEL_CSV],
        )
    }

    /// Compare two released-format event tables.
    pub fn concordance(&mut self, reference: &Path, candidate: &Path) -> Result<CorpusConcordance> {
        fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        let ref_events = read_events_csv(reference)?;
        let cand_events = read_events_csv(candidate)?;
        let options = self.config.concordance_options();
        let embedder = self.embedder()?;
        let mut cand_by_note: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for (h, e, t) in &cand_events {
            cand_by_note.entry(h).or_default().push((e, *t));
        }
        let mut ref_by_note: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
        for (h, e, t) in &ref_events {
            ref_by_note.entry(h).or_default().push((e, *t));
        }
        let mut notes = BTreeMap::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let mut matched = 0;
        for (hadm, refs) in &ref_by_note {
            let Some(cands) = cand_by_note.get(hadm) else {
                continue;
            };
            let report = stats::concordance(refs, cands, embedder.as_ref(), options)?;
            for MatchedPair { reference, candidate, .. } in &report.pairs {
                xs.push(refs[*reference].1);
                ys.push(cands[*candidate].1);
            }
            matched += report.matched;
            notes.insert(hadm.to_string(), report);
        }
        drop(embedder);
        let time_concordance = match options.metric {
            stats::CorrelationMetric::Spearman => stats::spearman(&xs, &ys),
            stats::CorrelationMetric::Pearson => stats::pearson(&xs, &ys),
        };
        let out = CorpusConcordance {
            reference_events: ref_events.len(),
            candidate_events: cand_events.len(),
            matched,
            match_rate: if ref_events.is_empty() {
                0.0
            } else {
                matched as f64 / ref_events.len() as f64
            },
            time_concordance,
            options,
            notes,
        };
        write_json(&self.path(CONCORDANCE_JSON), &out)?;
        write_file(&self.path(CONCORDANCE_TXT), out.to_string().as_bytes())?;
        let inputs = BTreeMap::from([
            (format!("reference/{}", file_name(reference)), reference.to_path_buf()),
            (format!("candidate/{}", file_name(candidate)), candidate.to_path_buf()),
        ]);
        self.manifest(StageName::Concordance, inputs, &[CONCORDANCE_JSON, CONCORDANCE_TXT])?;
        Ok(out)
    }

    fn manifest_in_out(&self, stage: StageName, inputs: &[&str], outputs: &[&str]) -> Result<()> {
        let inputs = inputs.iter().map(|n| (n.to_string(), self.path(n))).collect();
        self.manifest(stage, inputs, outputs)
    }

    fn manifest(&self, stage: StageName, inputs: BTreeMap<String, PathBuf>, outputs: &[&str]) -> Result<()> {
        let hash_all = |files: BTreeMap<String, PathBuf>| -> Result<BTreeMap<String, String>> {
            files.into_iter().map(|(k, p)| Ok((k, file_sha256(&p)?))).collect()
        };
        let manifest = Manifest {
            stage: stage.as_str().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            prompt_template_version: annotation::PROMPT_TEMPLATE_VERSION.to_string(),
            config: config_snapshot(&self.config),
            inputs: hash_all(inputs)?,
            outputs: hash_all(outputs.iter().map(|n| (n.to_string(), self.path(n))).collect())?,
        };
        let dir = self.path(MANIFEST_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_json(&dir.join(format!("{stage}.json")), &manifest)
    }
}

/// The config with machine-specific paths reduced to file names, so that
/// manifests do not depend on where a run happens.
fn config_snapshot(config: &PipelineConfig) -> serde_json::Value {
    let mut c = config.clone();
    c.output_dir = None;
    for p in [
        &mut c.corpus.notes,
        &mut c.corpus.queries,
        &mut c.llm.replay_dir,
        &mut c.clean.stop_phrase_file,
    ]
    .into_iter()
    .flatten()
    {
        *p = PathBuf::from(file_name(p));
    }
    serde_json::to_value(c).expect("config serializes")
}

fn group_chunks(chunks: Vec<ChunkRecord>) -> HashMap<String, Vec<ChunkRecord>> {
    let mut out: HashMap<String, Vec<ChunkRecord>> = HashMap::new();
    for c in chunks {
        out.entry(c.note_id.clone()).or_default().push(c);
    }
    out
}

/// Consecutive rows of the same note, in file order.
fn group_rows(rows: Vec<EventRow>) -> Vec<Vec<EventRow>> {
    let mut out: Vec<Vec<EventRow>> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(g) if g[0].note_id == r.note_id => g.push(r),
            _ => out.push(vec![r]),
        }
    }
    out
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Note ids are opaque, so keep only characters safe in a file name.
pub fn safe_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    write_file(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::MalformedRow {
            path: path.to_path_buf(),
            row: i + 1,
            problem: RowProblem::Syntax(e.to_string()),
        })?);
    }
    Ok(out)
}

/// Read `Hadm_id,Event,Time[,Time_bin]` rows.
pub fn read_events_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| Error::data(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
            row: None,
        })
    };
    let (h, e, t) = (col("Hadm_id")?, col("Event")?, col("Time")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let bad = |problem: String| DataError::MalformedRow {
            path: path.to_path_buf(),
            row,
            problem: RowProblem::Syntax(problem),
        };
        let rec = rec.map_err(|err| bad(err.to_string()))?;
        let time = annotation::parse::parse_hours(&rec[t]).ok_or_else(|| bad(format!("bad time `{}`", &rec[t])))?;
        out.push((rec[h].to_string(), rec[e].to_string(), time));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in StageName::CHAIN {
            assert_eq!(s.as_str().parse::<StageName>().unwrap(), s);
        }
        assert!("everything".parse::<StageName>().is_err());
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(safe_file_stem("10001/22-a b"), "10001_22-a_b");
    }

    #[test]
    fn rows_group_by_run() {
        let row = |n: &str| EventRow {
            note_id: n.into(),
            hadm_id: n.into(),
            event: "x".into(),
            time_hours: 0.0,
            source_chunk_id: None,
            provenance: Provenance::Parsed,
        };
        let g = group_rows(vec![row("a"), row("a"), row("b")]);
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn missing_embedding_endpoint_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.embedding.endpoint = None;
        let p = Pipeline::new(cfg, None, dir.path());
        let field = match p.embedder() {
            Err(Error::Config(e)) => e.field,
            _ => panic!("expected config error"),
        };
        assert_eq!(field, "embedding.endpoint");
    }
}
