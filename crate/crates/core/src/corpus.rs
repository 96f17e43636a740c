//! Note and brief-course loading, validation, and the note/query join.
//!
//! Both CSV (RFC 4180 quoting) and JSONL are accepted. JSONL is the safer
//! choice for discharge notes because they routinely contain newlines.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, RowProblem};

/// Minimum brief-course length enforced in strict mode.
pub const STRICT_QUERY_MIN_CHARS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess the format from a file extension (`.csv`, anything else is JSONL).
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// One discharge note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteText {
    pub note_id: String,
    pub hadm_id: String,
    pub text: String,
}

/// The brief hospital course summary used as the retrieval query for a note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryText {
    pub note_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub note: NoteText,
    pub query: QueryText,
}

impl CaseDocument {
    pub fn note_id(&self) -> &str {
        &self.note.note_id
    }

    pub fn hadm_id(&self) -> &str {
        &self.note.hadm_id
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    /// Notes with no matching query.
    pub orphan_notes: Vec<String>,
    /// Queries with no matching note.
    pub orphan_queries: Vec<String>,
    /// Note ids seen more than once; only the first occurrence is joined.
    pub duplicate_note_ids: Vec<String>,
    pub duplicate_query_ids: Vec<String>,
}

pub fn load_notes(path: &Path, format: Format) -> Result<Vec<NoteText>, DataError> {
    let rows = read_rows(path, format, &["note_id", "hadm_id", "text"])?;
    rows.into_iter()
        .enumerate()
        .map(|(i, mut fields)| {
            let row = i + 1;
            let text = fields.pop().unwrap_or_default();
            let hadm_id = fields.pop().unwrap_or_default();
            let note_id = fields.pop().unwrap_or_default();
            check_id(path, row, &note_id)?;
            if text.trim().is_empty() {
                return Err(malformed(path, row, RowProblem::EmptyText));
            }
            Ok(NoteText {
                note_id,
                hadm_id,
                text,
            })
        })
        .collect()
}

/// Load brief-course queries. With `strict` set, queries shorter than
/// [`STRICT_QUERY_MIN_CHARS`] characters are rejected.
pub fn load_queries(path: &Path, format: Format, strict: bool) -> Result<Vec<QueryText>, DataError> {
    let rows = read_rows(path, format, &["note_id", "text"])?;
    rows.into_iter()
        .enumerate()
        .map(|(i, mut fields)| {
            let row = i + 1;
            let text = fields.pop().unwrap_or_default();
            let note_id = fields.pop().unwrap_or_default();
            check_id(path, row, &note_id)?;
            let query = QueryText { note_id, text };
            validate_query(&query, strict).map_err(|p| malformed(path, row, p))?;
            Ok(query)
        })
        .collect()
}

pub fn validate_query(query: &QueryText, strict: bool) -> Result<(), RowProblem> {
    if query.text.trim().is_empty() {
        return Err(RowProblem::EmptyText);
    }
    let len = query.text.chars().count();
    if strict && len < STRICT_QUERY_MIN_CHARS {
        return Err(RowProblem::QueryTooShort {
            len,
            min: STRICT_QUERY_MIN_CHARS,
        });
    }
    Ok(())
}

/// Ids that occur more than once, in order of their second appearance.
pub fn duplicate_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    let mut dups = Vec::new();
    for id in ids {
        if !seen.insert(id) && reported.insert(id) {
            dups.push(id.to_string());
        }
    }
    dups
}

/// Inner join on `note_id`, ordered by note input order. Orphans are
/// reported, never fatal.
pub fn join(notes: &[NoteText], queries: &[QueryText]) -> (Vec<CaseDocument>, JoinReport) {
    let mut by_id: HashMap<&str, &QueryText> = HashMap::new();
    for q in queries {
        by_id.entry(q.note_id.as_str()).or_insert(q);
    }
    let note_ids: HashSet<&str> = notes.iter().map(|n| n.note_id.as_str()).collect();

    let mut report = JoinReport {
        duplicate_note_ids: duplicate_ids(notes.iter().map(|n| n.note_id.as_str())),
        duplicate_query_ids: duplicate_ids(queries.iter().map(|q| q.note_id.as_str())),
        ..Default::default()
    };

    let mut seen = HashSet::new();
    let mut cases = Vec::new();
    for note in notes {
        if !seen.insert(note.note_id.as_str()) {
            continue;
        }
        match by_id.get(note.note_id.as_str()) {
            Some(q) => cases.push(CaseDocument {
                note: note.clone(),
                query: (*q).clone(),
            }),
            None => report.orphan_notes.push(note.note_id.clone()),
        }
    }
    let mut seen_q = HashSet::new();
    for q in queries {
        if !note_ids.contains(q.note_id.as_str()) && seen_q.insert(q.note_id.as_str()) {
            report.orphan_queries.push(q.note_id.clone());
        }
    }
    if !report.orphan_notes.is_empty() || !report.orphan_queries.is_empty() {
        log::warn!(
            "join: {} notes without query, {} queries without note",
            report.orphan_notes.len(),
            report.orphan_queries.len()
        );
    }
    (cases, report)
}

pub fn write_notes(path: &Path, format: Format, notes: &[NoteText]) -> Result<(), DataError> {
    write_rows(
        path,
        format,
        &["note_id", "hadm_id", "text"],
        notes
            .iter()
            .map(|n| vec![n.note_id.as_str(), n.hadm_id.as_str(), n.text.as_str()]),
    )
}

pub fn write_queries(path: &Path, format: Format, queries: &[QueryText]) -> Result<(), DataError> {
    write_rows(
        path,
        format,
        &["note_id", "text"],
        queries.iter().map(|q| vec![q.note_id.as_str(), q.text.as_str()]),
    )
}

fn check_id(path: &Path, row: usize, id: &str) -> Result<(), DataError> {
    if id.trim().is_empty() {
        Err(malformed(path, row, RowProblem::EmptyId))
    } else {
        Ok(())
    }
}

fn malformed(path: &Path, row: usize, problem: RowProblem) -> DataError {
    DataError::MalformedRow {
        path: path.to_path_buf(),
        row,
        problem,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Read rows and project them onto `columns`, in that order.
fn read_rows(path: &Path, format: Format, columns: &[&str]) -> Result<Vec<Vec<String>>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    match format {
        Format::Csv => read_csv(path, file, columns),
        Format::Jsonl => read_jsonl(path, file, columns),
    }
}

fn read_csv(path: &Path, file: File, columns: &[&str]) -> Result<Vec<Vec<String>>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_err(path, 0, e))?
        .clone();
    let mut positions = Vec::with_capacity(columns.len());
    for col in columns {
        let pos = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == *col)
            .ok_or_else(|| DataError::MissingColumn {
                path: path.to_path_buf(),
                column: col.to_string(),
                row: None,
            })?;
        positions.push(pos);
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, i + 1, e))?;
        let fields = positions
            .iter()
            .map(|&p| {
                record
                    .get(p)
                    .map(str::to_string)
                    .ok_or_else(|| malformed(path, i + 1, RowProblem::Syntax("short record".into())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(fields);
    }
    Ok(out)
}

fn csv_err(path: &Path, row: usize, e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => malformed(path, row, RowProblem::Syntax(format!("{kind:?}"))),
    }
}

fn read_jsonl(path: &Path, file: File, columns: &[&str]) -> Result<Vec<Vec<String>>, DataError> {
    let mut out = Vec::new();
    let mut row = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| malformed(path, row, RowProblem::Syntax(e.to_string())))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed(path, row, RowProblem::Syntax("expected a JSON object".into())))?;
        let mut fields = Vec::with_capacity(columns.len());
        for col in columns {
            let field = match obj.get(*col) {
                Some(serde_json::Value::String(s)) => s.clone(),
                // identifiers exported as bare JSON numbers are kept verbatim
                Some(serde_json::Value::Number(n)) => n.to_string(),
                Some(other) => {
                    return Err(malformed(
                        path,
                        row,
                        RowProblem::Syntax(format!("`{col}` must be a string, got {other}")),
                    ))
                }
                None => {
                    return Err(DataError::MissingColumn {
                        path: path.to_path_buf(),
                        column: col.to_string(),
                        row: Some(row),
                    })
                }
            };
            fields.push(field);
        }
        out.push(fields);
    }
    Ok(out)
}

fn write_rows<'a>(
    path: &Path,
    format: Format,
    columns: &[&str],
    rows: impl Iterator<Item = Vec<&'a str>>,
) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(file);
            let to_err = |e: csv::Error| DataError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e),
            };
            w.write_record(columns).map_err(to_err)?;
            for row in rows {
                w.write_record(&row).map_err(to_err)?;
            }
            w.flush().map_err(io_err(path))
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(file);
            for row in rows {
                let obj: serde_json::Map<String, serde_json::Value> = columns
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
                    .collect();
                serde_json::to_writer(&mut w, &obj).map_err(|e| DataError::Io {
                    path: path.to_path_buf(),
                    source: e.into(),
                })?;
                w.write_all(b"\n").map_err(io_err(path))?;
            }
            w.flush().map_err(io_err(path))
        }
    }
}

/// Locate `<stem>.jsonl` or `<stem>.csv` inside `dir`, preferring JSONL.
pub fn find_input(dir: &Path, stem: &str) -> Option<(PathBuf, Format)> {
    [("jsonl", Format::Jsonl), ("csv", Format::Csv)]
        .into_iter()
        .map(|(ext, fmt)| (dir.join(format!("{stem}.{ext}")), fmt))
        .find(|(p, _)| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn note(id: &str) -> NoteText {
        NoteText {
            note_id: id.into(),
            hadm_id: format!("h{id}"),
            text: format!("text of {id}"),
        }
    }

    fn query(id: &str) -> QueryText {
        QueryText {
            note_id: id.into(),
            text: format!("summary of {id}"),
        }
    }

    #[test]
    fn header_only_csv_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.csv", "note_id,hadm_id,text\n");
        assert!(load_notes(&p, Format::Csv).unwrap().is_empty());
    }

    #[test]
    fn rows_keep_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "n.csv",
            "note_id,hadm_id,text\nb,2,\"second, with comma\nand newline\"\na,1,first\n",
        );
        let notes = load_notes(&p, Format::Csv).unwrap();
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[0].note_id, "b");
        assert_eq!(notes[0].text, "second, with comma\nand newline");
        assert_eq!(notes[1].hadm_id, "1");
    }

    #[test]
    fn blank_text_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.csv", "note_id,hadm_id,text\na,1,ok\nb,2,   \n");
        match load_notes(&p, Format::Csv) {
            Err(DataError::MalformedRow { row, problem, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(problem, RowProblem::EmptyText);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.csv", "note_id,text\na,hello\n");
        assert!(matches!(
            load_notes(&p, Format::Csv),
            Err(DataError::MissingColumn { ref column, .. }) if column == "hadm_id"
        ));
        let p = write(dir.path(), "n.jsonl", "{\"note_id\":\"a\",\"text\":\"x\"}\n");
        assert!(matches!(
            load_notes(&p, Format::Jsonl),
            Err(DataError::MissingColumn { row: Some(1), .. })
        ));
    }

    #[test]
    fn jsonl_accepts_numeric_hadm_id_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "n.jsonl",
            "{\"note_id\":\"10000032-DS-21\",\"hadm_id\":22595853,\"text\":\"a\\nb\"}\n\n",
        );
        let notes = load_notes(&p, Format::Jsonl).unwrap();
        assert_eq!(notes[0].hadm_id, "22595853");
        assert_eq!(notes[0].text, "a\nb");
    }

    #[test]
    fn strict_mode_rejects_99_char_query() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("note_id,text\na,{}\n", "x".repeat(99));
        let p = write(dir.path(), "q.csv", &body);
        assert!(matches!(
            load_queries(&p, Format::Csv, true),
            Err(DataError::MalformedRow {
                problem: RowProblem::QueryTooShort { len: 99, .. },
                ..
            })
        ));
        let body = format!("note_id,text\na,{}\n", "x".repeat(100));
        let p = write(dir.path(), "q2.csv", &body);
        assert_eq!(load_queries(&p, Format::Csv, true).unwrap().len(), 1);
    }

    #[test]
    fn relaxed_mode_accepts_one_char_query() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "q.csv", "note_id,text\na,x\n");
        assert_eq!(load_queries(&p, Format::Csv, false).unwrap()[0].text, "x");
    }

    #[test]
    fn orphan_query_loads_then_surfaces_in_join() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "q.csv", "note_id,text\na,s1\nb,s2\nz,s3\n");
        let queries = load_queries(&p, Format::Csv, false).unwrap();
        assert_eq!(queries.len(), 3);
        let (cases, report) = join(&[note("a"), note("b")], &queries);
        assert_eq!(cases.len(), 2);
        assert_eq!(report.orphan_queries, vec!["z"]);
    }

    #[test]
    fn join_cases() {
        let (cases, r) = join(&[note("a"), note("b")], &[query("b"), query("a")]);
        assert_eq!(cases.iter().map(|c| c.note_id()).collect::<Vec<_>>(), ["a", "b"]);
        assert!(r.orphan_notes.is_empty() && r.orphan_queries.is_empty());

        let (cases, r) = join(&[note("a"), note("b")], &[query("b"), query("c")]);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].note_id(), "b");
        assert_eq!(r.orphan_notes, vec!["a"]);
        assert_eq!(r.orphan_queries, vec!["c"]);

        let qs: Vec<_> = (0..4).map(|i| query(&i.to_string())).collect();
        let (cases, r) = join(&[], &qs);
        assert!(cases.is_empty());
        assert_eq!(r.orphan_queries.len(), 4);
    }

    #[test]
    fn duplicates_are_reported_and_first_wins() {
        let mut second = note("a");
        second.text = "other".into();
        let (cases, r) = join(&[note("a"), second], &[query("a")]);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].note.text, "text of a");
        assert_eq!(r.duplicate_note_ids, vec!["a"]);
    }
}
