//! Snapshot discovery and streaming ingestion.
//!
//! A snapshot root looks like
//! `<root>/data/<kind-plural>/updated_date=YYYY-MM-DD/part_NNN.gz`, each
//! part a gzipped UTF-8 JSON-Lines file of entity records. Entity ids may
//! reappear across date partitions; only the newest copy of an id is
//! meant to survive. Winner selection happens in a cheap pre-scan so the
//! main pass can run on several parts in parallel with no shared state.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use flate2::read::GzDecoder;
use serde_json::Value;
use thiserror::Error;

use crate::model::{EntityId, EntityKind, IdError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("snapshot root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("snapshot under {0} contains no part files")]
    EmptySnapshot(PathBuf),
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One discovered gzip part file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartFile {
    pub path: PathBuf,
    pub kind: EntityKind,
    pub date: NaiveDate,
    pub seq: u32,
}

#[derive(Debug, Clone)]
pub struct SnapshotLayout {
    pub root: PathBuf,
    /// Sorted by (kind, date, seq).
    pub parts: Vec<PartFile>,
    /// Unknown directories and unparseable names, skipped but reported.
    pub warnings: Vec<String>,
}

impl SnapshotLayout {
    pub fn parts_of(&self, kind: EntityKind) -> Vec<PartFile> {
        self.parts.iter().filter(|p| p.kind == kind).cloned().collect()
    }

    pub fn kinds(&self) -> Vec<EntityKind> {
        let mut kinds: Vec<EntityKind> = self.parts.iter().map(|p| p.kind).collect();
        kinds.sort_unstable();
        kinds.dedup();
        kinds
    }
}

fn read_dir_sorted(path: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = std::fs::read_dir(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        paths.push(entry.path());
    }
    paths.sort();
    Ok(paths)
}

/// Walks the snapshot tree. Unknown directories and oddly named files are
/// reported as warnings, never errors.
pub fn discover(root: &Path) -> Result<SnapshotLayout, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    let mut layout = SnapshotLayout { root: root.to_path_buf(), parts: Vec::new(), warnings: Vec::new() };
    let data = root.join("data");
    if !data.is_dir() {
        return Err(IngestError::EmptySnapshot(root.to_path_buf()));
    }
    for kind_dir in read_dir_sorted(&data)? {
        let name = kind_dir.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !kind_dir.is_dir() {
            layout.warnings.push(format!("skipping stray file {}", kind_dir.display()));
            continue;
        }
        let Some(kind) = EntityKind::from_plural(name) else {
            layout.warnings.push(format!("skipping unknown directory {}", kind_dir.display()));
            continue;
        };
        for date_dir in read_dir_sorted(&kind_dir)? {
            let dname = date_dir.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let date = dname
                .strip_prefix("updated_date=")
                .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok());
            let Some(date) = date else {
                layout.warnings.push(format!("skipping unrecognized partition {}", date_dir.display()));
                continue;
            };
            if !date_dir.is_dir() {
                layout.warnings.push(format!("skipping stray file {}", date_dir.display()));
                continue;
            }
            for part in read_dir_sorted(&date_dir)? {
                let fname = part.file_name().and_then(|n| n.to_str()).unwrap_or("");
                let seq = fname
                    .strip_prefix("part_")
                    .and_then(|r| r.strip_suffix(".gz"))
                    .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|digits| digits.parse::<u32>().ok());
                match seq {
                    Some(seq) => layout.parts.push(PartFile { path: part, kind, date, seq }),
                    None => layout.warnings.push(format!("skipping unrecognized file {}", part.display())),
                }
            }
        }
    }
    layout.parts.sort_by(|a, b| (a.kind, a.date, a.seq).cmp(&(b.kind, b.date, b.seq)));
    if layout.parts.is_empty() {
        return Err(IngestError::EmptySnapshot(root.to_path_buf()));
    }
    Ok(layout)
}

/// One JSON record as it came off the wire, plus provenance.
#[derive(Debug, Clone)]
pub struct RawEntityRecord {
    pub kind: EntityKind,
    pub fields: serde_json::Map<String, Value>,
    pub part: PathBuf,
    pub line: u64,
}

impl RawEntityRecord {
    /// The raw `id` member; presence and string-ness are checked at parse
    /// time.
    pub fn id_text(&self) -> &str {
        self.fields.get("id").and_then(Value::as_str).unwrap_or("")
    }

    pub fn entity_id(&self) -> Result<EntityId, IdError> {
        EntityId::parse_any(self.id_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub part: PathBuf,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum RecordIssue {
    /// Bad line, stream continues.
    #[error("{} line {}: {}", .0.part.display(), .0.line, .0.reason)]
    Malformed(MalformedLine),
    /// Archive-level failure, stream ends.
    #[error("corrupt archive {part} near line {line}: {source}")]
    Corrupt {
        part: PathBuf,
        line: u64,
        #[source]
        source: io::Error,
    },
}

pub struct RecordStream {
    kind: EntityKind,
    path: PathBuf,
    lines: io::Lines<BufReader<GzDecoder<File>>>,
    line_no: u64,
    done: bool,
}

/// Opens a part for streaming. Lines that fail to parse come back as
/// `Malformed` items; blank lines are skipped.
pub fn stream_records(part: &PartFile) -> Result<RecordStream, IngestError> {
    let file = File::open(&part.path).map_err(|source| IngestError::Io { path: part.path.clone(), source })?;
    Ok(RecordStream {
        kind: part.kind,
        path: part.path.clone(),
        lines: BufReader::new(GzDecoder::new(file)).lines(),
        line_no: 0,
        done: false,
    })
}

fn parse_record_line(
    kind: EntityKind,
    path: &Path,
    line_no: u64,
    text: &str,
) -> Result<Option<RawEntityRecord>, MalformedLine> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    let malformed = |reason: &str| MalformedLine {
        part: path.to_path_buf(),
        line: line_no,
        reason: reason.to_string(),
    };
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(&format!("invalid json: {e}")))?;
    let Value::Object(fields) = value else {
        return Err(malformed("record is not a json object"));
    };
    match fields.get("id") {
        Some(Value::String(id)) if !id.is_empty() => {}
        Some(Value::String(_)) => return Err(malformed("empty id")),
        Some(_) => return Err(malformed("id is not a string")),
        None => return Err(malformed("missing id")),
    }
    Ok(Some(RawEntityRecord { kind, fields, part: path.to_path_buf(), line: line_no }))
}

impl Iterator for RecordStream {
    type Item = Result<RawEntityRecord, RecordIssue>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.lines.next() {
                None => {
                    self.done = true;
                    return None;
                }
                Some(Err(source)) => {
                    self.done = true;
                    return Some(Err(RecordIssue::Corrupt {
                        part: self.path.clone(),
                        line: self.line_no + 1,
                        source,
                    }));
                }
                Some(Ok(text)) => {
                    self.line_no += 1;
                    match parse_record_line(self.kind, &self.path, self.line_no, &text) {
                        Ok(None) => continue,
                        Ok(Some(record)) => return Some(Ok(record)),
                        Err(bad) => return Some(Err(RecordIssue::Malformed(bad))),
                    }
                }
            }
        }
    }
}

/// Position of a record inside one kind's partition set; decides which copy
/// of a repeated id survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordCoord {
    pub date: NaiveDate,
    pub seq: u32,
    pub line: u64,
}

impl RecordCoord {
    /// Newest date wins; within a date the earliest (seq, line) copy is the
    /// deterministic survivor.
    pub fn wins_over(&self, other: &RecordCoord) -> bool {
        match self.date.cmp(&other.date) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => (self.seq, self.line) < (other.seq, other.line),
        }
    }
}

/// Pre-scan of one kind's parts: per id, the coordinate of the surviving
/// copy. Malformed lines are skipped here; the main pass reports them.
pub fn scan_winners(parts: &[PartFile], workers: usize) -> Result<HashMap<String, RecordCoord>, IngestError> {
    let workers = workers.max(1);
    let maps: Vec<Result<HashMap<String, RecordCoord>, IngestError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let assigned: Vec<&PartFile> = parts.iter().skip(w).step_by(workers).collect();
            handles.push(scope.spawn(move || {
                let mut local: HashMap<String, RecordCoord> = HashMap::new();
                for part in assigned {
                    let coord_base = RecordCoord { date: part.date, seq: part.seq, line: 0 };
                    for item in stream_records(part)? {
                        let record = match item {
                            Ok(r) => r,
                            Err(RecordIssue::Malformed(_)) => continue,
                            Err(RecordIssue::Corrupt { part, line, source }) => {
                                return Err(IngestError::Io {
                                    path: part,
                                    source: io::Error::new(
                                        source.kind(),
                                        format!("corrupt archive near line {line}: {source}"),
                                    ),
                                });
                            }
                        };
                        let coord = RecordCoord { line: record.line, ..coord_base };
                        match local.get_mut(record.id_text()) {
                            Some(best) => {
                                if coord.wins_over(best) {
                                    *best = coord;
                                }
                            }
                            None => {
                                local.insert(record.id_text().to_string(), coord);
                            }
                        }
                    }
                }
                Ok(local)
            }));
        }
        handles.into_iter().map(|h| h.join().expect("scan worker panicked")).collect()
    });

    let mut merged: HashMap<String, RecordCoord> = HashMap::new();
    for map in maps {
        for (id, coord) in map? {
            match merged.get_mut(&id) {
                Some(best) => {
                    if coord.wins_over(best) {
                        *best = coord;
                    }
                }
                None => {
                    merged.insert(id, coord);
                }
            }
        }
    }
    Ok(merged)
}

/// Sequential latest-copy-wins filter over one kind's parts. Yields the
/// surviving records in (date, seq, line) order plus all malformed-line
/// diagnostics encountered.
pub fn dedupe_latest(parts: &[PartFile]) -> Result<(Vec<RawEntityRecord>, Vec<MalformedLine>), IngestError> {
    let winners = scan_winners(parts, 1)?;
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for part in parts {
        for item in stream_records(part)? {
            match item {
                Ok(record) => {
                    let coord = RecordCoord { date: part.date, seq: part.seq, line: record.line };
                    if winners.get(record.id_text()) == Some(&coord) {
                        records.push(record);
                    }
                }
                Err(RecordIssue::Malformed(bad)) => malformed.push(bad),
                Err(RecordIssue::Corrupt { part, line, source }) => {
                    return Err(IngestError::Io {
                        path: part,
                        source: io::Error::new(source.kind(), format!("corrupt archive near line {line}: {source}")),
                    });
                }
            }
        }
    }
    Ok((records, malformed))
}

#[cfg(test)]
pub(crate) fn write_gz_lines(path: &Path, lines: &[&str]) {
    use flate2::write::GzEncoder;
    use std::io::Write;
    let file = File::create(path).unwrap();
    let mut enc = GzEncoder::new(file, flate2::Compression::new(6));
    for line in lines {
        enc.write_all(line.as_bytes()).unwrap();
        enc.write_all(b"\n").unwrap();
    }
    enc.finish().unwrap();
}
