//! Snapshot to RDF conversion runs.
//!
//! A run discovers the snapshot, pre-scans for the newest copy of every
//! id, then converts with a fixed number of workers. Parts are assigned
//! to workers round robin by position, so a rerun with the same worker
//! count writes byte-identical files, and any worker count yields the
//! same set of statements.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{self, IngestError, MalformedLine, PartFile, RecordCoord, RecordIssue};
use crate::mapping::{self, emit_ontology, emit_void, MappingTable, RejectedRecord, VoidConfig};
use crate::model::EntityKind;
use crate::serialize::{
    turtle_document, write_manifest, Format, Manifest, ManifestPart, PartInfo, PartWriter,
    WriteError, WriterConfig,
};
use crate::store::{LoadReport, StoreError, TripleIndex};

#[derive(Debug, Clone)]
pub struct ConvertConfig {
    pub snapshot_root: PathBuf,
    pub out_dir: PathBuf,
    pub format: Format,
    pub gzip: bool,
    pub workers: usize,
    pub buffer_capacity: usize,
    pub max_statements_per_part: u64,
    /// Entity kinds to convert; empty means all six.
    pub kinds: Vec<EntityKind>,
}

impl ConvertConfig {
    pub fn new(snapshot_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> ConvertConfig {
        let defaults = WriterConfig::default();
        ConvertConfig {
            snapshot_root: snapshot_root.into(),
            out_dir: out_dir.into(),
            format: Format::TriG,
            gzip: true,
            workers: 1,
            buffer_capacity: defaults.buffer_capacity,
            max_statements_per_part: defaults.max_statements_per_part,
            kinds: Vec::new(),
        }
    }

    /// Digest over the settings that shape the output, for the manifest.
    pub fn digest(&self) -> String {
        let kinds = if self.kinds.is_empty() {
            "all".to_string()
        } else {
            let mut sorted: Vec<&str> = self.kinds.iter().map(|k| k.plural()).collect();
            sorted.sort_unstable();
            sorted.join(",")
        };
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "format={}\ngzip={}\nbuffer={}\nrotate={}\nworkers={}\nkinds={}\n",
            self.format, self.gzip, self.buffer_capacity, self.max_statements_per_part,
            self.workers, kinds
        ));
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    fn writer_config(&self) -> WriterConfig {
        WriterConfig {
            buffer_capacity: self.buffer_capacity,
            max_statements_per_part: self.max_statements_per_part,
            gzip: self.gzip,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Write(#[from] WriteError),
    #[error("cannot prepare {path}: {source}")]
    OutDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug)]
pub struct ConvertReport {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub records: u64,
    pub stale_skipped: u64,
    pub diagnostics: u64,
    pub rejected: Vec<RejectedRecord>,
    pub malformed: Vec<MalformedLine>,
    pub elapsed: Duration,
}

impl ConvertReport {
    /// A run is clean when every well-formed record converted.
    pub fn clean(&self) -> bool {
        self.rejected.is_empty()
    }
}

struct WorkerOutput {
    parts: Vec<PartInfo>,
    counts: BTreeMap<EntityKind, u64>,
    records: u64,
    stale_skipped: u64,
    diagnostics: u64,
    rejected: Vec<RejectedRecord>,
    malformed: Vec<MalformedLine>,
}

fn run_worker(
    worker_id: usize,
    assigned: &[&PartFile],
    winners: &HashMap<String, RecordCoord>,
    cfg: &ConvertConfig,
) -> Result<WorkerOutput, ConvertError> {
    let table = MappingTable::standard();
    let mut writers: BTreeMap<EntityKind, PartWriter> = BTreeMap::new();
    let mut out = WorkerOutput {
        parts: Vec::new(),
        counts: BTreeMap::new(),
        records: 0,
        stale_skipped: 0,
        diagnostics: 0,
        rejected: Vec::new(),
        malformed: Vec::new(),
    };
    for part in assigned {
        let stream = ingest::stream_records(part)?;
        for item in stream {
            let record = match item {
                Ok(record) => record,
                Err(RecordIssue::Malformed(line)) => {
                    log::warn!("{}:{}: {}", line.part.display(), line.line, line.reason);
                    out.malformed.push(line);
                    continue;
                }
                Err(RecordIssue::Corrupt { part, line, source }) => {
                    log::error!("aborting: {} unreadable near line {line}", part.display());
                    return Err(IngestError::Io { path: part, source }.into());
                }
            };
            let coord = RecordCoord { date: part.date, seq: part.seq, line: record.line };
            if winners.get(record.id_text()) != Some(&coord) {
                out.stale_skipped += 1;
                continue;
            }
            out.records += 1;
            match mapping::map_entity(&record, table) {
                Ok(mapped) => {
                    for diagnostic in &mapped.diagnostics {
                        log::debug!(
                            "{} field {}: {}",
                            diagnostic.id, diagnostic.field, diagnostic.reason
                        );
                    }
                    out.diagnostics += mapped.diagnostics.len() as u64;
                    *out.counts.entry(record.kind).or_default() += 1;
                    let writer = writers.entry(record.kind).or_insert_with(|| {
                        PartWriter::new(
                            &cfg.out_dir,
                            record.kind.plural(),
                            cfg.format,
                            worker_id,
                            cfg.writer_config(),
                        )
                    });
                    for quad in mapped.quads {
                        writer.write(quad)?;
                    }
                }
                Err(rejected) => {
                    log::warn!("{rejected}");
                    out.rejected.push(rejected);
                }
            }
        }
    }
    for (_, writer) in writers {
        out.parts.extend(writer.finish()?);
    }
    Ok(out)
}

/// Converts a snapshot into RDF part files plus manifest, schema and
/// dataset description documents.
pub fn convert(cfg: &ConvertConfig) -> Result<ConvertReport, ConvertError> {
    let started = Instant::now();
    let mut layout = ingest::discover(&cfg.snapshot_root)?;
    for warning in &layout.warnings {
        log::warn!("{warning}");
    }
    if !cfg.kinds.is_empty() {
        layout.parts.retain(|part| cfg.kinds.contains(&part.kind));
    }
    let workers = cfg.workers.max(1);
    let winners = ingest::scan_winners(&layout.parts, workers)?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|source| ConvertError::OutDir { path: cfg.out_dir.clone(), source })?;

    let results: Vec<Result<WorkerOutput, ConvertError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker_id in 0..workers {
            let assigned: Vec<&PartFile> =
                layout.parts.iter().skip(worker_id).step_by(workers).collect();
            let winners = &winners;
            handles
                .push(scope.spawn(move || run_worker(worker_id, &assigned, winners, cfg)));
        }
        handles.into_iter().map(|h| h.join().expect("worker does not panic")).collect()
    });

    let mut parts: Vec<PartInfo> = Vec::new();
    let mut counts: BTreeMap<EntityKind, u64> = EntityKind::ALL.into_iter().map(|k| (k, 0)).collect();
    let mut report = ConvertReport {
        manifest: Manifest {
            snapshot_root: cfg.snapshot_root.display().to_string(),
            config_digest: cfg.digest(),
            format: cfg.format.to_string(),
            gzip: cfg.gzip,
            generated_at: chrono::Utc::now().to_rfc3339(),
            entity_counts: BTreeMap::new(),
            parts: Vec::new(),
            triple_total: 0,
        },
        manifest_path: PathBuf::new(),
        records: 0,
        stale_skipped: 0,
        diagnostics: 0,
        rejected: Vec::new(),
        malformed: Vec::new(),
        elapsed: Duration::ZERO,
    };
    for result in results {
        let output = result?;
        parts.extend(output.parts);
        for (kind, n) in output.counts {
            *counts.entry(kind).or_default() += n;
        }
        report.records += output.records;
        report.stale_skipped += output.stale_skipped;
        report.diagnostics += output.diagnostics;
        report.rejected.extend(output.rejected);
        report.malformed.extend(output.malformed);
    }
    parts.sort_by(|a, b| a.path.cmp(&b.path));
    report.rejected.sort_by(|a, b| (&a.part, a.line).cmp(&(&b.part, b.line)));
    report.malformed.sort_by(|a, b| (&a.part, a.line).cmp(&(&b.part, b.line)));

    report.manifest.triple_total = parts.iter().map(|p| p.statements).sum();
    report.manifest.parts = parts
        .iter()
        .map(|p| ManifestPart {
            path: p
                .path
                .file_name()
                .expect("part files have names")
                .to_string_lossy()
                .into_owned(),
            statements: p.statements,
        })
        .collect();
    report.manifest.entity_counts =
        counts.iter().map(|(kind, n)| (kind.plural().to_string(), *n)).collect();

    let table = MappingTable::standard();
    let ontology = turtle_document(&emit_ontology(table), &[]);
    let ontology_path = cfg.out_dir.join("ontology.ttl");
    fs::write(&ontology_path, ontology)
        .map_err(|source| WriteError::Io { path: ontology_path, source })?;
    let void = turtle_document(
        &emit_void(&counts, report.manifest.triple_total, &VoidConfig::default()),
        &[("void", mapping::VOID)],
    );
    let void_path = cfg.out_dir.join("void.ttl");
    fs::write(&void_path, void).map_err(|source| WriteError::Io { path: void_path, source })?;

    report.manifest_path = write_manifest(&report.manifest, &cfg.out_dir)?;
    report.elapsed = started.elapsed();
    Ok(report)
}

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Manifest(#[from] WriteError),
}

#[derive(Debug)]
pub struct ValidationReport {
    pub files: u64,
    pub statements: u64,
    pub invalid_lines: Vec<String>,
    pub duplicate_statements: u64,
    pub dangling_refs: u64,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn clean(&self) -> bool {
        self.invalid_lines.is_empty() && self.issues.is_empty()
    }
}

/// Re-reads a conversion output directory and checks it against its own
/// manifest. Unresolvable references are counted but not failures.
pub fn validate_output(dir: &Path) -> Result<ValidationReport, ValidateError> {
    let manifest = crate::serialize::read_manifest(&dir.join("manifest.json"))?;
    let mut report = ValidationReport {
        files: 0,
        statements: 0,
        invalid_lines: Vec::new(),
        duplicate_statements: 0,
        dangling_refs: 0,
        issues: Vec::new(),
    };
    let mut index = TripleIndex::new();
    let mut load = LoadReport::default();
    for part in &manifest.parts {
        let path = dir.join(&part.path);
        if !path.is_file() {
            report.issues.push(format!("{}: listed in manifest but missing", part.path));
            continue;
        }
        report.files += 1;
        let read = index.load_path(&path, &mut load)?;
        if read != part.statements {
            report.issues.push(format!(
                "{}: manifest says {} statements, file holds {read}",
                part.path, part.statements
            ));
        }
    }
    report.duplicate_statements = index.finalize();
    report.statements = load.statements_read;
    report.invalid_lines = load.line_issues;
    report.dangling_refs = index.dangling_entity_objects().len() as u64;
    if report.statements != manifest.triple_total {
        report.issues.push(format!(
            "manifest total {} does not match {} statements on disk",
            manifest.triple_total, report.statements
        ));
    }
    Ok(report)
}

/// Part files listed by a manifest, resolved against its directory.
pub fn manifest_part_paths(dir: &Path) -> Result<Vec<PathBuf>, WriteError> {
    let manifest = crate::serialize::read_manifest(&dir.join("manifest.json"))?;
    Ok(manifest.parts.iter().map(|p| dir.join(&p.path)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplegen::{self, GenConfig};
    use crate::serialize::read_manifest;
    use flate2::read::GzDecoder;
    use std::io::Read;

    fn convert_sample(works: usize, seed: u64, format: Format, workers: usize) -> (tempfile::TempDir, ConvertReport, samplegen::Expected) {
        let dir = tempfile::tempdir().unwrap();
        let snapshot = dir.path().join("snapshot");
        let expected = samplegen::generate(
            &snapshot,
            &GenConfig { seed, works, edge_case_rate: 0.4, ..GenConfig::default() },
        )
        .unwrap();
        let mut cfg = ConvertConfig::new(&snapshot, dir.path().join("out"));
        cfg.format = format;
        cfg.workers = workers;
        let report = convert(&cfg).unwrap();
        (dir, report, expected)
    }

    #[test]
    fn convert_matches_answer_key_through_files() {
        let (dir, report, expected) = convert_sample(150, 11, Format::NQuads, 2);
        assert!(report.clean());
        assert!(report.malformed.is_empty());
        assert!(report.stale_skipped > 0);
        assert_eq!(report.manifest.triple_total, expected.statement_total);
        assert_eq!(
            report.manifest.entity_counts,
            expected.entity_counts,
        );
        assert!(report.manifest.consistent());

        let out = dir.path().join("out");
        let manifest = read_manifest(&out.join("manifest.json")).unwrap();
        assert_eq!(manifest, report.manifest);
        assert!(out.join("ontology.ttl").is_file());
        assert!(out.join("void.ttl").is_file());

        let paths = manifest_part_paths(&out).unwrap();
        let (index, load) = TripleIndex::load_files(&paths).unwrap();
        assert!(load.line_issues.is_empty());
        assert_eq!(load.statements_read, expected.statement_total);
        assert_eq!(load.duplicates, 0);

        let rows = index.query_top_cited_by_concept(&expected.top_cited.concept, expected.top_cited.limit);
        assert_eq!(rows, expected.top_cited.rows);
        let stats = index.report_stats();
        assert_eq!(stats.entities, expected.entity_counts);

        let validation = validate_output(&out).unwrap();
        assert!(validation.clean(), "{:?}", validation.issues);
        assert_eq!(validation.statements, expected.statement_total);
        assert_eq!(validation.duplicate_statements, 0);
        assert!(validation.dangling_refs > 0, "sample plants dangling citations");
    }

    fn statement_multiset(dir: &Path) -> Vec<String> {
        let mut lines = Vec::new();
        for path in manifest_part_paths(dir).unwrap() {
            let mut text = String::new();
            GzDecoder::new(std::fs::File::open(&path).unwrap()).read_to_string(&mut text).unwrap();
            lines.extend(text.lines().map(str::to_string));
        }
        lines.sort();
        lines
    }

    #[test]
    fn worker_count_changes_nothing_but_file_layout() {
        let (dir1, report1, expected) = convert_sample(90, 23, Format::NQuads, 1);
        let (dir4, report4, _) = convert_sample(90, 23, Format::NQuads, 4);
        assert_eq!(report1.manifest.triple_total, expected.statement_total);
        assert_eq!(report4.manifest.triple_total, expected.statement_total);
        assert_eq!(
            statement_multiset(&dir1.path().join("out")),
            statement_multiset(&dir4.path().join("out")),
        );
        assert_ne!(report1.manifest.parts, report4.manifest.parts);
    }

    #[test]
    fn rerun_with_same_config_is_byte_identical() {
        let (dir_a, report_a, _) = convert_sample(60, 5, Format::TriG, 3);
        let (dir_b, report_b, _) = convert_sample(60, 5, Format::TriG, 3);
        assert_eq!(report_a.manifest.parts, report_b.manifest.parts);
        for part in &report_a.manifest.parts {
            let a = std::fs::read(dir_a.path().join("out").join(&part.path)).unwrap();
            let b = std::fs::read(dir_b.path().join("out").join(&part.path)).unwrap();
            assert_eq!(a, b, "part {} differs between reruns", part.path);
        }
    }

    #[test]
    fn all_formats_survive_their_own_validation() {
        for format in [Format::NTriples, Format::NQuads, Format::TriG] {
            let (dir, report, expected) = convert_sample(40, 3, format, 2);
            assert!(report.clean());
            assert_eq!(report.manifest.triple_total, expected.statement_total);
            let validation = validate_output(&dir.path().join("out")).unwrap();
            assert!(validation.clean(), "{format}: {:?}", validation.issues);
        }
    }

    #[test]
    fn bad_ids_reject_without_stopping_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let snapshot = dir.path().join("snapshot");
        let part_dir = snapshot.join("data/works/updated_date=2023-06-17");
        fs::create_dir_all(&part_dir).unwrap();
        let lines = [
            r#"{"id": "W1", "display_name": "good", "cited_by_count": 1}"#,
            r#"{"id": "X1", "display_name": "bad prefix"}"#,
            r#"{"id": "W1748", "display_name": "also good"}"#,
        ];
        let file = fs::File::create(part_dir.join("part_000.gz")).unwrap();
        let mut gz = flate2::write::GzEncoder::new(file, flate2::Compression::new(6));
        for line in lines {
            use std::io::Write;
            writeln!(gz, "{line}").unwrap();
        }
        gz.finish().unwrap();

        let cfg = ConvertConfig::new(&snapshot, dir.path().join("out"));
        let report = convert(&cfg).unwrap();
        assert_eq!(report.records, 3);
        assert_eq!(report.rejected.len(), 1);
        assert!(!report.clean());
        assert_eq!(report.manifest.entity_counts["works"], 2);
        assert_eq!(report.manifest.triple_total, 2 + 2 + 1);
    }
}
