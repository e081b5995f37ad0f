//! Bulk serialization: N-Triples, N-Quads and TriG part files.
//!
//! Statements pass through a bounded buffer so file writes happen in
//! batches; part files rotate once they grow past a statement cap. Escaping
//! covers exactly what the line grammars require; everything else stays raw
//! UTF-8 to keep files small and diffs readable. Output is deterministic:
//! same statements in, same bytes out, including the gzip layer (fixed
//! compression level, zeroed mtime).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Iri, Literal, Quad, Term, Triple, XSD_STRING};
use crate::vocab;

pub const GZIP_LEVEL: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    NTriples,
    NQuads,
    TriG,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::NTriples => "nt",
            Format::NQuads => "nq",
            Format::TriG => "trig",
        }
    }

    pub fn parse(s: &str) -> Option<Format> {
        match s.to_ascii_lowercase().as_str() {
            "nt" | "ntriples" | "n-triples" => Some(Format::NTriples),
            "nq" | "nquads" | "n-quads" => Some(Format::NQuads),
            "trig" => Some(Format::TriG),
            _ => None,
        }
    }

    pub fn from_path(path: &Path) -> Option<Format> {
        let name = path.file_name()?.to_str()?;
        let name = name.strip_suffix(".gz").unwrap_or(name);
        Format::parse(name.rsplit('.').next()?)
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.extension())
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Format, String> {
        Format::parse(s).ok_or_else(|| format!("unknown format {s:?}; use nt, nq or trig"))
    }
}

/// Escapes a literal body for the quoted string production shared by all
/// three formats: backslash, quote, newline, carriage return and tab get
/// their short escapes; remaining control characters fall back to \uXXXX.
pub fn escape_literal(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 8);
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if c < ' ' || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn write_literal(out: &mut String, lit: &Literal, omit_xsd_string: bool) {
    out.push('"');
    out.push_str(&escape_literal(&lit.lexical));
    out.push('"');
    if let Some(tag) = &lit.language {
        out.push('@');
        out.push_str(tag);
    } else if lit.datatype.as_str() != XSD_STRING || !omit_xsd_string {
        out.push_str("^^<");
        out.push_str(lit.datatype.as_str());
        out.push('>');
    }
}

fn write_term(out: &mut String, term: &Term, omit_xsd_string: bool) {
    match term {
        Term::Iri(iri) => {
            out.push('<');
            out.push_str(iri.as_str());
            out.push('>');
        }
        Term::Literal(lit) => write_literal(out, lit, omit_xsd_string),
    }
}

/// One statement line. For N-Quads this includes the graph; for TriG it is
/// the member line that belongs inside the quad's graph block (plain
/// `xsd:string` literals drop their datatype suffix there).
pub fn statement_line(quad: &Quad, format: Format) -> String {
    let mut out = String::with_capacity(128);
    out.push('<');
    out.push_str(quad.subject.as_str());
    out.push_str("> <");
    out.push_str(quad.predicate.as_str());
    out.push_str("> ");
    write_term(&mut out, &quad.object, format == Format::TriG);
    if format == Format::NQuads {
        out.push_str(" <");
        out.push_str(quad.graph.as_str());
        out.push('>');
    }
    out.push_str(" .");
    out
}

/// Turtle rendering of a single triple with full IRIs, used for linked-data
/// responses.
pub fn turtle_line(triple: &Triple) -> String {
    let mut out = String::with_capacity(128);
    out.push('<');
    out.push_str(triple.subject.as_str());
    out.push_str("> <");
    out.push_str(triple.predicate.as_str());
    out.push_str("> ");
    write_term(&mut out, &triple.object, true);
    out.push_str(" .");
    out
}

/// Standalone rendering of one term, `xsd:string` suffix omitted.
pub fn term_text(term: &Term) -> String {
    let mut out = String::with_capacity(32);
    write_term(&mut out, term, true);
    out
}

/// N-Triples rendering of a single triple, datatype suffixes intact.
pub fn ntriples_line(triple: &Triple) -> String {
    let mut out = String::with_capacity(128);
    out.push('<');
    out.push_str(triple.subject.as_str());
    out.push_str("> <");
    out.push_str(triple.predicate.as_str());
    out.push_str("> ");
    write_term(&mut out, &triple.object, false);
    out.push_str(" .");
    out
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartInfo {
    pub path: PathBuf,
    pub statements: u64,
}

#[derive(Debug, Clone)]
pub struct WriterConfig {
    /// Statements buffered before a batch write.
    pub buffer_capacity: usize,
    /// Rotation threshold; a part closes at the first flush that reaches it.
    pub max_statements_per_part: u64,
    pub gzip: bool,
}

impl Default for WriterConfig {
    fn default() -> Self {
        WriterConfig { buffer_capacity: 10_000, max_statements_per_part: 2_000_000, gzip: true }
    }
}

enum Sink {
    Plain(BufWriter<File>),
    Gz(GzEncoder<BufWriter<File>>),
}

impl Sink {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()> {
        match self {
            Sink::Plain(w) => w.write_all(buf),
            Sink::Gz(w) => w.write_all(buf),
        }
    }

    fn finish(self) -> io::Result<()> {
        match self {
            Sink::Plain(mut w) => w.flush(),
            Sink::Gz(w) => w.finish().and_then(|mut inner| inner.flush()),
        }
    }
}

struct OpenPart {
    path: PathBuf,
    sink: Sink,
    statements: u64,
    open_graph: Option<Iri>,
}

/// Streams statements of one entity kind into rotating part files named
/// `<kind>_part_<worker>_<seq>.<ext>[.gz]`. TriG output groups consecutive
/// statements of the same graph into one graph block.
pub struct PartWriter {
    dir: PathBuf,
    kind_label: String,
    format: Format,
    worker_id: usize,
    cfg: WriterConfig,
    seq: usize,
    buffer: Vec<Quad>,
    current: Option<OpenPart>,
    finished: Vec<PartInfo>,
    flushes: u64,
}

impl PartWriter {
    pub fn new(dir: &Path, kind_label: &str, format: Format, worker_id: usize, cfg: WriterConfig) -> Self {
        PartWriter {
            dir: dir.to_path_buf(),
            kind_label: kind_label.to_string(),
            format,
            worker_id,
            cfg,
            seq: 0,
            buffer: Vec::new(),
            current: None,
            finished: Vec::new(),
            flushes: 0,
        }
    }

    pub fn flush_count(&self) -> u64 {
        self.flushes
    }

    pub fn write(&mut self, quad: Quad) -> Result<(), WriteError> {
        self.buffer.push(quad);
        if self.buffer.len() >= self.cfg.buffer_capacity {
            self.flush()?;
        }
        Ok(())
    }

    fn next_path(&self) -> PathBuf {
        let mut name = format!(
            "{}_part_{}_{}.{}",
            self.kind_label,
            self.worker_id,
            self.seq,
            self.format.extension()
        );
        if self.cfg.gzip {
            name.push_str(".gz");
        }
        self.dir.join(name)
    }

    fn open(&mut self) -> Result<&mut OpenPart, WriteError> {
        if self.current.is_none() {
            let path = self.next_path();
            let file = File::create(&path).map_err(|source| WriteError::Io { path: path.clone(), source })?;
            let writer = BufWriter::new(file);
            let sink = if self.cfg.gzip {
                Sink::Gz(GzEncoder::new(writer, Compression::new(GZIP_LEVEL)))
            } else {
                Sink::Plain(writer)
            };
            self.current = Some(OpenPart { path, sink, statements: 0, open_graph: None });
        }
        Ok(self.current.as_mut().unwrap())
    }

    /// Drains the buffer into the open part, preserving insertion order.
    pub fn flush(&mut self) -> Result<(), WriteError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        self.flushes += 1;
        let format = self.format;
        let quads = std::mem::take(&mut self.buffer);
        let part = self.open()?;
        let mut chunk = String::with_capacity(quads.len() * 96);
        for quad in &quads {
            if format == Format::TriG && part.open_graph.as_ref() != Some(&quad.graph) {
                if part.open_graph.is_some() {
                    chunk.push_str("}\n");
                }
                chunk.push('<');
                chunk.push_str(quad.graph.as_str());
                chunk.push_str("> {\n");
                part.open_graph = Some(quad.graph.clone());
            }
            chunk.push_str(&statement_line(quad, format));
            chunk.push('\n');
        }
        part.statements += quads.len() as u64;
        let path = part.path.clone();
        if let Err(source) = part.sink.write_all(chunk.as_bytes()) {
            self.abort();
            return Err(WriteError::Io { path, source });
        }
        if part.statements >= self.cfg.max_statements_per_part {
            self.close_part()?;
        }
        Ok(())
    }

    fn close_part(&mut self) -> Result<(), WriteError> {
        let Some(mut part) = self.current.take() else { return Ok(()) };
        if part.open_graph.is_some() {
            if let Err(source) = part.sink.write_all(b"}\n") {
                let _ = fs::remove_file(&part.path);
                return Err(WriteError::Io { path: part.path, source });
            }
        }
        if let Err(source) = part.sink.finish() {
            let _ = fs::remove_file(&part.path);
            return Err(WriteError::Io { path: part.path, source });
        }
        self.finished.push(PartInfo { path: part.path, statements: part.statements });
        self.seq += 1;
        Ok(())
    }

    fn abort(&mut self) {
        if let Some(part) = self.current.take() {
            let _ = fs::remove_file(&part.path);
        }
    }

    pub fn finish(mut self) -> Result<Vec<PartInfo>, WriteError> {
        self.flush()?;
        self.close_part()?;
        Ok(self.finished)
    }
}

/// Writes one statement stream to part files in a single call.
pub fn write_parts<I>(
    stream: I,
    dir: &Path,
    kind_label: &str,
    format: Format,
    worker_id: usize,
    cfg: WriterConfig,
) -> Result<Vec<PartInfo>, WriteError>
where
    I: IntoIterator<Item = Quad>,
{
    let mut writer = PartWriter::new(dir, kind_label, format, worker_id, cfg);
    for quad in stream {
        writer.write(quad)?;
    }
    writer.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestPart {
    pub path: String,
    pub statements: u64,
}

/// Conversion run summary written next to the part files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub snapshot_root: String,
    pub config_digest: String,
    pub format: String,
    pub gzip: bool,
    /// The only field that changes between identical reruns.
    pub generated_at: String,
    pub entity_counts: BTreeMap<String, u64>,
    pub parts: Vec<ManifestPart>,
    pub triple_total: u64,
}

impl Manifest {
    pub fn consistent(&self) -> bool {
        self.parts.iter().map(|p| p.statements).sum::<u64>() == self.triple_total
    }
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf, WriteError> {
    assert!(manifest.consistent(), "manifest totals out of sync");
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, body).map_err(|source| WriteError::Io { path: path.clone(), source })?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, WriteError> {
    let body = fs::read_to_string(path).map_err(|source| WriteError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&body).map_err(|e| WriteError::Io {
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}

fn qname_or_iriref(iri: &str, table: &[(&str, &str)]) -> String {
    for (prefix, ns) in table {
        if let Some(local) = iri.strip_prefix(ns) {
            let ok = !local.is_empty()
                && local.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
                && !local.starts_with('-');
            if ok {
                return format!("{prefix}:{local}");
            }
        }
    }
    format!("<{iri}>")
}

/// Renders triples as a prefixed Turtle document. Prefix declarations cover
/// the fixed namespace table plus any extras actually used.
pub fn turtle_document(triples: &[Triple], extra_prefixes: &[(&str, &str)]) -> String {
    let mut table: Vec<(&str, &str)> = vocab::NAMESPACES.to_vec();
    table.extend_from_slice(extra_prefixes);

    let mut used: Vec<usize> = Vec::new();
    let mark = |iri: &str, used: &mut Vec<usize>| {
        for (i, (_, ns)) in table.iter().enumerate() {
            if iri.strip_prefix(ns).is_some_and(|local| {
                !local.is_empty()
                    && local.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
                    && !local.starts_with('-')
            }) {
                if !used.contains(&i) {
                    used.push(i);
                }
                return;
            }
        }
    };
    for t in triples {
        mark(t.subject.as_str(), &mut used);
        mark(t.predicate.as_str(), &mut used);
        match &t.object {
            Term::Iri(iri) => mark(iri.as_str(), &mut used),
            Term::Literal(lit) if !lit.is_xsd_string() && lit.language.is_none() => {
                mark(lit.datatype.as_str(), &mut used)
            }
            _ => {}
        }
    }
    used.sort_unstable();

    let mut out = String::new();
    for i in &used {
        let (prefix, ns) = table[*i];
        let _ = writeln!(out, "@prefix {prefix}: <{ns}> .");
    }
    if !used.is_empty() {
        out.push('\n');
    }
    for t in triples {
        out.push_str(&qname_or_iriref(t.subject.as_str(), &table));
        out.push(' ');
        out.push_str(&qname_or_iriref(t.predicate.as_str(), &table));
        out.push(' ');
        match &t.object {
            Term::Iri(iri) => out.push_str(&qname_or_iriref(iri.as_str(), &table)),
            Term::Literal(lit) => {
                out.push('"');
                out.push_str(&escape_literal(&lit.lexical));
                out.push('"');
                if let Some(tag) = &lit.language {
                    out.push('@');
                    out.push_str(tag);
                } else if !lit.is_xsd_string() {
                    out.push_str("^^");
                    out.push_str(&qname_or_iriref(lit.datatype.as_str(), &table));
                }
            }
        }
        out.push_str(" .\n");
    }
    out
}
