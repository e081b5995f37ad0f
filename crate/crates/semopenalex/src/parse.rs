//! Grammar-level reader for the three bulk formats.
//!
//! This is the inverse route of [`crate::serialize`], written against the
//! line grammars rather than against what the writer happens to emit, so
//! the pair catches each other's mistakes. The dialect is IRI-only: blank
//! nodes and prefixed names are rejected, matching what the pipeline
//! guarantees about its own output.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use thiserror::Error;

use crate::model::{Iri, Literal, Term, XSD_STRING};
use crate::serialize::Format;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedStatement {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
    pub graph: Option<Iri>,
    pub line: u64,
}

#[derive(Debug, Error)]
pub enum ParseIssue {
    /// One bad line; the reader keeps going.
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    /// Decompression or read failure; the reader stops.
    #[error("read failed near line {line}: {source}")]
    Io {
        line: u64,
        #[source]
        source: io::Error,
    },
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { rest: s }
    }

    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn at_end_or_comment(&self) -> bool {
        self.rest.is_empty() || self.rest.starts_with('#')
    }

    fn eat(&mut self, c: char) -> Result<(), String> {
        if let Some(r) = self.rest.strip_prefix(c) {
            self.rest = r;
            Ok(())
        } else {
            Err(format!("expected {:?} at {:?}", c, truncate(self.rest)))
        }
    }

    fn uchar(&mut self) -> Result<char, String> {
        // Called after the backslash; expects uXXXX or UXXXXXXXX.
        let (marker, len) = match self.rest.chars().next() {
            Some('u') => ('u', 4),
            Some('U') => ('U', 8),
            other => return Err(format!("bad escape \\{:?}", other)),
        };
        let hex = self
            .rest
            .get(1..1 + len)
            .filter(|h| h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| format!("bad \\{marker} escape"))?;
        let code = u32::from_str_radix(hex, 16).map_err(|e| e.to_string())?;
        let c = char::from_u32(code).ok_or_else(|| format!("invalid code point U+{code:X}"))?;
        self.rest = &self.rest[1 + len..];
        Ok(c)
    }

    fn iriref(&mut self) -> Result<Iri, String> {
        self.eat('<')?;
        let mut out = String::new();
        loop {
            let mut chars = self.rest.char_indices();
            match chars.next() {
                None => return Err("unterminated iri".into()),
                Some((i, '>')) => {
                    self.rest = &self.rest[i + 1..];
                    break;
                }
                Some((i, '\\')) => {
                    self.rest = &self.rest[i + 1..];
                    out.push(self.uchar()?);
                }
                Some((i, c)) => {
                    if c <= ' ' || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`') {
                        return Err(format!("forbidden character {c:?} in iri"));
                    }
                    self.rest = &self.rest[i + c.len_utf8()..];
                    out.push(c);
                }
            }
        }
        Iri::new(out).map_err(|e| e.to_string())
    }

    fn string_body(&mut self) -> Result<String, String> {
        self.eat('"')?;
        let mut out = String::new();
        loop {
            let mut chars = self.rest.char_indices();
            match chars.next() {
                None => return Err("unterminated string literal".into()),
                Some((i, '"')) => {
                    self.rest = &self.rest[i + 1..];
                    return Ok(out);
                }
                Some((_, c)) if c == '\n' || c == '\r' => {
                    return Err("raw line break in string literal".into());
                }
                Some((i, '\\')) => {
                    self.rest = &self.rest[i + 1..];
                    let c = self.rest.chars().next().ok_or("dangling backslash")?;
                    match c {
                        't' => out.push('\t'),
                        'b' => out.push('\u{8}'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        'f' => out.push('\u{c}'),
                        '"' => out.push('"'),
                        '\'' => out.push('\''),
                        '\\' => out.push('\\'),
                        'u' | 'U' => {
                            out.push(self.uchar()?);
                            continue;
                        }
                        other => return Err(format!("unknown escape \\{other}")),
                    }
                    self.rest = &self.rest[1..];
                }
                Some((i, c)) => {
                    self.rest = &self.rest[i + c.len_utf8()..];
                    out.push(c);
                }
            }
        }
    }

    fn langtag(&mut self) -> Result<String, String> {
        self.eat('@')?;
        let bytes = self.rest.as_bytes();
        let mut end = 0;
        while end < bytes.len() && bytes[end].is_ascii_alphabetic() {
            end += 1;
        }
        if end == 0 {
            return Err("empty language tag".into());
        }
        while end < bytes.len() && bytes[end] == b'-' {
            let start = end + 1;
            let mut sub = start;
            while sub < bytes.len() && bytes[sub].is_ascii_alphanumeric() {
                sub += 1;
            }
            if sub == start {
                return Err("empty language subtag".into());
            }
            end = sub;
        }
        let tag = self.rest[..end].to_string();
        self.rest = &self.rest[end..];
        Ok(tag)
    }

    fn literal(&mut self) -> Result<Literal, String> {
        let lexical = self.string_body()?;
        if self.rest.starts_with('@') {
            let tag = self.langtag()?;
            Ok(Literal::lang(lexical, tag))
        } else if let Some(r) = self.rest.strip_prefix("^^") {
            self.rest = r;
            let dt = self.iriref()?;
            if dt.as_str() == crate::model::RDF_LANG_STRING {
                return Err("langString datatype requires a language tag form".into());
            }
            Ok(Literal::typed(lexical, dt))
        } else {
            Ok(Literal::typed(lexical, Iri::new(XSD_STRING).unwrap()))
        }
    }

    fn term(&mut self) -> Result<Term, String> {
        match self.rest.chars().next() {
            Some('<') => Ok(Term::Iri(self.iriref()?)),
            Some('"') => Ok(Term::Literal(self.literal()?)),
            Some('_') => Err("blank nodes are not part of this dialect".into()),
            other => Err(format!("expected iri or literal, found {other:?}")),
        }
    }
}

fn truncate(s: &str) -> &str {
    let end = s.char_indices().nth(20).map(|(i, _)| i).unwrap_or(s.len());
    &s[..end]
}

/// Line-driven statement parser. TriG input tracks the open graph block;
/// the other formats are purely line-local.
pub struct StatementParser {
    format: Format,
    open_graph: Option<Iri>,
}

impl StatementParser {
    pub fn new(format: Format) -> Self {
        StatementParser { format, open_graph: None }
    }

    /// Parses one line. `Ok(None)` covers blanks, comments and TriG block
    /// delimiters.
    pub fn line(&mut self, text: &str) -> Result<Option<(Iri, Iri, Term, Option<Iri>)>, String> {
        let mut cur = Cursor::new(text);
        cur.skip_ws();
        if cur.at_end_or_comment() {
            return Ok(None);
        }
        if self.format == Format::TriG {
            if self.open_graph.is_none() {
                let graph = cur.iriref()?;
                cur.skip_ws();
                cur.eat('{')?;
                cur.skip_ws();
                if !cur.at_end_or_comment() {
                    return Err(format!("unexpected content after '{{': {:?}", truncate(cur.rest)));
                }
                self.open_graph = Some(graph);
                return Ok(None);
            }
            if cur.rest.starts_with('}') {
                cur.eat('}')?;
                cur.skip_ws();
                if !cur.at_end_or_comment() {
                    return Err(format!("unexpected content after '}}': {:?}", truncate(cur.rest)));
                }
                self.open_graph = None;
                return Ok(None);
            }
        }

        let subject = cur.iriref().map_err(|e| format!("subject: {e}"))?;
        cur.skip_ws();
        let predicate = cur.iriref().map_err(|e| format!("predicate: {e}"))?;
        cur.skip_ws();
        let object = cur.term().map_err(|e| format!("object: {e}"))?;
        cur.skip_ws();

        let graph = match self.format {
            Format::NQuads if cur.rest.starts_with('<') => {
                let g = cur.iriref().map_err(|e| format!("graph: {e}"))?;
                cur.skip_ws();
                Some(g)
            }
            Format::TriG => self.open_graph.clone(),
            _ => None,
        };

        cur.eat('.')?;
        cur.skip_ws();
        if !cur.at_end_or_comment() {
            return Err(format!("trailing content {:?}", truncate(cur.rest)));
        }
        Ok(Some((subject, predicate, object, graph)))
    }

    /// End-of-input check: TriG must not leave a block open.
    pub fn finish(&self) -> Result<(), String> {
        if self.open_graph.is_some() {
            Err("unclosed graph block at end of input".into())
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum FileOpenError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot infer format from file name {path}")]
    UnknownFormat { path: PathBuf },
}

/// Streaming reader over one part file, transparently gunzipping by file
/// extension. Yields statements and recoverable per-line issues; a read
/// failure (e.g. a truncated archive) ends iteration after one `Io` item.
pub struct StatementFileReader {
    pub path: PathBuf,
    pub format: Format,
    lines: io::Lines<BufReader<Box<dyn Read>>>,
    parser: StatementParser,
    line_no: u64,
    done: bool,
    finished_check: bool,
}

pub fn open_statement_file(path: &Path) -> Result<StatementFileReader, FileOpenError> {
    let format = Format::from_path(path).ok_or_else(|| FileOpenError::UnknownFormat { path: path.to_path_buf() })?;
    let file = File::open(path).map_err(|source| FileOpenError::Open { path: path.to_path_buf(), source })?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let reader: Box<dyn Read> = if gz { Box::new(GzDecoder::new(file)) } else { Box::new(file) };
    Ok(StatementFileReader {
        path: path.to_path_buf(),
        format,
        lines: BufReader::new(reader).lines(),
        parser: StatementParser::new(format),
        line_no: 0,
        done: false,
        finished_check: false,
    })
}

impl Iterator for StatementFileReader {
    type Item = Result<ParsedStatement, ParseIssue>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.lines.next() {
                None => {
                    self.done = true;
                    if !self.finished_check {
                        self.finished_check = true;
                        if let Err(message) = self.parser.finish() {
                            return Some(Err(ParseIssue::Line { line: self.line_no, message }));
                        }
                    }
                    return None;
                }
                Some(Err(source)) => {
                    self.done = true;
                    return Some(Err(ParseIssue::Io { line: self.line_no + 1, source }));
                }
                Some(Ok(text)) => {
                    self.line_no += 1;
                    match self.parser.line(&text) {
                        Ok(None) => continue,
                        Ok(Some((subject, predicate, object, graph))) => {
                            return Some(Ok(ParsedStatement {
                                subject,
                                predicate,
                                object,
                                graph,
                                line: self.line_no,
                            }));
                        }
                        Err(message) => {
                            return Some(Err(ParseIssue::Line { line: self.line_no, message }));
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityId, EntityKind, Quad};
    use crate::serialize::{statement_line, write_parts, WriterConfig};
    use crate::vocab;
    use proptest::prelude::*;

    fn parse_one(format: Format, line: &str) -> Result<Option<(Iri, Iri, Term, Option<Iri>)>, String> {
        StatementParser::new(format).line(line)
    }

    #[test]
    fn parses_plain_lines() {
        let got = parse_one(
            Format::NTriples,
            "<https://semopenalex.org/work/W1> <http://purl.org/dc/terms/title> \"T\\\"x\\\"\"^^<http://www.w3.org/2001/XMLSchema#string> .",
        )
        .unwrap()
        .unwrap();
        assert_eq!(got.0.as_str(), "https://semopenalex.org/work/W1");
        assert_eq!(got.2.as_literal().unwrap().lexical, "T\"x\"");
        assert_eq!(got.3, None);
    }

    #[test]
    fn parses_quads_and_default_graph() {
        let line = "<http://e/s> <http://e/p> <http://e/o> <http://e/g> .";
        let got = parse_one(Format::NQuads, line).unwrap().unwrap();
        assert_eq!(got.3.unwrap().as_str(), "http://e/g");
        let got = parse_one(Format::NQuads, "<http://e/s> <http://e/p> \"x\" .").unwrap().unwrap();
        assert_eq!(got.3, None);
    }

    #[test]
    fn rejects_bad_lines() {
        for (format, line) in [
            (Format::NTriples, "<http://e/s> <http://e/p> <http://e/o>"),
            (Format::NTriples, "<http://e/s> <http://e/p> ."),
            (Format::NTriples, "<http://e/s> <http://e/p> _:b0 ."),
            (Format::NTriples, "<http://e/s> <http://e/p> \"unterminated ."),
            (Format::NTriples, "<http://e/s> <http://e/p> \"x\"^^<relative> ."),
            (Format::NTriples, "<http://e/s> <http://e/p> <http://e/o> <http://e/g> ."),
            (Format::NTriples, "<http://e/ s> <http://e/p> <http://e/o> ."),
            (Format::NTriples, "<http://e/s> <http://e/p> \"a\nb\" ."),
            (Format::NTriples, "<http://e/s> <http://e/p> \"x\"@ ."),
            (Format::NTriples, "<http://e/s> <http://e/p> \"x\" . extra"),
        ] {
            assert!(parse_one(format, line).is_err(), "should reject: {line}");
        }
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let mut p = StatementParser::new(Format::NTriples);
        assert_eq!(p.line("").unwrap(), None);
        assert_eq!(p.line("   # note").unwrap(), None);
        assert!(p.line("<http://e/s> <http://e/p> \"x\" . # tail").unwrap().is_some());
    }

    #[test]
    fn trig_block_tracking() {
        let mut p = StatementParser::new(Format::TriG);
        assert_eq!(p.line("<http://e/g> {").unwrap(), None);
        let got = p.line("<http://e/s> <http://e/p> \"plain\" .").unwrap().unwrap();
        assert_eq!(got.3.as_ref().unwrap().as_str(), "http://e/g");
        // A bare literal reads back as xsd:string.
        assert!(got.2.as_literal().unwrap().is_xsd_string());
        assert_eq!(p.line("}").unwrap(), None);
        assert!(p.finish().is_ok());

        let mut p = StatementParser::new(Format::TriG);
        p.line("<http://e/g> {").unwrap();
        assert!(p.finish().is_err());
    }

    #[test]
    fn uchar_escapes_decode() {
        let got = parse_one(Format::NTriples, "<http://e/s> <http://e/p> \"a\\u0041\\U0001F393b\" .")
            .unwrap()
            .unwrap();
        assert_eq!(got.2.as_literal().unwrap().lexical, "aA🎓b");
        assert!(parse_one(Format::NTriples, "<http://e/s> <http://e/p> \"\\uD800\" .").is_err());
    }

    #[test]
    fn reads_gzipped_part_files_back() {
        let dir = tempfile::tempdir().unwrap();
        let quads: Vec<Quad> = (0..300u64)
            .map(|i| {
                Quad::new(
                    EntityId::new(EntityKind::Work, i).iri(),
                    vocab::dcterms_title(),
                    crate::model::Literal::string(format!("T{i} \"q\" \\ \n x")),
                    vocab::graph_iri(EntityKind::Work),
                )
            })
            .collect();
        for format in [Format::NTriples, Format::NQuads, Format::TriG] {
            let sub = dir.path().join(format.extension());
            std::fs::create_dir(&sub).unwrap();
            let cfg = WriterConfig { buffer_capacity: 64, max_statements_per_part: 10_000, gzip: true };
            let parts = write_parts(quads.iter().cloned(), &sub, "works", format, 0, cfg).unwrap();
            let mut back = Vec::new();
            for part in &parts {
                for item in open_statement_file(&part.path).unwrap() {
                    let st = item.unwrap();
                    back.push((st.subject, st.predicate, st.object));
                }
            }
            let want: Vec<_> =
                quads.iter().map(|q| (q.subject.clone(), q.predicate.clone(), q.object.clone())).collect();
            assert_eq!(back, want, "format {format}");
        }
    }

    #[test]
    fn truncated_gzip_reports_io_and_stops() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = WriterConfig { buffer_capacity: 64, max_statements_per_part: 10_000, gzip: true };
        let quads: Vec<Quad> = (0..2000u64)
            .map(|i| {
                Quad::new(
                    EntityId::new(EntityKind::Work, i).iri(),
                    vocab::soa_cited_by_count(),
                    crate::model::Literal::typed(i.to_string(), vocab::xsd_integer()),
                    vocab::graph_iri(EntityKind::Work),
                )
            })
            .collect();
        let parts = write_parts(quads, dir.path(), "works", Format::NQuads, 0, cfg).unwrap();
        let bytes = std::fs::read(&parts[0].path).unwrap();
        let cut = dir.path().join("works_part_9_0.nq.gz");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();

        let mut io_errors = 0;
        let mut rows = 0;
        for item in open_statement_file(&cut).unwrap() {
            match item {
                Ok(_) => rows += 1,
                Err(ParseIssue::Io { .. }) => io_errors += 1,
                Err(other) => panic!("unexpected {other}"),
            }
        }
        assert_eq!(io_errors, 1);
        assert!(rows < 2000);
    }

    fn arb_lit_text() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[\\\\\"a-zA-Z0-9 \t\u{e0}-\u{ff}\u{4e00}-\u{4e10}\n\r]{0,40}").unwrap()
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![
            (0u64..1000).prop_map(|n| Term::Iri(EntityId::new(EntityKind::Author, n).iri())),
            arb_lit_text().prop_map(|s| Term::Literal(crate::model::Literal::string(s))),
            (arb_lit_text(), prop::sample::select(vec!["integer", "date", "gYear", "decimal"]))
                .prop_map(|(s, dt)| Term::Literal(crate::model::Literal::typed(
                    s,
                    vocab::expand("xsd", dt).unwrap()
                ))),
            (arb_lit_text(), "[a-z]{2}(-[a-zA-Z0-9]{1,4}){0,2}").prop_map(|(s, tag)| {
                Term::Literal(crate::model::Literal::lang(s, tag))
            }),
        ]
    }

    proptest! {
        // Serializer and parser are written against the grammar from
        // opposite sides; anything the writer emits must read back equal.
        #[test]
        fn statement_roundtrip(
            s in 0u64..10_000,
            p in prop::sample::select(vec!["title", "abstract", "license"]),
            object in arb_term(),
            format in prop::sample::select(vec![Format::NTriples, Format::NQuads]),
        ) {
            let quad = Quad::new(
                EntityId::new(EntityKind::Work, s).iri(),
                vocab::expand("dcterms", p).unwrap(),
                object,
                vocab::graph_iri(EntityKind::Work),
            );
            let line = statement_line(&quad, format);
            let got = parse_one(format, &line).unwrap().unwrap();
            prop_assert_eq!(got.0, quad.subject);
            prop_assert_eq!(got.1, quad.predicate);
            prop_assert_eq!(got.2, quad.object);
            if format == Format::NQuads {
                prop_assert_eq!(got.3.unwrap(), quad.graph);
            }
        }

        #[test]
        fn trig_member_roundtrip(object in arb_term()) {
            let quad = Quad::new(
                EntityId::new(EntityKind::Work, 7).iri(),
                vocab::dcterms_title(),
                object,
                vocab::graph_iri(EntityKind::Work),
            );
            let mut p = StatementParser::new(Format::TriG);
            p.line("<https://semopenalex.org/graph/works> {").unwrap();
            let got = p.line(&statement_line(&quad, Format::TriG)).unwrap().unwrap();
            prop_assert_eq!(got.2, quad.object);
            prop_assert_eq!(got.3.unwrap(), quad.graph);
        }
    }
}
