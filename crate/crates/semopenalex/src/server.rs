//! Resolvable entity URIs over HTTP.
//!
//! Every request path is rebased onto the configured base IRI and answered
//! with the entity's description from the index: its own statements plus
//! the auxiliary nodes hanging off it. Responses come back 200 directly
//! rather than through a 303 redirect hop.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::model::{Iri, Triple};
use crate::serialize::{ntriples_line, turtle_line};
use crate::store::TripleIndex;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub base_iri: String,
    pub html_fallback: bool,
}

impl Default for ServerConfig {
    fn default() -> ServerConfig {
        ServerConfig {
            bind: "127.0.0.1:7878".to_string(),
            base_iri: "https://semopenalex.org".to_string(),
            html_fallback: false,
        }
    }
}

/// Body serializations the server can negotiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyFormat {
    Turtle,
    NTriples,
    N3,
    TriG,
    Html,
}

impl BodyFormat {
    pub fn media_type(self) -> &'static str {
        match self {
            BodyFormat::Turtle => "text/turtle",
            BodyFormat::NTriples => "application/n-triples",
            BodyFormat::N3 => "text/n3",
            BodyFormat::TriG => "application/trig",
            BodyFormat::Html => "text/html",
        }
    }
}

/// Preference order used to break quality ties and resolve wildcards.
const SUPPORTED: [BodyFormat; 5] = [
    BodyFormat::Turtle,
    BodyFormat::NTriples,
    BodyFormat::N3,
    BodyFormat::TriG,
    BodyFormat::Html,
];

fn quality_for(format: BodyFormat, accept: &str) -> Option<f32> {
    let (kind, subtype) = format.media_type().split_once('/').unwrap();
    let mut best: Option<(u8, f32)> = None;
    for entry in accept.split(',') {
        let mut parts = entry.split(';');
        let range = parts.next().unwrap_or("").trim();
        let mut q = 1.0f32;
        for param in parts {
            if let Some((key, value)) = param.split_once('=') {
                if key.trim().eq_ignore_ascii_case("q") {
                    q = value.trim().parse().unwrap_or(0.0);
                }
            }
        }
        let specificity = match range.split_once('/') {
            Some((rk, rs)) if rk.eq_ignore_ascii_case(kind) && rs.eq_ignore_ascii_case(subtype) => 2,
            Some((rk, "*")) if rk.eq_ignore_ascii_case(kind) => 1,
            Some(("*", "*")) => 0,
            _ => continue,
        };
        if best.map_or(true, |(s, _)| specificity > s) {
            best = Some((specificity, q));
        }
    }
    best.map(|(_, q)| q).filter(|q| *q > 0.0)
}

/// Picks the response format for an Accept header, if any is acceptable.
pub fn negotiate(accept: Option<&str>, html_fallback: bool) -> Option<BodyFormat> {
    let Some(accept) = accept else { return Some(BodyFormat::Turtle) };
    if accept.trim().is_empty() {
        return Some(BodyFormat::Turtle);
    }
    let mut winner: Option<(f32, BodyFormat)> = None;
    for format in SUPPORTED {
        if format == BodyFormat::Html && !html_fallback {
            continue;
        }
        if let Some(q) = quality_for(format, accept) {
            if winner.map_or(true, |(best, _)| q > best) {
                winner = Some((q, format));
            }
        }
    }
    winner.map(|(_, f)| f)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl HttpResponse {
    fn plain(status: u16, text: &str) -> HttpResponse {
        HttpResponse { status, content_type: "text/plain", body: text.as_bytes().to_vec() }
    }

    fn reason(&self) -> &'static str {
        match self.status {
            200 => "OK",
            400 => "Bad Request",
            404 => "Not Found",
            405 => "Method Not Allowed",
            406 => "Not Acceptable",
            _ => "Internal Server Error",
        }
    }
}

fn resolve_path(base_iri: &str, path: &str) -> Option<Iri> {
    let rest = path.strip_prefix('/')?;
    if rest.is_empty() {
        return None;
    }
    let segments: Vec<&str> = rest.split('/').collect();
    if segments.iter().any(|s| {
        s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    }) {
        return None;
    }
    Iri::new(format!("{}/{}", base_iri.trim_end_matches('/'), rest)).ok()
}

fn render_statements(statements: &[(Triple, Option<Iri>)], format: BodyFormat) -> Vec<u8> {
    let mut out = String::new();
    match format {
        BodyFormat::Turtle | BodyFormat::N3 => {
            for (triple, _) in statements {
                out.push_str(&turtle_line(triple));
                out.push('\n');
            }
        }
        BodyFormat::NTriples => {
            for (triple, _) in statements {
                out.push_str(&ntriples_line(triple));
                out.push('\n');
            }
        }
        BodyFormat::TriG => {
            let mut groups: Vec<(Option<&Iri>, Vec<&Triple>)> = Vec::new();
            for (triple, graph) in statements {
                match groups.iter_mut().find(|(g, _)| *g == graph.as_ref()) {
                    Some((_, list)) => list.push(triple),
                    None => groups.push((graph.as_ref(), vec![triple])),
                }
            }
            groups.sort_by_key(|(g, _)| g.map(|iri| iri.as_str().to_string()));
            for (graph, triples) in groups {
                if let Some(graph) = graph {
                    out.push_str(&format!("<{}> {{\n", graph.as_str()));
                }
                for triple in triples {
                    out.push_str(&turtle_line(triple));
                    out.push('\n');
                }
                if graph.is_some() {
                    out.push_str("}\n");
                }
            }
        }
        BodyFormat::Html => {
            out.push_str("<pre>\n");
            for (triple, _) in statements {
                let line = turtle_line(triple);
                out.push_str(&line.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;"));
                out.push('\n');
            }
            out.push_str("</pre>\n");
        }
    }
    out.into_bytes()
}

/// Answers one GET. Pure apart from reading the index, so the whole
/// request surface is testable without sockets.
pub fn handle_get(
    index: &TripleIndex,
    cfg: &ServerConfig,
    path: &str,
    accept: Option<&str>,
) -> HttpResponse {
    if path == "/healthz" {
        return HttpResponse::plain(200, &format!("{}\n", index.len()));
    }
    let Some(iri) = resolve_path(&cfg.base_iri, path) else {
        return HttpResponse::plain(400, "malformed resource path\n");
    };
    let Some(format) = negotiate(accept, cfg.html_fallback) else {
        return HttpResponse::plain(406, "supported: text/turtle, application/n-triples, text/n3, application/trig\n");
    };
    let description = index.describe(&iri);
    if !description.known && description.statements.is_empty() {
        return HttpResponse::plain(404, &format!("no statements about <{}>\n", iri.as_str()));
    }
    HttpResponse {
        status: 200,
        content_type: format.media_type(),
        body: render_statements(&description.statements, format),
    }
}

pub struct Server {
    listener: TcpListener,
    index: Arc<TripleIndex>,
    cfg: ServerConfig,
    stop: Arc<AtomicBool>,
}

#[derive(Clone)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the accept loop; in-flight responses finish first.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

impl Server {
    pub fn bind(cfg: ServerConfig, index: Arc<TripleIndex>) -> std::io::Result<Server> {
        let listener = TcpListener::bind(&cfg.bind)?;
        Ok(Server { listener, index, cfg, stop: Arc::new(AtomicBool::new(false)) })
    }

    pub fn handle(&self) -> std::io::Result<ServerHandle> {
        Ok(ServerHandle { addr: self.listener.local_addr()?, stop: Arc::clone(&self.stop) })
    }

    pub fn run(self) -> std::io::Result<()> {
        log::info!("listening on {}", self.listener.local_addr()?);
        for stream in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(stream) => stream,
                Err(err) => {
                    log::warn!("accept failed: {err}");
                    continue;
                }
            };
            let index = Arc::clone(&self.index);
            let cfg = self.cfg.clone();
            std::thread::spawn(move || {
                if let Err(err) = serve_connection(stream, &index, &cfg) {
                    log::debug!("connection dropped: {err}");
                }
            });
        }
        Ok(())
    }
}

fn serve_connection(
    stream: TcpStream,
    index: &TripleIndex,
    cfg: &ServerConfig,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut accept: Option<String> = None;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header.trim_end().is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.trim().eq_ignore_ascii_case("accept") {
                accept = Some(value.trim().to_string());
            }
        }
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("");
    let target = parts.next().unwrap_or("");
    let response = if method != "GET" {
        HttpResponse::plain(405, "only GET is served\n")
    } else {
        handle_get(index, cfg, target, accept.as_deref())
    };
    write_response(stream, &response)
}

fn write_response(mut stream: TcpStream, response: &HttpResponse) -> std::io::Result<()> {
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n{}\r\n",
        response.status,
        response.reason(),
        response.content_type,
        response.body.len(),
        if response.status == 405 { "Allow: GET\r\n" } else { "" },
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(&response.body)?;
    stream.flush()
}

/// Sends one GET over a fresh connection and returns (status, content type,
/// body). Used by tests and the command line smoke path.
pub fn fetch(addr: SocketAddr, path: &str, accept: Option<&str>) -> std::io::Result<(u16, String, Vec<u8>)> {
    let mut stream = TcpStream::connect(addr)?;
    let accept_header = accept.map(|a| format!("Accept: {a}\r\n")).unwrap_or_default();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\n{accept_header}Connection: close\r\n\r\n")?;
    stream.flush()?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw)?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap_or(raw.len());
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let body = raw[split + 4.min(raw.len() - split)..].to_vec();
    let status: u16 = head
        .lines()
        .next()
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let content_type = head
        .lines()
        .find_map(|l| l.strip_prefix("Content-Type: "))
        .unwrap_or("")
        .to_string();
    Ok((status, content_type, body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityKind, Literal, Term};
    use crate::parse::StatementParser;
    use crate::serialize::Format;
    use crate::vocab;

    fn fixture() -> TripleIndex {
        let mut index = TripleIndex::new();
        let a5 = Iri::new("https://semopenalex.org/author/A5").unwrap();
        let counts = Iri::new("https://semopenalex.org/countsbyyear/A52020").unwrap();
        let graph = vocab::graph_iri(EntityKind::Author);
        let name = Term::Literal(Literal::string("Ada Example"));
        index.insert(&a5, &vocab::rdf_type(), &Term::Iri(vocab::class_author()), Some(&graph));
        index.insert(&a5, &vocab::foaf_name(), &name, Some(&graph));
        index.insert(
            &a5,
            &vocab::soa_counts_by_year(),
            &Term::Iri(counts.clone()),
            Some(&graph),
        );
        index.insert(
            &a5,
            &vocab::soa_cited_by_count(),
            &Term::Literal(Literal::typed("7", vocab::xsd_integer())),
            Some(&graph),
        );
        index.insert(&counts, &vocab::rdf_type(), &Term::Iri(vocab::class_counts_by_year()), Some(&graph));
        index.insert(
            &counts,
            &vocab::soa_year(),
            &Term::Literal(Literal::typed("2020", vocab::xsd_integer())),
            Some(&graph),
        );
        index.insert(
            &counts,
            &vocab::soa_works_count(),
            &Term::Literal(Literal::typed("3", vocab::xsd_integer())),
            Some(&graph),
        );
        index.finalize();
        index
    }

    #[test]
    fn negotiation_covers_wildcards_and_quality() {
        assert_eq!(negotiate(None, false), Some(BodyFormat::Turtle));
        assert_eq!(negotiate(Some("*/*"), false), Some(BodyFormat::Turtle));
        assert_eq!(negotiate(Some("text/*"), false), Some(BodyFormat::Turtle));
        assert_eq!(negotiate(Some("text/n3"), false), Some(BodyFormat::N3));
        assert_eq!(negotiate(Some("application/trig"), false), Some(BodyFormat::TriG));
        assert_eq!(
            negotiate(Some("application/n-triples;q=0.9, text/turtle;q=0.4"), false),
            Some(BodyFormat::NTriples)
        );
        assert_eq!(negotiate(Some("text/turtle;q=0"), false), None);
        assert_eq!(negotiate(Some("image/png"), false), None);
        assert_eq!(negotiate(Some("text/html"), false), None);
        assert_eq!(negotiate(Some("text/html"), true), Some(BodyFormat::Html));
        assert_eq!(
            negotiate(Some("text/*;q=0.2, application/n-triples;q=0.1"), false),
            Some(BodyFormat::Turtle)
        );
    }

    #[test]
    fn specific_range_overrides_wildcard_quality() {
        assert_eq!(
            negotiate(Some("*/*;q=0.9, text/turtle;q=0.1, application/trig;q=0.5"), false),
            Some(BodyFormat::NTriples),
            "n-triples rides the wildcard at 0.9 while turtle is pinned low"
        );
    }

    #[test]
    fn describe_responses_cover_all_media_types() {
        let index = fixture();
        let cfg = ServerConfig::default();
        for (accept, content_type) in [
            (None, "text/turtle"),
            (Some("text/turtle"), "text/turtle"),
            (Some("application/n-triples"), "application/n-triples"),
            (Some("text/n3"), "text/n3"),
            (Some("application/trig"), "application/trig"),
        ] {
            let response = handle_get(&index, &cfg, "/author/A5", accept);
            assert_eq!(response.status, 200);
            assert_eq!(response.content_type, content_type);
            let body = String::from_utf8(response.body).unwrap();
            assert_eq!(body.matches(" .\n").count(), 7, "{content_type}: {body}");
            assert!(body.contains("Ada Example"));
        }
    }

    #[test]
    fn body_statements_parse_back_to_the_description() {
        let index = fixture();
        let cfg = ServerConfig::default();
        let response = handle_get(&index, &cfg, "/author/A5", Some("application/trig"));
        let mut parser = StatementParser::new(Format::TriG);
        let body = String::from_utf8(response.body).unwrap();
        let mut parsed = Vec::new();
        for line in body.lines() {
            if let Some((subject, predicate, object, _)) = parser.line(line).unwrap() {
                parsed.push((subject, predicate, object));
            }
        }
        let iri = Iri::new("https://semopenalex.org/author/A5").unwrap();
        let description = index.describe(&iri);
        let expected: Vec<_> = description
            .statements
            .iter()
            .map(|(t, _)| (t.subject.clone(), t.predicate.clone(), t.object.clone()))
            .collect();
        let mut parsed_sorted = parsed.clone();
        parsed_sorted.sort();
        let mut expected_sorted = expected.clone();
        expected_sorted.sort();
        assert_eq!(parsed_sorted, expected_sorted);
    }

    #[test]
    fn missing_entity_is_404_but_object_only_iri_is_200() {
        let index = fixture();
        let cfg = ServerConfig::default();
        let absent = handle_get(&index, &cfg, "/work/W999999999999", None);
        assert_eq!(absent.status, 404);
        let class_only = handle_get(&index, &cfg, "/author/A6", None);
        assert_eq!(class_only.status, 404, "not in dictionary at all");
    }

    #[test]
    fn malformed_paths_are_400() {
        let index = fixture();
        let cfg = ServerConfig::default();
        for path in ["/", "//", "/author//A5", "/a b", "/author/A5%"] {
            assert_eq!(handle_get(&index, &cfg, path, None).status, 400, "{path}");
        }
    }

    #[test]
    fn unacceptable_accept_is_406_unless_html_fallback() {
        let index = fixture();
        let mut cfg = ServerConfig::default();
        assert_eq!(handle_get(&index, &cfg, "/author/A5", Some("image/png")).status, 406);
        assert_eq!(handle_get(&index, &cfg, "/author/A5", Some("text/html")).status, 406);
        cfg.html_fallback = true;
        let response = handle_get(&index, &cfg, "/author/A5", Some("text/html"));
        assert_eq!(response.status, 200);
        assert_eq!(response.content_type, "text/html");
        let body = String::from_utf8(response.body).unwrap();
        assert!(body.contains("&lt;https://semopenalex.org/author/A5&gt;"));
    }

    #[test]
    fn healthz_reports_statement_count() {
        let index = fixture();
        let cfg = ServerConfig::default();
        let response = handle_get(&index, &cfg, "/healthz", None);
        assert_eq!(response.status, 200);
        assert_eq!(String::from_utf8(response.body).unwrap(), "7\n");
    }

    #[test]
    fn repeated_requests_are_byte_identical() {
        let index = fixture();
        let cfg = ServerConfig::default();
        let a = handle_get(&index, &cfg, "/author/A5", Some("text/turtle"));
        let b = handle_get(&index, &cfg, "/author/A5", Some("text/turtle"));
        assert_eq!(a, b);
    }

    #[test]
    fn socket_round_trip_serves_and_stops() {
        let mut cfg = ServerConfig::default();
        cfg.bind = "127.0.0.1:0".to_string();
        let server = Server::bind(cfg, Arc::new(fixture())).unwrap();
        let handle = server.handle().unwrap();
        let addr = handle.addr();
        let join = std::thread::spawn(move || server.run());

        let (status, content_type, body) = fetch(addr, "/author/A5", Some("text/n3")).unwrap();
        assert_eq!(status, 200);
        assert_eq!(content_type, "text/n3");
        assert_eq!(String::from_utf8(body).unwrap().matches(" .\n").count(), 7);

        let (status, _, _) = fetch(addr, "/author/A9999", None).unwrap();
        assert_eq!(status, 404);
        let (status, _, body) = fetch(addr, "/healthz", None).unwrap();
        assert_eq!(status, 200);
        assert_eq!(String::from_utf8(body).unwrap(), "7\n");

        handle.stop();
        join.join().unwrap().unwrap();
    }
}
