//! Command line wiring for the whole toolkit.
//!
//! Data goes to standard output or files; logging goes to standard error.
//! Exit codes: 0 success, 1 usage, 2 input problems, 3 output problems.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::embed::{self, ModelKind, TrainConfig};
use crate::model::EntityKind;
use crate::pipeline::{self, ConvertConfig, ConvertError};
use crate::samplegen::{self, GenConfig};
use crate::serialize::{term_text, Format};
use crate::server::{Server, ServerConfig};
use crate::store::{PTerm, Pattern, TripleIndex};
use crate::vocab;

#[derive(Parser)]
#[command(
    name = "semopenalex",
    version,
    about = "Converts OpenAlex snapshots to RDF and works with the result",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a snapshot into RDF part files plus manifest
    Convert(ConvertArgs),
    /// Re-parse a conversion output and check it against its manifest
    Validate(ValidateArgs),
    /// Load a conversion output and print corpus statistics
    Stats(StatsArgs),
    /// Run canned or ad-hoc queries against a conversion output
    Query(QueryArgs),
    /// Serve resolvable entity URIs over HTTP
    Serve(ServeArgs),
    /// Train and evaluate link-prediction embeddings
    Embed(EmbedArgs),
    /// Generate a synthetic snapshot with a ground-truth sidecar
    Samplegen(SamplegenArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// Snapshot root directory (the one holding data/)
    #[arg(long, env = "SOA_SNAPSHOT")]
    snapshot: PathBuf,
    /// Output directory for part files and manifest
    #[arg(long, env = "SOA_OUT")]
    out: PathBuf,
    /// Serialization: nt, nq or trig
    #[arg(long, env = "SOA_FORMAT", default_value = "trig")]
    format: Format,
    /// Gzip part files
    #[arg(long, env = "SOA_GZIP", default_value_t = true, action = ArgAction::Set)]
    gzip: bool,
    /// Worker threads
    #[arg(long, env = "SOA_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Statements buffered per writer before flushing
    #[arg(long, env = "SOA_BUFFER", default_value_t = 10_000)]
    buffer: usize,
    /// Statements per part file before rotation
    #[arg(long, env = "SOA_ROTATE", default_value_t = 2_000_000)]
    rotate: u64,
    /// Only convert these kinds (plural names, comma separated)
    #[arg(long, env = "SOA_KINDS", value_delimiter = ',')]
    kinds: Vec<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Conversion output directory holding manifest.json
    #[arg(long, env = "SOA_OUT")]
    dir: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Conversion output directory holding manifest.json
    #[arg(long, env = "SOA_OUT")]
    dir: PathBuf,
    /// Emit JSON instead of the text table
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[command(subcommand)]
    which: QueryCommand,
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Most cited works tagged with a concept, with their first authors
    TopCited {
        #[arg(long, env = "SOA_OUT")]
        dir: PathBuf,
        /// Concept label to filter on
        #[arg(long)]
        concept: String,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Works per concept and year for one institution's authors
    Trend {
        #[arg(long, env = "SOA_OUT")]
        dir: PathBuf,
        /// Institution name
        #[arg(long)]
        institution: String,
        /// Concept labels (repeat the flag)
        #[arg(long = "concept", required = true)]
        concepts: Vec<String>,
        #[arg(long)]
        from: i32,
        #[arg(long)]
        to: i32,
    },
    /// Ad-hoc basic graph pattern; variables print per solution
    Bgp {
        #[arg(long, env = "SOA_OUT")]
        dir: PathBuf,
        /// One pattern per flag: three terms, e.g. '?w rdf:type :Work'
        #[arg(long = "pattern", required = true)]
        patterns: Vec<String>,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// Conversion output directory holding manifest.json
    #[arg(long, env = "SOA_OUT")]
    dir: PathBuf,
    /// Listen address
    #[arg(long, env = "SOA_BIND", default_value = "127.0.0.1:7878")]
    bind: String,
    /// IRI prefix request paths resolve against
    #[arg(long, env = "SOA_BASE_IRI", default_value = "https://semopenalex.org")]
    base_iri: String,
    /// Serve a plain listing to browsers instead of 406
    #[arg(long)]
    html_fallback: bool,
}

#[derive(Args)]
struct EmbedArgs {
    /// Conversion output directory holding manifest.json
    #[arg(long, env = "SOA_OUT", conflicts_with = "toy")]
    dir: Option<PathBuf>,
    /// Train on the bundled toy graph instead of a conversion output
    #[arg(long)]
    toy: bool,
    /// Model family: transe, distmult or complex
    #[arg(long, default_value = "distmult")]
    model: ModelKind,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 16_000)]
    batch: usize,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, default_value_t = 2)]
    negatives: usize,
    #[arg(long, default_value_t = 1e-5)]
    l2: f64,
    #[arg(long, env = "SOA_SEED", default_value_t = 7)]
    seed: u64,
    /// Where to write the embeddings TSV
    #[arg(long)]
    out: PathBuf,
    /// Also write the evaluation JSON here (it always prints to stdout)
    #[arg(long)]
    eval_out: Option<PathBuf>,
}

#[derive(Args)]
struct SamplegenArgs {
    /// Snapshot root to create (data/ and expected.json go inside)
    #[arg(long, env = "SOA_OUT")]
    out: PathBuf,
    #[arg(long, env = "SOA_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    works: usize,
    /// Fraction of records that exercise an edge case, 0 to 1
    #[arg(long, default_value_t = 0.3)]
    edge_case_rate: f64,
}

enum CliError {
    Input(String),
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Output(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Output(m) => m,
        }
    }
}

fn chain(err: &dyn std::error::Error) -> String {
    let mut text = err.to_string();
    let mut source = err.source();
    while let Some(cause) = source {
        text.push_str(&format!(": {cause}"));
        source = cause.source();
    }
    text
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SOA_LOG", "warn"))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Convert(args) => cmd_convert(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Query(args) => cmd_query(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Samplegen(args) => cmd_samplegen(args),
    }
}

fn load_index(dir: &PathBuf) -> Result<TripleIndex, CliError> {
    let paths = pipeline::manifest_part_paths(dir)
        .map_err(|err| CliError::Input(chain(&err)))?;
    let (index, report) =
        TripleIndex::load_files(&paths).map_err(|err| CliError::Input(chain(&err)))?;
    for issue in &report.line_issues {
        log::warn!("{issue}");
    }
    Ok(index)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|err| CliError::Output(err.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<i32, CliError> {
    let mut kinds = Vec::new();
    for name in &args.kinds {
        match EntityKind::from_plural(name) {
            Some(kind) => kinds.push(kind),
            None => return Err(CliError::Input(format!("unknown entity kind {name:?}"))),
        }
    }
    let cfg = ConvertConfig {
        format: args.format,
        gzip: args.gzip,
        workers: args.workers.max(1),
        buffer_capacity: args.buffer,
        max_statements_per_part: args.rotate,
        kinds,
        ..ConvertConfig::new(args.snapshot, args.out)
    };
    let report = match pipeline::convert(&cfg) {
        Ok(report) => report,
        Err(err @ ConvertError::Ingest(_)) => return Err(CliError::Input(chain(&err))),
        Err(err) => return Err(CliError::Output(chain(&err))),
    };
    for rejected in &report.rejected {
        eprintln!("rejected: {rejected}");
    }
    for malformed in &report.malformed {
        eprintln!(
            "malformed line skipped: {}:{}: {}",
            malformed.part.display(),
            malformed.line,
            malformed.reason
        );
    }
    #[derive(serde::Serialize)]
    struct ConvertSummary<'a> {
        records: u64,
        rejected: usize,
        malformed: usize,
        stale_skipped: u64,
        diagnostics: u64,
        statements: u64,
        entity_counts: &'a std::collections::BTreeMap<String, u64>,
        manifest: String,
        elapsed_ms: u128,
    }
    print_json(&ConvertSummary {
        records: report.records,
        rejected: report.rejected.len(),
        malformed: report.malformed.len(),
        stale_skipped: report.stale_skipped,
        diagnostics: report.diagnostics,
        statements: report.manifest.triple_total,
        entity_counts: &report.manifest.entity_counts,
        manifest: report.manifest_path.display().to_string(),
        elapsed_ms: report.elapsed.as_millis(),
    })?;
    Ok(if report.clean() { 0 } else { 2 })
}

fn cmd_validate(args: ValidateArgs) -> Result<i32, CliError> {
    let report = pipeline::validate_output(&args.dir)
        .map_err(|err| CliError::Input(chain(&err)))?;
    for line in &report.invalid_lines {
        eprintln!("invalid: {line}");
    }
    for issue in &report.issues {
        eprintln!("manifest: {issue}");
    }
    #[derive(serde::Serialize)]
    struct ValidateSummary {
        files: u64,
        statements: u64,
        invalid_lines: usize,
        duplicate_statements: u64,
        dangling_refs: u64,
        manifest_issues: usize,
    }
    print_json(&ValidateSummary {
        files: report.files,
        statements: report.statements,
        invalid_lines: report.invalid_lines.len(),
        duplicate_statements: report.duplicate_statements,
        dangling_refs: report.dangling_refs,
        manifest_issues: report.issues.len(),
    })?;
    Ok(if report.clean() { 0 } else { 2 })
}

fn cmd_stats(args: StatsArgs) -> Result<i32, CliError> {
    let index = load_index(&args.dir)?;
    let stats = index.report_stats();
    if args.json {
        print_json(&stats)?;
    } else {
        println!("{stats}");
    }
    Ok(0)
}

fn cmd_query(args: QueryArgs) -> Result<i32, CliError> {
    match args.which {
        QueryCommand::TopCited { dir, concept, limit } => {
            let index = load_index(&dir)?;
            print_json(&index.query_top_cited_by_concept(&concept, limit))?;
        }
        QueryCommand::Trend { dir, institution, concepts, from, to } => {
            if from > to {
                return Err(CliError::Input(format!("empty year range {from}..{to}")));
            }
            let index = load_index(&dir)?;
            print_json(&index.query_trend(&institution, &concepts, from..=to))?;
        }
        QueryCommand::Bgp { dir, patterns } => {
            let parsed: Result<Vec<Pattern>, String> =
                patterns.iter().map(|text| parse_pattern(text)).collect();
            let parsed = parsed.map_err(CliError::Input)?;
            let index = load_index(&dir)?;
            let solutions: Vec<std::collections::BTreeMap<String, String>> = index
                .matches(&parsed)
                .into_iter()
                .map(|binding| {
                    binding.into_iter().map(|(var, term)| (var, term_text(&term))).collect()
                })
                .collect();
            print_json(&solutions)?;
        }
    }
    Ok(0)
}

fn cmd_serve(args: ServeArgs) -> Result<i32, CliError> {
    let index = load_index(&args.dir)?;
    log::info!("{} statements loaded", index.len());
    let cfg = ServerConfig {
        bind: args.bind,
        base_iri: args.base_iri,
        html_fallback: args.html_fallback,
    };
    let server = Server::bind(cfg, Arc::new(index))
        .map_err(|err| CliError::Output(format!("cannot bind: {err}")))?;
    server.run().map_err(|err| CliError::Output(err.to_string()))?;
    Ok(0)
}

fn cmd_embed(args: EmbedArgs) -> Result<i32, CliError> {
    let index = if args.toy {
        embed::toy_index()
    } else {
        let dir = args.dir.as_ref().ok_or_else(|| {
            CliError::Input("pass --dir with a conversion output, or --toy".to_string())
        })?;
        load_index(dir)?
    };
    let ids = embed::build_id_triples(&index, (0.8, 0.1, 0.1), args.seed)
        .map_err(|err| CliError::Input(chain(&err)))?;
    log::info!(
        "{} entities, {} relations, {}/{}/{} train/valid/test",
        ids.entity_count(),
        ids.relation_count(),
        ids.train.len(),
        ids.valid.len(),
        ids.test.len()
    );
    let cfg = TrainConfig {
        kind: args.model,
        dim: args.dim,
        batch_size: args.batch,
        epochs: args.epochs,
        learning_rate: args.lr,
        margin: args.margin,
        negatives_per_positive: args.negatives,
        l2: args.l2,
        seed: args.seed,
    };
    let run = embed::train(&ids, &cfg).map_err(|err| CliError::Input(chain(&err)))?;
    embed::write_embeddings_tsv(&run.model, &ids, &args.out)
        .map_err(|err| CliError::Output(chain(&err)))?;
    let result = embed::evaluate(&run.model, &ids);
    if let Some(path) = &args.eval_out {
        let text = serde_json::to_string_pretty(&result)
            .map_err(|err| CliError::Output(err.to_string()))?;
        std::fs::write(path, text)
            .map_err(|err| CliError::Output(format!("cannot write {}: {err}", path.display())))?;
    }
    print_json(&result)?;
    Ok(0)
}

fn cmd_samplegen(args: SamplegenArgs) -> Result<i32, CliError> {
    if !(0.0..=1.0).contains(&args.edge_case_rate) {
        return Err(CliError::Input("edge case rate must be between 0 and 1".to_string()));
    }
    let cfg = GenConfig {
        seed: args.seed,
        works: args.works,
        edge_case_rate: args.edge_case_rate,
        ..GenConfig::default()
    };
    let expected = samplegen::generate(&args.out, &cfg)
        .map_err(|err| CliError::Output(format!("cannot write sample: {err}")))?;
    #[derive(serde::Serialize)]
    struct SampleSummary<'a> {
        root: String,
        sidecar: String,
        entity_counts: &'a std::collections::BTreeMap<String, u64>,
        statement_total: u64,
    }
    print_json(&SampleSummary {
        root: args.out.display().to_string(),
        sidecar: samplegen::expected_path(&args.out).display().to_string(),
        entity_counts: &expected.entity_counts,
        statement_total: expected.statement_total,
    })?;
    Ok(0)
}

/// Parses one basic graph pattern: three whitespace-separated terms, where
/// quoted literals may contain spaces.
fn parse_pattern(text: &str) -> Result<Pattern, String> {
    let tokens = tokenize(text)?;
    if tokens.len() != 3 {
        return Err(format!("pattern needs exactly 3 terms, got {}: {text:?}", tokens.len()));
    }
    let mut terms = tokens.iter().map(|t| parse_term(t));
    let subject = terms.next().unwrap()?;
    let predicate = terms.next().unwrap()?;
    let object = terms.next().unwrap()?;
    Ok(Pattern::new(subject, predicate, object))
}

fn tokenize(text: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let mut token = String::new();
        if c == '"' {
            token.push(chars.next().unwrap());
            let mut closed = false;
            while let Some(c) = chars.next() {
                token.push(c);
                if c == '\\' {
                    if let Some(escaped) = chars.next() {
                        token.push(escaped);
                    }
                } else if c == '"' {
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(format!("unterminated literal in {text:?}"));
            }
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                token.push(chars.next().unwrap());
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                token.push(chars.next().unwrap());
            }
        }
        tokens.push(token);
    }
    Ok(tokens)
}

fn parse_term(token: &str) -> Result<PTerm, String> {
    use crate::model::{Iri, Literal, Term};
    if let Some(name) = token.strip_prefix('?') {
        if name.is_empty() {
            return Err("variable needs a name after '?'".to_string());
        }
        return Ok(PTerm::var(name));
    }
    if let Some(inner) = token.strip_prefix('<') {
        let Some(iri) = inner.strip_suffix('>') else {
            return Err(format!("unclosed IRI {token:?}"));
        };
        let iri = Iri::new(iri).map_err(|err| format!("bad IRI in {token:?}: {err}"))?;
        return Ok(PTerm::Bound(Term::Iri(iri)));
    }
    if token.starts_with('"') {
        let end = find_literal_end(token)?;
        let body = unescape(&token[1..end])?;
        let suffix = &token[end + 1..];
        let literal = if suffix.is_empty() {
            Literal::string(body)
        } else if let Some(tag) = suffix.strip_prefix('@') {
            Literal::lang(body, tag)
        } else if let Some(dt) = suffix.strip_prefix("^^") {
            let dt = dt
                .strip_prefix('<')
                .and_then(|s| s.strip_suffix('>'))
                .ok_or_else(|| format!("datatype must be a full IRI in {token:?}"))?;
            let iri = Iri::new(dt).map_err(|err| format!("bad datatype in {token:?}: {err}"))?;
            Literal::typed(body, iri)
        } else {
            return Err(format!("unrecognized literal suffix in {token:?}"));
        };
        return Ok(PTerm::Bound(Term::Literal(literal)));
    }
    if token.chars().all(|c| c.is_ascii_digit()) {
        let dt = vocab::xsd_integer();
        return Ok(PTerm::Bound(Term::Literal(Literal::typed(token, dt))));
    }
    if let Some((prefix, local)) = token.split_once(':') {
        if let Some(iri) = vocab::expand(prefix, local) {
            return Ok(PTerm::Bound(Term::Iri(iri)));
        }
        return Err(format!("unknown prefix {prefix:?} in {token:?}"));
    }
    Err(format!("cannot read term {token:?}; use ?var, <iri>, prefix:local or a quoted literal"))
}

fn find_literal_end(token: &str) -> Result<usize, String> {
    let bytes = token.as_bytes();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Ok(i),
            _ => i += 1,
        }
    }
    Err(format!("unterminated literal {token:?}"))
}

fn unescape(body: &str) -> Result<String, String> {
    let mut out = String::with_capacity(body.len());
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            other => return Err(format!("unsupported escape \\{}", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Term;

    #[test]
    fn pattern_terms_parse() {
        let pattern = parse_pattern("?w rdf:type :Work").unwrap();
        assert!(matches!(pattern.subject, PTerm::Var(ref name) if name == "w"));
        match &pattern.predicate {
            PTerm::Bound(Term::Iri(iri)) => {
                assert_eq!(iri.as_str(), "http://www.w3.org/1999/02/22-rdf-syntax-ns#type")
            }
            other => panic!("expected bound predicate, got {other:?}"),
        }
        match &pattern.object {
            PTerm::Bound(Term::Iri(iri)) => {
                assert_eq!(iri.as_str(), "https://semopenalex.org/class/Work")
            }
            other => panic!("expected bound object, got {other:?}"),
        }
    }

    #[test]
    fn quoted_literals_keep_spaces_and_suffixes() {
        let pattern =
            parse_pattern(r#"?w dcterms:title "Knowledge graphs at scale""#).unwrap();
        match &pattern.object {
            PTerm::Bound(Term::Literal(lit)) => {
                assert_eq!(lit.lexical, "Knowledge graphs at scale")
            }
            other => panic!("{other:?}"),
        }
        let pattern = parse_pattern(r#"?s ?p "42"^^<http://www.w3.org/2001/XMLSchema#integer>"#)
            .unwrap();
        match &pattern.object {
            PTerm::Bound(Term::Literal(lit)) => {
                assert_eq!(lit.lexical, "42");
                assert!(lit.datatype.as_str().ends_with("integer"));
            }
            other => panic!("{other:?}"),
        }
        let pattern = parse_pattern(r#"?s ?p "grafo"@es"#).unwrap();
        match &pattern.object {
            PTerm::Bound(Term::Literal(lit)) => {
                assert_eq!(lit.language.as_deref(), Some("es"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_patterns_are_rejected() {
        assert!(parse_pattern("?w rdf:type").is_err());
        assert!(parse_pattern("?w bad:prefix ?o").is_err());
        assert!(parse_pattern(r#"?w ?p "unterminated"#).is_err());
        assert!(parse_pattern("?w <not-an-iri ?o").is_err());
        assert!(parse_pattern("? rdf:type ?o").is_err());
    }

    #[test]
    fn bare_integers_become_typed_literals() {
        let pattern = parse_pattern("?c soa:level 2").unwrap();
        match &pattern.object {
            PTerm::Bound(Term::Literal(lit)) => {
                assert_eq!(lit.lexical, "2");
                assert!(lit.datatype.as_str().ends_with("#integer"));
            }
            other => panic!("{other:?}"),
        }
    }
}
