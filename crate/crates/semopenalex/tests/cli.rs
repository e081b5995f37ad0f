//! End-to-end tests that drive the compiled binary the way a user would.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

const ENV_KNOBS: &[&str] = &[
    "SOA_SNAPSHOT",
    "SOA_OUT",
    "SOA_FORMAT",
    "SOA_GZIP",
    "SOA_WORKERS",
    "SOA_BUFFER",
    "SOA_ROTATE",
    "SOA_KINDS",
    "SOA_BIND",
    "SOA_BASE_IRI",
    "SOA_SEED",
    "SOA_LOG",
    "RUST_LOG",
];

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semopenalex"));
    for knob in ENV_KNOBS {
        cmd.env_remove(knob);
    }
    cmd
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).expect("utf-8 stdout"),
        String::from_utf8(stderr).expect("utf-8 stderr"),
    )
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|err| panic!("bad JSON ({err}): {text}"))
}

fn gen_sample(root: &Path, seed: u64, works: usize, edge_case_rate: f64) -> Value {
    let (code, out, err) = run(bin()
        .arg("samplegen")
        .args(["--out", root.to_str().unwrap()])
        .args(["--seed", &seed.to_string()])
        .args(["--works", &works.to_string()])
        .args(["--edge-case-rate", &edge_case_rate.to_string()]));
    assert_eq!(code, 0, "samplegen failed: {err}");
    json(&out)
}

fn convert(snapshot: &Path, out: &Path, extra: &[&str]) -> (i32, Value, String) {
    let (code, stdout, stderr) = run(bin()
        .arg("convert")
        .args(["--snapshot", snapshot.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .args(extra));
    (code, json(&stdout), stderr)
}

fn read_expected(root: &Path) -> Value {
    json(&std::fs::read_to_string(root.join("expected.json")).expect("sidecar exists"))
}

#[test]
fn pipeline_matches_the_sidecar() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 3, 80, 0.3);
    let expected = read_expected(&snap);

    let (code, report, _) = convert(&snap, &rdf, &["--format", "nq", "--workers", "2"]);
    assert_eq!(code, 0);
    assert_eq!(report["statements"], expected["statement_total"]);
    assert_eq!(report["entity_counts"], expected["entity_counts"]);
    assert_eq!(report["stale_skipped"], expected["stale_records"]);
    assert_eq!(report["rejected"], Value::from(0));

    let (code, out, _) = run(bin().arg("validate").args(["--dir", rdf.to_str().unwrap()]));
    assert_eq!(code, 0, "validate should accept its own conversion");
    let report = json(&out);
    assert_eq!(report["statements"], expected["statement_total"]);
    assert_eq!(report["invalid_lines"], Value::from(0));
    assert_eq!(report["manifest_issues"], Value::from(0));

    let (code, out, _) =
        run(bin().arg("stats").args(["--dir", rdf.to_str().unwrap()]).arg("--json"));
    assert_eq!(code, 0);
    let stats = json(&out);
    assert_eq!(stats["statements"], expected["statement_total"]);
    assert_eq!(stats["entities"], expected["entity_counts"]);
    assert_eq!(
        stats["institutions_by_country"],
        expected["institutions_by_country"]
    );

    let concept = expected["top_cited"]["concept"].as_str().unwrap();
    let limit = expected["top_cited"]["limit"].as_u64().unwrap();
    let (code, out, _) = run(bin()
        .arg("query")
        .arg("top-cited")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--concept", concept])
        .args(["--limit", &limit.to_string()]));
    assert_eq!(code, 0);
    assert_eq!(json(&out), expected["top_cited"]["rows"]);

    let trend = &expected["trend"];
    let mut cmd = bin();
    cmd.arg("query")
        .arg("trend")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--institution", trend["institution"].as_str().unwrap()])
        .args(["--from", &trend["from"].to_string()])
        .args(["--to", &trend["to"].to_string()]);
    for concept in trend["concepts"].as_array().unwrap() {
        cmd.args(["--concept", concept.as_str().unwrap()]);
    }
    let (code, out, _) = run(&mut cmd);
    assert_eq!(code, 0);
    assert_eq!(json(&out), trend["cells"]);
}

#[test]
fn bgp_query_counts_works() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 9, 40, 0.2);
    let expected = read_expected(&snap);
    let (code, _, _) = convert(&snap, &rdf, &[]);
    assert_eq!(code, 0);

    let (code, out, _) = run(bin()
        .arg("query")
        .arg("bgp")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--pattern", "?w rdf:type :Work"]));
    assert_eq!(code, 0);
    let rows = json(&out);
    assert_eq!(
        rows.as_array().unwrap().len() as u64,
        expected["entity_counts"]["works"].as_u64().unwrap()
    );

    // two joined patterns with a shared variable
    let (code, out, _) = run(bin()
        .arg("query")
        .arg("bgp")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--pattern", "?w rdf:type :Work"])
        .args(["--pattern", "?w soa:citedByCount ?c"]));
    assert_eq!(code, 0);
    for row in json(&out).as_array().unwrap() {
        assert!(row["w"].as_str().unwrap().starts_with('<'));
        assert!(row["c"].as_str().unwrap().starts_with('"'));
    }
}

#[test]
fn rerun_with_same_flags_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    gen_sample(&snap, 21, 50, 0.25);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let flags = ["--format", "trig", "--workers", "3"];
    assert_eq!(convert(&snap, &a, &flags).0, 0);
    assert_eq!(convert(&snap, &b, &flags).0, 0);

    let list = |dir: &Path| -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        names
    };
    assert_eq!(list(&a), list(&b));
    for name in list(&a) {
        let (left, right) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        if name == "manifest.json" {
            let mut left = json(std::str::from_utf8(&left).unwrap());
            let mut right = json(std::str::from_utf8(&right).unwrap());
            assert!(left["generated_at"].is_string());
            left["generated_at"] = Value::Null;
            right["generated_at"] = Value::Null;
            assert_eq!(left, right, "manifests differ beyond their run timestamp");
        } else {
            assert_eq!(left, right, "{name} differs between identical reruns");
        }
    }
}

#[test]
fn every_format_validates_across_seeds() {
    let dir = TempDir::new().unwrap();
    for (seed, format) in [(1u64, "nt"), (2, "nq"), (3, "trig"), (4, "nq")] {
        let snap = dir.path().join(format!("snap{seed}"));
        let rdf = dir.path().join(format!("rdf{seed}"));
        gen_sample(&snap, seed, 30, 0.4);
        let (code, _, err) = convert(&snap, &rdf, &["--format", format]);
        assert_eq!(code, 0, "seed {seed}: {err}");
        let (code, _, err) = run(bin().arg("validate").args(["--dir", rdf.to_str().unwrap()]));
        assert_eq!(code, 0, "seed {seed} {format} round trip: {err}");
    }
}

#[test]
fn corruption_is_reported_with_file_and_line() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 6, 30, 0.0);
    let (code, _, _) = convert(&snap, &rdf, &["--format", "nt", "--gzip", "false"]);
    assert_eq!(code, 0);

    let part = std::fs::read_dir(&rdf)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("works"))
        .expect("a works part file");
    let mut text = std::fs::read_to_string(&part).unwrap();
    let lines = text.lines().count();
    text.push_str("<https://semopenalex.org/work/W1> <broken line\n");
    std::fs::write(&part, text).unwrap();

    let (code, _, err) = run(bin().arg("validate").args(["--dir", rdf.to_str().unwrap()]));
    assert_eq!(code, 2, "corruption must fail validation");
    let name = part.file_name().unwrap().to_str().unwrap();
    assert!(err.contains(name), "stderr should name the file: {err}");
    assert!(
        err.contains(&format!(":{}:", lines + 1)),
        "stderr should give the line number {}: {err}",
        lines + 1
    );
}

#[test]
fn five_works_fit_one_part_file() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    gen_sample(&snap, 1, 5, 0.0);
    let works_dir = snap.join("data/works");
    let mut parts: Vec<PathBuf> = Vec::new();
    for date_dir in std::fs::read_dir(&works_dir).unwrap() {
        for part in std::fs::read_dir(date_dir.unwrap().path()).unwrap() {
            parts.push(part.unwrap().path());
        }
    }
    assert_eq!(parts.len(), 1, "five works should land in one part file");
    let mut text = String::new();
    flate2::read::GzDecoder::new(std::fs::File::open(&parts[0]).unwrap())
        .read_to_string(&mut text)
        .unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn kind_filter_limits_output() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 12, 30, 0.0);
    let (code, report, _) = convert(&snap, &rdf, &["--kinds", "authors,institutions"]);
    assert_eq!(code, 0);
    let counts = report["entity_counts"].as_object().unwrap();
    assert!(counts["authors"].as_u64().unwrap() > 0);
    assert!(counts["institutions"].as_u64().unwrap() > 0);
    for zeroed in ["works", "sources", "concepts", "publishers"] {
        assert_eq!(counts[zeroed], Value::from(0), "{zeroed} should be filtered out");
    }
}

#[test]
fn env_variables_stand_in_for_flags() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 2, 30, 0.0);
    let (code, out, err) = run(bin()
        .arg("convert")
        .env("SOA_SNAPSHOT", &snap)
        .env("SOA_OUT", &rdf)
        .env("SOA_FORMAT", "nt")
        .env("SOA_WORKERS", "2"));
    assert_eq!(code, 0, "{err}");
    json(&out);
    let manifest = json(&std::fs::read_to_string(rdf.join("manifest.json")).unwrap());
    assert_eq!(manifest["format"], Value::from("nt"));
}

#[test]
fn exit_codes_separate_usage_input_and_output_problems() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    gen_sample(&snap, 8, 5, 0.0);

    let (code, _, _) = run(bin().arg("convert").arg("--no-such-flag"));
    assert_eq!(code, 1, "unknown flag is a usage error");

    let (code, _, _) = run(bin().arg("--help"));
    assert_eq!(code, 0, "help is not an error");

    let (code, _, err) = run(bin()
        .arg("convert")
        .args(["--snapshot", dir.path().join("missing").to_str().unwrap()])
        .args(["--out", dir.path().join("out").to_str().unwrap()]));
    assert_eq!(code, 2, "missing snapshot is an input error: {err}");
    assert!(err.contains("error:"));

    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, b"file, not dir").unwrap();
    let (code, _, err) = run(bin()
        .arg("convert")
        .args(["--snapshot", snap.to_str().unwrap()])
        .args(["--out", blocker.join("sub").to_str().unwrap()]));
    assert_eq!(code, 3, "unusable output directory is an output error: {err}");

    let (code, _, _) = run(bin()
        .arg("query")
        .arg("bgp")
        .args(["--dir", dir.path().to_str().unwrap()])
        .args(["--pattern", "only two terms"]));
    assert_eq!(code, 2, "directory without a manifest is an input error");
}

#[test]
fn embeddings_train_from_a_conversion() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 17, 60, 0.1);
    assert_eq!(convert(&snap, &rdf, &[]).0, 0);

    let tsv = dir.path().join("vectors.tsv");
    let eval = dir.path().join("eval.json");
    let (code, out, err) = run(bin()
        .arg("embed")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--model", "transe"])
        .args(["--dim", "16"])
        .args(["--batch", "512"])
        .args(["--epochs", "2"])
        .args(["--seed", "5"])
        .args(["--out", tsv.to_str().unwrap()])
        .args(["--eval-out", eval.to_str().unwrap()]));
    assert_eq!(code, 0, "{err}");
    let result = json(&out);
    assert!(result["mrr_filtered"].as_f64().unwrap() > 0.0);
    assert_eq!(json(&std::fs::read_to_string(&eval).unwrap()), result);

    let first = BufReader::new(std::fs::File::open(&tsv).unwrap())
        .lines()
        .next()
        .unwrap()
        .unwrap();
    let cols: Vec<&str> = first.split('\t').collect();
    assert_eq!(cols.len(), 17, "IRI plus sixteen vector components");
    assert!(cols[0].starts_with("https://") || cols[0].starts_with("http://"));
    cols[1..].iter().for_each(|v| {
        v.parse::<f64>().expect("vector components are numbers");
    });

    let (code, _, err) = run(bin()
        .arg("embed")
        .args(["--out", dir.path().join("x.tsv").to_str().unwrap()]));
    assert_eq!(code, 2, "no --dir and no --toy is an input error: {err}");
}

#[test]
fn serve_answers_over_a_real_socket() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 4, 20, 0.0);
    let (_, report, _) = convert(&snap, &rdf, &[]);
    let statements = report["statements"].as_u64().unwrap();

    let mut child = bin()
        .arg("serve")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--bind", "127.0.0.1:0"])
        .env("SOA_LOG", "info")
        .stderr(Stdio::piped())
        .spawn()
        .expect("server starts");
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("stderr open").expect("stderr readable");
        if let Some(at) = line.find("listening on ") {
            break line[at + "listening on ".len()..].trim().to_string();
        }
    };

    let fetch = |path: &str, accept: &str| -> String {
        let mut stream = TcpStream::connect(&addr).unwrap();
        write!(stream, "GET {path} HTTP/1.1\r\nHost: x\r\nAccept: {accept}\r\nConnection: close\r\n\r\n")
            .unwrap();
        let mut response = String::new();
        stream.read_to_string(&mut response).unwrap();
        response
    };

    let health = fetch("/healthz", "*/*");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.ends_with(&format!("\r\n\r\n{statements}\n")), "{health}");

    let body = fetch("/work/W1", "application/n-triples");
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("content-type: application/n-triples"), "{body}");
    assert!(body.contains("<https://semopenalex.org/work/W1>"));

    let missing = fetch("/work/W40404", "text/turtle");
    assert!(missing.starts_with("HTTP/1.1 404"), "{missing}");

    child.kill().unwrap();
    child.wait().unwrap();
}

#[test]
fn rejected_records_surface_without_stopping() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    gen_sample(&snap, 14, 25, 0.0);

    // plant a record whose id does not parse
    let works_dir = snap.join("data/works");
    let date_dir = std::fs::read_dir(&works_dir).unwrap().next().unwrap().unwrap().path();
    let extra = date_dir.join("part_099.gz");
    let mut gz = flate2::write::GzEncoder::new(
        std::fs::File::create(&extra).unwrap(),
        flate2::Compression::default(),
    );
    gz.write_all(
        br#"{"id": "https://openalex.org/X77", "display_name": "broken", "cited_by_count": 1}"#,
    )
    .unwrap();
    gz.write_all(b"\n").unwrap();
    gz.finish().unwrap();

    let rdf = dir.path().join("rdf");
    let (code, report, err) = convert(&snap, &rdf, &[]);
    assert_eq!(code, 2, "rejects make the run dirty");
    assert_eq!(report["rejected"], Value::from(1));
    assert!(err.contains("X77"), "stderr should identify the record: {err}");

    // the rest of the corpus still converted and validates
    let (code, _, _) = run(bin().arg("validate").args(["--dir", rdf.to_str().unwrap()]));
    assert_eq!(code, 0);
}

#[test]
fn stats_text_table_lists_kinds() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 5, 20, 0.0);
    assert_eq!(convert(&snap, &rdf, &[]).0, 0);
    let (code, out, _) = run(bin().arg("stats").args(["--dir", rdf.to_str().unwrap()]));
    assert_eq!(code, 0);
    for kind in ["works", "authors", "sources", "institutions", "concepts", "publishers"] {
        assert!(out.contains(kind), "table should mention {kind}: {out}");
    }
}

#[test]
fn trend_rejects_inverted_year_range() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 7, 20, 0.0);
    assert_eq!(convert(&snap, &rdf, &[]).0, 0);
    let (code, _, err) = run(bin()
        .arg("query")
        .arg("trend")
        .args(["--dir", rdf.to_str().unwrap()])
        .args(["--institution", "anything"])
        .args(["--concept", "anything"])
        .args(["--from", "2024", "--to", "2016"]));
    assert_eq!(code, 2, "inverted range is an input error: {err}");
}

#[test]
fn convert_report_is_machine_readable() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap");
    let rdf = dir.path().join("rdf");
    gen_sample(&snap, 11, 20, 0.3);
    let (_, report, _) = convert(&snap, &rdf, &[]);
    let object = report.as_object().unwrap();
    for key in [
        "records",
        "rejected",
        "malformed",
        "stale_skipped",
        "diagnostics",
        "statements",
        "entity_counts",
        "manifest",
        "elapsed_ms",
    ] {
        assert!(object.contains_key(key), "report is missing {key}");
    }
    let counts: BTreeMap<String, u64> =
        serde_json::from_value(report["entity_counts"].clone()).unwrap();
    assert_eq!(counts.len(), 6, "every kind appears even when zero");
}
