//! Deterministic sample snapshot generator.
//!
//! Writes an OpenAlex-shaped snapshot tree plus an answer key
//! (`expected.json`). The key is computed by walking the generated JSON
//! and adding up what each field must contribute, never by running the
//! converter, so the two sides can check each other. A configurable share
//! of records carries deliberately nasty values: unicode soup, embedded
//! newlines, control characters, duplicate abstract positions, dangling
//! references, and stale duplicate records that a correct reader must
//! discard.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::{CountRow, TopCitedRow, TrendCell};

pub const ANCHOR_CONCEPTS: [&str; 3] =
    ["Semantic Web", "Machine learning", "Natural language processing"];
pub const ANCHOR_INSTITUTION: &str = "Institute for Knowledge Systems";

const DATE_CURRENT: &str = "2023-06-17";
const DATE_STALE: &str = "2023-04-15";

const TITLE_WORDS: [&str; 24] = [
    "adaptive", "graph", "neural", "semantic", "knowledge", "retrieval", "scalable", "linked",
    "open", "citation", "embedding", "query", "stream", "federated", "latent", "sparse",
    "robust", "multilingual", "entity", "alignment", "inference", "temporal", "bibliometric",
    "contextual",
];
const FILLER_WORDS: [&str; 10] =
    ["the", "of", "and", "we", "show", "that", "approach", "results", "dataset", "model"];
const FIRST_NAMES: [&str; 12] = [
    "Ada", "Grace", "Alan", "Barbara", "Donald", "Leslie", "Margaret", "Tim", "Radia", "Vint",
    "Frances", "Adele",
];
const LAST_NAMES: [&str; 12] = [
    "Lovelace", "Hopper", "Turing", "Liskov", "Knuth", "Lamport", "Hamilton", "Lee", "Perlman",
    "Cerf", "Allen", "Goldberg",
];
const PLACES: [(&str, &str, &str); 8] = [
    ("Karlsruhe", "Germany", "DE"),
    ("Boston", "United States", "US"),
    ("Oxford", "United Kingdom", "GB"),
    ("Lyon", "France", "FR"),
    ("Kyoto", "Japan", "JP"),
    ("Curitiba", "Brazil", "BR"),
    ("Delft", "Netherlands", "NL"),
    ("Zurich", "Switzerland", "CH"),
];
const ROR_TYPES: [&str; 6] =
    ["education", "company", "government", "nonprofit", "facility", "healthcare"];
const LICENSES: [&str; 4] = ["cc-by", "cc-by-nc-nd", "cc0", "publisher-specific"];
const ACRONYMS: [&str; 6] = ["AIKS", "KSL", "FIT", "OIC", "DIL", "CSR"];
const INSTITUTION_STYLES: [&str; 6] =
    ["Applied", "Formal", "Digital", "Computational", "Open", "Federated"];
const INSTITUTION_NOUNS: [&str; 4] = ["Center", "Institute", "Laboratory", "College"];

#[derive(Debug, Clone, Serialize)]
pub struct GenConfig {
    pub seed: u64,
    pub works: usize,
    pub edge_case_rate: f64,
    pub trend_years: (i32, i32),
    pub top_limit: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { seed: 42, works: 1000, edge_case_rate: 0.3, trend_years: (2016, 2024), top_limit: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCitedExpectation {
    pub concept: String,
    pub limit: usize,
    pub rows: Vec<TopCitedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendExpectation {
    pub institution: String,
    pub concepts: Vec<String>,
    pub from: i32,
    pub to: i32,
    pub cells: Vec<TrendCell>,
}

/// The answer key shipped with a generated snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub seed: u64,
    pub works: usize,
    pub edge_case_rate: f64,
    pub entity_counts: BTreeMap<String, u64>,
    pub statements_by_kind: BTreeMap<String, u64>,
    pub statement_total: u64,
    pub top_cited: TopCitedExpectation,
    pub trend: TrendExpectation,
    pub institutions_by_country: Vec<CountRow>,
    pub institution_types: Vec<CountRow>,
    pub stale_records: u64,
    pub edge_case_works: u64,
}

pub fn expected_path(root: &Path) -> PathBuf {
    root.join("expected.json")
}

pub fn read_expected(root: &Path) -> io::Result<Expected> {
    let text = fs::read_to_string(expected_path(root))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}

struct Universe {
    works: Vec<Value>,
    authors: Vec<Value>,
    sources: Vec<Value>,
    institutions: Vec<Value>,
    concepts: Vec<Value>,
    publishers: Vec<Value>,
    stale_old_date: Vec<Value>,
    stale_same_part: Vec<(usize, Value)>,
    edge_case_works: u64,
}

fn pick<'a, T>(rng: &mut ChaCha20Rng, pool: &'a [T]) -> &'a T {
    &pool[rng.random_range(0..pool.len())]
}

fn distinct_picks(rng: &mut ChaCha20Rng, upper: usize, count: usize) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    while seen.len() < count.min(upper) {
        seen.insert(rng.random_range(0..upper));
    }
    seen.into_iter().collect()
}

fn title_case(words: &[&str]) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if i == 0 {
            let mut chars = w.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
                out.push_str(chars.as_str());
            }
        } else {
            out.push_str(w);
        }
    }
    out
}

fn gen_title(rng: &mut ChaCha20Rng) -> String {
    let n = rng.random_range(3..=8);
    let words: Vec<&str> = (0..n).map(|_| *pick(rng, &TITLE_WORDS)).collect();
    title_case(&words)
}

fn gen_counts_by_year(rng: &mut ChaCha20Rng, max_entries: usize) -> Option<Value> {
    let k = rng.random_range(0..=max_entries);
    if k == 0 {
        return None;
    }
    let mut years: Vec<i32> = (2019..=2024).collect();
    for j in 0..k.min(years.len()) {
        let swap = rng.random_range(j..years.len());
        years.swap(j, swap);
    }
    let mut chosen: Vec<i32> = years.into_iter().take(k).collect();
    chosen.sort_unstable();
    let entries: Vec<Value> = chosen
        .into_iter()
        .map(|year| {
            let mut entry = json!({ "year": year });
            if rng.random_bool(0.8) {
                entry["works_count"] = json!(rng.random_range(0..500));
            }
            if rng.random_bool(0.8) {
                entry["cited_by_count"] = json!(rng.random_range(0..5000));
            }
            entry
        })
        .collect();
    Some(Value::Array(entries))
}

fn build_universe(rng: &mut ChaCha20Rng, cfg: &GenConfig) -> Universe {
    let n_works = cfg.works.max(1);
    let n_authors = (n_works / 2).max(3);
    let n_institutions = (n_authors / 8).max(2);
    let n_sources = (n_works / 25).max(2);
    let n_publishers = (n_sources / 2).max(1);
    let n_concepts = 12usize;

    let mut concepts = Vec::new();
    for i in 1..=n_concepts {
        let (level, name) = match i {
            1..=3 => (0, ANCHOR_CONCEPTS[i - 1].to_string()),
            4..=9 => (1, format!("{} {}", title_case(&[pick(rng, &TITLE_WORDS)]), pick(rng, &TITLE_WORDS))),
            _ => (2, format!("{} {} studies", title_case(&[pick(rng, &TITLE_WORDS)]), pick(rng, &TITLE_WORDS))),
        };
        let mut record = json!({
            "id": format!("C{i}"),
            "display_name": name,
            "level": level,
        });
        match level {
            1 => {
                let parent = 1 + (i - 4) % 3;
                record["ancestors"] = json!([{ "id": format!("C{parent}"), "level": 0 }]);
            }
            2 => {
                let parent = 4 + (i - 10) % 6;
                let grandparent = 1 + (parent - 4) % 3;
                record["ancestors"] = json!([
                    { "id": format!("C{parent}"), "level": 1 },
                    { "id": format!("C{grandparent}"), "level": 0 },
                ]);
            }
            _ => {}
        }
        if rng.random_bool(0.5) && i > 1 {
            record["related_concepts"] = json!([{ "id": format!("C{}", rng.random_range(1..=n_concepts)) }]);
        }
        if rng.random_bool(0.7) {
            record["description"] = json!(format!("research about {}", pick(rng, &TITLE_WORDS)));
        }
        record["wikidata"] = json!(format!("https://www.wikidata.org/entity/Q{}", 30000 + i));
        if let Some(counts) = gen_counts_by_year(rng, 2) {
            record["counts_by_year"] = counts;
        }
        concepts.push(record);
    }

    let mut institutions = Vec::new();
    for i in 1..=n_institutions {
        let place = if i == 1 { &PLACES[0] } else { pick(rng, &PLACES) };
        let name = if i == 1 {
            ANCHOR_INSTITUTION.to_string()
        } else {
            format!("{} {} {i}", pick(rng, &INSTITUTION_STYLES), pick(rng, &INSTITUTION_NOUNS))
        };
        let mut record = json!({
            "id": format!("I{i}"),
            "display_name": name,
        });
        if rng.random_bool(0.9) {
            record["country_code"] = json!(place.2);
        }
        if rng.random_bool(0.95) {
            record["type"] = json!(*pick(rng, &ROR_TYPES));
        }
        let mut geo = json!({ "city": place.0, "country": place.1 });
        if rng.random_bool(0.9) {
            geo["latitude"] = json!((rng.random_range(-80_000..80_000i64) as f64) / 1000.0);
            geo["longitude"] = json!((rng.random_range(-179_000..179_000i64) as f64) / 1000.0);
        }
        record["geo"] = geo;
        if rng.random_bool(0.4) {
            record["display_name_acronyms"] = json!([*pick(rng, &ACRONYMS)]);
        }
        if let Some(counts) = gen_counts_by_year(rng, 2) {
            record["counts_by_year"] = counts;
        }
        institutions.push(record);
    }

    let mut publishers = Vec::new();
    for i in 1..=n_publishers {
        let mut record = json!({
            "id": format!("P{i}"),
            "display_name": format!("{} Press", pick(rng, &LAST_NAMES)),
            "country_codes": [PLACES[rng.random_range(0..PLACES.len())].2],
        });
        if let Some(counts) = gen_counts_by_year(rng, 2) {
            record["counts_by_year"] = counts;
        }
        publishers.push(record);
    }

    let mut sources = Vec::new();
    for i in 1..=n_sources {
        let mut record = json!({
            "id": format!("S{i}"),
            "display_name": format!("Journal of {} {}", title_case(&[pick(rng, &TITLE_WORDS)]), pick(rng, &TITLE_WORDS)),
        });
        if rng.random_bool(0.7) {
            record["issn"] = json!([format!("{:04}-{:04}", 1000 + i, 2000 + i)]);
        }
        if rng.random_bool(0.7) {
            record["host_organization"] = json!(format!("P{}", rng.random_range(1..=n_publishers)));
        }
        if let Some(counts) = gen_counts_by_year(rng, 2) {
            record["counts_by_year"] = counts;
        }
        sources.push(record);
    }

    let mut authors = Vec::new();
    for i in 1..=n_authors {
        let mut record = json!({
            "id": format!("A{i}"),
            "display_name": format!("{} {}", pick(rng, &FIRST_NAMES), pick(rng, &LAST_NAMES)),
            "works_count": rng.random_range(0..400),
            "cited_by_count": rng.random_range(0..20000),
        });
        let roll: f64 = rng.random();
        if roll < 0.35 {
            record["last_known_institution"] = json!("I1");
        } else if roll < 0.75 {
            record["last_known_institution"] = json!(format!("I{}", rng.random_range(1..=n_institutions)));
        }
        if rng.random_bool(0.3) {
            record["ids"] = json!({ "wikidata": format!("https://www.wikidata.org/entity/Q{}", 40000 + i) });
        }
        if let Some(counts) = gen_counts_by_year(rng, 3) {
            record["counts_by_year"] = counts;
        }
        authors.push(record);
    }

    let mut works = Vec::new();
    let mut stale_old_date = Vec::new();
    let mut stale_same_part = Vec::new();
    let mut edge_case_works = 0u64;
    for i in 1..=n_works {
        let year = rng.random_range(cfg.trend_years.0..=cfg.trend_years.1);
        let mut record = json!({
            "id": format!("W{i}"),
            "publication_year": year,
            "publication_date": format!("{year}-{:02}-{:02}", rng.random_range(1..=12), rng.random_range(1..=28)),
            "cited_by_count": rng.random_range(0..2000),
        });
        let mut title = gen_title(rng);
        let mut abstract_tokens: Option<Vec<&str>> = if rng.random_bool(0.8) {
            let n = rng.random_range(8..=40);
            Some(
                (0..n)
                    .map(|_| {
                        if rng.random_bool(0.4) {
                            *pick(rng, &FILLER_WORDS)
                        } else {
                            *pick(rng, &TITLE_WORDS)
                        }
                    })
                    .collect(),
            )
        } else {
            None
        };
        let mut extra_positions: Vec<(String, u32)> = Vec::new();
        let mut dangling: Vec<String> = Vec::new();

        if rng.random_bool(cfg.edge_case_rate) {
            edge_case_works += 1;
            match rng.random_range(0..6) {
                0 => title = format!("{title} 知识图谱 🧪 Ω"),
                1 => title = format!("  {title}\\ \"quoted\"\r\n\there  "),
                2 => title = format!("{title}\u{0007}\u{0001}\u{000B} rescued"),
                3 => {
                    // one position claimed by two tokens
                    let tokens = abstract_tokens.get_or_insert_with(|| vec!["graph", "query", "entity"]);
                    let target = rng.random_range(0..tokens.len()) as u32;
                    let rival = if tokens[target as usize] == "zz_rival" { "aa_rival" } else { "zz_rival" };
                    extra_positions.push((rival.to_string(), target));
                }
                4 => abstract_tokens = Some(Vec::new()),
                5 => {
                    dangling.push(format!("W{}", n_works + 1000 + i));
                    dangling.push("W999999999999".to_string());
                }
                _ => unreachable!(),
            }
        }

        if rng.random_bool(0.97) {
            record["display_name"] = json!(title);
        }
        if let Some(tokens) = &abstract_tokens {
            let mut index: BTreeMap<String, Vec<u32>> = BTreeMap::new();
            for (pos, token) in tokens.iter().enumerate() {
                index.entry(token.to_string()).or_default().push(pos as u32);
            }
            for (token, pos) in &extra_positions {
                index.entry(token.clone()).or_default().push(*pos);
            }
            record["abstract_inverted_index"] =
                Value::Object(index.into_iter().map(|(k, v)| (k, json!(v))).collect());
        }
        let mut ids = serde_json::Map::new();
        if rng.random_bool(0.3) {
            ids.insert("pmid".into(), json!(format!("{}", 9_000_000 + i)));
        }
        if rng.random_bool(0.5) {
            ids.insert("doi".into(), json!(format!("https://doi.org/10.5555/sample.{i}")));
        }
        if !ids.is_empty() {
            record["ids"] = Value::Object(ids);
        }
        let ref_count = rng.random_range(0..=4);
        let mut refs: Vec<String> = distinct_picks(rng, n_works, ref_count)
            .into_iter()
            .map(|ix| format!("W{}", ix + 1))
            .filter(|id| id != &format!("W{i}"))
            .collect();
        refs.extend(dangling);
        if !refs.is_empty() {
            record["referenced_works"] = json!(refs);
        }
        let concept_count = rng.random_range(1..=3);
        let mut concept_ids = distinct_picks(rng, 12, concept_count);
        if rng.random_bool(0.5) && !concept_ids.contains(&0) {
            concept_ids.insert(0, 0);
        }
        record["concepts"] = Value::Array(
            concept_ids.iter().map(|ix| json!({ "id": format!("C{}", ix + 1) })).collect(),
        );
        let author_count = rng.random_range(1..=4);
        let author_ids = distinct_picks(rng, n_authors, author_count);
        let last = author_ids.len() - 1;
        record["authorships"] = Value::Array(
            author_ids
                .iter()
                .enumerate()
                .map(|(slot, ix)| {
                    let position = if slot == 0 {
                        "first"
                    } else if slot == last {
                        "last"
                    } else {
                        "middle"
                    };
                    let inst_count = rng.random_range(0..=2);
                    let institutions: Vec<Value> =
                        distinct_picks(rng, n_institutions, inst_count)
                            .into_iter()
                            .map(|jx| json!({ "id": format!("I{}", jx + 1) }))
                            .collect();
                    json!({
                        "author_position": position,
                        "author": { "id": format!("A{}", ix + 1) },
                        "institutions": institutions,
                    })
                })
                .collect(),
        );
        if rng.random_bool(0.8) {
            record["primary_location"] =
                json!({ "source": { "id": format!("S{}", rng.random_range(1..=n_sources)) } });
        }
        if rng.random_bool(0.4) {
            record["license"] = json!(*pick(rng, &LICENSES));
        }
        if let Some(counts) = gen_counts_by_year(rng, 3) {
            record["counts_by_year"] = counts;
        }

        // stale twins that a correct reader must ignore
        if rng.random_bool(cfg.edge_case_rate * 0.15) {
            let mut stale = record.clone();
            stale["display_name"] = json!(format!("STALE {}", gen_title(rng)));
            stale["cited_by_count"] = json!(999_999);
            stale_old_date.push(stale);
        }
        if rng.random_bool(cfg.edge_case_rate * 0.1) {
            let mut stale = record.clone();
            stale["display_name"] = json!("STALE same part copy");
            stale_same_part.push((works.len(), stale));
        }
        works.push(record);
    }

    Universe {
        works,
        authors,
        sources,
        institutions,
        concepts,
        publishers,
        stale_old_date,
        stale_same_part,
        edge_case_works,
    }
}

fn write_part(path: &Path, records: &[&Value]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = File::create(path)?;
    let mut gz = GzEncoder::new(file, Compression::new(6));
    for record in records {
        let line = serde_json::to_string(record).map_err(io::Error::other)?;
        gz.write_all(line.as_bytes())?;
        gz.write_all(b"\n")?;
    }
    gz.finish()?;
    Ok(())
}

fn chunk_bounds(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let parts = parts.min(len.max(1)).max(1);
    let base = len / parts;
    let extra = len % parts;
    let mut bounds = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let size = base + usize::from(i < extra);
        bounds.push((start, start + size));
        start += size;
    }
    bounds
}

fn write_snapshot(root: &Path, universe: &Universe) -> io::Result<()> {
    let data = root.join("data");
    if data.exists() {
        fs::remove_dir_all(&data)?;
    }

    let works_dir = data.join("works").join(format!("updated_date={DATE_CURRENT}"));
    let work_parts = universe.works.len().div_ceil(25).clamp(1, 4);
    for (seq, (start, end)) in chunk_bounds(universe.works.len(), work_parts).into_iter().enumerate() {
        let mut records: Vec<&Value> = universe.works[start..end].iter().collect();
        for (winner_ix, stale) in &universe.stale_same_part {
            if (start..end).contains(winner_ix) {
                records.push(stale);
            }
        }
        write_part(&works_dir.join(format!("part_{seq:03}.gz")), &records)?;
    }
    if !universe.stale_old_date.is_empty() {
        let stale_dir = data.join("works").join(format!("updated_date={DATE_STALE}"));
        let records: Vec<&Value> = universe.stale_old_date.iter().collect();
        write_part(&stale_dir.join("part_000.gz"), &records)?;
    }

    let author_dir = data.join("authors").join(format!("updated_date={DATE_CURRENT}"));
    for (seq, (start, end)) in chunk_bounds(universe.authors.len(), 2).into_iter().enumerate() {
        let records: Vec<&Value> = universe.authors[start..end].iter().collect();
        write_part(&author_dir.join(format!("part_{seq:03}.gz")), &records)?;
    }

    for (plural, records) in [
        ("sources", &universe.sources),
        ("institutions", &universe.institutions),
        ("concepts", &universe.concepts),
        ("publishers", &universe.publishers),
    ] {
        let dir = data.join(plural).join(format!("updated_date={DATE_CURRENT}"));
        let refs: Vec<&Value> = records.iter().collect();
        write_part(&dir.join("part_000.gz"), &refs)?;
    }
    Ok(())
}

/// The cleaning contract for free text, restated for the answer key.
fn mirror_clean(raw: &str) -> String {
    let mut mapped = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\n' | '\r' => mapped.push(' '),
            '\u{0}'..='\u{8}' | '\u{b}'..='\u{1f}' | '\u{7f}' => {}
            _ => mapped.push(c),
        }
    }
    let trimmed = mapped.trim();
    let mut out = String::with_capacity(trimmed.len());
    let mut in_run = false;
    for c in trimmed.chars() {
        if c == ' ' {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out
}

fn has_clean_string(record: &Value, field: &str) -> bool {
    record.get(field).and_then(Value::as_str).is_some_and(|s| !mirror_clean(s).is_empty())
}

fn array_len(record: &Value, field: &str) -> u64 {
    record.get(field).and_then(Value::as_array).map_or(0, |a| a.len() as u64)
}

fn present(record: &Value, field: &str) -> u64 {
    u64::from(record.get(field).is_some())
}

fn counts_by_year_statements(record: &Value) -> u64 {
    let Some(entries) = record.get("counts_by_year").and_then(Value::as_array) else { return 0 };
    entries
        .iter()
        .map(|e| 3 + present(e, "works_count") + present(e, "cited_by_count"))
        .sum()
}

fn count_work(record: &Value) -> u64 {
    let mut n = 1;
    n += u64::from(has_clean_string(record, "display_name"));
    if let Some(ix) = record.get("abstract_inverted_index").and_then(Value::as_object) {
        n += u64::from(!ix.is_empty());
    }
    n += present(record, "publication_date");
    n += present(record, "publication_year");
    n += present(record, "cited_by_count");
    if let Some(ids) = record.get("ids") {
        n += present(ids, "pmid");
        n += present(ids, "doi");
    }
    n += array_len(record, "referenced_works");
    n += array_len(record, "concepts");
    if let Some(authorships) = record.get("authorships").and_then(Value::as_array) {
        for a in authorships {
            n += 2 + present(a, "author_position") + 1 + array_len(a, "institutions");
        }
    }
    if record.get("primary_location").and_then(|l| l.get("source")).is_some() {
        n += 1;
    }
    n += u64::from(has_clean_string(record, "license"));
    n + counts_by_year_statements(record)
}

fn count_author(record: &Value) -> u64 {
    let mut n = 1;
    n += u64::from(has_clean_string(record, "display_name"));
    n += present(record, "works_count");
    n += present(record, "cited_by_count");
    n += present(record, "last_known_institution");
    if let Some(ids) = record.get("ids") {
        n += present(ids, "wikidata");
    }
    n + counts_by_year_statements(record)
}

fn count_source(record: &Value) -> u64 {
    let mut n = 1;
    n += u64::from(has_clean_string(record, "display_name"));
    n += array_len(record, "issn");
    n += present(record, "host_organization");
    n + counts_by_year_statements(record)
}

fn count_institution(record: &Value) -> u64 {
    let mut n = 1;
    n += u64::from(has_clean_string(record, "display_name"));
    n += present(record, "country_code");
    n += present(record, "type");
    if let Some(geo) = record.get("geo") {
        n += 2;
        for member in ["city", "country", "latitude", "longitude"] {
            n += present(geo, member);
        }
    }
    n += array_len(record, "display_name_acronyms");
    n + counts_by_year_statements(record)
}

fn count_concept(record: &Value) -> u64 {
    let mut n = 1;
    n += u64::from(has_clean_string(record, "display_name"));
    let own_level = record.get("level").and_then(Value::as_i64);
    if let (Some(own), Some(ancestors)) = (own_level, record.get("ancestors").and_then(Value::as_array)) {
        n += ancestors
            .iter()
            .filter(|a| a.get("level").and_then(Value::as_i64) == Some(own - 1))
            .count() as u64;
    }
    n += array_len(record, "related_concepts");
    n += u64::from(has_clean_string(record, "description"));
    n += present(record, "wikidata");
    n += present(record, "level");
    n + counts_by_year_statements(record)
}

fn count_publisher(record: &Value) -> u64 {
    let mut n = 1;
    n += u64::from(has_clean_string(record, "display_name"));
    n += array_len(record, "country_codes");
    n + counts_by_year_statements(record)
}

fn analyze(universe: &Universe, cfg: &GenConfig) -> Expected {
    let mut entity_counts = BTreeMap::new();
    let mut statements_by_kind = BTreeMap::new();
    let groups: [(&str, &Vec<Value>, fn(&Value) -> u64); 6] = [
        ("works", &universe.works, count_work),
        ("authors", &universe.authors, count_author),
        ("sources", &universe.sources, count_source),
        ("institutions", &universe.institutions, count_institution),
        ("concepts", &universe.concepts, count_concept),
        ("publishers", &universe.publishers, count_publisher),
    ];
    for (plural, records, counter) in groups {
        entity_counts.insert(plural.to_string(), records.len() as u64);
        statements_by_kind.insert(plural.to_string(), records.iter().map(counter).sum());
    }
    let statement_total = statements_by_kind.values().sum();

    let author_names: BTreeMap<&str, String> = universe
        .authors
        .iter()
        .map(|a| (a["id"].as_str().expect("generated ids are strings"), mirror_clean(a["display_name"].as_str().unwrap_or(""))))
        .collect();

    // most cited works carrying the first anchor concept
    let mut top_rows: BTreeMap<(String, i64, String), String> = BTreeMap::new();
    for work in &universe.works {
        let Some(raw_title) = work.get("display_name").and_then(Value::as_str) else { continue };
        let title = mirror_clean(raw_title);
        if title.is_empty() {
            continue;
        }
        let tagged = work
            .get("concepts")
            .and_then(Value::as_array)
            .is_some_and(|cs| cs.iter().any(|c| c.get("id").and_then(Value::as_str) == Some("C1")));
        if !tagged {
            continue;
        }
        let Some(count) = work.get("cited_by_count").and_then(Value::as_i64) else { continue };
        let Some(authorships) = work.get("authorships").and_then(Value::as_array) else { continue };
        let work_iri = format!(
            "https://semopenalex.org/work/{}",
            work["id"].as_str().expect("generated ids are strings")
        );
        for authorship in authorships {
            if authorship.get("author_position").and_then(Value::as_str) != Some("first") {
                continue;
            }
            let Some(author_id) = authorship.get("author").and_then(|a| a.get("id")).and_then(Value::as_str)
            else {
                continue;
            };
            let Some(name) = author_names.get(author_id) else { continue };
            if name.is_empty() {
                continue;
            }
            let key = (title.clone(), count, name.clone());
            top_rows
                .entry(key)
                .and_modify(|iri| {
                    if work_iri < *iri {
                        *iri = work_iri.clone();
                    }
                })
                .or_insert_with(|| work_iri.clone());
        }
    }
    let mut listed: Vec<((String, i64, String), String)> = top_rows.into_iter().collect();
    listed.sort_by(|a, b| b.0 .1.cmp(&a.0 .1).then_with(|| a.0 .0.cmp(&b.0 .0)).then_with(|| a.1.cmp(&b.1)));
    let top_cited = TopCitedExpectation {
        concept: ANCHOR_CONCEPTS[0].to_string(),
        limit: cfg.top_limit,
        rows: listed
            .into_iter()
            .take(cfg.top_limit)
            .map(|((title, cited_by_count, first_author), _)| TopCitedRow { title, cited_by_count, first_author })
            .collect(),
    };

    // publication trend of the anchor institution
    let anchored_authors: BTreeSet<&str> = universe
        .authors
        .iter()
        .filter(|a| a.get("last_known_institution").and_then(Value::as_str) == Some("I1"))
        .map(|a| a["id"].as_str().expect("generated ids are strings"))
        .collect();
    let mut cells = Vec::new();
    for (concept_ix, label) in ANCHOR_CONCEPTS.iter().enumerate() {
        let concept_id = format!("C{}", concept_ix + 1);
        let mut by_year: BTreeMap<i32, u64> = BTreeMap::new();
        for work in &universe.works {
            let tagged = work.get("concepts").and_then(Value::as_array).is_some_and(|cs| {
                cs.iter().any(|c| c.get("id").and_then(Value::as_str) == Some(concept_id.as_str()))
            });
            if !tagged {
                continue;
            }
            let Some(year) = work.get("publication_year").and_then(Value::as_i64) else { continue };
            let anchored = work.get("authorships").and_then(Value::as_array).is_some_and(|auths| {
                auths.iter().any(|a| {
                    a.get("author")
                        .and_then(|v| v.get("id"))
                        .and_then(Value::as_str)
                        .is_some_and(|id| anchored_authors.contains(id))
                })
            });
            if anchored {
                *by_year.entry(year as i32).or_default() += 1;
            }
        }
        for year in cfg.trend_years.0..=cfg.trend_years.1 {
            cells.push(TrendCell {
                concept: label.to_string(),
                year,
                works: by_year.get(&year).copied().unwrap_or(0),
            });
        }
    }
    let trend = TrendExpectation {
        institution: ANCHOR_INSTITUTION.to_string(),
        concepts: ANCHOR_CONCEPTS.iter().map(|s| s.to_string()).collect(),
        from: cfg.trend_years.0,
        to: cfg.trend_years.1,
        cells,
    };

    let mut by_country: BTreeMap<String, u64> = BTreeMap::new();
    let mut by_type: BTreeMap<String, u64> = BTreeMap::new();
    for inst in &universe.institutions {
        if let Some(code) = inst.get("country_code").and_then(Value::as_str) {
            *by_country.entry(code.to_string()).or_default() += 1;
        }
        if let Some(kind) = inst.get("type").and_then(Value::as_str) {
            *by_type.entry(kind.to_string()).or_default() += 1;
        }
    }
    let order = |counts: BTreeMap<String, u64>| {
        let mut rows: Vec<CountRow> =
            counts.into_iter().map(|(label, count)| CountRow { label, count }).collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
        rows
    };

    Expected {
        seed: cfg.seed,
        works: cfg.works,
        edge_case_rate: cfg.edge_case_rate,
        entity_counts,
        statements_by_kind,
        statement_total,
        top_cited,
        trend,
        institutions_by_country: order(by_country),
        institution_types: order(by_type),
        stale_records: (universe.stale_old_date.len() + universe.stale_same_part.len()) as u64,
        edge_case_works: universe.edge_case_works,
    }
}

/// Generates a snapshot under `root/data` and writes `root/expected.json`.
pub fn generate(root: &Path, cfg: &GenConfig) -> io::Result<Expected> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let universe = build_universe(&mut rng, cfg);
    write_snapshot(root, &universe)?;
    let expected = analyze(&universe, cfg);
    let text = serde_json::to_string_pretty(&expected).map_err(io::Error::other)?;
    fs::write(expected_path(root), text)?;
    Ok(expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest;
    use crate::mapping::{map_entity, MappingTable};
    use crate::store::TripleIndex;

    fn dir_digest(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                    files.push((rel, fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = GenConfig { works: 60, ..GenConfig::default() };
        let ea = generate(a.path(), &cfg).unwrap();
        let eb = generate(b.path(), &cfg).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(dir_digest(a.path()), dir_digest(b.path()));

        let c = tempfile::tempdir().unwrap();
        let ec = generate(c.path(), &GenConfig { seed: 43, works: 60, ..GenConfig::default() }).unwrap();
        assert_ne!(ea, ec);
    }

    #[test]
    fn answer_key_matches_conversion_and_queries() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { seed: 7, works: 150, edge_case_rate: 0.4, ..GenConfig::default() };
        let expected = generate(dir.path(), &cfg).unwrap();
        assert!(expected.stale_records > 0, "want stale twins in this sample");
        assert!(expected.edge_case_works > 0);

        let layout = ingest::discover(dir.path()).unwrap();
        let (records, malformed) = ingest::dedupe_latest(&layout.parts).unwrap();
        assert!(malformed.is_empty());

        let table = MappingTable::standard();
        let mut by_kind: BTreeMap<String, u64> = BTreeMap::new();
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut index = TripleIndex::new();
        let mut total = 0u64;
        for record in &records {
            let out = map_entity(record, table).expect("sample records all map");
            *by_kind.entry(record.kind.plural().to_string()).or_default() += out.quads.len() as u64;
            *counts.entry(record.kind.plural().to_string()).or_default() += 1;
            total += out.quads.len() as u64;
            for quad in &out.quads {
                index.insert(&quad.subject, &quad.predicate, &quad.object, Some(&quad.graph));
            }
        }
        index.finalize();

        assert_eq!(counts, expected.entity_counts);
        assert_eq!(by_kind, expected.statements_by_kind);
        assert_eq!(total, expected.statement_total);
        assert_eq!(index.len(), expected.statement_total, "no duplicate statements in the sample");

        let rows = index.query_top_cited_by_concept(&expected.top_cited.concept, expected.top_cited.limit);
        assert_eq!(rows, expected.top_cited.rows);

        let cells = index.query_trend(
            &expected.trend.institution,
            &expected.trend.concepts,
            expected.trend.from..=expected.trend.to,
        );
        assert_eq!(cells, expected.trend.cells);

        let stats = index.report_stats();
        assert_eq!(stats.entities, expected.entity_counts);
        assert_eq!(stats.institutions_by_country, expected.institutions_by_country);
        assert_eq!(stats.institution_types, expected.institution_types);

        let reread = read_expected(dir.path()).unwrap();
        assert_eq!(reread, expected);
    }

    #[test]
    fn zero_rate_means_no_edge_cases() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { seed: 9, works: 40, edge_case_rate: 0.0, ..GenConfig::default() };
        let expected = generate(dir.path(), &cfg).unwrap();
        assert_eq!(expected.edge_case_works, 0);
        assert_eq!(expected.stale_records, 0);
        let stale = dir.path().join("data/works").join(format!("updated_date={DATE_STALE}"));
        assert!(!stale.exists());
    }
}
