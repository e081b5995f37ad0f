//! In-memory quad store with three sorted indexes.
//!
//! Terms are interned once; statements live as id tuples sorted in
//! subject, predicate and object major order, so any basic graph pattern
//! can bind through a prefix range scan. Results are returned in a
//! content-determined order: the same data gives the same rows no matter
//! how the files were sharded or which worker wrote them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityKind, Iri, Literal, Term, Triple};
use crate::parse::{open_statement_file, ParseIssue};
use crate::vocab;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Open(#[from] crate::parse::FileOpenError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// What happened while loading a batch of part files.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub statements_read: u64,
    pub duplicates: u64,
    pub line_issues: Vec<String>,
}

const NO_GRAPH: u32 = u32::MAX;

#[derive(Debug, Default)]
pub struct TripleIndex {
    terms: Vec<Term>,
    ids: HashMap<Term, u32>,
    raw: Vec<[u32; 4]>,
    spo: Vec<[u32; 4]>,
    pos: Vec<[u32; 4]>,
    osp: Vec<[u32; 4]>,
    sorted: bool,
}

/// One triple pattern position: a variable or a concrete term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PTerm {
    Var(String),
    Bound(Term),
}

impl PTerm {
    pub fn var(name: &str) -> PTerm {
        PTerm::Var(name.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Pattern {
    pub subject: PTerm,
    pub predicate: PTerm,
    pub object: PTerm,
}

impl Pattern {
    pub fn new(subject: PTerm, predicate: PTerm, object: PTerm) -> Pattern {
        Pattern { subject, predicate, object }
    }

    fn slots(&self) -> [&PTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

pub type Binding = BTreeMap<String, Term>;

impl TripleIndex {
    pub fn new() -> TripleIndex {
        TripleIndex::default()
    }

    fn intern(&mut self, term: &Term) -> u32 {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = u32::try_from(self.terms.len()).expect("term dictionary fits in u32");
        assert_ne!(id, NO_GRAPH, "term dictionary full");
        self.terms.push(term.clone());
        self.ids.insert(term.clone(), id);
        id
    }

    fn id_of(&self, term: &Term) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub fn term_known(&self, term: &Term) -> bool {
        self.ids.contains_key(term)
    }

    pub fn insert(&mut self, subject: &Iri, predicate: &Iri, object: &Term, graph: Option<&Iri>) {
        let s = self.intern(&Term::Iri(subject.clone()));
        let p = self.intern(&Term::Iri(predicate.clone()));
        let o = self.intern(object);
        let g = match graph {
            Some(g) => self.intern(&Term::Iri(g.clone())),
            None => NO_GRAPH,
        };
        self.raw.push([s, p, o, g]);
        self.sorted = false;
    }

    /// Sorts and deduplicates. Loading calls this; manual inserts need it
    /// before querying.
    pub fn finalize(&mut self) -> u64 {
        if self.sorted {
            return 0;
        }
        let before = self.raw.len();
        self.raw.sort_unstable();
        self.raw.dedup();
        let duplicates = (before - self.raw.len()) as u64;
        self.spo = self.raw.clone();
        self.pos = self.raw.iter().map(|&[s, p, o, g]| [p, o, s, g]).collect();
        self.pos.sort_unstable();
        self.osp = self.raw.iter().map(|&[s, p, o, g]| [o, s, p, g]).collect();
        self.osp.sort_unstable();
        self.sorted = true;
        duplicates
    }

    pub fn len(&self) -> u64 {
        self.raw.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Distinct (subject, predicate, object) triples, graph collapsed,
    /// in sorted id order.
    pub fn distinct_triples(&self) -> impl Iterator<Item = (&Term, &Term, &Term)> {
        debug_assert!(self.sorted);
        let mut last: Option<[u32; 3]> = None;
        self.spo.iter().filter_map(move |&[s, p, o, _]| {
            if last == Some([s, p, o]) {
                return None;
            }
            last = Some([s, p, o]);
            Some((
                &self.terms[s as usize],
                &self.terms[p as usize],
                &self.terms[o as usize],
            ))
        })
    }

    /// Reads one part file into the index; returns how many statements it
    /// held. Call `finalize` after the last file.
    pub fn load_path(&mut self, path: &Path, report: &mut LoadReport) -> Result<u64, StoreError> {
        let reader = open_statement_file(path)?;
        let mut read = 0u64;
        for item in reader {
            match item {
                Ok(st) => {
                    self.insert(&st.subject, &st.predicate, &st.object, st.graph.as_ref());
                    read += 1;
                }
                Err(ParseIssue::Line { line, message }) => {
                    report.line_issues.push(format!("{}:{line}: {message}", path.display()));
                }
                Err(ParseIssue::Io { source, .. }) => {
                    return Err(StoreError::Io { path: path.to_path_buf(), source });
                }
            }
        }
        report.statements_read += read;
        Ok(read)
    }

    pub fn load_files<I>(paths: I) -> Result<(TripleIndex, LoadReport), StoreError>
    where
        I: IntoIterator,
        I::Item: AsRef<Path>,
    {
        let mut index = TripleIndex::new();
        let mut report = LoadReport::default();
        for path in paths {
            index.load_path(path.as_ref(), &mut report)?;
        }
        report.duplicates = index.finalize();
        Ok((index, report))
    }

    fn range<'a>(rows: &'a [[u32; 4]], prefix: &[u32]) -> &'a [[u32; 4]] {
        let k = prefix.len();
        let lo = rows.partition_point(|r| &r[..k] < prefix);
        let hi = rows.partition_point(|r| &r[..k] <= prefix);
        &rows[lo..hi]
    }

    /// All distinct triples matching the given concrete slots, as
    /// (subject, predicate, object) id rows.
    fn scan(&self, s: Option<u32>, p: Option<u32>, o: Option<u32>) -> Vec<[u32; 3]> {
        debug_assert!(self.sorted, "finalize before querying");
        let (rows, prefix, unshuffle): (&[[u32; 4]], Vec<u32>, fn(&[u32; 4]) -> [u32; 3]) =
            match (s, p, o) {
                (Some(s), Some(p), Some(o)) => (&self.spo, vec![s, p, o], |r| [r[0], r[1], r[2]]),
                (Some(s), Some(p), None) => (&self.spo, vec![s, p], |r| [r[0], r[1], r[2]]),
                (Some(s), None, Some(o)) => (&self.osp, vec![o, s], |r| [r[1], r[2], r[0]]),
                (Some(s), None, None) => (&self.spo, vec![s], |r| [r[0], r[1], r[2]]),
                (None, Some(p), Some(o)) => (&self.pos, vec![p, o], |r| [r[2], r[0], r[1]]),
                (None, Some(p), None) => (&self.pos, vec![p], |r| [r[2], r[0], r[1]]),
                (None, None, Some(o)) => (&self.osp, vec![o], |r| [r[1], r[2], r[0]]),
                (None, None, None) => (&self.spo, vec![], |r| [r[0], r[1], r[2]]),
            };
        let slice = Self::range(rows, &prefix);
        let mut out = Vec::with_capacity(slice.len());
        let mut last: Option<[u32; 3]> = None;
        for row in slice {
            let triple = [row[0], row[1], row[2]];
            if last != Some(triple) {
                out.push(unshuffle(row));
                last = Some(triple);
            }
        }
        out
    }

    fn scan_estimate(&self, s: Option<u32>, p: Option<u32>, o: Option<u32>) -> usize {
        let (rows, prefix): (&[[u32; 4]], Vec<u32>) = match (s, p, o) {
            (Some(s), Some(p), Some(o)) => (&self.spo, vec![s, p, o]),
            (Some(s), Some(p), None) => (&self.spo, vec![s, p]),
            (Some(s), None, Some(o)) => (&self.osp, vec![o, s]),
            (Some(s), None, None) => (&self.spo, vec![s]),
            (None, Some(p), Some(o)) => (&self.pos, vec![p, o]),
            (None, Some(p), None) => (&self.pos, vec![p]),
            (None, None, Some(o)) => (&self.osp, vec![o]),
            (None, None, None) => (&self.spo, vec![]),
        };
        Self::range(rows, &prefix).len()
    }

    fn slot_id(&self, pt: &PTerm, env: &BTreeMap<String, u32>) -> SlotState {
        match pt {
            PTerm::Var(name) => match env.get(name) {
                Some(&id) => SlotState::Fixed(id),
                None => SlotState::Open(name.clone()),
            },
            PTerm::Bound(term) => match self.id_of(term) {
                Some(id) => SlotState::Fixed(id),
                None => SlotState::Unmatchable,
            },
        }
    }

    /// Distinct solutions of a basic graph pattern, in a deterministic
    /// order. An empty pattern list has one empty solution.
    pub fn matches(&self, patterns: &[Pattern]) -> Vec<Binding> {
        assert!(self.sorted, "finalize before querying");
        // Cheapest-first join: most constant positions, then narrowest
        // constant range, then listing order.
        let cost: Vec<(usize, usize)> = patterns
            .iter()
            .map(|pat| {
                let ids: Vec<Option<u32>> = pat
                    .slots()
                    .iter()
                    .map(|slot| match slot {
                        PTerm::Bound(term) => self.id_of(term),
                        PTerm::Var(_) => None,
                    })
                    .collect();
                let bound = pat.slots().iter().filter(|s| matches!(s, PTerm::Bound(_))).count();
                (bound, self.scan_estimate(ids[0], ids[1], ids[2]))
            })
            .collect();

        let mut remaining: Vec<usize> = (0..patterns.len()).collect();
        let mut env_rows: Vec<BTreeMap<String, u32>> = vec![BTreeMap::new()];
        let mut known: BTreeSet<String> = BTreeSet::new();

        while !remaining.is_empty() {
            let mut best = 0usize;
            let mut best_key = (0usize, usize::MAX, usize::MAX);
            for (slot, &ix) in remaining.iter().enumerate() {
                let fixed = patterns[ix]
                    .slots()
                    .iter()
                    .filter(|s| match s {
                        PTerm::Bound(_) => true,
                        PTerm::Var(name) => known.contains(name.as_str()),
                    })
                    .count();
                let key = (fixed, cost[ix].1, ix);
                let better = key.0 > best_key.0
                    || (key.0 == best_key.0 && (key.1, key.2) < (best_key.1, best_key.2));
                if slot == 0 || better {
                    best = slot;
                    best_key = key;
                }
            }
            let ix = remaining.remove(best);
            let pattern = &patterns[ix];

            let mut next_rows = Vec::new();
            'rows: for env in &env_rows {
                let states: Vec<SlotState> =
                    pattern.slots().iter().map(|slot| self.slot_id(slot, env)).collect();
                if states.iter().any(|s| matches!(s, SlotState::Unmatchable)) {
                    continue 'rows;
                }
                let fixed = |s: &SlotState| match s {
                    SlotState::Fixed(id) => Some(*id),
                    _ => None,
                };
                for row in self.scan(fixed(&states[0]), fixed(&states[1]), fixed(&states[2])) {
                    let mut extended = env.clone();
                    let mut ok = true;
                    for (state, value) in states.iter().zip(row) {
                        if let SlotState::Open(name) = state {
                            match extended.get(name.as_str()) {
                                Some(&prev) if prev != value => {
                                    ok = false;
                                    break;
                                }
                                Some(_) => {}
                                None => {
                                    extended.insert(name.clone(), value);
                                }
                            }
                        }
                    }
                    if ok {
                        next_rows.push(extended);
                    }
                }
            }
            env_rows = next_rows;
            for slot in pattern.slots() {
                if let PTerm::Var(name) = slot {
                    known.insert(name.clone());
                }
            }
            if env_rows.is_empty() {
                return Vec::new();
            }
        }

        let distinct: BTreeSet<Binding> = env_rows
            .into_iter()
            .map(|env| {
                env.into_iter().map(|(name, id)| (name, self.terms[id as usize].clone())).collect()
            })
            .collect();
        distinct.into_iter().collect()
    }
}

enum SlotState {
    Fixed(u32),
    Open(String),
    Unmatchable,
}

impl TripleIndex {
    /// Entity IRIs that appear as objects but have no type statement of
    /// their own. Citations into parts of the corpus that were not
    /// converted are normal, so this is informational.
    pub fn dangling_entity_objects(&self) -> Vec<Iri> {
        let type_id = self.id_of(&Term::Iri(vocab::rdf_type()));
        let mut out = Vec::new();
        let mut last = None;
        for row in &self.osp {
            let object = row[0];
            if last == Some(object) {
                continue;
            }
            last = Some(object);
            if let Term::Iri(iri) = &self.terms[object as usize] {
                if iri.entity_id().is_some() {
                    let typed =
                        type_id.is_some_and(|p| !Self::range(&self.spo, &[object, p]).is_empty());
                    if !typed {
                        out.push(iri.clone());
                    }
                }
            }
        }
        out
    }
}

/// One row of the most-cited-works listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopCitedRow {
    pub title: String,
    pub cited_by_count: i64,
    pub first_author: String,
}

/// One cell of an institution publication trend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendCell {
    pub concept: String,
    pub year: i32,
    pub works: u64,
}

fn string_term(value: &str) -> Term {
    Term::Literal(Literal::string(value))
}

fn lexical(term: &Term) -> Option<&str> {
    match term {
        Term::Literal(l) => Some(&l.lexical),
        Term::Iri(_) => None,
    }
}

impl TripleIndex {
    /// Most cited works tagged with a concept, with their first author.
    /// Rows are distinct (title, count, author) combinations ordered by
    /// count descending, then title, then the smallest work IRI carrying
    /// the row.
    pub fn query_top_cited_by_concept(&self, concept_label: &str, limit: usize) -> Vec<TopCitedRow> {
        let patterns = vec![
            Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::soa_has_concept().into()), PTerm::var("concept")),
            Pattern::new(PTerm::var("concept"), PTerm::Bound(vocab::skos_pref_label().into()), PTerm::Bound(string_term(concept_label))),
            Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::dcterms_title().into()), PTerm::var("title")),
            Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::soa_cited_by_count().into()), PTerm::var("cited")),
            Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::soa_has_author_position().into()), PTerm::var("position")),
            Pattern::new(PTerm::var("position"), PTerm::Bound(vocab::soa_position().into()), PTerm::Bound(string_term("first"))),
            Pattern::new(PTerm::var("position"), PTerm::Bound(vocab::soa_has_author().into()), PTerm::var("author")),
            Pattern::new(PTerm::var("author"), PTerm::Bound(vocab::foaf_name().into()), PTerm::var("name")),
        ];
        let mut rows: BTreeMap<(String, i64, String), Term> = BTreeMap::new();
        for binding in self.matches(&patterns) {
            let title = lexical(&binding["title"]).map(str::to_string);
            let count = lexical(&binding["cited"]).and_then(|s| s.parse::<i64>().ok());
            let name = lexical(&binding["name"]).map(str::to_string);
            let (Some(title), Some(count), Some(name)) = (title, count, name) else { continue };
            let work = binding["work"].clone();
            rows.entry((title, count, name))
                .and_modify(|w| {
                    if work < *w {
                        *w = work.clone();
                    }
                })
                .or_insert(work);
        }
        let mut listed: Vec<((String, i64, String), Term)> = rows.into_iter().collect();
        listed.sort_by(|a, b| {
            b.0 .1.cmp(&a.0 .1).then_with(|| a.0 .0.cmp(&b.0 .0)).then_with(|| a.1.cmp(&b.1))
        });
        listed
            .into_iter()
            .take(limit)
            .map(|((title, cited_by_count, first_author), _)| TopCitedRow { title, cited_by_count, first_author })
            .collect()
    }

    /// Works per (concept, year) for one institution, zero filled over
    /// the year range, concept major in the order given.
    pub fn query_trend(
        &self,
        institution_name: &str,
        concept_labels: &[String],
        years: RangeInclusive<i32>,
    ) -> Vec<TrendCell> {
        let mut cells = Vec::new();
        for label in concept_labels {
            let patterns = vec![
                Pattern::new(PTerm::var("inst"), PTerm::Bound(vocab::foaf_name().into()), PTerm::Bound(string_term(institution_name))),
                Pattern::new(PTerm::var("author"), PTerm::Bound(vocab::org_member_of().into()), PTerm::var("inst")),
                Pattern::new(PTerm::var("position"), PTerm::Bound(vocab::soa_has_author().into()), PTerm::var("author")),
                Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::soa_has_author_position().into()), PTerm::var("position")),
                Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::soa_has_concept().into()), PTerm::var("concept")),
                Pattern::new(PTerm::var("concept"), PTerm::Bound(vocab::skos_pref_label().into()), PTerm::Bound(string_term(label))),
                Pattern::new(PTerm::var("work"), PTerm::Bound(vocab::fabio_has_publication_year().into()), PTerm::var("year")),
            ];
            let mut by_year: BTreeMap<i32, BTreeSet<Term>> = BTreeMap::new();
            for binding in self.matches(&patterns) {
                let Some(year) = lexical(&binding["year"]).and_then(|s| s.parse::<i32>().ok()) else {
                    continue;
                };
                by_year.entry(year).or_default().insert(binding["work"].clone());
            }
            for year in years.clone() {
                let works = by_year.get(&year).map_or(0, |s| s.len() as u64);
                cells.push(TrendCell { concept: label.clone(), year, works });
            }
        }
        cells
    }
}

/// Sizes that a full public release of the dataset reached, for scale
/// context in reports.
pub const RELEASE_REFERENCE: [(EntityKind, u64); 6] = [
    (EntityKind::Work, 249_450_604),
    (EntityKind::Author, 135_360_159),
    (EntityKind::Source, 226_413),
    (EntityKind::Institution, 108_618),
    (EntityKind::Concept, 65_073),
    (EntityKind::Publisher, 7_017),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub label: String,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub statements: u64,
    pub entities: BTreeMap<String, u64>,
    pub institutions_by_country: Vec<CountRow>,
    pub institution_types: Vec<CountRow>,
    pub release_reference: BTreeMap<String, u64>,
}

fn histogram_rows(counts: HashMap<String, u64>) -> Vec<CountRow> {
    let mut rows: Vec<CountRow> =
        counts.into_iter().map(|(label, count)| CountRow { label, count }).collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    rows
}

impl TripleIndex {
    fn typed_subjects(&self, class: &Iri) -> Vec<u32> {
        let Some(p) = self.id_of(&Term::Iri(vocab::rdf_type())) else { return Vec::new() };
        let Some(o) = self.id_of(&Term::Iri(class.clone())) else { return Vec::new() };
        self.scan(None, Some(p), Some(o)).into_iter().map(|row| row[0]).collect()
    }

    fn first_literal_of(&self, subject: u32, predicate: &Iri) -> Option<&str> {
        let p = self.id_of(&Term::Iri(predicate.clone()))?;
        let row = self.scan(Some(subject), Some(p), None).into_iter().next()?;
        lexical(&self.terms[row[2] as usize])
    }

    pub fn report_stats(&self) -> StatsReport {
        let table = crate::mapping::MappingTable::standard();
        let mut entities = BTreeMap::new();
        for kind in EntityKind::ALL {
            let count = self.typed_subjects(&table.class_of(kind)).len() as u64;
            entities.insert(kind.plural().to_string(), count);
        }

        let mut by_country: HashMap<String, u64> = HashMap::new();
        let mut by_type: HashMap<String, u64> = HashMap::new();
        for inst in self.typed_subjects(&table.class_of(EntityKind::Institution)) {
            if let Some(code) = self.first_literal_of(inst, &vocab::soa_country_code()) {
                *by_country.entry(code.to_string()).or_default() += 1;
            }
            if let Some(kind) = self.first_literal_of(inst, &vocab::soa_ror_type()) {
                *by_type.entry(kind.to_string()).or_default() += 1;
            }
        }

        StatsReport {
            statements: self.len(),
            entities,
            institutions_by_country: histogram_rows(by_country),
            institution_types: histogram_rows(by_type),
            release_reference: RELEASE_REFERENCE
                .iter()
                .map(|(kind, count)| (kind.plural().to_string(), *count))
                .collect(),
        }
    }
}

impl std::fmt::Display for StatsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "statements {:>14}", self.statements)?;
        writeln!(f, "entities")?;
        for (kind, count) in &self.entities {
            let reference = self.release_reference.get(kind).copied().unwrap_or(0);
            writeln!(f, "  {kind:<14} {count:>12}   (full release {reference})")?;
        }
        if !self.institutions_by_country.is_empty() {
            writeln!(f, "institutions by country")?;
            for row in &self.institutions_by_country {
                writeln!(f, "  {:<14} {:>12}", row.label, row.count)?;
            }
        }
        if !self.institution_types.is_empty() {
            writeln!(f, "institution types")?;
            for row in &self.institution_types {
                writeln!(f, "  {:<14} {:>12}", row.label, row.count)?;
            }
        }
        Ok(())
    }
}

/// Everything known about one IRI: its subject statements plus the
/// closure over minted helper nodes it points at.
#[derive(Debug)]
pub struct Description {
    pub iri: Iri,
    pub known: bool,
    pub statements: Vec<(Triple, Option<Iri>)>,
}

impl TripleIndex {
    fn subject_rows(&self, id: u32) -> Vec<[u32; 4]> {
        Self::range(&self.spo, &[id]).to_vec()
    }

    pub fn describe(&self, iri: &Iri) -> Description {
        let term = Term::Iri(iri.clone());
        let known = self.term_known(&term);
        let mut statements = Vec::new();
        if let Some(start) = self.id_of(&term) {
            let mut queue = std::collections::VecDeque::from([start]);
            let mut visited = BTreeSet::from([start]);
            while let Some(node) = queue.pop_front() {
                for row in self.subject_rows(node) {
                    let triple = Triple::new(
                        match &self.terms[row[0] as usize] {
                            Term::Iri(i) => i.clone(),
                            Term::Literal(_) => unreachable!("subjects are iris"),
                        },
                        match &self.terms[row[1] as usize] {
                            Term::Iri(i) => i.clone(),
                            Term::Literal(_) => unreachable!("predicates are iris"),
                        },
                        self.terms[row[2] as usize].clone(),
                    );
                    let graph = match row[3] {
                        NO_GRAPH => None,
                        g => match &self.terms[g as usize] {
                            Term::Iri(i) => Some(i.clone()),
                            Term::Literal(_) => unreachable!("graphs are iris"),
                        },
                    };
                    if let Term::Iri(object) = &triple.object {
                        if object.is_aux() && visited.insert(row[2]) {
                            queue.push_back(row[2]);
                        }
                    }
                    statements.push((triple, graph));
                }
            }
        }
        statements.sort_by(|a, b| {
            (&a.0.predicate, &a.0.object, &a.0.subject).cmp(&(&b.0.predicate, &b.0.object, &b.0.subject))
        });
        statements.dedup();
        Description { iri: iri.clone(), known, statements }
    }
}
