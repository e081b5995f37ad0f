//! Record-to-quad mapping.
//!
//! One fixed, data-driven rule table decides which record fields become
//! which statements; changing the vocabulary means editing the table, not
//! the walker. Each record yields its `rdf:type` assertion first, then the
//! rule outputs in table order. All quads of a record land in the named
//! graph of its kind. Missing fields are skipped silently; present fields
//! with unusable values are skipped with a per-rule diagnostic; only a
//! missing or unparseable id rejects the whole record.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use chrono::NaiveDate;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::ingest::RawEntityRecord;
use crate::model::{mint_aux_iri, AuxKind, EntityId, EntityKind, Iri, Literal, Quad, Term, Triple};
use crate::normalize::{clean_literal, invert_abstract, validate_iri_candidate, CleanContext, InvertedAbstract};
use crate::vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    String,
    Integer,
    Date,
    GYear,
    Decimal,
}

impl Datatype {
    fn iri(self) -> Iri {
        match self {
            Datatype::String => vocab::xsd_string(),
            Datatype::Integer => vocab::xsd_integer(),
            Datatype::Date => vocab::xsd_date(),
            Datatype::GYear => vocab::xsd_gyear(),
            Datatype::Decimal => vocab::xsd_decimal(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ObjectSpec {
    /// Scalar field as a typed literal.
    Literal { datatype: Datatype, context: CleanContext },
    /// Entity id (bare, URL-wrapped, or `{"id": ...}`) minted to its IRI.
    EntityRef { target: Iri },
    /// Raw IRI string kept as an IRI term after validation.
    ExternalIri,
    /// Inverted abstract index to plain text.
    AbstractText,
    /// `authorships` array to author-position nodes.
    AuthorPositions,
    /// `counts_by_year` array to per-year count nodes.
    CountsByYear,
    /// `geo` object to a location node.
    GeoNode,
    /// `ancestors` entries exactly one level up.
    BroaderConcepts,
}

#[derive(Debug, Clone)]
pub struct Rule {
    /// Dot-separated field path.
    pub field: &'static str,
    /// Apply the rule to each element of the array at `field`.
    pub each: bool,
    pub predicate: Iri,
    pub object: ObjectSpec,
}

pub struct KindRules {
    pub kind: EntityKind,
    pub class: Iri,
    pub rules: Vec<Rule>,
}

pub struct MappingTable {
    pub kinds: Vec<KindRules>,
}

fn lit(field: &'static str, predicate: Iri, datatype: Datatype, context: CleanContext) -> Rule {
    Rule { field, each: false, predicate, object: ObjectSpec::Literal { datatype, context } }
}

fn lit_each(field: &'static str, predicate: Iri, context: CleanContext) -> Rule {
    Rule {
        field,
        each: true,
        predicate,
        object: ObjectSpec::Literal { datatype: Datatype::String, context },
    }
}

fn entity_ref(field: &'static str, each: bool, predicate: Iri, target: Iri) -> Rule {
    Rule { field, each, predicate, object: ObjectSpec::EntityRef { target } }
}

impl MappingTable {
    /// The fixed production table.
    pub fn standard() -> &'static MappingTable {
        static TABLE: OnceLock<MappingTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let counts = Rule {
                field: "counts_by_year",
                each: false,
                predicate: vocab::soa_counts_by_year(),
                object: ObjectSpec::CountsByYear,
            };
            MappingTable {
                kinds: vec![
                    KindRules {
                        kind: EntityKind::Work,
                        class: vocab::class_work(),
                        rules: vec![
                            lit("display_name", vocab::dcterms_title(), Datatype::String, CleanContext::Title),
                            Rule {
                                field: "abstract_inverted_index",
                                each: false,
                                predicate: vocab::dcterms_abstract(),
                                object: ObjectSpec::AbstractText,
                            },
                            lit("publication_date", vocab::dcterms_created(), Datatype::Date, CleanContext::Other),
                            lit("publication_year", vocab::fabio_has_publication_year(), Datatype::GYear, CleanContext::Other),
                            lit("cited_by_count", vocab::soa_cited_by_count(), Datatype::Integer, CleanContext::Other),
                            lit("ids.pmid", vocab::fabio_has_pubmed_id(), Datatype::String, CleanContext::Url),
                            lit("ids.doi", vocab::datacite_doi(), Datatype::String, CleanContext::Url),
                            entity_ref("referenced_works", true, vocab::cito_cites(), vocab::class_work()),
                            entity_ref("concepts", true, vocab::soa_has_concept(), vocab::skos_concept()),
                            Rule {
                                field: "authorships",
                                each: false,
                                predicate: vocab::soa_has_author_position(),
                                object: ObjectSpec::AuthorPositions,
                            },
                            entity_ref("primary_location.source", false, vocab::soa_has_host_source(), vocab::class_source()),
                            lit("license", vocab::dcterms_license(), Datatype::String, CleanContext::Other),
                            counts.clone(),
                        ],
                    },
                    KindRules {
                        kind: EntityKind::Author,
                        class: vocab::class_author(),
                        rules: vec![
                            lit("display_name", vocab::foaf_name(), Datatype::String, CleanContext::Name),
                            lit("works_count", vocab::soa_works_count(), Datatype::Integer, CleanContext::Other),
                            lit("cited_by_count", vocab::soa_cited_by_count(), Datatype::Integer, CleanContext::Other),
                            entity_ref("last_known_institution", false, vocab::org_member_of(), vocab::class_institution()),
                            Rule {
                                field: "ids.wikidata",
                                each: false,
                                predicate: vocab::owl_same_as(),
                                object: ObjectSpec::ExternalIri,
                            },
                            counts.clone(),
                        ],
                    },
                    KindRules {
                        kind: EntityKind::Source,
                        class: vocab::class_source(),
                        rules: vec![
                            lit("display_name", vocab::foaf_name(), Datatype::String, CleanContext::Name),
                            lit_each("issn", vocab::prism_issn(), CleanContext::Other),
                            entity_ref("host_organization", false, vocab::soa_has_host_organization(), vocab::class_publisher()),
                            counts.clone(),
                        ],
                    },
                    KindRules {
                        kind: EntityKind::Institution,
                        class: vocab::class_institution(),
                        rules: vec![
                            lit("display_name", vocab::foaf_name(), Datatype::String, CleanContext::Name),
                            lit("country_code", vocab::soa_country_code(), Datatype::String, CleanContext::Other),
                            lit("type", vocab::soa_ror_type(), Datatype::String, CleanContext::Other),
                            Rule {
                                field: "geo",
                                each: false,
                                predicate: vocab::soa_has_geo(),
                                object: ObjectSpec::GeoNode,
                            },
                            lit_each("display_name_acronyms", vocab::dbp_acronym(), CleanContext::Other),
                            counts.clone(),
                        ],
                    },
                    KindRules {
                        kind: EntityKind::Concept,
                        class: vocab::skos_concept(),
                        rules: vec![
                            lit("display_name", vocab::skos_pref_label(), Datatype::String, CleanContext::Name),
                            Rule {
                                field: "ancestors",
                                each: false,
                                predicate: vocab::skos_broader(),
                                object: ObjectSpec::BroaderConcepts,
                            },
                            entity_ref("related_concepts", true, vocab::skos_related(), vocab::skos_concept()),
                            lit("description", vocab::skos_note(), Datatype::String, CleanContext::Abstract),
                            Rule {
                                field: "wikidata",
                                each: false,
                                predicate: vocab::owl_same_as(),
                                object: ObjectSpec::ExternalIri,
                            },
                            lit("level", vocab::soa_level(), Datatype::Integer, CleanContext::Other),
                            counts.clone(),
                        ],
                    },
                    KindRules {
                        kind: EntityKind::Publisher,
                        class: vocab::class_publisher(),
                        rules: vec![
                            lit("display_name", vocab::foaf_name(), Datatype::String, CleanContext::Name),
                            lit_each("country_codes", vocab::dbp_country_code(), CleanContext::Other),
                            counts.clone(),
                        ],
                    },
                ],
            }
        })
    }

    pub fn for_kind(&self, kind: EntityKind) -> &KindRules {
        self.kinds.iter().find(|k| k.kind == kind).expect("table covers all kinds")
    }

    pub fn class_of(&self, kind: EntityKind) -> Iri {
        self.for_kind(kind).class.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDiagnostic {
    pub id: String,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct MappingOutput {
    pub quads: Vec<Quad>,
    pub diagnostics: Vec<RuleDiagnostic>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("rejected record {id:?} ({part}:{line}): {reason}")]
pub struct RejectedRecord {
    pub id: String,
    pub part: PathBuf,
    pub line: u64,
    pub reason: String,
}

fn lookup<'a>(fields: &'a Map<String, Value>, path: &str) -> Option<&'a Value> {
    let mut current: &Value = fields.get(path.split('.').next()?)?;
    for key in path.split('.').skip(1) {
        current = current.as_object()?.get(key)?;
    }
    match current {
        Value::Null => None,
        other => Some(other),
    }
}

fn ref_id(value: &Value) -> Option<&str> {
    match value {
        Value::String(s) => Some(s),
        Value::Object(obj) => obj.get("id").and_then(Value::as_str),
        _ => None,
    }
}

struct Emitter<'a> {
    id: &'a EntityId,
    id_text: String,
    graph: Iri,
    own_level: Option<i64>,
    out: MappingOutput,
}

impl Emitter<'_> {
    fn quad(&mut self, subject: Iri, predicate: Iri, object: impl Into<Term>) {
        self.out.quads.push(Quad::new(subject, predicate, object.into(), self.graph.clone()));
    }

    fn diag(&mut self, field: &str, reason: impl Into<String>) {
        self.out.diagnostics.push(RuleDiagnostic {
            id: self.id_text.clone(),
            field: field.to_string(),
            reason: reason.into(),
        });
    }

    fn literal(&mut self, field: &str, value: &Value, datatype: Datatype, context: CleanContext) -> Option<Literal> {
        match datatype {
            Datatype::String => {
                let Some(raw) = value.as_str() else {
                    self.diag(field, "expected a string");
                    return None;
                };
                let cleaned = clean_literal(raw, context);
                if cleaned.is_empty() {
                    return None;
                }
                Some(Literal::string(cleaned))
            }
            Datatype::Integer => match value.as_i64() {
                Some(n) => Some(Literal::typed(n.to_string(), vocab::xsd_integer())),
                None => {
                    self.diag(field, "expected an integer");
                    None
                }
            },
            Datatype::Date => {
                let parsed = value.as_str().and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok());
                match parsed {
                    Some(date) => Some(Literal::typed(date.format("%Y-%m-%d").to_string(), vocab::xsd_date())),
                    None => {
                        self.diag(field, "expected an ISO date");
                        None
                    }
                }
            }
            Datatype::GYear => match value.as_i64() {
                Some(year) if (1..=9999).contains(&year) => {
                    Some(Literal::typed(format!("{year:04}"), vocab::xsd_gyear()))
                }
                _ => {
                    self.diag(field, "expected a plausible year");
                    None
                }
            },
            Datatype::Decimal => match value.as_f64() {
                Some(x) if x.is_finite() => Some(Literal::typed(x.to_string(), vocab::xsd_decimal())),
                _ => {
                    self.diag(field, "expected a finite number");
                    None
                }
            },
        }
    }

    fn entity_iri(&mut self, field: &str, value: &Value) -> Option<Iri> {
        let Some(raw) = ref_id(value) else {
            self.diag(field, "expected an entity reference");
            return None;
        };
        match EntityId::parse_any(raw) {
            Ok(id) => Some(id.iri()),
            Err(e) => {
                self.diag(field, format!("unparseable entity reference: {e}"));
                None
            }
        }
    }

    fn apply(&mut self, rule: &Rule, value: &Value) {
        match &rule.object {
            ObjectSpec::Literal { datatype, context } => {
                if let Some(lit) = self.literal(rule.field, value, *datatype, *context) {
                    self.quad(self.id.iri(), rule.predicate.clone(), lit);
                }
            }
            ObjectSpec::EntityRef { .. } => {
                if let Some(iri) = self.entity_iri(rule.field, value) {
                    self.quad(self.id.iri(), rule.predicate.clone(), iri);
                }
            }
            ObjectSpec::ExternalIri => {
                let Some(raw) = value.as_str() else {
                    self.diag(rule.field, "expected an iri string");
                    return;
                };
                match validate_iri_candidate(raw) {
                    Ok(iri) => self.quad(self.id.iri(), rule.predicate.clone(), iri),
                    Err(e) => self.diag(rule.field, format!("rejected iri: {e}")),
                }
            }
            ObjectSpec::AbstractText => self.abstract_text(rule, value),
            ObjectSpec::AuthorPositions => self.author_positions(rule, value),
            ObjectSpec::CountsByYear => self.counts_by_year(rule, value),
            ObjectSpec::GeoNode => self.geo_node(rule, value),
            ObjectSpec::BroaderConcepts => self.broader_concepts(rule, value),
        }
    }

    fn abstract_text(&mut self, rule: &Rule, value: &Value) {
        let Some(obj) = value.as_object() else {
            self.diag(rule.field, "expected an inverted index object");
            return;
        };
        let mut index = InvertedAbstract::new();
        for (token, positions) in obj {
            if token.is_empty() {
                self.diag(rule.field, "empty token");
                continue;
            }
            let Some(array) = positions.as_array() else {
                self.diag(rule.field, format!("positions of {token:?} are not an array"));
                continue;
            };
            let mut parsed = Vec::with_capacity(array.len());
            let mut ok = true;
            for p in array {
                match p.as_u64().and_then(|v| u32::try_from(v).ok()) {
                    Some(v) => parsed.push(v),
                    None => {
                        self.diag(rule.field, format!("bad position for {token:?}"));
                        ok = false;
                        break;
                    }
                }
            }
            if ok && !parsed.is_empty() {
                index.insert(token.clone(), parsed);
            }
        }
        let (text, duplicates) = invert_abstract(&index);
        for d in duplicates {
            self.diag(
                rule.field,
                format!("position {} claimed twice: kept {:?}, dropped {:?}", d.position, d.kept, d.dropped),
            );
        }
        let cleaned = clean_literal(&text, CleanContext::Abstract);
        if !cleaned.is_empty() {
            self.quad(self.id.iri(), rule.predicate.clone(), Literal::string(cleaned));
        }
    }

    fn author_positions(&mut self, rule: &Rule, value: &Value) {
        let Some(entries) = value.as_array() else {
            self.diag(rule.field, "expected an array of authorships");
            return;
        };
        for entry in entries {
            let Some(obj) = entry.as_object() else {
                self.diag(rule.field, "authorship is not an object");
                continue;
            };
            let author = obj.get("author").and_then(ref_id).and_then(|raw| EntityId::parse_any(raw).ok());
            let Some(author) = author else {
                self.diag(rule.field, "authorship without a usable author id");
                continue;
            };
            let node = mint_aux_iri(AuxKind::AuthorPosition, &[&self.id_text, &author.to_string()])
                .expect("canonical ids are alphanumeric");
            self.quad(self.id.iri(), rule.predicate.clone(), node.clone());
            self.quad(node.clone(), vocab::rdf_type(), vocab::class_author_position());
            if let Some(position) = obj.get("author_position").and_then(Value::as_str) {
                let cleaned = clean_literal(position, CleanContext::Other);
                if !cleaned.is_empty() {
                    self.quad(node.clone(), vocab::soa_position(), Literal::string(cleaned));
                }
            }
            self.quad(node.clone(), vocab::soa_has_author(), author.iri());
            if let Some(institutions) = obj.get("institutions").and_then(Value::as_array) {
                for inst in institutions {
                    match inst.as_null() {
                        Some(()) => continue,
                        None => {}
                    }
                    if let Some(iri) = self.entity_iri("authorships.institutions", inst) {
                        self.quad(node.clone(), vocab::soa_has_organization(), iri);
                    }
                }
            }
        }
    }

    fn counts_by_year(&mut self, rule: &Rule, value: &Value) {
        let Some(entries) = value.as_array() else {
            self.diag(rule.field, "expected an array of yearly counts");
            return;
        };
        for entry in entries {
            let Some(obj) = entry.as_object() else {
                self.diag(rule.field, "yearly count is not an object");
                continue;
            };
            let Some(year) = obj.get("year").and_then(Value::as_i64).filter(|y| (1..=9999).contains(y)) else {
                self.diag(rule.field, "yearly count without a usable year");
                continue;
            };
            let node = mint_aux_iri(AuxKind::CountsByYear, &[&self.id_text, &year.to_string()])
                .expect("canonical ids and years are alphanumeric");
            self.quad(self.id.iri(), rule.predicate.clone(), node.clone());
            self.quad(node.clone(), vocab::rdf_type(), vocab::class_counts_by_year());
            self.quad(node.clone(), vocab::soa_year(), Literal::typed(year.to_string(), vocab::xsd_integer()));
            for (member, predicate) in
                [("works_count", vocab::soa_works_count()), ("cited_by_count", vocab::soa_cited_by_count())]
            {
                match obj.get(member) {
                    None | Some(Value::Null) => {}
                    Some(v) => match v.as_i64() {
                        Some(n) => {
                            self.quad(node.clone(), predicate, Literal::typed(n.to_string(), vocab::xsd_integer()))
                        }
                        None => self.diag(rule.field, format!("{member} is not an integer")),
                    },
                }
            }
        }
    }

    fn geo_node(&mut self, rule: &Rule, value: &Value) {
        let Some(obj) = value.as_object() else {
            self.diag(rule.field, "expected a geo object");
            return;
        };
        let node = mint_aux_iri(AuxKind::Geo, &[&self.id_text]).expect("canonical ids are alphanumeric");
        self.quad(self.id.iri(), rule.predicate.clone(), node.clone());
        self.quad(node.clone(), vocab::rdf_type(), vocab::class_geo());
        for (member, predicate, datatype) in [
            ("city", vocab::gn_city(), Datatype::String),
            ("country", vocab::gn_country(), Datatype::String),
            ("latitude", vocab::gn_lat(), Datatype::Decimal),
            ("longitude", vocab::gn_long(), Datatype::Decimal),
        ] {
            match obj.get(member) {
                None | Some(Value::Null) => {}
                Some(v) => {
                    if let Some(lit) = self.literal("geo", v, datatype, CleanContext::Other) {
                        self.quad(node.clone(), predicate, lit);
                    }
                }
            }
        }
    }

    fn broader_concepts(&mut self, rule: &Rule, value: &Value) {
        let Some(entries) = value.as_array() else {
            self.diag(rule.field, "expected an array of ancestors");
            return;
        };
        // Only direct parents: ancestors sitting exactly one level up.
        let own_level = self.own_level;
        for entry in entries {
            let Some(obj) = entry.as_object() else {
                self.diag(rule.field, "ancestor is not an object");
                continue;
            };
            let ancestor_level = obj.get("level").and_then(Value::as_i64);
            match (own_level, ancestor_level) {
                (Some(own), Some(anc)) if anc == own - 1 => {
                    if let Some(iri) = self.entity_iri(rule.field, entry) {
                        self.quad(self.id.iri(), rule.predicate.clone(), iri);
                    }
                }
                _ => {}
            }
        }
    }
}

struct PropDecl {
    object_property: bool,
    domains: std::collections::BTreeSet<Iri>,
    ranges: std::collections::BTreeSet<Iri>,
}

fn declare(
    props: &mut BTreeMap<Iri, PropDecl>,
    predicate: Iri,
    object_property: bool,
    domain: Option<Iri>,
    range: Option<Iri>,
) {
    let decl = props.entry(predicate).or_insert_with(|| PropDecl {
        object_property,
        domains: Default::default(),
        ranges: Default::default(),
    });
    debug_assert_eq!(decl.object_property, object_property);
    decl.domains.extend(domain);
    decl.ranges.extend(range);
}

/// Schema document for everything the table can emit.
///
/// Every predicate that can appear in converted output is declared exactly
/// once; domain and range are stated only where a single class fits every
/// use. `rdf:type` itself is declared so the declared set covers the data.
pub fn emit_ontology(table: &MappingTable) -> Vec<Triple> {
    let mut triples = Vec::new();
    let mut classes: Vec<Iri> = table.kinds.iter().map(|k| k.class.clone()).collect();
    classes.extend([vocab::class_author_position(), vocab::class_counts_by_year(), vocab::class_geo()]);
    for class in &classes {
        triples.push(Triple::new(class.clone(), vocab::rdf_type(), vocab::owl_class()));
    }
    triples.push(Triple::new(vocab::rdf_type(), vocab::rdf_type(), vocab::rdf_property()));

    let mut props: BTreeMap<Iri, PropDecl> = BTreeMap::new();
    for kind in &table.kinds {
        let class = kind.class.clone();
        for rule in &kind.rules {
            let (object_property, range) = match &rule.object {
                ObjectSpec::Literal { datatype, .. } => (false, Some(datatype.iri())),
                ObjectSpec::EntityRef { target } => (true, Some(target.clone())),
                ObjectSpec::ExternalIri => (true, None),
                ObjectSpec::AbstractText => (false, Some(vocab::xsd_string())),
                ObjectSpec::AuthorPositions => (true, Some(vocab::class_author_position())),
                ObjectSpec::CountsByYear => (true, Some(vocab::class_counts_by_year())),
                ObjectSpec::GeoNode => (true, Some(vocab::class_geo())),
                ObjectSpec::BroaderConcepts => (true, Some(vocab::skos_concept())),
            };
            declare(&mut props, rule.predicate.clone(), object_property, Some(class.clone()), range);
        }
    }
    let ap = vocab::class_author_position();
    let cy = vocab::class_counts_by_year();
    let geo = vocab::class_geo();
    declare(&mut props, vocab::soa_position(), false, Some(ap.clone()), Some(vocab::xsd_string()));
    declare(&mut props, vocab::soa_has_author(), true, Some(ap.clone()), Some(vocab::class_author()));
    declare(&mut props, vocab::soa_has_organization(), true, Some(ap), Some(vocab::class_institution()));
    declare(&mut props, vocab::soa_year(), false, Some(cy.clone()), Some(vocab::xsd_integer()));
    declare(&mut props, vocab::soa_works_count(), false, Some(cy.clone()), Some(vocab::xsd_integer()));
    declare(&mut props, vocab::soa_cited_by_count(), false, Some(cy), Some(vocab::xsd_integer()));
    declare(&mut props, vocab::gn_city(), false, Some(geo.clone()), Some(vocab::xsd_string()));
    declare(&mut props, vocab::gn_country(), false, Some(geo.clone()), Some(vocab::xsd_string()));
    declare(&mut props, vocab::gn_lat(), false, Some(geo.clone()), Some(vocab::xsd_decimal()));
    declare(&mut props, vocab::gn_long(), false, Some(geo), Some(vocab::xsd_decimal()));

    for (predicate, decl) in props {
        let kind = if decl.object_property { vocab::owl_object_property() } else { vocab::owl_datatype_property() };
        triples.push(Triple::new(predicate.clone(), vocab::rdf_type(), kind));
        if decl.domains.len() == 1 {
            let domain = decl.domains.into_iter().next().expect("one domain");
            triples.push(Triple::new(predicate.clone(), vocab::rdfs_domain(), domain));
        }
        if decl.ranges.len() == 1 {
            let range = decl.ranges.into_iter().next().expect("one range");
            triples.push(Triple::new(predicate, vocab::rdfs_range(), range));
        }
    }
    triples
}

pub const VOID: &str = "http://rdfs.org/ns/void#";
pub const CC0: &str = "https://creativecommons.org/publicdomain/zero/1.0/";

fn void_term(local: &str) -> Iri {
    Iri::new(format!("{VOID}{local}")).expect("fixed vocabulary iris are valid")
}

#[derive(Debug, Clone)]
pub struct VoidConfig {
    pub dataset_iri: Iri,
    pub sparql_endpoint: Option<Iri>,
    pub data_dump: Option<Iri>,
}

impl Default for VoidConfig {
    fn default() -> Self {
        VoidConfig {
            dataset_iri: Iri::new("https://semopenalex.org/datasets/semopenalex").expect("valid"),
            sparql_endpoint: Some(Iri::new("https://semopenalex.org/sparql").expect("valid")),
            data_dump: None,
        }
    }
}

/// Dataset self-description: sizes, class partitions, license, access points.
pub fn emit_void(
    entity_counts: &BTreeMap<EntityKind, u64>,
    statement_total: u64,
    config: &VoidConfig,
) -> Vec<Triple> {
    let ds = config.dataset_iri.clone();
    let integer = |n: u64| Literal::typed(n.to_string(), vocab::xsd_integer());
    let mut triples = vec![
        Triple::new(ds.clone(), vocab::rdf_type(), void_term("Dataset")),
        Triple::new(ds.clone(), void_term("triples"), integer(statement_total)),
        Triple::new(
            ds.clone(),
            void_term("entities"),
            integer(entity_counts.values().sum()),
        ),
        Triple::new(ds.clone(), vocab::dcterms_license(), Iri::new(CC0).expect("valid")),
    ];
    if let Some(endpoint) = &config.sparql_endpoint {
        triples.push(Triple::new(ds.clone(), void_term("sparqlEndpoint"), endpoint.clone()));
    }
    if let Some(dump) = &config.data_dump {
        triples.push(Triple::new(ds.clone(), void_term("dataDump"), dump.clone()));
    }
    let table = MappingTable::standard();
    for kind in EntityKind::ALL {
        let count = entity_counts.get(&kind).copied().unwrap_or(0);
        let partition = Iri::new(format!("{}/partition/{}", ds.as_str(), kind.plural())).expect("valid");
        triples.push(Triple::new(ds.clone(), void_term("classPartition"), partition.clone()));
        triples.push(Triple::new(partition.clone(), void_term("class"), table.class_of(kind)));
        triples.push(Triple::new(partition, void_term("entities"), integer(count)));
    }
    triples
}

/// Maps one deduplicated record to quads using the given table.
pub fn map_entity(record: &RawEntityRecord, table: &MappingTable) -> Result<MappingOutput, RejectedRecord> {
    let reject = |reason: String| RejectedRecord {
        id: record.id_text().to_string(),
        part: record.part.clone(),
        line: record.line,
        reason,
    };
    let id = record.entity_id().map_err(|e| reject(format!("unusable id: {e}")))?;
    if id.kind != record.kind {
        return Err(reject(format!("id {id} does not belong to the {} partition", record.kind.plural())));
    }

    let kind_rules = table.for_kind(record.kind);
    let mut emitter = Emitter {
        id: &id,
        id_text: id.to_string(),
        graph: vocab::graph_iri(record.kind),
        out: MappingOutput::default(),
        own_level: record.fields.get("level").and_then(Value::as_i64),
    };
    emitter.quad(id.iri(), vocab::rdf_type(), kind_rules.class.clone());

    for rule in &kind_rules.rules {
        let Some(value) = lookup(&record.fields, rule.field) else { continue };
        if rule.each {
            let Some(items) = value.as_array() else {
                emitter.diag(rule.field, "expected an array");
                continue;
            };
            for item in items {
                if !item.is_null() {
                    emitter.apply(rule, item);
                }
            }
        } else {
            emitter.apply(rule, value);
        }
    }
    Ok(emitter.out)
}
