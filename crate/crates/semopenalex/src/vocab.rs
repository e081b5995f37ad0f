//! Namespace table and the vocabulary terms the mapping emits.
//!
//! The prefix table is fixed: graph-local classes live under `class/`,
//! graph-local properties under `property/`, everything else reuses
//! established vocabularies.

use crate::model::Iri;

/// Graph-local class namespace (the empty prefix in serialized docs).
pub const CLASS: &str = "https://semopenalex.org/class/";
/// Graph-local property namespace.
pub const SOA: &str = "https://semopenalex.org/property/";
pub const OA: &str = "http://openalex.org/";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const OWL: &str = "http://www.w3.org/2002/07/owl#";
pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const DCTERMS: &str = "http://purl.org/dc/terms/";
pub const CITO: &str = "http://purl.org/spar/cito/";
pub const FABIO: &str = "http://purl.org/spar/fabio/";
pub const BIDO: &str = "http://purl.org/spar/bido/";
pub const DATACITE: &str = "http://purl.org/spar/datacite/";
pub const PRISM: &str = "http://prismstandard.org/namespaces/basic/2.0/";
pub const DBO: &str = "https://dbpedia.org/ontology/";
pub const DBP: &str = "https://dbpedia.org/property/";
pub const FOAF: &str = "http://xmlns.com/foaf/0.1/";
pub const ORG: &str = "http://www.w3.org/ns/org#";
pub const GN: &str = "https://www.geonames.org/ontology#";
pub const SKOS: &str = "http://www.w3.org/2004/02/skos/core#";

/// Prefix label to namespace IRI, in the order preferred when rendering
/// prefixed documents.
pub const NAMESPACES: [(&str, &str); 19] = [
    ("soa", SOA),
    ("", CLASS),
    ("oa", OA),
    ("xsd", XSD),
    ("owl", OWL),
    ("rdf", RDF),
    ("rdfs", RDFS),
    ("dcterms", DCTERMS),
    ("cito", CITO),
    ("fabio", FABIO),
    ("bido", BIDO),
    ("datacite", DATACITE),
    ("prism", PRISM),
    ("dbo", DBO),
    ("dbp", DBP),
    ("foaf", FOAF),
    ("org", ORG),
    ("gn", GN),
    ("skos", SKOS),
];

/// Expands `prefix:local` against the fixed table.
pub fn expand(prefix: &str, local: &str) -> Option<Iri> {
    let ns = NAMESPACES.iter().find(|(p, _)| *p == prefix)?.1;
    Iri::new(format!("{ns}{local}")).ok()
}

/// Shortens a full IRI to `prefix:local` when a table namespace covers it
/// and the remainder is a safe local name.
pub fn shorten(iri: &str) -> Option<(&'static str, &str)> {
    for (prefix, ns) in NAMESPACES {
        if let Some(local) = iri.strip_prefix(ns) {
            if !local.is_empty()
                && local.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
                && !local.starts_with('-')
            {
                return Some((prefix, local));
            }
        }
    }
    None
}

fn iri(s: String) -> Iri {
    Iri::new(s).expect("vocabulary iri")
}

macro_rules! terms {
    ($($fn_name:ident => $ns:ident $local:literal;)*) => {
        $(pub fn $fn_name() -> Iri { iri(format!("{}{}", $ns, $local)) })*
    };
}

terms! {
    rdf_type => RDF "type";
    rdf_property => RDF "Property";
    rdfs_domain => RDFS "domain";
    rdfs_range => RDFS "range";
    owl_class => OWL "Class";
    owl_object_property => OWL "ObjectProperty";
    owl_datatype_property => OWL "DatatypeProperty";
    owl_ontology => OWL "Ontology";
    owl_same_as => OWL "sameAs";

    xsd_string => XSD "string";
    xsd_integer => XSD "integer";
    xsd_date => XSD "date";
    xsd_gyear => XSD "gYear";
    xsd_decimal => XSD "decimal";

    class_work => CLASS "Work";
    class_author => CLASS "Author";
    class_source => CLASS "Source";
    class_institution => CLASS "Institution";
    class_publisher => CLASS "Publisher";
    class_author_position => CLASS "AuthorPosition";
    class_counts_by_year => CLASS "CountsByYear";
    class_geo => CLASS "Geo";
    skos_concept => SKOS "Concept";

    dcterms_title => DCTERMS "title";
    dcterms_abstract => DCTERMS "abstract";
    dcterms_created => DCTERMS "created";
    dcterms_license => DCTERMS "license";
    fabio_has_publication_year => FABIO "hasPublicationYear";
    fabio_has_pubmed_id => FABIO "hasPubMedId";
    datacite_doi => DATACITE "doi";
    cito_cites => CITO "cites";
    soa_cited_by_count => SOA "citedByCount";
    soa_works_count => SOA "worksCount";
    soa_has_concept => SOA "hasConcept";
    soa_has_author_position => SOA "hasAuthorPosition";
    soa_has_host_source => SOA "hasHostSource";
    soa_has_host_organization => SOA "hasHostOrganization";
    soa_position => SOA "position";
    soa_has_author => SOA "hasAuthor";
    soa_has_organization => SOA "hasOrganization";
    soa_counts_by_year => SOA "countsByYear";
    soa_year => SOA "year";
    soa_level => SOA "level";
    soa_country_code => SOA "countryCode";
    soa_ror_type => SOA "rorType";
    soa_has_geo => SOA "hasGeo";
    foaf_name => FOAF "name";
    org_member_of => ORG "memberOf";
    skos_pref_label => SKOS "prefLabel";
    skos_broader => SKOS "broader";
    skos_related => SKOS "related";
    skos_note => SKOS "note";
    prism_issn => PRISM "issn";
    dbp_acronym => DBP "acronym";
    dbp_country_code => DBP "countryCode";
    gn_city => GN "city";
    gn_country => GN "country";
    gn_lat => GN "lat";
    gn_long => GN "long";
}

/// Named graph IRI holding all statements for one entity kind.
pub fn graph_iri(kind: crate::model::EntityKind) -> Iri {
    iri(format!("{}/graph/{}", crate::model::BASE, kind.plural()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityKind;

    #[test]
    fn table_has_nineteen_distinct_prefixes() {
        let mut labels: Vec<&str> = NAMESPACES.iter().map(|(p, _)| *p).collect();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 19);
        let mut namespaces: Vec<&str> = NAMESPACES.iter().map(|(_, ns)| *ns).collect();
        namespaces.sort_unstable();
        namespaces.dedup();
        assert_eq!(namespaces.len(), 19);
    }

    #[test]
    fn all_namespaces_are_valid_iris() {
        for (_, ns) in NAMESPACES {
            assert!(Iri::new(ns).is_ok(), "bad namespace {ns}");
        }
    }

    #[test]
    fn expand_and_shorten_roundtrip() {
        let iri = expand("soa", "citedByCount").unwrap();
        assert_eq!(iri.as_str(), "https://semopenalex.org/property/citedByCount");
        assert_eq!(shorten(iri.as_str()), Some(("soa", "citedByCount")));
        assert_eq!(shorten("https://semopenalex.org/class/Work"), Some(("", "Work")));
        assert_eq!(shorten("https://example.org/x"), None);
        assert!(expand("nope", "x").is_none());
    }

    #[test]
    fn graph_iris_follow_plural_names() {
        assert_eq!(graph_iri(EntityKind::Work).as_str(), "https://semopenalex.org/graph/works");
        assert_eq!(
            graph_iri(EntityKind::Publisher).as_str(),
            "https://semopenalex.org/graph/publishers"
        );
    }

    #[test]
    fn key_terms_resolve() {
        assert_eq!(rdf_type().as_str(), "http://www.w3.org/1999/02/22-rdf-syntax-ns#type");
        assert_eq!(soa_cited_by_count().as_str(), "https://semopenalex.org/property/citedByCount");
        assert_eq!(class_work().as_str(), "https://semopenalex.org/class/Work");
        assert_eq!(skos_concept().as_str(), "http://www.w3.org/2004/02/skos/core#Concept");
    }
}
