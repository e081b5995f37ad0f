//! Core RDF terms and the entity id scheme used to mint stable IRIs.
//!
//! Entity ids follow the OpenAlex convention: one uppercase kind prefix
//! followed by a decimal number, e.g. `W4239696231`. Every minted IRI lives
//! under a single base so that describing, serving and embedding can
//! recognize graph-internal resources by prefix alone.

use std::fmt;
use thiserror::Error;

/// Base IRI for all minted resources.
pub const BASE: &str = "https://semopenalex.org";

pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Work,
    Author,
    Source,
    Institution,
    Concept,
    Publisher,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Work,
        EntityKind::Author,
        EntityKind::Source,
        EntityKind::Institution,
        EntityKind::Concept,
        EntityKind::Publisher,
    ];

    /// Uppercase id prefix letter.
    pub fn prefix(self) -> char {
        match self {
            EntityKind::Work => 'W',
            EntityKind::Author => 'A',
            EntityKind::Source => 'S',
            EntityKind::Institution => 'I',
            EntityKind::Concept => 'C',
            EntityKind::Publisher => 'P',
        }
    }

    /// Path segment under the base IRI.
    pub fn segment(self) -> &'static str {
        match self {
            EntityKind::Work => "work",
            EntityKind::Author => "author",
            EntityKind::Source => "source",
            EntityKind::Institution => "institution",
            EntityKind::Concept => "concept",
            EntityKind::Publisher => "publisher",
        }
    }

    /// Plural form used by snapshot directory names and reports.
    pub fn plural(self) -> &'static str {
        match self {
            EntityKind::Work => "works",
            EntityKind::Author => "authors",
            EntityKind::Source => "sources",
            EntityKind::Institution => "institutions",
            EntityKind::Concept => "concepts",
            EntityKind::Publisher => "publishers",
        }
    }

    pub fn from_prefix(c: char) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.prefix() == c)
    }

    pub fn from_plural(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.plural() == s)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EntityKind::Work => "Work",
            EntityKind::Author => "Author",
            EntityKind::Source => "Source",
            EntityKind::Institution => "Institution",
            EntityKind::Concept => "Concept",
            EntityKind::Publisher => "Publisher",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdError {
    #[error("empty entity id")]
    Empty,
    #[error("unknown entity prefix {0:?}")]
    UnknownPrefix(char),
    #[error("numeric part of {0:?} must be 1 to 12 decimal digits")]
    BadNumericPart(String),
    #[error("numeric part of {0:?} has a leading zero")]
    LeadingZero(String),
    #[error("aux iri part {0:?} must be nonempty ASCII alphanumeric")]
    MalformedPart(String),
}

/// A parsed entity id, e.g. `W4239696231`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId {
    pub kind: EntityKind,
    pub num: u64,
}

impl EntityId {
    pub fn new(kind: EntityKind, num: u64) -> Self {
        EntityId { kind, num }
    }

    /// Parses the canonical text form: one prefix letter then 1-12 digits,
    /// no leading zeros.
    pub fn parse(text: &str) -> Result<Self, IdError> {
        let mut chars = text.chars();
        let first = chars.next().ok_or(IdError::Empty)?;
        let kind = EntityKind::from_prefix(first).ok_or(IdError::UnknownPrefix(first))?;
        let digits = &text[1..];
        if digits.is_empty() || digits.len() > 12 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(IdError::BadNumericPart(text.to_string()));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(IdError::LeadingZero(text.to_string()));
        }
        let num: u64 = digits.parse().map_err(|_| IdError::BadNumericPart(text.to_string()))?;
        Ok(EntityId { kind, num })
    }

    /// Parses an id that may be wrapped in a full OpenAlex URL, e.g.
    /// `https://openalex.org/W123`.
    pub fn parse_any(text: &str) -> Result<Self, IdError> {
        let tail = text.trim().rsplit('/').next().unwrap_or("");
        Self::parse(tail)
    }

    pub fn iri(&self) -> Iri {
        Iri::new(format!("{}/{}/{}", BASE, self.kind.segment(), self)).expect("minted entity iri")
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.num)
    }
}

/// Node kinds minted for nested record structures rather than snapshot
/// entities in their own right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuxKind {
    AuthorPosition,
    CountsByYear,
    Geo,
}

impl AuxKind {
    pub const ALL: [AuxKind; 3] = [AuxKind::AuthorPosition, AuxKind::CountsByYear, AuxKind::Geo];

    pub fn segment(self) -> &'static str {
        match self {
            AuxKind::AuthorPosition => "authorposition",
            AuxKind::CountsByYear => "countsbyyear",
            AuxKind::Geo => "geo",
        }
    }
}

/// Mints a deterministic IRI for an auxiliary node by concatenating the
/// given parts with no separator, e.g. `authorposition` + [`W1`, `A2`]
/// becomes `https://semopenalex.org/authorposition/W1A2`.
pub fn mint_aux_iri(kind: AuxKind, parts: &[&str]) -> Result<Iri, IdError> {
    let mut tail = String::new();
    for part in parts {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(IdError::MalformedPart(part.to_string()));
        }
        tail.push_str(part);
    }
    if tail.is_empty() {
        return Err(IdError::MalformedPart(String::new()));
    }
    Ok(Iri::new(format!("{}/{}/{}", BASE, kind.segment(), tail)).expect("minted aux iri"))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IriViolation {
    #[error("empty iri")]
    Empty,
    #[error("iri {0:?} has no scheme")]
    NoScheme(String),
    #[error("iri {0:?} contains forbidden character {1:?}")]
    ForbiddenChar(String, char),
}

/// An absolute IRI. Guaranteed nonempty, to carry a scheme, and to be free
/// of whitespace, control characters and the bracket/quote/backslash set
/// that the bulk serialization grammars forbid inside `<...>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Iri(String);

impl Iri {
    pub fn new(s: impl Into<String>) -> Result<Self, IriViolation> {
        let s = s.into();
        if s.is_empty() {
            return Err(IriViolation::Empty);
        }
        for c in s.chars() {
            if c <= ' ' || c == '\u{7f}' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') {
                return Err(IriViolation::ForbiddenChar(s.clone(), c));
            }
        }
        match s.split_once(':') {
            Some((scheme, _)) if !scheme.is_empty() => {
                let mut bytes = scheme.bytes();
                let head = bytes.next().unwrap();
                if !head.is_ascii_alphabetic()
                    || !scheme.bytes().skip(1).all(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'-' | b'.'))
                {
                    return Err(IriViolation::NoScheme(s.clone()));
                }
            }
            _ => return Err(IriViolation::NoScheme(s.clone())),
        }
        Ok(Iri(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Entity id when this IRI was minted from one.
    pub fn entity_id(&self) -> Option<EntityId> {
        let rest = self.0.strip_prefix(BASE)?.strip_prefix('/')?;
        let (segment, id) = rest.split_once('/')?;
        let kind = EntityKind::ALL.iter().copied().find(|k| k.segment() == segment)?;
        let parsed = EntityId::parse(id).ok()?;
        (parsed.kind == kind).then_some(parsed)
    }

    /// True for minted auxiliary-node IRIs.
    pub fn is_aux(&self) -> bool {
        self.0
            .strip_prefix(BASE)
            .and_then(|r| r.strip_prefix('/'))
            .and_then(|r| r.split_once('/'))
            .map(|(seg, tail)| AuxKind::ALL.iter().any(|k| k.segment() == seg) && !tail.is_empty())
            .unwrap_or(false)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Iri {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// An RDF literal. `language` is only ever present together with the
/// `rdf:langString` datatype; plain literals carry `xsd:string`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub lexical: String,
    pub datatype: Iri,
    pub language: Option<String>,
}

impl Literal {
    pub fn string(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: Iri::new(XSD_STRING).unwrap(),
            language: None,
        }
    }

    pub fn typed(lexical: impl Into<String>, datatype: Iri) -> Self {
        Literal { lexical: lexical.into(), datatype, language: None }
    }

    pub fn lang(lexical: impl Into<String>, tag: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            datatype: Iri::new(RDF_LANG_STRING).unwrap(),
            language: Some(tag.into()),
        }
    }

    pub fn is_xsd_string(&self) -> bool {
        self.language.is_none() && self.datatype.as_str() == XSD_STRING
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            Term::Iri(_) => None,
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quad {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
    pub graph: Iri,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Self {
        Triple { subject, predicate, object: object.into() }
    }
}

impl Quad {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>, graph: Iri) -> Self {
        Quad { subject, predicate, object: object.into(), graph }
    }

    pub fn triple(&self) -> Triple {
        Triple {
            subject: self.subject.clone(),
            predicate: self.predicate.clone(),
            object: self.object.clone(),
        }
    }
}
