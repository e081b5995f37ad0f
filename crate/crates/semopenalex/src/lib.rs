//! Toolkit for turning OpenAlex-style snapshot dumps into an RDF knowledge
//! graph: streaming ingestion, vocabulary mapping, bulk serialization, an
//! in-memory quad index with query helpers, a linked-data HTTP endpoint and
//! translation/bilinear graph embeddings.

pub mod cli;
pub mod embed;
pub mod ingest;
pub mod mapping;
pub mod model;
pub mod normalize;
pub mod parse;
pub mod pipeline;
pub mod samplegen;
pub mod serialize;
pub mod server;
pub mod store;
pub mod vocab;
