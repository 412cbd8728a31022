//! Measures how much relational knowledge an embedding space encodes.
//!
//! The pipeline has three phases:
//!
//! 1. [`forge`] builds balanced relation datasets from a knowledge graph
//!    ([`kg`]) restricted to the vocabulary shared by the studied
//!    embedding spaces ([`embedding`]), plus random baseline datasets.
//! 2. [`probe`] trains small feed-forward classifiers on embedding pairs,
//!    several runs per (dataset, space), including a random-embedding space.
//! 3. [`verdict`] turns the collected metrics into baseline ranges, bias
//!    flags and per-(relation, space) significance verdicts.
//!
//! [`pipeline`] wires the phases to files on disk.

pub mod embedding;
pub mod error;
pub mod forge;
pub mod kg;
pub mod pipeline;
pub mod probe;
pub mod seed;
pub mod synthetic;
pub mod verdict;

pub use embedding::{EmbeddingSpace, KindRules, SeedVocabulary};
pub use error::{Error, Result};
pub use forge::{PairType, RelationDataset, Sample, Split};
pub use kg::{KnowledgeGraph, NodeId, NodeKind};
pub use probe::{ExperimentResult, ProbeArchitecture, RunMetrics, TrainingConfig};
pub use verdict::{BaselineRange, Classification, RelationVerdict};
