//! Energy-based knowledge graph embeddings.
//!
//! Triples are scored bilinearly (`e_sᵀ R_p e_o`, full or diagonal relations)
//! and every triple slot is treated as an independent Bernoulli variable with
//! probability `σ(score)`. The energy model is trained with a two-phase
//! wake-sleep rule whose negative phase is fed by Metropolis-Hastings samples;
//! squared-error RESCAL, softmax-KL RESCAL and TransE baselines are trained
//! with corrupted negatives. Models are evaluated with filtered ranking
//! metrics and used to rank novel events by suspiciousness.

pub mod anomaly;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradients;
pub mod graph;
pub mod model;
pub mod optim;
pub mod persist;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{LabeledEvent, NamedTriple, SeverityClass, Triple, TripleStore, Vocabulary};
pub use model::{EmbeddingSpace, GraphIndicator, RelationKind, TransEParams};
pub use optim::{OptimizerKind, OptimizerState};
pub use persist::StoredModel;
pub use trainer::{ModelKind, Preset, TrainConfig, Trainer};
