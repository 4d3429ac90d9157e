//! Knowledge-enhanced neighborhood interaction recommendation.
//!
//! The crate covers the whole pipeline: building the interaction graph from
//! feedback and KG triples ([`graph`]), seeded neighbor sampling
//! ([`sampler`]), the scorers and graph encoders ([`model`]) on top of a small
//! reverse-mode tape ([`numeric`]), mini-batch training ([`trainer`]),
//! CTR/top-N evaluation ([`evaluator`]) and the entropy analysis of pair
//! weight matrices ([`analyzer`]).

pub mod analyzer;
pub mod error;
pub mod evaluator;
pub mod exec;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod sampler;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use seed::SeedStream;
