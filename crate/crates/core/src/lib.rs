//! Alternate constructions of templated social-bias benchmarks (Winogender-style
//! coreference and BiasNLI-style inference), their bias metrics, and analysis of how
//! model rankings shift across constructions and subsampling trials.

pub mod construction;
pub mod error;
pub mod fixtures;
pub mod hash;
pub mod metrics;
pub mod perturb;
pub mod pipeline;
pub mod reference;
pub mod schema;
pub mod sectioned;
pub mod stability;
pub mod text;
pub mod wire;

pub use construction::{Benchmark, ConstructionDescriptor, Dataset, Operator, Proportion};
pub use error::{Error, Result};
pub use metrics::{BiasScore, Metric, MetricDelta, Percent, Prediction};
pub use schema::{Gender, Instance, Lexicon, PairInstance, Task, Template};
