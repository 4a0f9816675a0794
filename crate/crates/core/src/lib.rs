//! A self-contained laboratory for studying regularization in
//! embedding-based neural sentence models.
//!
//! Two architectures (a fixed-window convolutional classifier and a
//! recursive tree composer), four regularization strategies (ℓ2 on weights,
//! ℓ2 on embeddings, a re-embedding pull toward pretrained vectors, and
//! dropout), incremental penalty activation, and a multi-seed sweep harness
//! that aggregates learning curves into mean±std grids.

pub mod checkpoint;
pub mod cnn;
pub mod curve_csv;
pub mod data;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod math;
pub mod model;
pub mod reg;
pub mod rnn;
pub mod rng;
pub mod synth;
pub mod train;
pub mod tree;

pub use embedding::EmbeddingTable;
pub use error::{Error, Result};
pub use math::{Matrix, Vector};
pub use model::{Model, ModelDims};
pub use reg::{RegularizerKind, RegularizerSet, RegularizerSpec};
pub use rng::RandomSource;
pub use train::{Dataset, LearningCurve, Schedule, Task, TrainConfig};
