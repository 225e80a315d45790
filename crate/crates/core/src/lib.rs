//! Temporal co-authorship link prediction: windowed labeling of new,
//! persistent and discontinued collaborations, structural and topical pair
//! features, from-scratch classifiers with SHAP explanations, and a seeded
//! synthetic corpus generator.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod graph;
pub mod models;
pub mod pipeline;
pub mod synth;
pub mod topics;
pub mod util;
pub mod windows;

pub use corpus::{AccessAudit, Corpus, PublicationRecord, PublicationSource, YearRange};
pub use error::{Error, Result};
pub use eval::{EvalReport, Metrics};
pub use explain::{ShapRow, ShapSummary};
pub use features::{FeatureMatrix, FeatureRow, FEATURE_NAMES, N_FEATURES};
pub use graph::CoauthorGraph;
pub use models::{Hyper, Model, ModelFile, ModelKind};
pub use pipeline::{run_pipeline, PipelineConfig, Stage, StageError};
pub use synth::{generate, SynthConfig};
pub use topics::{DisciplineVector, TopicModel};
pub use windows::{LabeledPairSet, Pattern, WindowSpec};
