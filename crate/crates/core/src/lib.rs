//! Deterministic building blocks for waveform-image sleep staging:
//! PSG conditioning and epoching, image rendering, per-second spectral
//! descriptors, event detectors, a rule-cited staging engine, training
//! corpus assembly, perplexity-gain candidate selection and evaluation
//! metrics.

pub mod dsp;
pub mod psg_io;
pub mod descriptors;
pub mod render;
pub mod features;
pub mod rules;
pub mod night;
pub mod corpus;
pub mod rft;
pub mod metrics;

pub use corpus::{AnnotationRecord, TrainingSample, Track};
pub use descriptors::DescriptorFrame;
pub use features::{DetectorConfig, EpochFeatures};
pub use metrics::{LabeledPredictions, MetricsReport};
pub use psg_io::{Channel, ConditioningConfig, Epoch, Recording};
pub use render::RenderConfig;
pub use rules::{RuleId, Stage, StageDecision};
