//! Longitudinal audio-biomarker modelling: audio DSP, cohort handling, a GRU
//! sequence classifier with analytic gradients, training, trajectories and
//! progression metrics, plus a synthetic cohort generator.

pub mod audio;
pub mod cohort;
pub mod config;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod training;
pub mod trajectory;

pub use scalar::Real;

pub type AudioClipF32 = audio::AudioClip<f32>;
pub type AudioClipF64 = audio::AudioClip<f64>;
pub type ModelF32 = model::ModelParams<f32>;
pub type ModelF64 = model::ModelParams<f64>;
pub type CheckpointF32 = model::Checkpoint<f32>;
pub type CheckpointF64 = model::Checkpoint<f64>;
pub type FusedCacheF32 = features::FusedCache<f32>;
pub type FusedCacheF64 = features::FusedCache<f64>;
