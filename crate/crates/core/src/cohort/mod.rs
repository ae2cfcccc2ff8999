//! Cohort data model, manifest ingestion, window generation, augmentation
//! and participant-level splitting.

mod augment;
mod manifest;
mod split;
mod types;
mod windows;

pub use augment::{
    apply_perturbation, oversample_balance, perturb_augment, time_inverse_augment, ClipPerturbation, PerturbConfig,
};
pub use manifest::{load_manifest, write_dropped_log, write_manifest, DroppedRow, LoadedCohort, ManifestOptions, ManifestRow};
pub use split::{read_split, split_participants, write_split, DatasetSplit, Partition, SplitRatios};
pub use types::{AgeBand, Cohort, Gender, Label, Language, Modality, Participant, RecordingSample};
pub use windows::{
    generate_windows, AugmentationTag, SequenceWindow, WindowSample, WINDOW_LEN, WINDOW_MAX_GAP,
};

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("manifest line {line}: audio file {path} does not exist")]
    MissingAudio { line: usize, path: String },
    #[error("cannot split: {0}")]
    InsufficientParticipants(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type CohortResult<T> = Result<T, CohortError>;
