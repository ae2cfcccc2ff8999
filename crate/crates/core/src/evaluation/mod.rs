//! Detection metrics, progression scores, statistical analyses and report
//! assembly.

mod bootstrap;
mod dtw;
mod metrics;
mod pca;
mod report;
mod stats;

pub use bootstrap::{auroc_z_test, bootstrap_aurocs, bootstrap_ci, percentile_interval, quantile};
pub use dtw::{dtw_align, DtwAlignment};
pub use metrics::{
    auroc, participant_accuracy, pearson, point_biserial, progression_score, progression_summary, sens_spec, ProgressionScore, ScoredSample,
};
pub use pca::{pca_project, symmetric_eigen, PcaResult};
pub use report::{
    build_report, detection_metrics, is_recovery, scored_samples, write_dtw_csv, write_pca_csv, DetectionMetrics, MetricReport, ParticipantScore,
    RecoveryScore, ReportConfig, ZTest,
};
pub use stats::{
    non_decreasing_fraction, seq_length_analysis, seven_day_trend, symptom_correlation, symptom_fit, trend_anchor, CurveBin, LineFit,
    SeqLengthCurve, SymptomCorrelation, Trend, TrendTally, HISTORY_DAY_BIN, SYMPTOM_EXCLUDE_ABOVE, TREND_WINDOW_DAYS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("both classes are required")]
    SingleClass,
    #[error("input is constant")]
    ConstantInput,
    #[error("no input")]
    EmptyInput,
    #[error("fewer than two predictions inside the trend window")]
    WindowEmpty,
    #[error("series too short")]
    TooShort,
    #[error("{0}")]
    Mismatch(String),
}
