use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};

use longtrack::audio::MelParams;
use longtrack::cohort::{
    load_manifest, read_split, split_participants, write_dropped_log, write_manifest, write_split, Cohort, CohortError, DatasetSplit,
    ManifestOptions, Partition,
};
use longtrack::evaluation::{build_report, dtw_align, is_recovery, pca_project, write_dtw_csv, write_pca_csv, EvalError, ReportConfig};
use longtrack::features::{write_prepared, FeatureError, FusedCache};
use longtrack::model::{load_checkpoint, save_checkpoint, ModelError, ModelKind, ModelParams};
use longtrack::synth::{generate_cohort, CohortSpec, SynthError};
use longtrack::training::{TrainConfig, TrainError, TrainReport};
use longtrack::trajectory::{extract_latents, predict_trajectory, read_trajectories_csv, write_trajectories_csv, Trajectory, TrajectoryError};

use crate::plot::render_svg;

pub const MODEL_FILE: &str = "model.ckpt";
pub const SINGLE_FILE: &str = "baseline_single.ckpt";
pub const AVERAGE_FILE: &str = "baseline_average.ckpt";
pub const SPLIT_FILE: &str = "split.csv";
const PCA_COMPONENTS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn need_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(format!("cannot evaluate: {e}"))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::CorruptCheckpoint(_) | ModelError::Io(_) | ModelError::DimensionMismatch { .. } => CliError::Data(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => CliError::Usage(c.to_string()),
            TrainError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) | SynthError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn load_cohort(manifest: &Path, skip_screen: bool) -> Result<Cohort> {
    need_file(manifest, "manifest")?;
    let loaded = load_manifest(manifest, ManifestOptions { check_quality: !skip_screen })?;
    if !loaded.dropped.is_empty() {
        warn!("{} manifest rows failed the quality screen", loaded.dropped.len());
    }
    Ok(loaded.cohort)
}

fn load_model(path: &Path, kind: ModelKind) -> Result<ModelParams<f64>> {
    need_file(path, "checkpoint")?;
    let ck = load_checkpoint::<f64>(path, None)?;
    if ck.model.kind != kind {
        return Err(CliError::Usage(format!("{} holds a {:?} model, expected {kind:?}", path.display(), ck.model.kind)));
    }
    Ok(ck.model)
}

fn sibling(checkpoint: &Path, name: &str) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new(".")).join(name)
}

#[derive(Args)]
pub struct SynthArgs {
    /// Cohort specification (key = value); defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => {
            need_file(p, "spec")?;
            CohortSpec::parse(&fs::read_to_string(p).map_err(io(p))?)?
        }
        None => CohortSpec::default(),
    };
    let c = generate_cohort(&spec, &a.out)?;
    info!("wrote {} participants, {} rows to {}", c.participants.len(), c.rows.len(), c.manifest.display());
    Ok(())
}

#[derive(Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    need_file(&a.manifest, "manifest")?;
    let loaded = load_manifest(&a.manifest, ManifestOptions::default())?;
    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    let rows = write_prepared(&loaded.cohort, &a.out)?;
    write_manifest(a.out.join("manifest.csv"), &rows)?;
    write_dropped_log(a.out.join("dropped.txt"), &loaded.dropped)?;
    info!("kept {} rows, dropped {}", rows.len(), loaded.dropped.len());
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Training configuration (key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Participant split to use instead of a fresh stratified one.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn write_report(out: &Path, name: &str, report: &mut TrainReport, ckpt: &Path) -> Result<()> {
    report.checkpoint = Some(ckpt.to_path_buf());
    let p = out.join(name);
    report.write_csv(&p).map_err(io(&p))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => {
            need_file(p, "config")?;
            TrainConfig::parse(&fs::read_to_string(p).map_err(io(p))?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    let cohort = load_cohort(&a.manifest, false)?;
    let split = match &a.split {
        Some(p) => {
            need_file(p, "split")?;
            read_split(p)?
        }
        None => split_participants(&cohort, cfg.split_ratios(), cfg.seed)?,
    };
    let out = longtrack::training::train::<f64>(&cohort, &split, &cfg, &MelParams::default())?;
    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    write_split(a.out.join(SPLIT_FILE), &split)?;
    let cfg_path = a.out.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(io(&cfg_path))?;
    for (fit, ck_name, report_name) in [
        (out.sequence, MODEL_FILE, "train_report.csv"),
        (out.single, SINGLE_FILE, "train_report_single.csv"),
        (out.average, AVERAGE_FILE, "train_report_average.csv"),
    ] {
        let ck = a.out.join(ck_name);
        save_checkpoint(&fit.checkpoint, &ck)?;
        let mut report = fit.report;
        write_report(&a.out, report_name, &mut report, &ck)?;
        let best = report.best();
        info!("{:?}: best epoch {} of {}, validation AUROC {:?}", report.kind, report.best_epoch, report.epochs.len(), best.val_auroc);
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Sequential model; baseline checkpoints and the split are looked up next to it.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    /// Partition to score.
    #[arg(long, default_value = "test", value_parser = ["train", "validation", "test"])]
    partition: String,
    /// Bootstrap resamples for confidence intervals and the z test.
    #[arg(long, default_value_t = 1000)]
    n_boot: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn trajectories(cohort: &Cohort, ids: &dyn Fn(&str) -> bool, model: &ModelParams<f64>, cache: &FusedCache<f64>) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for p in cohort.participants.iter().filter(|p| ids(&p.id)) {
        match predict_trajectory(p, model, cache) {
            Ok(t) => out.push(t),
            Err(TrajectoryError::TooFewSamples { participant_id }) => warn!("{participant_id}: fewer than two recordings, skipped"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn cache_for(model: &ModelParams<f64>, shared: Option<(&ModelParams<f64>, &FusedCache<f64>)>, cohort: &Cohort, keep: &dyn Fn(&str) -> bool) -> Result<Option<FusedCache<f64>>> {
    if let Some((m, _)) = shared {
        let r = m.layout.embedder_range();
        if m.dims == model.dims && m.params[r.clone()] == model.params[r] {
            return Ok(None);
        }
    }
    Ok(Some(FusedCache::build(model, cohort, &MelParams::default(), keep)?))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    need_file(&a.checkpoint, "checkpoint")?;
    let split_path = a.split.clone().unwrap_or_else(|| sibling(&a.checkpoint, SPLIT_FILE));
    need_file(&split_path, "split")?;
    let seq = load_model(&a.checkpoint, ModelKind::Sequence)?;
    let single = load_model(&sibling(&a.checkpoint, SINGLE_FILE), ModelKind::BaselineSingle)?;
    let average = load_model(&sibling(&a.checkpoint, AVERAGE_FILE), ModelKind::BaselineAverage)?;
    let split: DatasetSplit = read_split(&split_path)?;
    let part = Partition::parse(&a.partition).expect("validated by clap");
    let cohort = load_cohort(&a.manifest, false)?;
    let ids = split.ids(part).clone();
    let keep = |id: &str| ids.contains(id);
    if !cohort.participants.iter().any(|p| keep(&p.id)) {
        return Err(CliError::Data(format!("no {} participants of the split are in the manifest", part.as_str())));
    }
    let mel = MelParams::default();
    let seq_cache = FusedCache::build(&seq, &cohort, &mel, keep)?;
    let seq_t = trajectories(&cohort, &keep, &seq, &seq_cache)?;
    let mut base_t = Vec::new();
    for m in [&single, &average] {
        let own = cache_for(m, Some((&seq, &seq_cache)), &cohort, &keep)?;
        base_t.push(trajectories(&cohort, &keep, m, own.as_ref().unwrap_or(&seq_cache))?);
    }
    let cfg = ReportConfig { n_boot: a.n_boot, seed: a.seed, ..ReportConfig::default() };
    let report = build_report(&seq_t, &[("single", &base_t[0]), ("average", &base_t[1])], &cfg)?;

    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    report.write(&a.out).map_err(io(&a.out))?;
    for (name, t) in [("trajectories.csv", &seq_t), ("trajectories_single.csv", &base_t[0]), ("trajectories_average.csv", &base_t[1])] {
        let p = a.out.join(name);
        write_trajectories_csv(&p, t).map_err(io(&p))?;
    }

    let rec: Vec<(&Trajectory, Vec<f64>, Vec<bool>)> = seq_t.iter().filter(|t| is_recovery(t) && t.points.len() >= 2).map(|t| (t, t.probabilities(), t.labels())).collect();
    let aligned = rec.iter().map(|(_, p, l)| dtw_align(p, l)).collect::<std::result::Result<Vec<_>, _>>()?;
    let rows: Vec<(&str, &[f64], &[bool], _)> = rec.iter().zip(&aligned).map(|((t, p, l), al)| (t.participant_id.as_str(), p.as_slice(), l.as_slice(), al)).collect();
    let p = a.out.join("dtw_paths.csv");
    write_dtw_csv(&p, &rows).map_err(io(&p))?;

    let mut keys = Vec::new();
    let mut latents = Vec::new();
    for p in cohort.participants.iter().filter(|p| keep(&p.id) && p.samples.len() >= 2) {
        for (day, h) in extract_latents(p, &seq, &seq_cache)? {
            keys.push((p.id.clone(), day));
            latents.push(h);
        }
    }
    match pca_project(&latents, PCA_COMPONENTS) {
        Ok(pca) => {
            let p = a.out.join("latents_pca.csv");
            write_pca_csv(&p, &keys, &pca).map_err(io(&p))?;
            let total: f64 = pca.eigenvalues.iter().sum();
            let lines: Vec<String> = pca.eigenvalues.iter().take(PCA_COMPONENTS).enumerate().map(|(i, v)| format!("pc{},{v:.6},{:.6}", i + 1, if total > 0.0 { v / total } else { 0.0 })).collect();
            let p = a.out.join("pca_variance.csv");
            fs::write(&p, format!("component,variance,fraction\n{}\n", lines.join("\n"))).map_err(io(&p))?;
        }
        Err(e) => warn!("latent PCA skipped: {e}"),
    }
    print!("{report}");
    Ok(())
}

#[derive(Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    participant: String,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

pub fn trajectory(a: TrajectoryArgs) -> Result<()> {
    need_file(&a.checkpoint, "checkpoint")?;
    let ck = load_checkpoint::<f64>(&a.checkpoint, None)?;
    let cohort = load_cohort(&a.manifest, false)?;
    let p = cohort.get(&a.participant).ok_or_else(|| CliError::Usage(format!("participant {} is not in the manifest", a.participant)))?;
    let cache = FusedCache::build(&ck.model, &cohort, &MelParams::default(), |id| id == a.participant)?;
    let t = predict_trajectory(p, &ck.model, &cache)?;
    write_trajectories_csv(&a.out, &[t]).map_err(io(&a.out))
}

#[derive(Args)]
pub struct PlotArgs {
    #[arg(long)]
    trajectory_csv: PathBuf,
    /// Participant to draw when the CSV holds several.
    #[arg(long)]
    participant: Option<String>,
    /// Output SVG.
    #[arg(long)]
    out: PathBuf,
}

pub fn plot(a: PlotArgs) -> Result<()> {
    need_file(&a.trajectory_csv, "trajectory CSV")?;
    let all = read_trajectories_csv(&a.trajectory_csv).map_err(|e| CliError::Data(format!("{}: {e}", a.trajectory_csv.display())))?;
    let t = match &a.participant {
        Some(id) => all.iter().find(|t| &t.participant_id == id).ok_or_else(|| CliError::Usage(format!("participant {id} is not in the CSV")))?,
        None => match all.as_slice() {
            [] => return Err(CliError::Data("trajectory is empty".into())),
            [one] => one,
            _ => return Err(CliError::Usage("the CSV holds several participants; pass --participant".into())),
        },
    };
    let svg = render_svg(t).ok_or_else(|| CliError::Data("trajectory is empty".into()))?;
    fs::write(&a.out, svg).map_err(io(&a.out))
}

#[derive(Args)]
pub struct ReportArgs {
    /// Output directory of `eval`.
    #[arg(long)]
    eval_dir: PathBuf,
    /// Output directory of `train`, for the training summary.
    #[arg(long)]
    train_dir: Option<PathBuf>,
    /// Text file to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    Ok(text.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let summary = a.eval_dir.join("summary.txt");
    need_file(&summary, "evaluation summary")?;
    let mut text = String::from("LONGITUDINAL DETECTION REPORT\n\n");
    if let Some(dir) = &a.train_dir {
        text.push_str("Training\n");
        for (name, file) in [("sequential", "train_report.csv"), ("single", "train_report_single.csv"), ("average", "train_report_average.csv")] {
            let p = dir.join(file);
            need_file(&p, "training report")?;
            let rows = read_csv_rows(&p)?;
            if let Some(best) = rows.iter().find(|r| r.last().map(String::as_str) == Some("1")) {
                text.push_str(&format!("  {name:<12} best epoch {} of {}, validation AUROC {}\n", best[0], rows.len(), best[3]));
            }
        }
        text.push('\n');
    }
    text.push_str(&fs::read_to_string(&summary).map_err(io(&summary))?);
    let pca = a.eval_dir.join("pca_variance.csv");
    if pca.is_file() {
        text.push_str("Latent space (principal components of the final hidden state)\n");
        for r in read_csv_rows(&pca)? {
            if r.len() == 3 {
                text.push_str(&format!("  {}  variance {}  fraction {}\n", r[0], r[1], r[2]));
            }
        }
    }
    let rec = a.eval_dir.join("recovery.csv");
    if rec.is_file() {
        let rows = read_csv_rows(&rec)?;
        if !rows.is_empty() {
            text.push_str("Recovery trajectories (gamma_pb, after DTW)\n");
            for r in rows {
                text.push_str(&format!("  {}  {}  {}\n", r[0], r[1], r[2]));
            }
        }
    }
    match &a.out {
        Some(p) => fs::write(p, text).map_err(io(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
