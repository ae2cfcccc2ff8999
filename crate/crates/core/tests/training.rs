use std::path::PathBuf;
use std::sync::OnceLock;

use longtrack::audio::MelParams;
use longtrack::cohort::{load_manifest, split_participants, Cohort, DatasetSplit, ManifestOptions, Partition};
use longtrack::synth::{generate_cohort, CohortSpec};
use longtrack::training::{init_model, prepare, train, TrainConfig, TrainError};

/// Low-noise cohort in which single recordings already carry the label.
fn cohort() -> &'static (PathBuf, Cohort) {
    static DIR: OnceLock<(PathBuf, Cohort)> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let spec = CohortSpec {
            recovering: 5,
            persistent_positive: 5,
            healthy: 5,
            late_onset: 5,
            min_samples: 8,
            max_samples: 9,
            day_noise_sd: 0.05,
            participant_offset_sd: 0.02,
            seed: 13,
            ..CohortSpec::default()
        };
        generate_cohort(&spec, &dir).unwrap();
        let loaded = load_manifest(dir.join("manifest.csv"), ManifestOptions::default()).unwrap();
        (dir, loaded.cohort)
    })
}

fn small_config() -> TrainConfig {
    TrainConfig { epochs: 6, patience: 10, embed_dim: 16, hidden: 8, split_train: 0.6, split_validation: 0.2, split_test: 0.2, ..TrainConfig::default() }
}

fn split(cfg: &TrainConfig) -> DatasetSplit {
    split_participants(&cohort().1, cfg.split_ratios(), cfg.seed).unwrap()
}

#[test]
fn bce_falls_over_first_epochs() {
    let cfg = TrainConfig { lr: 3e-3, ..small_config() };
    let out = train::<f64>(&cohort().1, &split(&cfg), &cfg, &MelParams::default()).unwrap();
    let e = &out.sequence.report.epochs;
    assert!(e.len() >= 5);
    assert!(e[4].train_bce < e[0].train_bce, "epoch 1 {} vs epoch 5 {}", e[0].train_bce, e[4].train_bce);
    for r in [&out.single.report, &out.average.report] {
        assert!(r.epochs.last().unwrap().train_bce < r.epochs[0].train_bce);
    }
}

#[test]
fn selected_epoch_is_at_least_as_good_as_the_first() {
    let cfg = small_config();
    let out = train::<f64>(&cohort().1, &split(&cfg), &cfg, &MelParams::default()).unwrap();
    let r = &out.sequence.report;
    let best = r.best();
    assert_eq!(best.epoch, r.best_epoch);
    assert!(best.best_score >= r.epochs[0].best_score);
    if let (Some(b), Some(first)) = (best.val_auroc, r.epochs[0].val_auroc) {
        assert!(b >= first);
    }
    assert!(r.epochs.iter().all(|e| e.best_score <= best.best_score));
}

#[test]
fn single_precision_trains() {
    let cfg = TrainConfig { epochs: 2, ..small_config() };
    let out = train::<f32>(&cohort().1, &split(&cfg), &cfg, &MelParams::default()).unwrap();
    assert!(out.sequence.checkpoint.model.params.iter().all(|v| v.is_finite()));
    assert!(out.sequence.report.epochs.iter().all(|e| e.train_loss.is_finite()));
}

#[test]
fn empty_train_partition_is_rejected() {
    let cfg = small_config();
    let mut s = DatasetSplit::default();
    for p in &cohort().1.participants {
        s.insert(p.id.clone(), Partition::Test);
    }
    let mut model = init_model::<f64>(&cfg);
    let err = prepare(&cohort().1, &s, &cfg, &MelParams::default(), &mut model).err().unwrap();
    assert!(matches!(err, TrainError::EmptyPartition("train")), "{err:?}");
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let cfg = TrainConfig { batch_size: 0, ..small_config() };
    assert!(matches!(train::<f64>(&cohort().1, &split(&cfg), &cfg, &MelParams::default()), Err(TrainError::Config(_))));
}
