use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use longtrack::synth::{read_truth, Archetype};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_longtrack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn longtrack")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SPEC: &str = "seed = 3\nrecovering = 4\npersistent_positive = 4\nhealthy = 4\nlate_onset = 4\nmin_samples = 7\nmax_samples = 8\n";
const CONFIG: &str = "epochs = 2\nembed_dim = 16\nhidden = 8\nsplit_train = 0.5\nsplit_validation = 0.25\nsplit_test = 0.25\n";

struct Pipeline {
    root: PathBuf,
    synth: PathBuf,
    prepared: PathBuf,
    run: PathBuf,
    eval: PathBuf,
}

/// synth -> preprocess -> train -> eval on a tiny cohort, shared by the tests.
fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let root = tempfile::tempdir().unwrap().keep();
        let p = Pipeline { synth: root.join("synth"), prepared: root.join("prepared"), run: root.join("run"), eval: root.join("eval"), root };
        fs::write(p.root.join("spec.txt"), SPEC).unwrap();
        fs::write(p.root.join("train.txt"), CONFIG).unwrap();
        ok(&["synth", "--spec", s(&p.root.join("spec.txt")), "--out", s(&p.synth)]);
        ok(&["preprocess", "--manifest", s(&p.synth.join("manifest.csv")), "--out", s(&p.prepared)]);
        ok(&["train", "--manifest", s(&p.prepared.join("manifest.csv")), "--config", s(&p.root.join("train.txt")), "--out", s(&p.run)]);
        ok(&["eval", "--manifest", s(&p.prepared.join("manifest.csv")), "--checkpoint", s(&p.run.join("model.ckpt")), "--n-boot", "50", "--out", s(&p.eval)]);
        p
    })
}

#[test]
fn pipeline_writes_every_artifact() {
    let p = pipeline();
    for f in ["model.ckpt", "baseline_single.ckpt", "baseline_average.ckpt", "split.csv", "config.txt", "train_report.csv"] {
        assert!(p.run.join(f).is_file(), "missing {f}");
    }
    for f in ["metrics.csv", "summary.txt", "trajectories.csv", "trajectories_single.csv", "trajectories_average.csv", "dtw_paths.csv", "seq_length.csv"] {
        assert!(p.eval.join(f).is_file(), "missing {f}");
    }
    let metrics = fs::read_to_string(p.eval.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("section,name,metric,value"));
    assert!(metrics.contains("sequential"));

    let report = p.root.join("report.txt");
    ok(&["report", "--eval-dir", s(&p.eval), "--train-dir", s(&p.run), "--out", s(&report)]);
    let text = fs::read_to_string(report).unwrap();
    assert!(text.contains("Training") && text.contains("Detection"));
}

#[test]
fn trajectory_and_plot_for_one_participant() {
    let p = pipeline();
    let id = &read_truth(&p.synth).unwrap()[0].0;
    let csv = p.root.join(format!("{id}.csv"));
    ok(&["trajectory", "--manifest", s(&p.prepared.join("manifest.csv")), "--checkpoint", s(&p.run.join("model.ckpt")), "--participant", id, "--out", s(&csv)]);
    let rows = fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert!(rows >= 6, "{rows} rows");
    let svg = p.root.join(format!("{id}.svg"));
    ok(&["plot", "--trajectory-csv", s(&csv), "--out", s(&svg)]);
    let text = fs::read_to_string(svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let line = doc.descendants().find(|n| n.has_tag_name("polyline")).unwrap();
    assert_eq!(line.attribute("points").unwrap().split_whitespace().count(), rows);
}

#[test]
fn training_is_reproducible_from_the_command_line() {
    let p = pipeline();
    let again = p.root.join("run_again");
    ok(&["train", "--manifest", s(&p.prepared.join("manifest.csv")), "--config", s(&p.root.join("train.txt")), "--out", s(&again)]);
    for f in ["model.ckpt", "baseline_single.ckpt", "baseline_average.ckpt", "split.csv"] {
        assert_eq!(fs::read(p.run.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let p = pipeline();
    let out = run(&["eval", "--manifest", s(&p.prepared.join("manifest.csv")), "--checkpoint", s(&p.root.join("nope.ckpt")), "--out", s(&p.root.join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ckpt"));
}

#[test]
fn single_class_test_set_is_a_data_error() {
    let p = pipeline();
    let truth = read_truth(&p.synth).unwrap();
    let mut csv = String::from("participant_id,partition\n");
    for (id, arch, _) in &truth {
        csv.push_str(&format!("{id},{}\n", if *arch == Archetype::Healthy { "test" } else { "train" }));
    }
    let split = p.root.join("healthy_split.csv");
    fs::write(&split, csv).unwrap();
    let out = run(&["eval", "--manifest", s(&p.prepared.join("manifest.csv")), "--checkpoint", s(&p.run.join("model.ckpt")), "--split", s(&split), "--out", s(&p.root.join("y"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let p = pipeline();
    let dir = p.root.join("corrupt");
    fs::create_dir_all(&dir).unwrap();
    let bytes = fs::read(p.run.join("model.ckpt")).unwrap();
    fs::write(dir.join("model.ckpt"), &bytes[..bytes.len() / 2]).unwrap();
    let out = run(&["trajectory", "--manifest", s(&p.prepared.join("manifest.csv")), "--checkpoint", s(&dir.join("model.ckpt")), "--participant", "x", "--out", s(&dir.join("t.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "epoch = 3\n").unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "participant_id\n").unwrap();
    let out = run(&["train", "--manifest", s(&manifest), "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_traj(dir: &Path, rows: &[(i64, f64, u8)]) -> PathBuf {
    let p = dir.join("t.csv");
    let mut text = String::from("participant_id,day,probability,predicted_class,label\n");
    for (d, prob, l) in rows {
        text.push_str(&format!("p1,{d},{prob},{},{l}\n", u8::from(*prob >= 0.5)));
    }
    fs::write(&p, text).unwrap();
    p
}

fn plot_doc(rows: &[(i64, f64, u8)]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_traj(dir.path(), rows);
    let svg = dir.path().join("p.svg");
    ok(&["plot", "--trajectory-csv", s(&csv), "--out", s(&svg)]);
    fs::read_to_string(svg).unwrap()
}

fn class_count(doc: &roxmltree::Document, class: &str) -> usize {
    doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
}

#[test]
fn svg_has_one_polyline_with_a_vertex_per_day() {
    let rows: Vec<(i64, f64, u8)> = (0..8).map(|k| (k * 3, 0.1 * k as f64, u8::from(k >= 4))).collect();
    let text = plot_doc(&rows);
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), 1);
    let pts: Vec<(f64, f64)> = lines[0]
        .attribute("points")
        .unwrap()
        .split_whitespace()
        .map(|pair| {
            let (x, y) = pair.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    assert_eq!(pts.len(), 8);
    assert!(pts.windows(2).all(|w| w[1].0 > w[0].0), "x increases with day");
    // rising probability is drawn upwards
    assert!(pts.windows(2).all(|w| w[1].1 < w[0].1));
    assert_eq!(class_count(&doc, "band negative"), 1);
    assert_eq!(class_count(&doc, "band positive"), 1);
    assert_eq!(class_count(&doc, "threshold"), 1);
}

#[test]
fn all_negative_labels_give_a_single_band() {
    let rows: Vec<(i64, f64, u8)> = (0..8).map(|k| (k * 2, 0.2, 0)).collect();
    let text = plot_doc(&rows);
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(class_count(&doc, "band negative"), 1);
    assert_eq!(class_count(&doc, "band positive"), 0);
}

#[test]
fn empty_trajectory_csv_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_traj(dir.path(), &[]);
    let out = run(&["plot", "--trajectory-csv", s(&csv), "--out", s(&dir.path().join("p.svg"))]);
    assert_eq!(out.status.code(), Some(3));
}
