use std::path::{Path, PathBuf};
use std::process::Command;

use crownscale_cli::meta::RunMeta;
use crownscale_cli::RunConfig;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn crownscale(args: &[&str], config: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_crownscale"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--workers")
        .arg("1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(args: &[&str], config: &Path) -> Output {
    let out = crownscale(args, config);
    assert_eq!(out.code, 0, "{args:?} failed:\n{}\n{}", out.stdout, out.stderr);
    out
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"
work_dir = "run"

[synth]
n_species = 3
trees_per_species = 7
n_dates = 2
tile_size = 48
close_up_width = 40
close_up_height = 32
seed = 3

[tile]
scene = "run/scene/scene.json"
tile_size = 48

[model.arch]
family = "tiny"
image_size = 32
channels = [8, 16]

[train]
batch_size = 8
max_epochs = 3
seed = 1
"#;

fn small_pipeline(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "run.toml", SMALL);
    ok(&["synth"], &cfg);
    ok(&["tile"], &cfg);
    ok(&["split"], &cfg);
    cfg
}

#[test]
fn three_polygons_on_two_dates_give_six_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
work_dir = "run"
[synth]
n_species = 3
trees_per_species = 1
n_dates = 2
tile_size = 32
close_ups_per_tree = 0
[tile]
scene = "run/scene/scene.json"
tile_size = 32
"#,
    );
    ok(&["synth"], &cfg);
    let out = ok(&["tile"], &cfg);
    assert!(out.stdout.contains("polygons processed: 3"), "{}", out.stdout);
    assert!(out.stdout.contains("2 dates: 3 trees"), "{}", out.stdout);
    assert!(out.stdout.contains("skipped geometries: 0"), "{}", out.stdout);
    let manifest = std::fs::read_to_string(dir.path().join("run/tiles/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 6);
    let pngs = walk(&dir.path().join("run/tiles"))
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .count();
    assert_eq!(pngs, 6);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn missing_polygon_file_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[tile]
polygons = "absent.geojson"
rasters = [{ date_id = "2024-01-01", path = "absent.tif" }]
"#,
    );
    let out = crownscale(&["tile"], &cfg);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("tile.polygons"), "{}", out.stderr);
    assert!(out.stderr.contains("absent.geojson"), "{}", out.stderr);
}

#[test]
fn retiling_unchanged_inputs_gives_identical_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pipeline(dir.path());
    let manifest = dir.path().join("run/tiles/manifest.jsonl");
    let first = std::fs::read(&manifest).unwrap();
    ok(&["tile"], &cfg);
    assert_eq!(std::fs::read(&manifest).unwrap(), first);
}

#[test]
fn soft_voting_on_close_ups_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[evaluate]
views = ["close_up"]
modes = ["soft_voting"]
"#,
    );
    let out = crownscale(&["evaluate"], &cfg);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("evaluate.modes"), "{}", out.stderr);
}

#[test]
fn schema_violations_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "a.toml", "[train]\nbogus = 1\n");
    let out = crownscale(&["train"], &unknown);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("train.bogus"), "{}", out.stderr);

    let wrong_type = write_config(dir.path(), "b.toml", "[split.ratios]\ntrain = \"most\"\nval = 0.1\ntest = 0.1\n");
    let out = crownscale(&["split"], &wrong_type);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("split.ratios.train"), "{}", out.stderr);

    let semantic = write_config(dir.path(), "c.toml", "[train]\npatience = 0\n");
    let out = crownscale(&["train"], &semantic);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("`train`"), "{}", out.stderr);

    let json = write_config(dir.path(), "d.json", r#"{"evaluate": {"batch_size": -1}}"#);
    let out = crownscale(&["evaluate"], &json);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("evaluate.batch_size"), "{}", out.stderr);
}

#[test]
fn missing_upstream_artifacts_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "work_dir = \"empty\"\n");
    for cmd in ["split", "train", "evaluate", "report"] {
        let out = crownscale(&[cmd], &cfg);
        assert_eq!(out.code, 3, "{cmd}: {}", out.stderr);
        assert!(out.stderr.contains("missing upstream artifact"), "{cmd}: {}", out.stderr);
    }
}

#[test]
fn published_backbones_need_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &SMALL.replace("[model.arch]\nfamily = \"tiny\"\nimage_size = 32\nchannels = [8, 16]\n", "[model]\nbackbone = \"resnet50\"\nweights = \"nowhere.safetensors\"\n"));
    ok(&["synth"], &cfg);
    ok(&["tile"], &cfg);
    ok(&["split"], &cfg);
    let out = crownscale(&["train"], &cfg);
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert!(out.stderr.contains("resnet50"), "{}", out.stderr);
}

#[test]
fn identical_configs_give_identical_metric_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pipeline(dir.path());
    ok(&["train"], &cfg);
    ok(&["evaluate"], &cfg);
    let eval = dir.path().join("run/eval/crown_view");
    let files = ["metrics_crown_view_individual_image.json", "metrics_crown_view_soft_voting.json"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(eval.join(f)).unwrap()).collect();
    ok(&["train"], &cfg);
    ok(&["evaluate"], &cfg);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&std::fs::read(eval.join(f)).unwrap(), bytes, "{f} differs between runs");
    }

    let meta = RunMeta::read(&eval).unwrap();
    let parsed = RunConfig::load(&cfg).unwrap();
    assert_eq!(meta.config_hash, parsed.hash());
    assert_eq!(meta.config, parsed);
    let report: serde_json::Value = serde_json::from_slice(&first[0]).unwrap();
    assert_eq!(report["config_hash"], serde_json::Value::String(parsed.hash()));
    for stage in ["tiles", "split", "train/crown_view", "eval/crown_view"] {
        let meta = RunMeta::read(&dir.path().join("run").join(stage)).unwrap();
        assert_eq!(meta.config_hash, parsed.hash(), "{stage}");
    }
    assert_eq!(RunMeta::read(&dir.path().join("run/train/crown_view")).unwrap().seed, 1);
}

#[test]
fn report_refuses_mixed_configs_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pipeline(dir.path());
    ok(&["train"], &cfg);
    ok(&["evaluate"], &cfg);
    let other = write_config(dir.path(), "other.toml", &format!("{SMALL}\n[evaluate]\nname = \"again\"\n"));
    ok(&["evaluate"], &other);

    let out = crownscale(&["report"], &cfg);
    assert_eq!(out.code, 2, "{}", out.stderr);
    assert!(out.stderr.contains("--force"), "{}", out.stderr);

    let out = ok(&["report", "--force"], &cfg);
    assert!(out.stdout.contains("Crown view"), "{}", out.stdout);
    let report = dir.path().join("run/report");
    for f in ["report.md", "longtail.svg", "longtail_chart.csv", "longtail_table.csv", "run_meta.json"] {
        assert!(report.join(f).is_file(), "{f} missing");
    }
    let svg = std::fs::read_to_string(report.join("longtail.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("crown_view"));
}

#[test]
fn single_config_report_needs_no_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_pipeline(dir.path());
    ok(&["train"], &cfg);
    ok(&["evaluate"], &cfg);
    let out = ok(&["report"], &cfg);
    assert!(out.stdout.contains("soft_voting"));
    assert!(out.stdout.contains("Long tail"));
}

#[test]
fn crossval_reports_epochs_over_folds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &SMALL.replace("seed = 3\n", "seed = 3\n\n[split]\ncrossval_folds = 3\n"));
    ok(&["synth"], &cfg);
    ok(&["tile"], &cfg);
    ok(&["split"], &cfg);
    let out = ok(&["train"], &cfg);
    assert!(out.stdout.contains("over 3 folds"), "{}", out.stdout);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run/train/crown_view/crossval.json")).unwrap()).unwrap();
    assert_eq!(summary["k"], 3);
}

#[test]
fn distillation_runs_from_a_close_up_teacher() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path());
    let teacher = write_config(
        dir.path(),
        "teacher.toml",
        &SMALL.replace("[model.arch]", "[model]\nview = \"close_up\"\n\n[model.arch]"),
    );
    ok(&["train"], &teacher);
    let student = write_config(
        dir.path(),
        "student.toml",
        &format!("{SMALL}\n[distill]\nloss_weight_distill = 0.5\n\n[evaluate]\ncheckpoint = \"run/distill/checkpoint\"\nname = \"distill\"\n"),
    );
    let out = ok(&["distill"], &student);
    assert!(out.stdout.contains("cross-scale pairs"), "{}", out.stdout);
    let history = std::fs::read_to_string(dir.path().join("run/distill/history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,val_top1,loss_distill,loss_ce"));
    assert!(dir.path().join("run/distill/teacher_cache/teacher_embeddings.json").is_file());
    ok(&["evaluate"], &student);
    assert!(dir.path().join("run/eval/distill/metrics_crown_view_soft_voting.json").is_file());
}
