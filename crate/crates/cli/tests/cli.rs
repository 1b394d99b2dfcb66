use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"name = "tiny"
seed = 7
cadence = 2
methods = ["concat", "linear_cca", "dcca", "nr_dcca"]
common_rates = [0, 40]

[dataset.synthetic]
d = 10
n = 100
transform_hidden = 16
task_count = 3

[overrides.all]
epochs = 3
hidden_dims = [8]
embed_dim = 4
"#;

fn mvcca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvcca"))
        .args(args)
        .env_remove("MVCCA_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mvcca(args);
    assert!(
        out.status.success(),
        "mvcca {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = mvcca(args);
    assert_eq!(out.status.code(), Some(1), "mvcca {args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_one_directory_per_rate_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let listed = ok(&["gen-data", "--config", &cfg, "--out", s(&a)]);
    ok(&["gen-data", "--config", &cfg, "--out", s(&b)]);
    assert_eq!(listed.lines().count(), 2);
    for cr in ["cr0", "cr40"] {
        for file in ["view_0.csv", "view_1.csv", "tasks.csv", "meta.json"] {
            let x = fs::read(a.join("data").join(cr).join(file)).unwrap();
            let y = fs::read(b.join("data").join(cr).join(file)).unwrap();
            assert_eq!(x, y, "{cr}/{file}");
        }
    }
}

#[test]
fn six_rate_preset_lists_six_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("six.toml");
    fs::write(
        &cfg,
        TINY.replace("common_rates = [0, 40]", "common_rates = [0, 20, 40, 60, 80, 100]"),
    )
    .unwrap();
    let listed = ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(listed.lines().count(), 6);
}

#[test]
fn sweep_is_deterministic_and_tags_outputs_with_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["sweep", "--config", &cfg, "--out", s(&a), "--jobs", "2"]);
    ok(&["sweep", "--config", &cfg, "--out", s(&b)]);
    for file in ["summary.csv", "metrics.csv", "config.toml", "metrics/nr_dcca_cr40.jsonl"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 2);
    let hash = summary.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert!(summary.lines().skip(1).all(|l| l.starts_with(&hash)));
    assert!(fs::read_to_string(a.join("metrics.csv")).unwrap().lines().skip(1).all(|l| l.starts_with(&hash)));
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["sweep", "--config", &cfg, "--out", s(&a)]);
    ok(&["sweep", "--config", &cfg, "--out", s(&b), "--seed", "8"]);
    assert_ne!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let root = dir.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_mvcca"))
        .args(["gen-data", "--config", &cfg])
        .env("MVCCA_OUT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("tiny/data/cr40/meta.json").exists());
}

#[test]
fn train_then_evaluate_reproduces_the_final_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    ok(&["gen-data", "--config", &cfg, "--out", s(dir.path())]);
    let data = dir.path().join("data/cr40");
    let run = dir.path().join("run");
    ok(&["train", "--config", &cfg, "--dataset", s(&data), "--method", "dcca", "--out", s(&run)]);

    let trained = fs::read_to_string(run.join("summary.csv")).unwrap();
    let eval_csv = dir.path().join("eval.csv");
    ok(&[
        "evaluate",
        "--checkpoint",
        s(&run.join("models/dcca.json")),
        "--dataset",
        s(&data),
        "--out",
        s(&eval_csv),
    ]);
    let evaluated = fs::read_to_string(&eval_csv).unwrap();
    let header: Vec<&str> = trained.lines().next().unwrap().split(',').collect();
    assert_eq!(header, evaluated.lines().next().unwrap().split(',').collect::<Vec<_>>());
    let col = header.iter().position(|h| *h == "mean_r2").expect("mean_r2 column");
    let value = |text: &str| -> f64 { text.lines().nth(1).unwrap().split(',').nth(col).unwrap().parse().unwrap() };
    assert!((value(&trained) - value(&evaluated)).abs() < 1e-9);
}

#[test]
fn evaluate_rejects_a_dataset_of_the_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    ok(&["sweep", "--config", &cfg, "--out", s(dir.path())]);
    let other = dir.path().join("other.toml");
    fs::write(&other, TINY.replace("d = 10", "d = 20")).unwrap();
    let odir = dir.path().join("o");
    ok(&["gen-data", "--config", s(&other), "--out", s(&odir)]);
    let err = fail(&[
        "evaluate",
        "--checkpoint",
        s(&dir.path().join("models/dcca_cr40.json")),
        "--dataset",
        s(&odir.join("data/cr40")),
    ]);
    assert!(err.contains("dimension"), "{err}");
}

#[test]
fn malformed_config_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "name = \"x\"\nmethods = [\"dcca\"]\ncadence = \"often\"\n").unwrap();
    let err = fail(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(err.contains("bad.toml") && err.contains("line 3"), "{err}");
}

#[test]
fn unknown_preset_lists_the_known_ones() {
    let err = fail(&["gen-data", "--preset", "nope", "--out", "/nonexistent"]);
    assert!(err.contains("synthetic-nr-dcca"), "{err}");
}

fn write_matrix(path: &Path, rows: usize, cols: usize, salt: usize) {
    let text: String = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| (((r + 1) * (c + salt) * 7919) % 101) as f64 / 10.0)
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    fs::write(path, text).unwrap();
}

#[test]
fn ingest_builds_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (v0, v1, t) = (dir.path().join("v0.csv"), dir.path().join("v1.csv"), dir.path().join("t.csv"));
    write_matrix(&v0, 3, 10, 1);
    write_matrix(&v1, 3, 10, 2);
    write_matrix(&t, 1, 10, 3);
    let out = dir.path().join("ds");
    ok(&["ingest", "--view", s(&v0), "--view", s(&v1), "--tasks", s(&t), "--split", "6", "--out", s(&out)]);
    let meta = fs::read_to_string(out.join("meta.json")).unwrap();
    assert!(meta.contains("external"), "{meta}");
    let loaded = mvcca::dataset::MultiViewDataset::load(&out).unwrap();
    assert_eq!(loaded.view_dims(), vec![3, 3]);
    assert_eq!(loaded.n(), 10);
}

#[test]
fn ingest_rejects_mismatched_columns_and_bad_cells() {
    let dir = tempfile::tempdir().unwrap();
    let (v0, v1, t) = (dir.path().join("v0.csv"), dir.path().join("v1.csv"), dir.path().join("t.csv"));
    write_matrix(&v0, 3, 10, 1);
    write_matrix(&v1, 3, 9, 2);
    write_matrix(&t, 1, 10, 3);
    let out = dir.path().join("ds");
    let err = fail(&["ingest", "--view", s(&v0), "--view", s(&v1), "--tasks", s(&t), "--out", s(&out)]);
    assert!(err.contains("column") || err.contains("sample"), "{err}");

    fs::write(&v1, "1,2,3\n4,x,6\n").unwrap();
    let err = fail(&["ingest", "--view", s(&v0), "--view", s(&v1), "--tasks", s(&t), "--out", s(&out)]);
    assert!(err.contains("line 2") && err.contains("column 2"), "{err}");
}
