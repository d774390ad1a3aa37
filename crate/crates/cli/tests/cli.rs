use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hon_core::flowfield::{AnalyticField, GridField};
use hon_core::pipeline::{hash_file, UiBundle};

const CONFIG: &str = r#"
out = "out"
[field]
samples = [24, 24, 24]
[blocks]
dims = [4, 4, 4]
[corpus]
train = 300
validation = 150
test = 300
[train]
iterations = 10
max_outer = 2
[[networks.build]]
kind = "fon"
[[networks.build]]
kind = "ref"
order = 2
[[networks.build]]
kind = "flowhon"
order = 2
[export]
network = { kind = "flowhon", order = 2 }
streamlines = 25
max_points = 40
markov_time = 1.0
"#;

fn hon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hon"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    let out = dir.path().join("out");
    (dir, out)
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn trace_writes_splits_and_is_repeatable() {
    let (dir, out) = setup(CONFIG);
    let o = hon(dir.path(), &["--config", "run.toml", "trace"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out.join("corpus/train.txt")), 300);
    assert_eq!(lines(&out.join("corpus/validation.txt")), 150);
    assert_eq!(lines(&out.join("corpus/test.txt")), 300);
    let before = hash_file(&out.join("corpus/test.txt")).unwrap();
    let manifest = fs::read(out.join("manifest.json")).unwrap();
    assert!(hon(dir.path(), &["--config", "run.toml", "trace"])
        .status
        .success());
    assert_eq!(hash_file(&out.join("corpus/test.txt")).unwrap(), before);
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);

    assert!(hon(
        dir.path(),
        &["--config", "run.toml", "--seed", "8", "trace"]
    )
    .status
    .success());
    assert_ne!(hash_file(&out.join("corpus/test.txt")).unwrap(), before);
}

#[test]
fn full_run_produces_consistent_artifacts() {
    let (dir, out) = setup(CONFIG);
    let o = hon(dir.path(), &["--config", "run.toml", "all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    // one density row per network and step, 31 sweep rows per network
    assert_eq!(lines(&out.join("reports/density.csv")), 1 + 3 * 8);
    for slug in ["fon", "fixed2", "flowhon2"] {
        assert!(out.join(format!("networks/{slug}.json")).exists());
        assert!(out.join(format!("reports/density/{slug}.json")).exists());
        assert_eq!(
            lines(&out.join(format!("reports/communities/{slug}.csv"))),
            32
        );
    }
    assert!(out.join("networks/flowhon2.log.jsonl").exists());

    let fon: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("networks/fon.json")).unwrap()).unwrap();
    assert!(fon["nodes"].as_array().unwrap().len() <= 4 * 4 * 4 + 1);

    let ui: UiBundle =
        serde_json::from_str(&fs::read_to_string(out.join("ui/bundle.json")).unwrap()).unwrap();
    let ids: std::collections::HashMap<usize, i32> =
        ui.nodes.iter().map(|n| (n.id, n.block)).collect();
    assert!(ui
        .edges
        .iter()
        .all(|e| ids.contains_key(&e.src) && ids.contains_key(&e.dst)));
    assert_eq!(ui.streamlines.len(), 25);
    for s in &ui.streamlines {
        assert!(s.points.len() <= 40);
        assert_eq!(s.labels.len() + 1, s.points.len());
        for (p, l) in s.points.iter().zip(&s.labels) {
            assert_eq!(ids[l], ui.grid.block_of(*p));
        }
    }
    assert!(ui.nodes.iter().all(|n| n.community.is_some()));
}

#[test]
fn fon_export_has_one_node_per_occupied_block() {
    let config = r#"
[field]
source = { constant = { velocity = [1.0, 0.0, 0.0], extent = [8.0, 2.0, 2.0] } }
samples = [9, 3, 3]
[blocks]
dims = [4, 2, 2]
[corpus]
train = 64
validation = 16
test = 64
[[networks.build]]
kind = "fon"
[export]
network = { kind = "fon" }
streamlines = 10
"#;
    let (dir, out) = setup(config);
    let o = hon(dir.path(), &["--config", "run.toml", "--out", "out", "all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ui: UiBundle =
        serde_json::from_str(&fs::read_to_string(out.join("ui/bundle.json")).unwrap()).unwrap();
    assert_eq!(ui.nodes.len(), 16);
}

#[test]
fn build_and_export_single_networks() {
    let (dir, out) = setup(CONFIG);
    assert!(hon(dir.path(), &["--config", "run.toml", "trace"])
        .status
        .success());
    let o = hon(
        dir.path(),
        &["--config", "run.toml", "build", "--kind", "fon+"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("networks/fon_opt.json").exists());
    assert!(!out.join("networks/fon.json").exists());

    // exporting a network that was never built is a validation error
    let o = hon(dir.path(), &["--config", "run.toml", "export-ui"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hon(
        dir.path(),
        &["--config", "run.toml", "export-ui", "--kind", "fon+"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_refuses_bundles_from_another_corpus() {
    let (dir, out) = setup(CONFIG);
    assert!(hon(dir.path(), &["--config", "run.toml", "trace"])
        .status
        .success());
    assert!(hon(
        dir.path(),
        &["--config", "run.toml", "build", "--kind", "fon"]
    )
    .status
    .success());
    let bundle = fs::read(out.join("networks/fon.json")).unwrap();
    assert!(hon(
        dir.path(),
        &["--config", "run.toml", "--seed", "9", "trace"]
    )
    .status
    .success());
    fs::write(out.join("networks/fon.json"), bundle).unwrap();
    let o = hon(dir.path(), &["--config", "run.toml", "eval-density"]);
    // the retrace dropped the network from the manifest, so nothing is evaluated
    assert!(o.status.success());
    assert!(!out.join("reports/density/fon.json").exists());

    let o = hon(
        dir.path(),
        &["--config", "run.toml", "eval-density", "--kind", "fon"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tampered_bundle_is_refused() {
    let (dir, out) = setup(CONFIG);
    assert!(hon(dir.path(), &["--config", "run.toml", "trace"])
        .status
        .success());
    assert!(hon(
        dir.path(),
        &["--config", "run.toml", "build", "--kind", "fon"]
    )
    .status
    .success());
    let p = out.join("networks/fon.json");
    let text = fs::read_to_string(&p).unwrap();
    fs::write(
        &p,
        text.replacen("\"corpus_hash\":\"", "\"corpus_hash\":\"0", 1),
    )
    .unwrap();
    let o = hon(dir.path(), &["--config", "run.toml", "eval-density"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("provenance"));
}

#[test]
fn validation_errors_exit_with_two() {
    let (dir, _) = setup("[corpus]\ntrian = 3\n");
    let o = hon(dir.path(), &["--config", "run.toml", "trace"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trian"));

    let (dir, _) = setup(CONFIG);
    let o = hon(
        dir.path(),
        &["--config", "run.toml", "build", "--kind", "octree"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = hon(dir.path(), &["--config", "missing.toml", "trace"]);
    assert_eq!(o.status.code(), Some(1));
    // building before tracing
    let o = hon(
        dir.path(),
        &["--config", "run.toml", "build", "--kind", "fon"],
    );
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn truncated_grid_file_names_byte_counts() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridField::sample(&AnalyticField::abc(), [4, 4, 4]).unwrap();
    g.write(&dir.path().join("abc.json")).unwrap();
    let raw = dir.path().join("abc.raw");
    let bytes = fs::read(&raw).unwrap();
    fs::write(&raw, &bytes[..bytes.len() - 10]).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[field]\nsource = { grid = { path = \"abc.json\" } }\n[corpus]\ntrain = 5\nvalidation = 5\ntest = 5\n",
    )
    .unwrap();
    let o = hon(dir.path(), &["--config", "run.toml", "trace"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&(4 * 4 * 4 * 12).to_string()), "{err}");
    assert!(err.contains(&(4 * 4 * 4 * 12 - 10).to_string()), "{err}");
}
