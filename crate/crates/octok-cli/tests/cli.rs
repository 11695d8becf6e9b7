//! End-to-end tests against the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use octok::voxelpack::{file as gridfile, BoolGrid};

fn octok(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octok"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workdir {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workdir {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workdir { _dir: dir, root }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.root.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

const WATER: &str = "3\nwater\nO 0.000000 0.000000 0.117300\nH 0.000000 0.757200 -0.469200\nH 0.000000 -0.757200 -0.469200\n";

#[test]
fn tokenize_is_deterministic_and_round_trips() {
    let dir = Workdir::new();
    let input = dir.file("water.xyz", WATER);
    let out1 = dir.join("a.jsonl");
    let out2 = dir.join("b.jsonl");

    for out in [&out1, &out2] {
        let result = octok(&[
            "tokenize",
            "--in",
            path_str(&input),
            "--format",
            "xyz",
            "--out",
            path_str(out),
        ]);
        assert_ok(&result);
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b);

    let decoded = dir.join("water_back.xyz");
    let result = octok(&[
        "detokenize",
        "--in",
        path_str(&out1),
        "--out",
        path_str(&decoded),
    ]);
    assert_ok(&result);
    let text = std::fs::read_to_string(&decoded).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "3");
    // Oxygen sits in some row with coordinates within the resolution.
    let oxygen = lines
        .iter()
        .find(|l| l.starts_with("O "))
        .expect("oxygen present");
    let coords: Vec<f64> = oxygen
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((coords[0] - 0.0).abs() <= 0.01);
    assert!((coords[2] - 0.1173).abs() <= 0.01);
}

#[test]
fn verify_reports_error_within_resolution() {
    let dir = Workdir::new();
    let input = dir.file("water.xyz", WATER);
    let result = octok(&["verify", "--in", path_str(&input), "--format", "xyz"]);
    assert_ok(&result);
    let report: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&result.stdout).trim()).unwrap();
    assert_eq!(report["ok"], serde_json::Value::Bool(true));
    assert_eq!(report["sites"], 3);
    assert!(report["max_error"].as_f64().unwrap() <= 0.01);
}

#[test]
fn stats_counts_masks_against_content() {
    let dir = Workdir::new();
    let input = dir.file("water.xyz", WATER);
    let tokens = dir.join("water.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "xyz",
        "--out",
        path_str(&tokens),
        "--mntp",
    ]);
    assert_ok(&result);
    let result = octok(&["stats", "--in", path_str(&tokens)]);
    assert_ok(&result);
    let report: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&result.stdout).trim()).unwrap();
    let code = report["code"].as_u64().unwrap();
    let atom = report["atom"].as_u64().unwrap();
    let mask = report["mask"].as_u64().unwrap();
    let content = report["content_total"].as_u64().unwrap();
    assert_eq!(mask, code + atom);
    assert_eq!(content % 2, 0);
    assert_eq!(content, 2 * mask);
    assert_eq!(report["bound_ok"], serde_json::Value::Bool(true));
}

#[test]
fn fixed_depth_flag_is_honored() {
    let dir = Workdir::new();
    let input = dir.file("water.xyz", WATER);
    let tokens = dir.join("fixed.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "xyz",
        "--out",
        path_str(&tokens),
        "--L",
        "6",
    ]);
    assert_ok(&result);
    let header: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(&tokens).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    assert_eq!(header["L"], 6);
    assert!((header["c0"].as_f64().unwrap() - 7.68).abs() < 1e-9);

    // --L conflicts with --auto-L.
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "xyz",
        "--out",
        path_str(&tokens),
        "--L",
        "6",
        "--auto-L",
    ]);
    assert!(!result.status.success());
}

#[test]
fn rotation_requires_seed_and_is_deterministic() {
    let dir = Workdir::new();
    let input = dir.file("water.xyz", WATER);
    let out1 = dir.join("rot1.jsonl");
    let out2 = dir.join("rot2.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "xyz",
        "--out",
        path_str(&out1),
        "--rotate",
    ]);
    assert!(!result.status.success(), "--rotate without --seed must fail");

    for out in [&out1, &out2] {
        let result = octok(&[
            "tokenize",
            "--in",
            path_str(&input),
            "--format",
            "xyz",
            "--out",
            path_str(out),
            "--rotate",
            "--seed",
            "9",
        ]);
        assert_ok(&result);
    }
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap()
    );
}

#[test]
fn crystal_frames_and_detokenization() {
    let dir = Workdir::new();
    let input = dir.file(
        "rocksalt.crystal",
        "lattice:\n5.64 0 0\n0 5.64 0\n0 0 5.64\natoms:\nNa 0.0 0.0 0.0\nCl 0.5 0.5 0.5\n",
    );
    let tokens = dir.join("crystal.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "crystal",
        "--out",
        path_str(&tokens),
    ]);
    assert_ok(&result);

    // Frame indices: lattice tokens first (frame 0), atoms after (frame 1).
    let text = std::fs::read_to_string(&tokens).unwrap();
    let mut frames = Vec::new();
    for line in text.lines().skip(1) {
        let token: serde_json::Value = serde_json::from_str(line).unwrap();
        if token["k"] == "C" || token["k"] == "A" {
            frames.push(token["f"].as_u64().unwrap());
        }
    }
    assert!(frames.contains(&0) && frames.contains(&1));
    assert!(frames.windows(2).all(|w| w[0] <= w[1]));

    let back = dir.join("crystal.xyz");
    let result = octok(&[
        "detokenize",
        "--in",
        path_str(&tokens),
        "--out",
        path_str(&back),
    ]);
    assert_ok(&result);
    let text = std::fs::read_to_string(&back).unwrap();
    assert_eq!(text.lines().next().unwrap(), "8");
    assert_eq!(text.lines().filter(|l| l.starts_with("LAT ")).count(), 8);
    assert_eq!(text.lines().filter(|l| l.starts_with("Na ")).count(), 1);

    let result = octok(&["verify", "--in", path_str(&input), "--format", "crystal"]);
    assert_ok(&result);
}

#[test]
fn voxgrid_pipeline() {
    let dir = Workdir::new();
    let mut grid = BoolGrid::new(16).unwrap();
    grid.set(0, 0, 0, true);
    grid.set(3, 7, 11, true);
    grid.set(15, 15, 15, true);
    let raw = dir.join("grid.raw");
    std::fs::write(&raw, gridfile::encode_grid(&grid)).unwrap();

    let packed = dir.join("grid.packed");
    let result = octok(&["pack", "--in", path_str(&raw), "--out", path_str(&packed)]);
    assert_ok(&result);
    let unpacked = dir.join("grid_back.raw");
    let result = octok(&[
        "unpack",
        "--in",
        path_str(&packed),
        "--out",
        path_str(&unpacked),
    ]);
    assert_ok(&result);
    assert_eq!(
        std::fs::read(&raw).unwrap(),
        std::fs::read(&unpacked).unwrap()
    );

    let tokens = dir.join("grid.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&raw),
        "--format",
        "voxgrid",
        "--out",
        path_str(&tokens),
    ]);
    assert_ok(&result);
    let grid_back = dir.join("grid_decoded.raw");
    let result = octok(&[
        "detokenize",
        "--in",
        path_str(&tokens),
        "--out",
        path_str(&grid_back),
    ]);
    assert_ok(&result);
    assert_eq!(
        std::fs::read(&raw).unwrap(),
        std::fs::read(&grid_back).unwrap()
    );

    // Depth is pinned by the grid; --L is rejected.
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&raw),
        "--format",
        "voxgrid",
        "--out",
        path_str(&tokens),
        "--L",
        "6",
    ]);
    assert!(!result.status.success());

    let result = octok(&["verify", "--in", path_str(&raw), "--format", "voxgrid"]);
    assert_ok(&result);
}

#[test]
fn fit_and_sample_pipeline() {
    let dir = Workdir::new();
    let corpus = dir.join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    // Small molecules forced to a shared depth so the corpus is mixable.
    for (i, shift) in [0.0f64, 0.3, 0.6, 0.9].iter().enumerate() {
        let input = dir.file(
            &format!("mol{i}.xyz"),
            &format!(
                "2\nshifted pair\nC 0.0 {shift:.1} 0.0\nO 1.1 0.0 {shift:.1}\n"
            ),
        );
        let out = corpus.join(format!("mol{i}.jsonl"));
        let result = octok(&[
            "tokenize",
            "--in",
            path_str(&input),
            "--format",
            "xyz",
            "--out",
            path_str(&out),
            "--L",
            "4",
        ]);
        assert_ok(&result);
    }

    let model = dir.join("model.json");
    let result = octok(&[
        "fit",
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&model),
        "--alpha",
        "0.5",
    ]);
    assert_ok(&result);

    let samples = dir.join("samples");
    let result = octok(&[
        "sample",
        "--model",
        path_str(&model),
        "--n",
        "5",
        "--seed",
        "3",
        "--out",
        path_str(&samples),
    ]);
    assert_ok(&result);
    // Default top-r is 1: a single best-scored structure.
    let written: Vec<_> = std::fs::read_dir(&samples)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(written.len(), 1);
    let seq = octok::jsonl::from_str(&std::fs::read_to_string(&written[0]).unwrap()).unwrap();
    assert!(octok::decode(&seq).is_ok());
    assert!(seq.mntp);

    // Same seed, same bytes.
    let samples2 = dir.join("samples2");
    let result = octok(&[
        "sample",
        "--model",
        path_str(&model),
        "--n",
        "5",
        "--seed",
        "3",
        "--out",
        path_str(&samples2),
    ]);
    assert_ok(&result);
    assert_eq!(
        std::fs::read(samples.join("sample_000.jsonl")).unwrap(),
        std::fs::read(samples2.join("sample_000.jsonl")).unwrap()
    );

    // top-r keeps the requested count.
    let samples3 = dir.join("samples3");
    let result = octok(&[
        "sample",
        "--model",
        path_str(&model),
        "--n",
        "5",
        "--seed",
        "3",
        "--top-r",
        "3",
        "--out",
        path_str(&samples3),
    ]);
    assert_ok(&result);
    assert_eq!(std::fs::read_dir(&samples3).unwrap().count(), 3);
}

#[test]
fn errors_exit_nonzero_with_diagnostics() {
    let dir = Workdir::new();
    let bad = dir.file("bad.xyz", "2\nbroken\nC 0 0 0\nC 1 1\n");
    let out = dir.join("bad.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&bad),
        "--format",
        "xyz",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 4"), "stderr: {stderr}");
    assert!(!out.exists(), "failed runs must not leave outputs behind");

    let missing = dir.join("missing.xyz");
    let result = octok(&[
        "verify",
        "--in",
        path_str(&missing),
        "--format",
        "xyz",
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn leaf_collisions_error_unless_deepening() {
    let dir = Workdir::new();
    // The far nitrogen pins the grid so the close C/O pair lands in one
    // 0.24 A leaf; two halvings (0.06 A) separate them.
    let input = dir.file(
        "close.xyz",
        "3\nclose pair\nC 0.00 0.00 0.00\nO 0.05 0.00 0.00\nN 5.00 0.00 0.00\n",
    );
    let out = dir.join("close.jsonl");
    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "xyz",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("collide"));

    let result = octok(&[
        "tokenize",
        "--in",
        path_str(&input),
        "--format",
        "xyz",
        "--out",
        path_str(&out),
        "--auto-deepen",
    ]);
    assert_ok(&result);
    let header: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(&out).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    // Leaf halved until the pair separates.
    assert!(header["c_leaf"].as_f64().unwrap() < 0.24);
    let result = octok(&["stats", "--in", path_str(&out)]);
    assert_ok(&result);
}
