use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tmsmooth::{auto_scale, read_pgm, Image};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmsmooth"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn tmsmooth")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn image(path: PathBuf) -> Image {
    read_pgm(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn wedge_synth_matches_membership() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "synth", "--preset", "wedge", "--angle", "90", "--size", "4", "--out", "w.pgm",
        ],
    );
    let img = image(dir.path().join("w.pgm"));
    let high: Vec<(usize, usize)> = (0..16)
        .map(|k| (k / 4, k % 4))
        .filter(|&(r, c)| img.get(r, c) == 255.0)
        .collect();
    assert_eq!(high, vec![(2, 1), (2, 2), (3, 0), (3, 1), (3, 2), (3, 3)]);
}

#[test]
fn constant_config_gives_uniform_gray() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("s.toml"), "base = { constant = 128.0 }\n").unwrap();
    ok(
        dir.path(),
        &["synth", "--config", "s.toml", "--size", "8", "--out", "g.pgm"],
    );
    let img = image(dir.path().join("g.pgm"));
    assert_eq!((img.width(), img.height()), (8, 8));
    assert!(img.pixels().iter().all(|&v| v == 128.0));
}

#[test]
fn config_with_noise_table() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
rows = 12
cols = 20
base = { constant = 40.0 }

[[region]]
shape = "rectangle"
from = [0.0, 0.0]
to = [0.5, 1.0]
height = 100.0

[noise]
sigma = 5.0
p_white = 0.1
seed = 4
"#;
    std::fs::write(dir.path().join("s.toml"), cfg).unwrap();
    ok(
        dir.path(),
        &["synth", "--config", "s.toml", "--out", "t.pgm", "--noisy-out", "n.pgm"],
    );
    let t = image(dir.path().join("t.pgm"));
    let n = image(dir.path().join("n.pgm"));
    assert_eq!((t.width(), t.height()), (20, 12));
    assert_eq!(t.get(0, 0), 140.0);
    assert_eq!(t.get(11, 0), 40.0);
    assert_ne!(t, n);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(
        run(p, &["synth", "--config", "missing.toml", "--out", "x.pgm"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(p.join("bad.toml"), "[[region]]\nshape = \"blob\"\nheight = 3.0\n").unwrap();
    assert_eq!(
        run(p, &["synth", "--config", "bad.toml", "--out", "x.pgm"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(p, &["smooth", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(p, &["smooth", "--input", "none.pgm", "--out", "x.pgm"])
            .status
            .code(),
        Some(3)
    );
    std::fs::write(p.join("junk.pgm"), b"P7 nonsense").unwrap();
    assert_eq!(
        run(p, &["smooth", "--input", "junk.pgm", "--out", "x.pgm"])
            .status
            .code(),
        Some(3)
    );
    ok(p, &["synth", "--preset", "wedge", "--size", "16", "--out", "w.pgm"]);
    assert_eq!(
        run(p, &["smooth", "--input", "w.pgm", "--out", "x.pgm"]).status.code(),
        Some(4)
    );
    assert_eq!(
        run(p, &["smooth", "--input", "w.pgm", "--out", "x.pgm", "--g", "-3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(
            p,
            &["smooth", "--input", "w.pgm", "--out", "x.pgm", "--g", "25", "--l", "0.5"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn zero_noise_is_a_copy() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--preset", "test-card", "--size", "32", "--out", "t.pgm"]);
    ok(p, &["noise", "--input", "t.pgm", "--out", "n.pgm", "--seed", "9"]);
    assert_eq!(
        std::fs::read(p.join("t.pgm")).unwrap(),
        std::fs::read(p.join("n.pgm")).unwrap()
    );
}

#[test]
fn smooth_report_echoes_auto_scale() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--preset", "test-card", "--size", "40", "--out", "t.pgm"]);
    ok(
        p,
        &[
            "noise",
            "--input",
            "t.pgm",
            "--out",
            "n.pgm",
            "--sigma",
            "20",
            "--p-white",
            "0.02",
            "--seed",
            "1",
        ],
    );
    ok(
        p,
        &["smooth", "--input", "n.pgm", "--out", "s.pgm", "--report", "r.json"],
    );
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("r.json")).unwrap()).unwrap();
    let noisy = image(p.join("n.pgm"));
    assert_eq!(rep["g"].as_f64().unwrap(), auto_scale(&noisy, 2).unwrap());
    assert_eq!(rep["g_auto"], true);
    assert_eq!(rep["l"].as_f64().unwrap(), 0.15);
    assert_eq!(rep["radius"], 2);
    assert!(rep.get("wall_time_s").is_none());
    ok(
        p,
        &[
            "smooth", "--input", "n.pgm", "--out", "s.pgm", "--report", "r2.json", "--timing",
        ],
    );
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("r2.json")).unwrap()).unwrap();
    assert!(rep["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn m_smoother_via_zero_trim() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--preset", "test-card", "--size", "24", "--out", "t.pgm"]);
    ok(
        p,
        &[
            "noise", "--input", "t.pgm", "--out", "n.pgm", "--sigma", "10", "--seed", "2",
        ],
    );
    ok(
        p,
        &["smooth", "--input", "n.pgm", "--out", "m.pgm", "--l", "0", "--g", "30"],
    );
    let expect = tmsmooth::smooth(&image(p.join("n.pgm")), &tmsmooth::SmootherParams::m_smoother(30.0)).unwrap();
    assert_eq!(image(p.join("m.pgm")), expect.quantized());
}

#[test]
fn eval_identical_and_csv() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--preset", "test-card", "--size", "20", "--out", "t.pgm"]);
    ok(
        p,
        &[
            "noise",
            "--input",
            "t.pgm",
            "--out",
            "n.pgm",
            "--sigma",
            "26",
            "--p-white",
            "0.01",
            "--seed",
            "5",
        ],
    );
    ok(p, &["smooth", "--input", "n.pgm", "--out", "s.pgm", "--g", "30"]);
    ok(
        p,
        &[
            "eval",
            "--truth",
            "t.pgm",
            "--estimate",
            "t.pgm",
            "--estimate",
            "n.pgm",
            "--estimate",
            "s.pgm",
            "--name",
            "self",
            "--name",
            "noisy",
            "--name",
            "tm",
            "--csv",
            "e.csv",
            "--json",
            "e.json",
        ],
    );
    let csv = std::fs::read_to_string(p.join("e.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,region,mae,mse,pixels");
    assert_eq!(lines[1], "self,all,0,0,400");
    assert_eq!(lines.len(), 4);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("e.json")).unwrap()).unwrap();
    assert_eq!(json[2]["name"], "tm");
    assert!(json[2]["mse"].as_f64().unwrap() < json[1]["mse"].as_f64().unwrap());

    ok(
        p,
        &[
            "eval",
            "--truth",
            "n.pgm",
            "--estimate",
            "n.pgm",
            "--estimate",
            "s.pgm",
            "--csv",
            "f.csv",
        ],
    );
    let csv = std::fs::read_to_string(p.join("f.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("n,all,0,0,"));
}

#[test]
fn probe_m_breaks_with_one_replacement() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let vals = (0..25).map(|k| (100 + k % 5).to_string()).collect::<Vec<_>>().join(",");
    let out = ok(
        p,
        &[
            "probe",
            "--values",
            &vals,
            "--l",
            "0",
            "--r",
            "1",
            "--g",
            "25",
            "--breakdown",
            "--json",
            "p.json",
            "--csv",
            "p.csv",
        ],
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("breakdown at fraction 0.040000"), "{text}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("p.json")).unwrap()).unwrap();
    assert!(json["max_worst_bias"].as_f64().unwrap() > 1e8);
    assert!(std::fs::read_to_string(p.join("p.csv"))
        .unwrap()
        .starts_with("window,strategy,"));
}

#[test]
fn probe_tm_bound_holds_on_random_windows() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "probe",
            "--random-windows",
            "25",
            "--r",
            "3",
            "--g",
            "25",
            "--trials",
            "8",
            "--seed",
            "11",
            "--json",
            "p.json",
        ],
    );
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("p.json")).unwrap()).unwrap();
    assert_eq!(json["windows"], 25);
    assert_eq!(json["total_violations"], 0);
}

#[test]
fn probe_from_image_window() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--preset", "ramp", "--size", "10", "--out", "r.pgm"]);
    let out = ok(
        p,
        &[
            "probe", "--input", "r.pgm", "--row", "0", "--col", "0", "--r", "2", "--g", "20", "--trials", "4",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("bound violations 0"));
}

fn pipeline(dir: &Path) -> Vec<Vec<u8>> {
    ok(
        dir,
        &["synth", "--preset", "test-card", "--size", "48", "--out", "t.pgm"],
    );
    ok(
        dir,
        &[
            "noise",
            "--input",
            "t.pgm",
            "--out",
            "n.pgm",
            "--sigma",
            "26",
            "--p-white",
            "0.01",
            "--seed",
            "7",
        ],
    );
    ok(
        dir,
        &["smooth", "--input", "n.pgm", "--out", "s.pgm", "--report", "r.json"],
    );
    ok(
        dir,
        &[
            "eval",
            "--truth",
            "t.pgm",
            "--estimate",
            "n.pgm",
            "--estimate",
            "s.pgm",
            "--csv",
            "e.csv",
        ],
    );
    ["t.pgm", "n.pgm", "s.pgm", "r.json", "e.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn end_to_end_determinism() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(pipeline(a.path()), pipeline(b.path()));
}
