//! End-to-end runs of the `leggett-lab` binary.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_leggett-lab"));
    c.env_remove("LEGGETT_LAB_SEED");
    c
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("leggett-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> (Output, Value) {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 1, "summary must be one line: {stdout}");
    let summary: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(summary.is_object());
    (out, summary)
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Vec<&str> {
        let i = self.header.iter().position(|h| h == name).unwrap();
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    fn num(&self, name: &str) -> Vec<f64> {
        self.col(name).iter().map(|v| v.parse().unwrap()).collect()
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["scan-phi", "--no-such-flag"],
        vec!["teleport"],
        vec!["scan-phi", "--alpha", "1:0:0.1"],
        vec!["reproduce", "fig7"],
        vec!["threshold", "--alpha", "3"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
    let out = bin().arg("--no-such-flag").output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("reproduce"));
}

#[test]
fn csv_layout_and_summary_keys() {
    let dir = scratch("layout");
    let path = dir.join("s.csv");
    let (_, summary) = run(&["scan-phi", "--alpha", "2", "--phi", "0:0.3:0.1", "--seed", "3", "--out", path.to_str().unwrap()]);
    let keys: BTreeSet<&str> = summary.as_object().unwrap().keys().map(String::as_str).collect();
    let want: BTreeSet<&str> =
        ["argmax_alpha", "argmax_phi", "command", "max_margin", "out", "peak", "records", "seed", "violations"].into();
    assert_eq!(keys, want);
    assert_eq!(summary["records"], 4);

    let csv = Csv::read(&path);
    assert_eq!(
        csv.header.join(","),
        "index,alpha,phi,L,f_min_corrected,f_min_analytic,bound_used,chsh_B,margin,violated,starts,seed"
    );
    assert_eq!(csv.col("index"), ["0", "1", "2", "3"]);
    assert_eq!(csv.col("phi"), ["0", "0.1", "0.2", "0.3"]);
    assert!(csv.col("chsh_B").iter().all(|v| v.is_empty()));
    assert!(csv.col("seed").iter().all(|v| *v == "3"));
    for v in csv.num("L") {
        let digits = format!("{v:e}").split('e').next().unwrap().replace(['.', '-'], "").len();
        assert!(digits <= 12);
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_from_environment_and_config_precedence() {
    let dir = scratch("config");
    let conf = dir.join("run.conf");
    fs::write(&conf, "state = pes\nlayout = 3p6\nseed = 11\nphi = 0:0.2:0.1\nalpha = 1\n").unwrap();
    let out = dir.join("a.csv");
    let status = bin()
        .env("LEGGETT_LAB_SEED", "5")
        .args(["scan-phi", "--config", conf.to_str().unwrap(), "--seed", "13", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success());
    let csv = Csv::read(&out);
    assert!(csv.col("seed").iter().all(|v| *v == "13"));
    assert_eq!(csv.rows.len(), 3);

    let status = bin()
        .env("LEGGETT_LAB_SEED", "5")
        .args(["scan-phi", "--state", "pes", "--phi", "0.1", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(Csv::read(&out).col("seed").iter().all(|v| *v == "5"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn json_and_svg_outputs() {
    let dir = scratch("formats");
    let json = dir.join("s.json");
    run(&["scan-alpha", "--alpha", "1:2:0.5", "--phi", "0.3", "--chsh", "--format", "json", "--out", json.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r["chsh_b"].as_f64().unwrap() > 2.0));

    let svg = dir.join("s.svg");
    run(&["scan-phi", "--alpha", "5", "--phi", "0:0.5:0.05", "--format", "svg", "--out", svg.to_str().unwrap()]);
    let text = fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert!((2..=4).contains(&lines));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn threshold_example() {
    let (_, s) = run(&["threshold", "--state", "ecs+", "--layout", "3p7", "--optimize", "--seed", "7"]);
    assert_eq!(s["verdict"], "Crossing");
    let a = s["alpha_star"].as_f64().unwrap();
    assert!((a - 2.9).abs() <= 0.3, "alpha* = {a}");
}

#[test]
fn pes_three_plus_six_peak_example() {
    let dir = scratch("peak");
    let out = dir.join("p.csv");
    let (_, s) = run(&["scan-phi", "--state", "pes", "--layout", "3p6", "--phi", "0:1.2:0.01", "--out", out.to_str().unwrap()]);
    let peak = s["peak"].as_f64().unwrap();
    assert!((peak - 2.0 * (1.0f64 / 3.0).atan()).abs() < 1e-3, "peak {peak}");
    let csv = Csv::read(&out);
    assert_eq!(csv.rows.len(), 121);
    let m = csv.num("margin");
    let phi = csv.num("phi");
    let best = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
    assert!((phi[best] - 0.64).abs() < 0.011);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn fig3_never_violates() {
    let dir = scratch("fig3");
    let (_, s) = run(&["reproduce", "fig3", "--alpha", "5", "--out", dir.to_str().unwrap()]);
    assert_eq!(s["violations"], 0);
    for name in ["fig3_onoff.csv", "fig3_parity.csv"] {
        let csv = Csv::read(&dir.join(name));
        assert!(!csv.rows.is_empty());
        assert!(csv.col("violated").iter().all(|v| *v == "false"), "{name}");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn fig4_bounds_coincide() {
    let dir = scratch("fig4");
    run(&["reproduce", "fig4", "--out", dir.to_str().unwrap(), "--format", "svg"]);
    let a = Csv::read(&dir.join("fig4_alpha5.csv")).num("bound_used");
    let b = Csv::read(&dir.join("fig4_alpha50.csv")).num("bound_used");
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 5e-3, "{diff}");
    for name in ["fig4_alpha5.svg", "fig4_alpha50.svg"] {
        roxmltree::Document::parse(&fs::read_to_string(dir.join(name)).unwrap()).unwrap();
    }
    fs::remove_dir_all(&dir).unwrap();
}

/// Smallest grid value after which every record is violated.
fn onset(csv: &Csv) -> f64 {
    let alpha = csv.num("alpha");
    let violated = csv.col("violated");
    let last_clear = violated.iter().rposition(|v| *v == "false").unwrap();
    alpha[last_clear + 1]
}

#[test]
fn fig5_and_fig6_presets() {
    let dir = scratch("fig56");
    run(&["reproduce", "fig5", "--out", dir.to_str().unwrap()]);
    run(&["reproduce", "fig6", "--out", dir.to_str().unwrap()]);

    let minus = Csv::read(&dir.join("fig5_ecsminus_plain.csv"));
    assert!(minus.num("chsh_B").iter().all(|b| *b > 2.0));
    assert!(minus.num("alpha").iter().all(|a| *a > 0.0 && *a <= 10.0 + 1e-12));

    for tag in ["ecsplus", "ecsminus"] {
        let plain = Csv::read(&dir.join(format!("fig5_{tag}_plain.csv"))).num("L");
        let opt = Csv::read(&dir.join(format!("fig5_{tag}_optimized.csv"))).num("L");
        assert!(plain.iter().zip(&opt).all(|(p, o)| *o >= p - 1e-9), "{tag}");
    }

    let three_six = Csv::read(&dir.join("fig6_alpha.csv"));
    let ratio = onset(&three_six) / onset(&minus);
    assert!((0.4..=0.75).contains(&ratio), "onset ratio {ratio}");
    let peak = |c: &Csv| c.num("margin").into_iter().fold(f64::NEG_INFINITY, f64::max);
    assert!(peak(&three_six) > 2.0 * peak(&minus));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("rerun");
    let mut bodies = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("r{i}.csv"));
        run(&[
            "scan-alpha",
            "--state",
            "ecs-",
            "--layout",
            "3p6",
            "--alpha",
            "0.5:3:0.5",
            "--optimize",
            "--chsh",
            "--seed",
            "21",
            "--out",
            out.to_str().unwrap(),
        ]);
        bodies.push(fs::read(&out).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    fs::remove_dir_all(&dir).unwrap();
}
