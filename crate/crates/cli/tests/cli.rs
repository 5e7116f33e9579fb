use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pathloss-lab"));
    cmd.env_remove("PATHLOSS_LAB_THREADS").env_remove("RUST_LOG");
    cmd
}

fn run<A: AsRef<std::ffi::OsStr>>(args: &[A]) -> Output {
    bin().args(args).output().expect("spawn pathloss-lab")
}

fn ok<A: AsRef<std::ffi::OsStr> + std::fmt::Debug>(args: &[A]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One small end-to-end run shared by the read-only tests.
struct Pipeline {
    dir: TempDir,
}

impl Pipeline {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let p = Pipeline {
            dir: TempDir::new().unwrap(),
        };
        let data = p.path("data");
        ok(&["synth", "--n", "3000", "--seed", "11", "--out-dir", s(&data)]);
        ok(&[
            "clean",
            "--input",
            s(&data.join("measurements.csv")),
            "--links",
            s(&data.join("links.json")),
            "--out",
            s(&p.path("clean.csv")),
        ]);
        let model = |name: &str, extra: &[&str]| {
            let mut args: Vec<String> = vec![
                "fit".into(),
                "--data".into(),
                s(&p.path("clean.csv")).into(),
                "--links".into(),
                s(&data.join("links.json")).into(),
                "--radio".into(),
                s(&data.join("radio.json")).into(),
                "--out".into(),
                s(&p.path(name)).into(),
            ];
            args.extend(extra.iter().map(|a| a.to_string()));
            ok(&args);
        };
        model("fit.json", &["--solver", "lm", "--cv", "5"]);
        model("base.json", &["--model", "baseline"]);
        ok(&[
            "anova",
            "--data",
            s(&p.path("clean.csv")),
            "--links",
            s(&data.join("links.json")),
            "--radio",
            s(&data.join("radio.json")),
            "--out",
            s(&p.path("anova.json")),
        ]);
        ok(&[
            "residuals",
            "--fit",
            s(&p.path("fit.json")),
            "--gmm-components",
            "1:3",
            "--restarts",
            "2",
            "--out-dir",
            s(&p.path("resid")),
        ]);
        ok(&[
            "report",
            "--baseline",
            s(&p.path("base.json")),
            "--fit",
            s(&p.path("fit.json")),
            "--clean",
            s(&p.path("clean.summary.json")),
            "--anova",
            s(&p.path("anova.json")),
            "--residuals",
            s(&p.path("resid/residuals.json")),
            "--out",
            s(&p.path("report.json")),
        ]);
        p
    })
}

#[test]
fn pipeline_writes_every_artifact() {
    let p = pipeline();
    for rel in [
        "data/measurements.csv",
        "data/links.json",
        "data/radio.json",
        "data/truth.json",
        "data/synth.json",
        "clean.csv",
        "clean.summary.json",
        "fit.json",
        "base.json",
        "anova.json",
        "resid/residuals.json",
        "resid/histogram.csv",
        "resid/pdf.csv",
        "report.json",
    ] {
        assert!(p.path(rel).is_file(), "missing {rel}");
    }
    let report = json(&p.path("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["command"], "report");
    for role in ["baseline", "fit", "clean", "anova", "residuals"] {
        assert!(report["result"]["upstream"][role].is_object(), "upstream {role}");
    }
}

#[test]
fn fit_reports_five_cv_folds_and_a_test_split() {
    let fit = json(&pipeline().path("fit.json"));
    let r = &fit["result"];
    assert_eq!(r["cv"]["folds"].as_array().unwrap().len(), 5);
    let n_train = r["split"]["n_train"].as_u64().unwrap();
    let n_test = r["split"]["n_test"].as_u64().unwrap();
    assert!(n_test > 0);
    assert_eq!(r["fit"]["n_obs"].as_u64().unwrap(), n_train);
    assert!(fit["seeds"]["split"].is_u64());
    assert!(fit["inputs"]["data"]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn residuals_rank_five_candidates() {
    let p = pipeline();
    let r = json(&p.path("resid/residuals.json"));
    let body = &r["result"];
    let fits = body["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 5);
    assert_eq!(body["gmm_scan"].as_array().unwrap().len(), 3);
    let bics: Vec<f64> = fits.iter().map(|f| f["bic"].as_f64().unwrap()).collect();
    assert!(bics.windows(2).all(|w| w[0] <= w[1]), "{bics:?}");
    for file in body["plots"]["qq"].as_object().unwrap().values() {
        assert!(p.path("resid").join(file.as_str().unwrap()).is_file());
    }
    let header = fs::read_to_string(p.path("resid/pdf.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 6);
}

#[test]
fn report_reduction_follows_from_r2() {
    let report = json(&pipeline().path("report.json"));
    let v = &report["result"]["variance_reduction"];
    assert_eq!(v["r2_source"], "test");
    let b = v["r2_baseline"].as_f64().unwrap();
    let e = v["r2_environment_aware"].as_f64().unwrap();
    let pct = v["reduction_pct"].as_f64().unwrap();
    assert!((pct - 100.0 * ((1.0 - b) - (1.0 - e)) / (1.0 - b)).abs() < 1e-9);
    assert!(e > b, "environment terms should help on synthetic data");
}

#[test]
fn reruns_differ_only_in_timings() {
    let p = pipeline();
    let dir = TempDir::new().unwrap();
    let again = dir.path().join("fit.json");
    ok(&[
        "fit",
        "--data",
        s(&p.path("clean.csv")),
        "--links",
        s(&p.path("data/links.json")),
        "--radio",
        s(&p.path("data/radio.json")),
        "--solver",
        "lm",
        "--cv",
        "5",
        "--out",
        s(&again),
    ]);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings_s");
        v["inputs"].as_object_mut().unwrap().values_mut().for_each(|d| {
            d.as_object_mut().unwrap().remove("path");
        });
        v
    };
    assert_eq!(strip(json(&p.path("fit.json"))), strip(json(&again)));
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&["clean", "--links", "x.json", "--out", "y.csv"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--input"));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["residuals", "--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn invalid_thread_count_is_usage_error() {
    let out = bin()
        .env("PATHLOSS_LAB_THREADS", "zero")
        .args(["synth", "--n", "10", "--out-dir", "/nonexistent/never"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PATHLOSS_LAB_THREADS"));
}

#[test]
fn strict_clean_rejects_bad_row() {
    let p = pipeline();
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    let mut text = fs::read_to_string(p.path("data/measurements.csv")).unwrap();
    text.push_str("2023-11-14T22:13:20Z,node-01,7,not-a-number,1,20,50,1000,5,400\n");
    fs::write(&input, text).unwrap();
    let args = |strict: bool| {
        let mut a = vec![
            "clean".to_string(),
            "--input".into(),
            s(&input).into(),
            "--links".into(),
            s(&p.path("data/links.json")).into(),
            "--out".into(),
            s(&dir.path().join("out.csv")).into(),
        ];
        if strict {
            a.push("--strict".into());
        }
        a
    };
    let out = bin().args(args(true)).output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().args(args(false)).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("out.summary.json"));
    assert_eq!(summary["result"]["rows_rejected"], 1);
}

#[test]
fn missing_upstream_artifact_names_the_path() {
    let p = pipeline();
    let missing = p.path("no-such-fit.json");
    let out = run(&[
        "report",
        "--baseline",
        s(&p.path("base.json")),
        "--fit",
        s(&missing),
        "--out",
        "/tmp/unused-report.json",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn unwritable_output_is_io_error() {
    let p = pipeline();
    // a regular file standing where a directory is needed
    let blocked = p.path("clean.csv").join("sub").join("fit.json");
    let out = run(&[
        "fit",
        "--data",
        s(&p.path("clean.csv")),
        "--links",
        s(&p.path("data/links.json")),
        "--radio",
        s(&p.path("data/radio.json")),
        "--cv",
        "0",
        "--out",
        s(&blocked),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
