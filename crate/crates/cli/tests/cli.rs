use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equipoise::simulation::{generate, DgpSpec, Effect, Overlap};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_equipoise"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn dgp1_csv(dir: &Path, overlap: Overlap, n: usize) -> PathBuf {
    let ds = generate(&DgpSpec::dgp1(overlap, Effect::Homogeneous, n, 5), 0).unwrap();
    let p = dir.join("data.csv");
    ds.write_csv(std::fs::File::create(&p).unwrap()).unwrap();
    p
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn num(r: &csv::StringRecord, i: usize) -> f64 {
    r[i].parse().unwrap()
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let outs: Vec<PathBuf> = (0..2)
        .map(|k| dir.path().join(format!("run{k}.csv")))
        .collect();
    for out in &outs {
        let o = run(&[
            "simulate",
            "--dgp",
            "dgp1",
            "--overlap",
            "good",
            "--effect",
            "homo",
            "--reps",
            "50",
            "--seed",
            "7",
            "--n",
            "500",
            "--superpop",
            "100000",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&outs[0]).unwrap();
    assert_eq!(a, std::fs::read(&outs[1]).unwrap());
    let header = String::from_utf8(a)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(
        header,
        "scheme,true_value,mean_estimate,arb,rmse,sd,se_avg,cp,n_reps,n_failed"
    );
    assert!(dir.path().join("run0.csv.manifest.json").exists());
}

#[test]
fn threads_do_not_change_results() {
    let dir = TempDir::new().unwrap();
    let mut bodies = Vec::new();
    for t in ["1", "3"] {
        let out = dir.path().join(format!("t{t}.csv"));
        let o = run(&[
            "--threads",
            t,
            "simulate",
            "--dgp",
            "dgp2",
            "--prevalence",
            "low",
            "--overlap",
            "moderate",
            "--effect",
            "hetero",
            "--reps",
            "20",
            "--n",
            "400",
            "--superpop",
            "50000",
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bodies.push(std::fs::read(out).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn truth_only_reproduces_scenario_b() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("truth.csv");
    let o = run(&[
        "simulate",
        "--dgp",
        "illustrative",
        "--scenario",
        "B",
        "--truth-only",
        "--seed",
        "42",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let want = [
        ("IPW", 18.99),
        ("ATT", 25.35),
        ("ATC", 13.12),
        ("OW", 17.53),
        ("MW", 17.02),
        ("EW", 17.81),
    ];
    let got = rows(&out);
    for (name, v) in want {
        let r = got
            .iter()
            .find(|r| &r[0] == name)
            .unwrap_or_else(|| panic!("{name} missing"));
        assert!((num(r, 1) - v).abs() < 0.2, "{name}: {}", &r[1]);
    }
}

#[test]
fn misspecified_models_lose_coverage() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("mis.csv");
    let o = run(&[
        "simulate",
        "--dgp",
        "dgp1",
        "--overlap",
        "poor",
        "--effect",
        "homo",
        "--mode",
        "augmented",
        "--misspec",
        "both",
        "--schemes",
        "OW,MW,EW",
        "--reps",
        "200",
        "--n",
        "2000",
        "--superpop",
        "100000",
        "--seed",
        "3",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in rows(&out) {
        assert!(num(&r, 7) <= 0.05, "{} CP {}", &r[0], &r[7]);
    }
}

#[test]
fn invalid_combinations_exit_with_usage() {
    let o = run(&[
        "simulate",
        "--dgp",
        "dgp1",
        "--overlap",
        "good",
        "--scenario",
        "A",
        "--reps",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("error[Config]"), "{err}");
    assert!(err.contains("Usage"), "{err}");
    let o = run(&[
        "simulate",
        "--dgp",
        "dgp2",
        "--overlap",
        "good",
        "--reps",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes_by_error_class() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = run(&["estimate", "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let bad = write(dir.path(), "bad.csv", "Z,Y,X\n0,1,0.1\n2,2,0.2\n1,3,0.3\n");
    let o = run(&["estimate", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NonBinaryTreatment"));

    let mut sep = String::from("Z,Y,X\n");
    for i in 0..20 {
        sep.push_str(&format!("{},{},{}\n", u8::from(i >= 10), i, i));
    }
    let sep = write(dir.path(), "sep.csv", &sep);
    let o = run(&["estimate", "--input", sep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NonConvergence"));
}

#[test]
fn poor_overlap_overlap_weights_have_smaller_se() {
    let dir = TempDir::new().unwrap();
    let data = dgp1_csv(dir.path(), Overlap::Poor, 2000);
    let out = dir.path().join("est.csv");
    let report = dir.path().join("report.json");
    let o = run(&[
        "estimate",
        "--input",
        data.to_str().unwrap(),
        "--schemes",
        "IPW,OW",
        "--output",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    assert_eq!((&r[0][0], &r[1][0]), ("IPW", "OW"));
    assert!(num(&r[1], 4) < num(&r[0], 4));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["estimates"].as_array().unwrap().len(), 2);
    assert!(json.get("outcome_design").is_none());
}

#[test]
fn trimming_under_sandwich_points_to_bootstrap() {
    let dir = TempDir::new().unwrap();
    let data = dgp1_csv(dir.path(), Overlap::Moderate, 300);
    let o = run(&[
        "estimate",
        "--input",
        data.to_str().unwrap(),
        "--schemes",
        "TRIM(0.1)",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("UnsupportedScheme") && err.contains("bootstrap"),
        "{err}"
    );
    let o = run(&[
        "estimate",
        "--input",
        data.to_str().unwrap(),
        "--schemes",
        "TRIM(0.1)",
        "--variance",
        "bootstrap",
        "--bootstrap-reps",
        "50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn constant_propensity_gives_the_crude_difference() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("Z,Y,X\n");
    let z = [1, 0, 1, 0, 1, 0, 1, 0];
    let y = [3.0, 1.0, 5.0, 2.0, 4.0, 0.5, 6.0, 2.5];
    // X has equal means in both arms, so the fitted slope is zero and ê = 1/2.
    let x = [1.0, 1.0, -1.0, -1.0, 2.0, 2.0, -2.0, -2.0];
    for i in 0..8 {
        body.push_str(&format!("{},{},{}\n", z[i], y[i], x[i]));
    }
    let data = write(dir.path(), "flat.csv", &body);
    let out = dir.path().join("est.csv");
    let o = run(&[
        "estimate",
        "--input",
        data.to_str().unwrap(),
        "--schemes",
        "IPW,ATT,ATC,OW,MW,EW,BW(5)",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let crude = (3.0 + 5.0 + 4.0 + 6.0) / 4.0 - (1.0 + 2.0 + 0.5 + 2.5) / 4.0;
    for r in rows(&out) {
        assert!((num(&r, 3) - crude).abs() < 1e-9, "{}: {}", &r[0], &r[3]);
    }
}

#[test]
fn balance_outputs() {
    let dir = TempDir::new().unwrap();
    let data = dgp1_csv(dir.path(), Overlap::Moderate, 800);
    let bal = dir.path().join("bal.csv");
    let ov = dir.path().join("ov.csv");
    let o = run(&[
        "balance",
        "--input",
        data.to_str().unwrap(),
        "--output",
        bal.to_str().unwrap(),
        "--overlap-output",
        ov.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = rows(&bal);
    assert_eq!(b.len(), 4);
    for r in &b {
        assert!(num(r, 2).abs() <= 1e-6, "{}: {}", &r[0], &r[2]);
    }
    let ov = rows(&ov);
    assert_eq!(ov.len(), 2);
    for r in &ov {
        let (min, q1, med, q3, max) = (num(r, 1), num(r, 2), num(r, 3), num(r, 5), num(r, 6));
        assert!(min <= q1 && q1 <= med && med <= q3 && q3 <= max);
    }
}

#[test]
fn identical_arms_balance_to_zero() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "same.csv",
        "Z,Y,X\n1,1,1\n1,2,2\n1,3,3\n0,1,1\n0,2,2\n0,3,3\n",
    );
    let bal = dir.path().join("bal.csv");
    let o = run(&[
        "balance",
        "--input",
        data.to_str().unwrap(),
        "--output",
        bal.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &rows(&bal)[0];
    assert!(num(r, 1).abs() < 1e-12 && num(r, 2).abs() < 1e-12);
}
