use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seclend_core::models::sample_dejd_increment;
use seclend_core::types::{DejdParams, DAY};

fn seclend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seclend"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MODEL: &str = r#""dejd": {"drift": 0.05, "diffusion_vol": 0.25, "jump_intensity": 25, "up_prob": 0.4, "up_rate": 50, "down_rate": 40}"#;

fn haircut_config(borrowers: &str, targets: &str, n_paths: usize) -> String {
    format!(
        r#"{{"schema_version": 1, "seed": 11, {MODEL},
            "borrowers": [{borrowers}],
            "transaction": {{"haircut": 0.0, "liquidity_spread": 0.01, "mpr_days": 3, "side": "sec_lending"}},
            "targets": [{targets}],
            "simulation": {{"n_paths": {n_paths}}}}}"#
    )
}

fn price_series(n: usize, seed: u64) -> String {
    let p = DejdParams {
        drift: 0.05,
        diffusion_vol: 0.2,
        jump_intensity: 25.0,
        up_prob: 0.4,
        up_rate: 60.0,
        down_rate: 45.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("date,close\n");
    let mut price = 100.0f64;
    let mut date = Day(0);
    for _ in 0..=n {
        text.push_str(&format!("{},{price:.6}\n", date.format()));
        price *= sample_dejd_increment(&p, DAY, &mut rng).exp();
        date.advance();
    }
    text
}

struct Day(u32);

impl Day {
    fn format(&self) -> String {
        // 28-day months keep every generated date valid.
        let (y, rest) = (2000 + self.0 / (12 * 28), self.0 % (12 * 28));
        format!("{y:04}-{:02}-{:02}", rest / 28 + 1, rest % 28 + 1)
    }

    fn advance(&mut self) {
        self.0 += 1;
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn replay_prices_sample_sheet() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1,
            "transaction": {"haircut": 0.05, "liquidity_spread": 0.0, "mpr_days": 3, "side": "sec_lending"},
            "pricing": {"replay": {"el": 0.00000933, "es": 0.008946, "triple_a_haircut": 0.081}}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = seclend(&["price", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("total (bps)         15.72"), "{stdout}");
    let sheet: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("indemnity_sheet.json")).unwrap()).unwrap();
    assert!((sheet["total"].as_f64().unwrap() * 1e4 - 15.72).abs() < 0.01);
    let csv = fs::read_to_string(out_dir.join("indemnity_sheet.csv")).unwrap();
    let order: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        order,
        [
            "margin", "triple_a_haircut", "haircut_gap", "el", "es", "funding", "cost_of_capital",
            "funding_cost", "risk_charge", "capital_charge", "funding_charge", "total", "undercapitalized_gap"
        ]
    );
    assert!(out_dir.join("resolved_config.json").exists());
}

#[test]
fn haircut_above_triple_a_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1,
            "transaction": {"haircut": 0.09, "liquidity_spread": 0.0, "mpr_days": 3, "side": "sec_lending"},
            "pricing": {"replay": {"el": 0.00000933, "es": 0.008946, "triple_a_haircut": 0.081}}}"#,
    );
    let out = seclend(&["price", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0);
    let sheet: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("indemnity_sheet.json")).unwrap()).unwrap();
    for k in ["risk_charge", "capital_charge", "funding_charge", "total"] {
        assert_eq!(sheet[k].as_f64().unwrap(), 0.0, "{k}");
    }
}

#[test]
fn simulated_sheet_for_one_borrower() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"schema_version": 1, "seed": 5, {MODEL},
                "borrowers": [{{"label": "BBB", "cds": {{"spread_bps": 250, "recovery": 0.4}}}}],
                "transaction": {{"haircut": 0.05, "liquidity_spread": 0.01, "mpr_days": 3, "side": "sec_lending"}},
                "simulation": {{"n_paths": 20000}}}}"#
        ),
    );
    let out = seclend(&["price", "--config", s(&cfg), "--out", s(dir.path()), "--self-check"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("assumption: BBB: spread_vol = 1 (default)"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("indemnity_sheet.json")).unwrap()).unwrap();
    assert!(v["triple_a"]["haircut"].as_f64().unwrap() > 0.05);
    assert!(v["sheet"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn scenario_grid_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"schema_version": 1, "seed": 5, {MODEL},
                "borrowers": [{{"label": "A", "cds": {{"spread_bps": 100, "recovery": 0.4}}}},
                              {{"label": "BBB", "cds": {{"spread_bps": 250, "recovery": 0.4}}}}],
                "transaction": {{"haircut": 0.0, "liquidity_spread": 0.01, "mpr_days": 3, "side": "sec_lending"}},
                "simulation": {{"n_paths": 10000}},
                "pricing": {{"grid": {{"haircuts": [0.02, 0.03, 0.05], "mprs": [3, 5]}}}}}}"#
        ),
    );
    let out = seclend(&["price", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("indemnity_grid.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].len(), 8);
    assert_eq!(rows[0][2], "mpr3d_h0.02");
    let cells: usize = rows[1..].iter().map(|r| r.len() - 2).sum();
    assert_eq!(cells, 12);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("indemnity_grid.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 12);
}

#[test]
fn one_cell_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &haircut_config(r#"{"label": "BBB", "cds": {"spread_bps": 250, "recovery": 0.4}}"#, r#"{"label": "Aa3"}"#, 20_000),
    );
    let out = seclend(&["haircut", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("haircut_schedule.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "Cpty\\Target,Aa3");
    assert!(lines[1].starts_with("BBB,0."));
}

const FIVE_GRADES: &str = r#"
    {"label": "A", "cds": {"spread_bps": 60, "recovery": 0.4}},
    {"label": "BBB", "cds": {"spread_bps": 150, "recovery": 0.4}},
    {"label": "BB", "cds": {"spread_bps": 350, "recovery": 0.4}},
    {"label": "B", "cds": {"spread_bps": 700, "recovery": 0.4}},
    {"label": "D", "cds": {"spread_bps": 2000, "recovery": 0.4}}"#;

const SEVEN_TARGETS: &str = r#"
    {"label": "Aaa"}, {"label": "Aa1"}, {"label": "Aa2"}, {"label": "Aa3"},
    {"label": "A1", "threshold": 3.19e-5}, {"label": "A2", "threshold": 5.98e-5}, {"label": "A3", "threshold": 9.57e-5}"#;

#[test]
fn five_by_seven_schedule_passes_self_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &haircut_config(FIVE_GRADES, SEVEN_TARGETS, 50_000));
    let out = seclend(&["haircut", "--config", s(&cfg), "--out", s(dir.path()), "--self-check"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("haircut_schedule.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
}

#[test]
fn self_check_reports_violations() {
    // targets listed tightest last break row monotonicity
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &haircut_config(r#"{"label": "BBB", "cds": {"spread_bps": 250, "recovery": 0.4}}"#, r#"{"label": "Aa3"}, {"label": "Aaa"}"#, 20_000),
    );
    let out = seclend(&["haircut", "--config", s(&cfg), "--out", s(dir.path()), "--self-check"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("self-check: row BBB"), "{}", stderr(&out));
}

#[test]
fn reruns_are_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &haircut_config(FIVE_GRADES, SEVEN_TARGETS, 20_000));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&seclend(&["haircut", "--config", s(&cfg), "--out", s(&a), "--workers", "1"])), 0);
    assert_eq!(code(&seclend(&["haircut", "--config", s(&cfg), "--out", s(&b), "--workers", "3"])), 0);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn sidecar_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &haircut_config(r#"{"label": "BBB", "cds": {"spread_bps": 250, "recovery": 0.4}}"#, r#"{"label": "Aa1"}"#, 20_000),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&seclend(&["haircut", "--config", s(&cfg), "--out", s(&a), "--seed", "99"])), 0);
    let sidecar = a.join("resolved_config.json");
    let resolved: serde_json::Value = serde_json::from_slice(&fs::read(&sidecar).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 99);
    assert_eq!(resolved["simulation"]["es_confidence"], 0.99);
    assert_eq!(resolved["solver"]["resolution"], 0.0001);
    assert_eq!(code(&seclend(&["haircut", "--config", s(&sidecar), "--out", s(&b)])), 0);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn unreachable_target_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = haircut_config(r#"{"label": "D", "cds": {"spread_bps": 2000, "recovery": 0.4}}"#, r#"{"label": "Aaa"}"#, 20_000);
    text = text.replacen("\"simulation\"", "\"solver\": {\"h_max\": 0.01}, \"simulation\"", 1);
    let cfg = write(dir.path(), "c.json", &text);
    let out = seclend(&["haircut", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("unreachable: metric at h_max = 0.01 is"), "{}", stderr(&out));
    // partial outputs are still written
    assert!(fs::read_to_string(dir.path().join("haircut_schedule.csv")).unwrap().contains("unreachable"));
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", r#"{"schema_version": 1, "seed": 1, "n_path": 3}"#);
    let out = seclend(&["haircut", "--config", s(&unknown), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown field `n_path`"));

    let version = write(dir.path(), "v.json", r#"{"schema_version": 2}"#);
    assert_eq!(code(&seclend(&["haircut", "--config", s(&version)])), 1);

    let no_seed = haircut_config(r#"{"label": "A", "cds": {"spread_bps": 60, "recovery": 0.4}}"#, "", 10).replace("\"seed\": 11,", "");
    let no_seed = write(dir.path(), "n.json", &no_seed);
    let out = seclend(&["haircut", "--config", s(&no_seed), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("seed is required"));
    assert_eq!(code(&seclend(&["haircut", "--config", s(&no_seed), "--out", s(dir.path()), "--seed", "4"])), 0);
}

#[test]
fn calibrate_writes_report_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "p.csv", &price_series(1500, 3));
    let out = seclend(&["calibrate", "--input", s(&csv), "--out", s(dir.path()), "--self-check"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("fit_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert_eq!(report["observations"], 1500);
    assert!(report["params"]["up_rate"].as_f64().unwrap() > 1.0);
}

#[test]
fn calibrate_rejects_unordered_dates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "p.csv", "date,close\n2020-01-02,100\n2020-01-03,101\n2020-01-01,102\n");
    let out = seclend(&["calibrate", "--input", s(&csv), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));
}

#[test]
fn calibrate_without_convergence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.csv", &price_series(600, 4));
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "price_series": "p.csv", "calibration": {"max_iterations": 1}}"#,
    );
    let out = seclend(&["calibrate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("start 0:"));
}

#[test]
fn haircut_from_price_series() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.csv", &price_series(800, 5));
    let text = haircut_config(r#"{"label": "BBB", "cds": {"spread_bps": 250, "recovery": 0.4}}"#, r#"{"label": "Aa3"}"#, 5_000)
        .replace(MODEL, r#""price_series": "p.csv""#);
    let cfg = write(dir.path(), "c.json", &text);
    let out_dir = dir.path().join("o");
    let out = seclend(&["haircut", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("fit_report.json").exists());

    let both = text.replacen("\"price_series\"", &format!("{MODEL}, \"price_series\""), 1);
    let both = write(dir.path(), "b.json", &both);
    assert_eq!(code(&seclend(&["haircut", "--config", s(&both), "--out", s(&out_dir)])), 1);
}
