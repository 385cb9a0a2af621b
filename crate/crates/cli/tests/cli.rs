use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use svsc::estimation::{synthetic_series, SyntheticConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_svsc"))
}

fn tables() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tables")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("svsc-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_json(name: &str, v: &Value) -> PathBuf {
    let p = scratch(name);
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn header_value(text: &str, key: &str) -> Option<String> {
    let prefix = format!("# {key}: ");
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn reference_market() -> Value {
    json!({
        "spot": 1.0,
        "svsc": {
            "beta": 2.0, "v_bar": 0.0099241444, "v0": 0.0099241444, "alpha": 0.2536,
            "rho0": -0.3835, "gamma": 4.0, "rho_bar": -0.3835, "epsilon": 10.0, "rho_cs": 0.7
        }
    })
}

fn down_out_call(strike: f64, barrier: f64) -> Value {
    json!({
        "type": "barrier",
        "underlying": { "strike": strike, "expiry": 0.5, "kind": "call" },
        "barrier": barrier, "style": "knockout", "direction": "down"
    })
}

#[test]
fn calibrate_reports_fitted_parameters() {
    let cfg = tables().join("calibrate.json");
    let o = run(&["calibrate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let alpha: f64 = header_value(&out, "alpha").unwrap().parse().unwrap();
    let rho: f64 = header_value(&out, "rho").unwrap().parse().unwrap();
    assert!(alpha > 0.2 && alpha < 0.4, "alpha {alpha}");
    assert!(rho < -0.2 && rho > -0.5, "rho {rho}");
    let r = rows(&out);
    assert_eq!(r.len(), 3);
    for row in r {
        let resid: f64 = row[4].parse().unwrap();
        assert!(resid.abs() < 1e-6);
    }
}

#[test]
fn flat_quotes_calibrate_to_zero_vol_of_vol() {
    let cfg = write_json(
        "flat.json",
        &json!({
            "market": {
                "spot": 1.0,
                "quotes": [
                    { "strike": 0.95, "vol": 0.1, "expiry": 0.5 },
                    { "strike": 1.0, "vol": 0.1, "expiry": 0.5 },
                    { "strike": 1.05, "vol": 0.1, "expiry": 0.5 }
                ]
            },
            "marks": { "beta": 2.0, "gamma": 4.0, "xi": 5.0 }
        }),
    );
    let o = run(&["calibrate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let alpha: f64 = header_value(&stdout(&o), "alpha").unwrap().parse().unwrap();
    assert!(alpha.abs() < 1e-3, "alpha {alpha}");
}

#[test]
fn empty_instrument_list_is_a_config_error() {
    let cfg = write_json(
        "empty.json",
        &json!({ "market": reference_market(), "instruments": [] }),
    );
    let o = run(&["price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("instrument list"));
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let cfg = write_json(
        "unknown.json",
        &json!({ "market": reference_market(), "engine": { "pathz": 10 } }),
    );
    let o = run(&["price", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_flag_is_a_usage_error() {
    let o = run(&["price"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_csv_reports_line_number() {
    let p = scratch("bad.csv");
    std::fs::write(
        &p,
        "date,spot,atm_3m,atm_1y,rr25_3m,rr25_1y\n2020-01-01,1.0,0.1,0.1,-0.01,-0.01\n2020-01-02,1.0,abc,0.1,-0.01,-0.01\n",
    )
    .unwrap();
    let o = run(&["estimate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

fn write_series(name: &str, cfg: &SyntheticConfig<f64>) -> PathBuf {
    let p = scratch(name);
    let s = synthetic_series(cfg).unwrap();
    let mut f = std::fs::File::create(&p).unwrap();
    s.to_csv(&mut f).unwrap();
    p
}

#[test]
fn constant_series_is_degenerate() {
    let mut cfg = SyntheticConfig::planted(100, 5);
    cfg.params.heston.alpha = 0.0;
    cfg.params.epsilon = 0.0;
    let p = write_series("constant.csv", &cfg);
    let o = run(&["estimate", p.to_str().unwrap(), "--window", "60"]);
    assert_ne!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr).to_lowercase();
    assert!(err.contains("degenerate"), "{err}");
}

#[test]
fn estimate_recovers_planted_parameters() {
    let p = write_series("planted.csv", &SyntheticConfig::planted(1500, 1));
    let opts = write_json("estimate.json", &json!({ "xi_stride": 5 }));
    let o = run(&["estimate", p.to_str().unwrap(), "--config", opts.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let beta: f64 = header_value(&out, "beta").unwrap().parse().unwrap();
    let gamma: f64 = header_value(&out, "gamma").unwrap().parse().unwrap();
    let xi: f64 = header_value(&out, "xi").unwrap().parse().unwrap();
    assert!((beta / 2.0 - 1.0).abs() < 0.05, "beta {beta}");
    assert!((gamma / 4.0 - 1.0).abs() < 0.05, "gamma {gamma}");
    assert!((xi / 7.0 - 1.0).abs() < 0.3, "xi {xi}");
    assert!(!rows(&out).is_empty());
}

fn small_price_config() -> Value {
    json!({
        "market": reference_market(),
        "engine": { "paths": 4000, "steps": 50, "seed": 3, "market_prices": "mc" },
        "instruments": [down_out_call(1.0, 0.95), { "type": "one_touch", "barrier": 0.95, "expiry": 0.5, "direction": "down" }]
    })
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = write_json("det.json", &small_price_config());
    let a = scratch("det_a.csv");
    let b = scratch("det_b.csv");
    for out in [&a, &b] {
        let o = run(&[
            "price",
            "--config",
            cfg.to_str().unwrap(),
            "--bp",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(header_value(&text, "command").as_deref(), Some("price"));
    assert_eq!(header_value(&text, "seed").as_deref(), Some("3"));
    assert_eq!(header_value(&text, "config_sha256").map(|h| h.len()), Some(64));
    assert_eq!(rows(&text).len(), 2);
}

#[test]
fn seed_flag_changes_hash_and_prices() {
    let cfg = write_json("seed.json", &small_price_config());
    let path = cfg.to_str().unwrap();
    let a = stdout(&run(&["mc-benchmark", "--config", path]));
    let b = stdout(&run(&["mc-benchmark", "--config", path, "--seed", "4"]));
    assert_ne!(header_value(&a, "config_sha256"), header_value(&b, "config_sha256"));
    assert_eq!(header_value(&b, "seed").as_deref(), Some("4"));
    assert_ne!(rows(&a), rows(&b));
}

#[test]
fn json_output_has_header_and_rows() {
    let cfg = write_json("json.json", &small_price_config());
    let o = run(&["mc-benchmark", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["header"]["command"], "mc-benchmark");
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn price_rows_carry_all_columns() {
    let cfg = write_json("cols.json", &small_price_config());
    let o = run(&["price", "--config", cfg.to_str().unwrap(), "--bp"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let cols = out.lines().find(|l| !l.starts_with('#')).unwrap();
    for c in [
        "instrument",
        "approx",
        "bs",
        "heston",
        "model",
        "model_stderr",
        "approx_diff",
        "status",
    ] {
        assert!(cols.split(',').any(|x| x == c), "missing {c} in {cols}");
    }
    for r in rows(&out) {
        assert_eq!(r.last().map(String::as_str), Some("ok"));
    }
}

fn vega_profile(drift: f64) -> Vec<Vec<String>> {
    let mut market = reference_market();
    market["rate_dom"] = json!(drift);
    let cfg = write_json(
        &format!("vega_{drift}.json"),
        &json!({
            "market": market,
            "instruments": [down_out_call(1.0, 0.97)],
            "vega_profile": { "elapsed": [0.0, 0.25], "spot_min": 0.9, "spot_max": 1.1, "n_spots": 41, "vol": 0.09 }
        }),
    );
    let o = run(&["vega-profile", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    rows(&stdout(&o))
}

fn max_abs(rows: &[Vec<String>], col: usize) -> f64 {
    rows.iter()
        .filter_map(|r| r[col].parse::<f64>().ok())
        .fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn zero_drift_barrier_hedge_removes_vega() {
    let r = vega_profile(0.0);
    let pre = max_abs(&r, 3);
    let post = max_abs(&r, 4);
    assert!(pre > 0.05, "pre {pre}");
    assert!(post < 0.01 * pre, "post {post} pre {pre}");
}

#[test]
fn drifted_barrier_hedge_leaves_small_vega() {
    let r = vega_profile(0.05);
    let pre = max_abs(&r, 3);
    let post = max_abs(&r, 4);
    assert!(post > 0.01 * pre);
    assert!(post < 0.5 * pre, "post {post} pre {pre}");
}

#[test]
fn smile_has_skew() {
    let cfg = write_json(
        "smile.json",
        &json!({
            "market": reference_market(),
            "engine": { "paths": 20000, "steps": 50 },
            "smile": { "expiry": 0.5, "n_strikes": 5 }
        }),
    );
    let o = run(&["smile", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 5);
    let first: f64 = r[0][3].parse().unwrap();
    let last: f64 = r[4][3].parse().unwrap();
    assert!(first > last, "{first} {last}");
}
