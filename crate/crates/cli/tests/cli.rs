use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spadlab_core::calibration::energy_grid;
use spadlab_core::characterize::{predicted_click_rate, write_rates_csv, MeasurementMeta};
use spadlab_core::engine::{summarize, HistogramRow, SessionConfig};

fn spadlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spadlab"))
        .args(args)
        .env_remove("SPADLAB_OUT_DIR")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

/// Noise-free count-rate scan of `eta(mu)` on the 3-dB grid.
fn rates_fixture(dir: &Path, eta: impl Fn(f64) -> f64) -> (PathBuf, PathBuf) {
    let meta = MeasurementMeta::testbench();
    let records: Vec<_> = energy_grid(0.01, 30)
        .into_iter()
        .map(|mu| {
            let rate = predicted_click_rate(meta.f_hz, eta(mu), mu, meta.dark_probability(), meta.window_gates());
            meta.record(0.0, mu, rate)
        })
        .collect();
    let rates = dir.join("rates.csv");
    write_rates_csv(&records, std::fs::File::create(&rates).unwrap()).unwrap();
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string(&meta).unwrap()).unwrap();
    (rates, meta_path)
}

#[test]
fn honest_config_has_zero_qber() {
    let o = spadlab(&["simulate", &config("honest.json"), "--quiet"]);
    assert!(o.stderr.is_empty());
    assert_eq!(json_out(&o)["qber"], Value::from(0.0));
}

#[test]
fn intermediate_attack_stays_below_three_percent() {
    let m = json_out(&spadlab(&["simulate", &config("attackA.json"), "--quiet"]));
    let q = m["qber"].as_f64().unwrap();
    assert!(q < 0.03, "{q}");
    assert!(m["eve_known_fraction"].as_f64().unwrap() > 0.971);
}

#[test]
fn countered_deadtime_attack_reports_randomized_bits() {
    let m = json_out(&spadlab(&["simulate", &config("attackB_countered.json"), "--quiet"]));
    assert!(m["attack"]["attacked_qber"].as_f64().unwrap() > 0.0);
    assert_eq!(m["countermeasure_randomized"], m["registered"]);
}

#[test]
fn seed_flag_controls_the_run() {
    let a = spadlab(&["simulate", &config("attackB.json"), "--quiet", "--seed", "9"]);
    let b = spadlab(&["simulate", &config("attackB.json"), "--quiet", "--seed", "9"]);
    let c = spadlab(&["simulate", &config("attackB.json"), "--quiet", "--seed", "10"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(json_out(&a)["seed"], Value::from(9));
}

#[test]
fn invalid_config_exits_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"slots": 10, "protocol": {"mu": -1}}"#).unwrap();
    let o = spadlab(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("protocol.mu"));
    let o = spadlab(&["simulate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_env_and_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spadlab"))
        .args(["simulate", &config("honest.json"), "--quiet", "--trace"])
        .env("SPADLAB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let metrics: Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("slot,device,click_time_ns,cause,decision"));
    assert_eq!(trace.lines().count() as u64 - 1, metrics["click_counts"]["total"].as_u64().unwrap());

    let out = dir.path().join("sub/m.json");
    let o = spadlab(&["simulate", &config("honest.json"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
    assert!(out.exists());
}

#[test]
fn characterize_recovers_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let (rates, meta) = rates_fixture(dir.path(), |mu| 1e-3 * mu.powf(0.86));
    let r = json_out(&spadlab(&["characterize", rates.to_str().unwrap(), meta.to_str().unwrap(), "--quiet"]));
    assert_eq!(r["verdict"], Value::Bool(true));
    let s = r["max_S"]["value"].as_f64().unwrap();
    assert!((s - 0.86).abs() <= 0.01, "{s}");
    for key in ["eta_surface", "S_grid", "witness", "masked_points", "eq8_qber_curve"] {
        assert!(r.get(key).is_some(), "{key}");
    }
}

#[test]
fn characterize_constant_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let (rates, meta) = rates_fixture(dir.path(), |_| 0.1);
    let r = json_out(&spadlab(&["characterize", rates.to_str().unwrap(), meta.to_str().unwrap(), "--quiet"]));
    assert_eq!(r["verdict"], Value::Bool(false));
    assert!(r["max_S"]["value"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn characterize_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (rates, meta) = rates_fixture(dir.path(), |_| 0.1);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "trigger_shift_ns,mu,rate_hz\n0,1,10\n0,x,12\n").unwrap();
    let o = spadlab(&["characterize", bad.to_str().unwrap(), meta.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));

    let saturated = dir.path().join("sat.csv");
    std::fs::write(&saturated, "trigger_shift_ns,mu,rate_hz\n0,1,1000\n0,2,1000\n0,4,1000\n").unwrap();
    let o = spadlab(&["characterize", saturated.to_str().unwrap(), meta.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    drop(rates);
}

fn read_histogram(path: &Path) -> Vec<HistogramRow> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

#[test]
fn histogram_of_simulated_trace_matches_the_timing_model() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.json");
    let o = spadlab(&["simulate", &config("probe_spd1.json"), "--quiet", "--out", metrics.to_str().unwrap(), "--trace"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = dir.path().join("trace.csv");
    let hist = dir.path().join("h.csv");
    let o = spadlab(&["histogram", trace.to_str().unwrap(), "--bins", "30", "--out", hist.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    let header = std::fs::read_to_string(&hist).unwrap();
    assert!(header.starts_with("trigger_shift_ns,mu,bin_center_ns,density"));
    let rows = read_histogram(&hist);

    let (cfg, base) = SessionConfig::from_path(Path::new(&config("probe_spd1.json"))).unwrap();
    let model = &cfg.resolve(base.as_deref()).unwrap().models[0];
    let summary = summarize(&rows);
    assert_eq!(summary.len(), 12);
    for s in &summary {
        let expected = model.expected_timing(s.trigger_shift_ns * 1e-9, s.mu);
        let mean = expected.mean_shift * 1e9;
        let fwhm = expected.fwhm * 1e9;
        assert!((s.mean_ns - mean).abs() < s.bin_width_ns, "{s:?} vs {mean}");
        assert!((s.fwhm_ns - fwhm).abs() < s.bin_width_ns + 0.08 * fwhm, "{s:?} vs {fwhm}");
    }
    for group in summary.chunks(4) {
        for w in group.windows(2) {
            assert!(w[1].mean_ns < w[0].mean_ns && w[1].fwhm_ns < w[0].fwhm_ns, "{w:?}");
        }
    }
}

#[test]
fn histogram_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let header = "slot,device,click_time_ns,cause,decision,trigger_shift_ns,mu,shift_ns\n";
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, header).unwrap();
    assert_eq!(spadlab(&["histogram", empty.to_str().unwrap()]).status.code(), Some(3));

    let single = dir.path().join("single.csv");
    std::fs::write(&single, format!("{header}3,d0,48.1,photon,accepted,1.2,100,-0.4\n")).unwrap();
    let out = dir.path().join("h.csv");
    let o = spadlab(&["histogram", single.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let rows = read_histogram(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].bin_center_ns, rows[0].density), (-0.4, 1.0));

    let o = spadlab(&["histogram", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_rows_follow_cell_order() {
    let a = spadlab(&["sweep", &config("sweep_energy.json"), "--quiet"]);
    let b = spadlab(&["sweep", &config("sweep_energy.json"), "--quiet"]);
    assert_eq!(a.stdout, b.stdout);
    let rows = json_out(&a);
    let energies: Vec<f64> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["params"]["/attack/pulse_energy"].as_f64().unwrap())
        .collect();
    assert_eq!(energies, vec![250.0, 500.0, 1000.0, 2000.0, 4000.0]);
}
