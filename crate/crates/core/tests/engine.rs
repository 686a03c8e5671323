use serde_json::json;
use spadlab_core::engine::{run_session, sweep, SessionConfig, SweepAxis};
use spadlab_core::rng::derive_seed;

fn config(v: serde_json::Value) -> SessionConfig {
    SessionConfig::from_json_value(v).unwrap()
}

fn quiet_detectors() -> serde_json::Value {
    json!([
        { "id": "D0", "dark_count_rate_hz": 0 },
        { "id": "D1", "dark_count_rate_hz": 0, "peak_efficiency": 0.127 }
    ])
}

fn within_3sigma(observed: f64, p: f64, n: u64) -> bool {
    (observed - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn honest_channel_has_no_errors() {
    let m = run_session(&config(json!({
        "slots": 100_000,
        "seed": 5,
        "protocol": { "mu": 0.5 },
        "detectors": quiet_detectors(),
    })))
    .unwrap()
    .metrics;
    assert!(m.registered > 0);
    assert_eq!(m.qber, Some(0.0));
    assert!(within_3sigma(m.sift_fraction.unwrap(), 0.5, m.registered), "{:?}", m.sift_fraction);
}

#[test]
fn honest_channel_without_deadtime_has_many_bits() {
    let m = run_session(&config(json!({
        "slots": 200_000,
        "seed": 6,
        "protocol": { "mu": 0.5, "simultaneous_deadtime_slots": 0 },
        "detectors": [
            { "dark_count_rate_hz": 0, "deadtime_ns": 0 },
            { "dark_count_rate_hz": 0, "deadtime_ns": 0 }
        ],
    })))
    .unwrap()
    .metrics;
    assert!(m.registered > 5_000);
    assert_eq!(m.errors, 0);
    assert!(within_3sigma(m.sift_fraction.unwrap(), 0.5, m.registered));
    assert!(within_3sigma(m.ones_fraction.unwrap(), 0.5, m.sifted));
}

#[test]
fn equal_seeds_give_identical_metrics() {
    let cfg = config(json!({
        "slots": 50_000,
        "seed": 99,
        "protocol": { "mu": 2.0, "simultaneous_deadtime_slots": 3, "extinction_db": 20 },
    }));
    let a = serde_json::to_string(&run_session(&cfg).unwrap().metrics).unwrap();
    let b = serde_json::to_string(&run_session(&cfg).unwrap().metrics).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed = 100;
    assert_ne!(a, serde_json::to_string(&run_session(&other).unwrap().metrics).unwrap());
}

#[test]
fn every_click_and_slot_is_counted_once() {
    for (policy, extend) in [("discard", true), ("random_bit", false)] {
        let out = run_session(&config(json!({
            "slots": 40_000,
            "seed": 3,
            "trace": true,
            "protocol": {
                "mu": 5.0,
                "simultaneous_deadtime_slots": 4,
                "double_click_policy": policy,
                "extend_on_discarded": extend,
                "extinction_db": 22
            },
            "detectors": [
                { "dark_count_rate_hz": 2e5, "deadtime_ns": 30, "p_delay": 0.05 },
                { "dark_count_rate_hz": 2e5, "deadtime_ns": 30, "peak_efficiency": 0.3 }
            ],
        })))
        .unwrap();
        let m = out.metrics;
        let c = m.click_counts;
        assert!(c.total > 1_000);
        assert_eq!(c.decided(), c.total, "{c:?}");
        assert_eq!(c.photon + c.dark + c.delayed, c.total);
        assert_eq!(m.slot_counts.total(), m.slots);
        assert_eq!(out.trace.unwrap().len() as u64, c.total);
        assert_eq!(m.registered, m.slot_counts.accepted + m.slot_counts.basis_mismatch);
        assert_eq!(m.sifted, m.slot_counts.accepted);
        assert!(m.qber.is_some_and(|q| (0.0..=1.0).contains(&q)));
    }
}

#[test]
fn no_registered_click_follows_another_within_the_deadtime() {
    let k = 6i64;
    let out = run_session(&config(json!({
        "slots": 30_000,
        "seed": 8,
        "trace": true,
        "protocol": { "mu": 1.0, "simultaneous_deadtime_slots": k },
        "detectors": [
            { "dark_count_rate_hz": 1e5, "deadtime_ns": 0 },
            { "dark_count_rate_hz": 1e5, "deadtime_ns": 0 }
        ],
    })))
    .unwrap();
    let trace = out.trace.unwrap();
    let mut last_click: Option<i64> = None;
    let mut registered = 0;
    for r in &trace {
        let live = !matches!(r.decision.as_str(), "deadtime" | "superseded" | "out_of_range" | "double_click");
        if live && last_click != Some(r.slot) {
            registered += 1;
            if let Some(prev) = last_click {
                assert!(r.slot - prev > k, "slot {} registered {} slots after a click", r.slot, r.slot - prev);
            }
        }
        last_click = Some(r.slot);
    }
    assert_eq!(registered, out.metrics.registered);
    assert!(registered > 1_000);
}

#[test]
fn random_bit_double_clicks_are_balanced() {
    let out = run_session(&config(json!({
        "slots": 100_000,
        "seed": 12,
        "protocol": {
            "mu": 40.0,
            "double_click_policy": "random_bit",
            "simultaneous_deadtime_slots": 0
        },
        "detectors": [
            { "dark_count_rate_hz": 0, "deadtime_ns": 0, "peak_efficiency": 0.5 },
            { "dark_count_rate_hz": 0, "deadtime_ns": 0, "peak_efficiency": 0.5 }
        ],
    })))
    .unwrap();
    let doubles: Vec<_> = out.records.iter().filter(|r| r.provenance.detector.is_none()).collect();
    assert_eq!(doubles.len() as u64, out.metrics.double_click_random_bits);
    assert!(doubles.len() > 10_000);
    let ones = doubles.iter().filter(|r| r.bit == 1).count() as u64;
    assert!(within_3sigma(ones as f64 / doubles.len() as f64, 0.5, doubles.len() as u64));
}

#[test]
fn countermeasures_cost_at_most_half_the_randomized_bits() {
    let base = json!({
        "slots": 300_000,
        "seed": 21,
        "protocol": { "mu": 0.5, "simultaneous_deadtime_slots": 2 },
        "detectors": [
            { "dark_count_rate_hz": 0, "deadtime_ns": 0 },
            { "dark_count_rate_hz": 0, "deadtime_ns": 0 }
        ],
    });
    let off = run_session(&config(base.clone())).unwrap().metrics;
    let mut on = base;
    on["countermeasures"] = json!({
        "coincident_click": { "enabled": true },
        "post_deadtime": { "enabled": true, "slots": 1 }
    });
    let on = run_session(&config(on)).unwrap().metrics;
    assert_eq!(off.qber, Some(0.0));
    assert!(on.countermeasure_randomized_sifted > 0);
    let r = on.countermeasure_randomized_sifted as f64;
    let allowed = 0.5 * r / on.sifted as f64 + 3.0 * (0.25 * r).sqrt() / on.sifted as f64;
    let delta = on.qber.unwrap() - off.qber.unwrap();
    assert!(delta <= allowed, "{delta} > {allowed}");
}

#[test]
fn one_cell_sweep_matches_run_session() {
    let base = json!({ "slots": 20_000, "protocol": { "simultaneous_deadtime_slots": 1 } });
    let axes = vec![SweepAxis {
        path: "/protocol/mu".into(),
        values: vec![json!(0.8)],
    }];
    let rows = sweep(&base, &axes, 42, None).unwrap();
    assert_eq!(rows.len(), 1);
    let mut cfg = config(base);
    cfg.protocol.mu = 0.8;
    cfg.seed = derive_seed(42, 0);
    assert_eq!(rows[0].metrics, run_session(&cfg).unwrap().metrics);
}

#[test]
fn repeated_sweeps_are_identical() {
    let base = json!({ "slots": 5_000, "protocol": { "simultaneous_deadtime_slots": 1 } });
    let axes = vec![
        SweepAxis {
            path: "/protocol/mu".into(),
            values: vec![json!(0.1), json!(1.0), json!(10.0)],
        },
        SweepAxis {
            path: "/protocol/extinction_db".into(),
            values: vec![json!(null), json!(20)],
        },
    ];
    let a = sweep(&base, &axes, 7, None).unwrap();
    let b = sweep(&base, &axes, 7, None).unwrap();
    assert_eq!(a.len(), 6);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a[0].seed, a[1].seed);
}

#[test]
fn invalid_configs_name_the_field() {
    let err = |v: serde_json::Value| match SessionConfig::from_json_value(v).and_then(|c| c.resolve(None).map(|_| ())) {
        Err(spadlab_core::Error::Config { path, .. }) => path,
        other => panic!("expected a config error, got {other:?}"),
    };
    assert!(err(json!({ "slots": 0 })).contains("slots"));
    assert!(err(json!({ "slots": 10, "protocol": { "mu": "x" } })).contains("protocol.mu"));
    assert!(err(json!({ "slots": 10, "detectors": [{ "peak_efficiency": 2.0 }, {}] })).contains("detectors"));
    let p = err(json!({
        "slots": 10,
        "attack": { "attack": "deadtime_faked_state", "pulse_energy": 1e6 },
        "protocol": { "extinction_db": 25 }
    }));
    assert!(p.contains("offsets") || p.contains("protocol"), "{p}");
}
