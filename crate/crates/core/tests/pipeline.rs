use spadlab_core::calibration::{builtin_model, energy_grid, trigger_shifts, Spd};
use spadlab_core::characterize::{characterize, efficiency_from_rate, CharacterizeOptions, MeasurementMeta};
use spadlab_core::detector::{DetectorConfig, DetectorModel};
use spadlab_core::engine::characterization_run;

#[test]
fn simulated_scan_recovers_the_surface() {
    let model = builtin_model(Spd::Spd1);
    let meta = MeasurementMeta::testbench();
    let trials = 100_000u64;
    let shifts = trigger_shifts();
    let mus = energy_grid(1.0, 35);
    let records = characterization_run(&model, &meta, &shifts, &mus, trials, 17).unwrap();
    assert_eq!(records.len(), shifts.len() * mus.len());
    let dark = -(meta.window_gates() * (-meta.dark_probability()).ln_1p()).exp_m1();
    let (mut checked, mut within3, mut worst) = (0, 0, 0.0f64);
    for r in &records {
        let p = model.click_probability(r.trigger_shift, r.mu);
        let q = p + (1.0 - p) * dark;
        let counts = q * trials as f64;
        if counts < 50.0 || trials as f64 - counts < 50.0 {
            continue;
        }
        let est = efficiency_from_rate(r, meta.dark_probability(), meta.gate_frequency_hz).unwrap();
        let eta_true = -(-p).ln_1p() / r.mu;
        let sigma = (q * (1.0 - q) / trials as f64).sqrt() / ((1.0 - q) * r.mu);
        let z = ((est.eta - eta_true) / sigma).abs();
        checked += 1;
        within3 += (z <= 3.0) as usize;
        worst = worst.max(z);
    }
    assert!(checked > 50, "{checked}");
    assert!(within3 as f64 >= 0.99 * checked as f64, "{within3}/{checked}");
    assert!(worst < 5.0, "{worst}");

    let report = characterize(&records, &meta, CharacterizeOptions::new()).unwrap();
    assert!(report.verdict);
    assert!(report.factor_agrees);
}

#[test]
fn linear_detector_scan_is_not_superlinear() {
    let model = DetectorModel::linear(DetectorConfig::spd2());
    let meta = MeasurementMeta::testbench();
    let records = characterization_run(&model, &meta, &[0.0], &energy_grid(0.1, 12), 1_000_000, 3).unwrap();
    let report = characterize(&records, &meta, CharacterizeOptions { epsilon: 5e-3, ..CharacterizeOptions::new() }).unwrap();
    assert!(!report.verdict);
    let max_s = report.max_s.unwrap().value;
    assert!(max_s.abs() < 0.1, "{max_s}");
}

#[test]
fn repeated_scans_are_identical() {
    let model = builtin_model(Spd::Spd2);
    let meta = MeasurementMeta::testbench();
    let a = characterization_run(&model, &meta, &[0.4e-9, 1.2e-9], &[1.0, 100.0], 1000, 5).unwrap();
    let b = characterization_run(&model, &meta, &[0.4e-9, 1.2e-9], &[1.0, 100.0], 1000, 5).unwrap();
    assert_eq!(a, b);
}
