//! Simulated count-rate scans of a detector model, for exercising the
//! characterization pipeline.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use rand::SeedableRng;

use crate::characterize::{CountRateRecord, MeasurementMeta};
use crate::detector::DetectorModel;
use crate::error::Result;
use crate::rng::{derive_seed, SimRng};

/// Coincidence count rates at every `(trigger shift, mu)` point, `trials`
/// laser pulses per point. A trial counts when the pulse clicks or, failing
/// that, a dark count falls inside the coincidence window.
pub fn characterization_run(
    model: &DetectorModel,
    meta: &MeasurementMeta,
    trigger_shifts: &[f64],
    mus: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<CountRateRecord>> {
    meta.validate()?;
    let dark_in_window = -(meta.window_gates() * (-meta.dark_probability()).ln_1p()).exp_m1();
    let points: Vec<(f64, f64)> = trigger_shifts
        .iter()
        .flat_map(|&t| mus.iter().map(move |&m| (t, m)))
        .collect();
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, &(t, mu))| {
            let mut rng = SimRng::seed_from_u64(derive_seed(seed, i as u64));
            let p_click = model.click_probability(t, mu);
            let photon = Binomial::new(trials, p_click).expect("valid probability").sample(&mut rng);
            let dark = if dark_in_window > 0.0 {
                Binomial::new(trials - photon, dark_in_window).expect("valid probability").sample(&mut rng)
            } else {
                0
            };
            meta.record(t, mu, (photon + dark) as f64 / trials as f64 * meta.f_hz)
        })
        .collect())
}
