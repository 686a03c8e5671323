//! Sinusoidally-gated single-photon avalanche detector model.
//!
//! The pure half of the module turns an efficiency into click probabilities
//! (independent-photon and coherent-state forms) and evaluates calibration
//! surfaces. [`DetectorState`] is the stateful half: it consumes a monotone
//! pulse feed and produces timed clicks with dark counts, deadtime and the
//! energy-dependent click-time shift.

mod energy_time;
mod csvio;
mod grid;
mod profile;
mod state;
mod surface;

pub use energy_time::{ClickTiming, EnergyTimeModel, EnergyTimeTable, LogLinearTiming};
pub use profile::GateEfficiencyProfile;
pub use state::{ClickCause, ClickEvent, DetectorModel, DetectorState, IncidentPulse};
pub use surface::{EfficiencyTable, PowerLawEntry, PowerLawSurface, SuperlinearitySurface};

use crate::error::{Error, Result};

pub(crate) use csvio::read_numeric as read_numeric_csv;

/// FWHM of a Gaussian divided by its standard deviation, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Click probability of an `n`-photon Fock pulse when each photon is detected
/// independently with efficiency `eta`.
pub fn fock_click_probability(eta: f64, n: u64) -> f64 {
    let miss = 1.0 - eta;
    let all_missed = if n <= i32::MAX as u64 {
        miss.powi(n as i32)
    } else {
        miss.powf(n as f64)
    };
    1.0 - all_missed
}

/// Click probability of a coherent pulse with mean photon number `mu`.
pub fn coherent_click_probability(eta: f64, mu: f64) -> f64 {
    -(-mu * eta).exp_m1()
}

/// `1 - (1 - eta(t))^n` with `eta(t)` read from the gate profile.
pub fn detect_prob_fock(profile: &GateEfficiencyProfile, t: f64, n: u64) -> f64 {
    fock_click_probability(profile.efficiency(t), n)
}

/// `1 - exp(-mu eta(t))` with `eta(t)` read from the gate profile.
pub fn detect_prob_coherent(profile: &GateEfficiencyProfile, t: f64, mu: f64) -> f64 {
    coherent_click_probability(profile.efficiency(t), mu)
}

/// Efficiency `eta(t, mu)` from a superlinearity surface. Queries outside the
/// surface's declared validity range are rejected rather than extrapolated.
pub fn effective_efficiency(surface: &SuperlinearitySurface, t: f64, mu: f64) -> Result<f64> {
    surface.efficiency(t, mu)
}

/// Mean click-time shift and jitter FWHM for a pulse of mean photon number
/// `mu` arriving `t_trigger` after the gate maximum.
pub fn click_time_shift(model: &EnergyTimeModel, t_trigger: f64, mu: f64) -> Result<ClickTiming> {
    model.timing(t_trigger, mu)
}

/// Static parameters of one gated detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    id: String,
    gate_frequency: f64,
    dark_count_rate: f64,
    dark_probability: f64,
    deadtime: f64,
    peak_efficiency: f64,
    latency: f64,
}

impl DetectorConfig {
    pub fn new(
        id: impl Into<String>,
        gate_frequency: f64,
        dark_count_rate: f64,
        deadtime: f64,
        peak_efficiency: f64,
    ) -> Result<Self> {
        if !(gate_frequency > 0.0 && gate_frequency.is_finite()) {
            return Err(Error::config("gate_frequency", "must be positive and finite"));
        }
        if !(dark_count_rate >= 0.0 && dark_count_rate.is_finite()) {
            return Err(Error::config("dark_count_rate", "must be non-negative"));
        }
        if !(deadtime >= 0.0 && deadtime.is_finite()) {
            return Err(Error::config("deadtime", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&peak_efficiency) {
            return Err(Error::config("peak_efficiency", "must lie in [0, 1]"));
        }
        let dark_probability = dark_count_rate / gate_frequency;
        if dark_probability >= 1.0 {
            return Err(Error::config("dark_count_rate", "dark count probability per gate must be < 1"));
        }
        Ok(Self {
            id: id.into(),
            gate_frequency,
            dark_count_rate,
            dark_probability,
            deadtime,
            peak_efficiency,
            latency: 0.0,
        })
    }

    /// SPD1 of the tested pair: 312.5 MHz gating, 428 Hz dark counts,
    /// 4.34 us deadtime, 9.8 % efficiency.
    pub fn spd1() -> Self {
        Self::new("SPD1", 312.5e6, 428.0, 4.34e-6, 0.098).expect("valid constants")
    }

    /// SPD2: 532 Hz dark counts, 4.36 us deadtime, 12.7 % efficiency.
    pub fn spd2() -> Self {
        Self::new("SPD2", 312.5e6, 532.0, 4.36e-6, 0.127).expect("valid constants")
    }

    /// Offset of the click-time axis. Zero means the mean click time at
    /// `mu = 1` and trigger shift 0 coincides with the pulse arrival.
    pub fn with_latency(mut self, latency: f64) -> Self {
        self.latency = latency;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn gate_frequency(&self) -> f64 {
        self.gate_frequency
    }
    pub fn gate_period(&self) -> f64 {
        1.0 / self.gate_frequency
    }
    pub fn dark_count_rate(&self) -> f64 {
        self.dark_count_rate
    }
    /// `P_D = D / F`.
    pub fn dark_probability(&self) -> f64 {
        self.dark_probability
    }
    pub fn deadtime(&self) -> f64 {
        self.deadtime
    }
    pub fn peak_efficiency(&self) -> f64 {
        self.peak_efficiency
    }
    pub fn latency(&self) -> f64 {
        self.latency
    }
}
