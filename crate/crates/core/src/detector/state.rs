use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::{
    coherent_click_probability, ClickTiming, DetectorConfig, EnergyTimeModel, GateEfficiencyProfile,
    LogLinearTiming, SuperlinearitySurface,
};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Everything that describes one detector except its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub config: DetectorConfig,
    pub profile: GateEfficiencyProfile,
    pub surface: SuperlinearitySurface,
    pub timing: EnergyTimeModel,
    /// Probability that a pulse which failed to click produces a click one
    /// gate period later instead.
    pub p_delay: f64,
}

impl DetectorModel {
    /// Linear detector (efficiency independent of `mu`) with the synthetic
    /// log-linear click-time model.
    pub fn linear(config: DetectorConfig) -> Self {
        let eta = config.peak_efficiency();
        let profile = GateEfficiencyProfile::constant(config.gate_period(), eta).expect("valid efficiency");
        Self {
            config,
            profile,
            surface: SuperlinearitySurface::linear(eta),
            timing: EnergyTimeModel::LogLinear(LogLinearTiming::default()),
            p_delay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_delay) {
            return Err(Error::config("p_delay", "must lie in [0, 1]"));
        }
        if let EnergyTimeModel::LogLinear(m) = &self.timing {
            m.validate()?;
        }
        Ok(())
    }

    /// Click probability `1 - exp(-mu eta(t, mu))`, query clamped to the
    /// surface's validity range.
    pub fn click_probability(&self, trigger_shift: f64, mu: f64) -> f64 {
        if mu <= 0.0 {
            return 0.0;
        }
        coherent_click_probability(self.surface.efficiency_clamped(trigger_shift, mu), mu)
    }

    /// Mean click timing, query clamped.
    pub fn expected_timing(&self, trigger_shift: f64, mu: f64) -> ClickTiming {
        self.timing.timing_clamped(trigger_shift, mu)
    }

    /// Lower bound on `click time - arrival - latency` for any sampled click.
    pub fn advance_bound(&self) -> f64 {
        self.timing.max_advance() + 2.0 * self.timing.max_fwhm()
    }
}

/// Optical pulse reaching one detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentPulse {
    /// Absolute arrival time, seconds.
    pub arrival: f64,
    /// Offset from the gate's efficiency maximum, seconds.
    pub trigger_shift: f64,
    /// Mean photon number reaching this detector.
    pub mu: f64,
    pub pulse_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickCause {
    Photon,
    Dark,
    Delayed,
}

impl ClickCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClickCause::Photon => "photon",
            ClickCause::Dark => "dark",
            ClickCause::Delayed => "delayed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub detector: usize,
    /// Absolute click time, seconds.
    pub time: f64,
    pub cause: ClickCause,
    pub pulse_id: Option<u64>,
    /// Sampled click-time shift relative to `arrival + latency` (photon and
    /// delayed clicks only; delayed clicks exclude the extra gate period).
    pub shift: Option<f64>,
    pub trigger_shift: Option<f64>,
    pub mu: Option<f64>,
}

/// Running detector: deadtime bookkeeping, dark-count process and random
/// source. One state drives one detector through one monotone pulse feed.
#[derive(Debug, Clone)]
pub struct DetectorState {
    index: usize,
    model: DetectorModel,
    deadtime_until: f64,
    last_arrival: f64,
    next_dark: f64,
    dark_gap: Option<Exp<f64>>,
    rng: SimRng,
}

impl DetectorState {
    pub fn new(index: usize, model: DetectorModel, mut rng: SimRng) -> Self {
        let rate = model.config.dark_count_rate();
        let dark_gap = (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
        let next_dark = match &dark_gap {
            Some(d) => d.sample(&mut rng),
            None => f64::INFINITY,
        };
        Self {
            index,
            model,
            deadtime_until: f64::NEG_INFINITY,
            last_arrival: f64::NEG_INFINITY,
            next_dark,
            dark_gap,
            rng,
        }
    }

    pub fn model(&self) -> &DetectorModel {
        &self.model
    }

    pub fn deadtime_until(&self) -> f64 {
        self.deadtime_until
    }

    fn emit(&mut self, click: ClickEvent) -> ClickEvent {
        self.deadtime_until = click.time + self.model.config.deadtime();
        click
    }

    /// Dark clicks up to and including time `t`. Candidates falling inside
    /// the deadtime are dropped; emitted ones start a new deadtime.
    pub fn dark_clicks_until(&mut self, t: f64) -> Vec<ClickEvent> {
        let mut out = Vec::new();
        while self.next_dark <= t {
            let time = self.next_dark;
            let gap = self.dark_gap.as_ref().expect("finite next_dark implies a rate").sample(&mut self.rng);
            self.next_dark += gap;
            if time >= self.deadtime_until {
                let click = ClickEvent {
                    detector: self.index,
                    time,
                    cause: ClickCause::Dark,
                    pulse_id: None,
                    shift: None,
                    trigger_shift: None,
                    mu: None,
                };
                out.push(self.emit(click));
            }
        }
        out
    }

    fn sample_shift(&mut self, timing: ClickTiming) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        (timing.mean_shift + timing.sigma() * z).max(-self.model.advance_bound())
    }

    /// Photon response to one pulse. Dark counts are not generated here; call
    /// [`dark_clicks_until`](Self::dark_clicks_until) with the arrival time
    /// first so the deadtime they cause is honoured.
    ///
    /// The pulse feed must be monotone in arrival time.
    pub fn sample_detection(&mut self, pulse: &IncidentPulse) -> Option<ClickEvent> {
        debug_assert!(pulse.arrival >= self.last_arrival, "pulse feed must be monotone");
        self.last_arrival = pulse.arrival;
        if pulse.arrival < self.deadtime_until || pulse.mu <= 0.0 {
            return None;
        }
        let p = self.model.click_probability(pulse.trigger_shift, pulse.mu);
        let u: f64 = self.rng.random();
        let timing = self.model.expected_timing(pulse.trigger_shift, pulse.mu);
        let latency = self.model.config.latency();
        if u < p {
            let shift = self.sample_shift(timing);
            let time = pulse.arrival + latency + shift;
            if time < self.deadtime_until {
                return None;
            }
            return Some(self.emit(ClickEvent {
                detector: self.index,
                time,
                cause: ClickCause::Photon,
                pulse_id: pulse.pulse_id,
                shift: Some(shift),
                trigger_shift: Some(pulse.trigger_shift),
                mu: Some(pulse.mu),
            }));
        }
        if self.model.p_delay > 0.0 {
            let v: f64 = self.rng.random();
            if v < self.model.p_delay {
                let shift = self.sample_shift(timing);
                let time = pulse.arrival + latency + self.model.config.gate_period() + shift;
                if time >= self.deadtime_until {
                    return Some(self.emit(ClickEvent {
                        detector: self.index,
                        time,
                        cause: ClickCause::Delayed,
                        pulse_id: pulse.pulse_id,
                        shift: Some(shift),
                        trigger_shift: Some(pulse.trigger_shift),
                        mu: Some(pulse.mu),
                    }));
                }
            }
        }
        None
    }
}
