//! JSON session configuration. Times are nanoseconds in files and seconds in
//! the API.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::calibration::{builtin_energy_time, builtin_model, builtin_surface, Spd};
use crate::detector::{
    DetectorConfig, DetectorModel, EfficiencyTable, EnergyTimeModel, EnergyTimeTable, GateEfficiencyProfile,
    LogLinearTiming, PowerLawEntry, PowerLawSurface, SuperlinearitySurface,
};
use crate::error::{Error, Result};
use crate::protocol::{BitSlotTimeline, BobConfig, DeviceOffsets, DoubleClickPolicy};
use crate::NS;

/// Whole-session configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub countermeasures: CountermeasureConfig,
    /// Replaces Alice with a calibration scan; see [`ProbeConfig`].
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub trace: bool,
}

fn default_detectors() -> Vec<DetectorSpec> {
    vec![DetectorSpec::spd1(), DetectorSpec::spd2()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetsNs {
    #[serde(default)]
    pub pm: f64,
    #[serde(default)]
    pub d0: f64,
    #[serde(default)]
    pub d1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Alice's mean photon number.
    pub mu: f64,
    pub slot_period_ns: f64,
    pub gates_per_slot: u32,
    pub four_state: bool,
    /// `null` is an ideal analyzer.
    pub extinction_db: Option<f64>,
    pub double_click_policy: DoubleClickPolicy,
    /// Arrival time of Alice's pulses within a slot.
    pub alice_phase_ns: f64,
    pub offsets_ns: OffsetsNs,
    /// Simultaneous deadtime in slots; `null` uses the longest detector
    /// deadtime rounded up to whole slots.
    pub simultaneous_deadtime_slots: Option<u64>,
    /// Whether clicks discarded during the simultaneous deadtime restart it.
    pub extend_on_discarded: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            slot_period_ns: 16.0,
            gates_per_slot: 5,
            four_state: false,
            extinction_db: None,
            double_click_policy: DoubleClickPolicy::Discard,
            alice_phase_ns: 8.0,
            offsets_ns: OffsetsNs {
                pm: 0.0,
                d0: 0.0,
                d1: 0.0,
            },
            simultaneous_deadtime_slots: None,
            extend_on_discarded: true,
        }
    }
}

impl ProtocolConfig {
    pub fn bob(&self) -> BobConfig {
        BobConfig {
            four_state: self.four_state,
            extinction_db: self.extinction_db,
            double_click_policy: self.double_click_policy,
        }
    }
}

/// Efficiency surface of a detector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    /// `eta = peak_efficiency`, independent of trigger shift and energy.
    #[default]
    Linear,
    PowerLaw {
        entries: Vec<PowerLawEntryNs>,
        #[serde(default)]
        mu_min: Option<f64>,
        #[serde(default)]
        mu_max: Option<f64>,
    },
    /// Uniform power law reproducing click probabilities `p_f` at `energy`
    /// and `p_h` at `energy / 2`.
    ClickProbabilities { p_f: f64, p_h: f64, energy: f64 },
    /// CSV `trigger_shift_ns, mu, eta`.
    Table { path: PathBuf },
    /// Shipped table, `spd1` or `spd2`.
    Builtin { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawEntryNs {
    #[serde(default)]
    pub trigger_shift_ns: f64,
    pub c: f64,
    pub k: f64,
}

/// Click-time response of a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyTimeSpec {
    LogLinear {
        #[serde(default = "LogLinearNs::default_slope")]
        slope_ns_per_decade: f64,
        #[serde(default = "LogLinearNs::default_reference_mu")]
        reference_mu: f64,
        #[serde(default)]
        reference_shift_ns: f64,
        #[serde(default = "LogLinearNs::default_max_mu")]
        max_mu: f64,
        #[serde(default = "LogLinearNs::default_fwhm")]
        fwhm_at_reference_ns: f64,
        #[serde(default = "LogLinearNs::default_fwhm_slope")]
        fwhm_slope_ns_per_decade: f64,
        #[serde(default = "LogLinearNs::default_fwhm_floor")]
        fwhm_floor_ns: f64,
    },
    /// CSV `trigger_shift_ns, mu, dt_ns, fwhm_ns`.
    Table { path: PathBuf },
    Builtin { name: String },
}

struct LogLinearNs;
impl LogLinearNs {
    fn default_slope() -> f64 {
        LogLinearTiming::default().slope / NS
    }
    fn default_reference_mu() -> f64 {
        LogLinearTiming::default().reference_mu
    }
    fn default_max_mu() -> f64 {
        LogLinearTiming::default().max_mu
    }
    fn default_fwhm() -> f64 {
        LogLinearTiming::default().fwhm_at_reference / NS
    }
    fn default_fwhm_slope() -> f64 {
        LogLinearTiming::default().fwhm_slope / NS
    }
    fn default_fwhm_floor() -> f64 {
        LogLinearTiming::default().fwhm_floor / NS
    }
}

impl Default for EnergyTimeSpec {
    fn default() -> Self {
        EnergyTimeSpec::LogLinear {
            slope_ns_per_decade: LogLinearNs::default_slope(),
            reference_mu: LogLinearNs::default_reference_mu(),
            reference_shift_ns: 0.0,
            max_mu: LogLinearNs::default_max_mu(),
            fwhm_at_reference_ns: LogLinearNs::default_fwhm(),
            fwhm_slope_ns_per_decade: LogLinearNs::default_fwhm_slope(),
            fwhm_floor_ns: LogLinearNs::default_fwhm_floor(),
        }
    }
}

/// One detector. Unlisted fields take SPD1's testbench values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    #[serde(default = "DetectorSpec::default_id")]
    pub id: String,
    #[serde(default = "DetectorSpec::default_f")]
    pub gate_frequency_hz: f64,
    #[serde(default = "DetectorSpec::default_d")]
    pub dark_count_rate_hz: f64,
    #[serde(default = "DetectorSpec::default_deadtime")]
    pub deadtime_ns: f64,
    #[serde(default = "DetectorSpec::default_eta")]
    pub peak_efficiency: f64,
    #[serde(default)]
    pub latency_ns: f64,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub energy_time: EnergyTimeSpec,
    #[serde(default)]
    pub p_delay: f64,
}

impl DetectorSpec {
    fn default_id() -> String {
        "SPD1".into()
    }
    fn default_f() -> f64 {
        312.5e6
    }
    fn default_d() -> f64 {
        428.0
    }
    fn default_deadtime() -> f64 {
        4340.0
    }
    fn default_eta() -> f64 {
        0.098
    }

    /// Linear SPD1 with the synthetic log-linear timing.
    pub fn spd1() -> Self {
        Self {
            id: Self::default_id(),
            gate_frequency_hz: Self::default_f(),
            dark_count_rate_hz: Self::default_d(),
            deadtime_ns: Self::default_deadtime(),
            peak_efficiency: Self::default_eta(),
            latency_ns: 0.0,
            surface: SurfaceSpec::Linear,
            energy_time: EnergyTimeSpec::default(),
            p_delay: 0.0,
        }
    }

    /// Linear SPD2 with the synthetic log-linear timing.
    pub fn spd2() -> Self {
        Self {
            id: "SPD2".into(),
            dark_count_rate_hz: 532.0,
            deadtime_ns: 4360.0,
            peak_efficiency: 0.127,
            ..Self::spd1()
        }
    }

    /// Builds the model; relative table paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>, field: &str) -> Result<DetectorModel> {
        let prefix = |e: Error| match e {
            Error::Config { path, message } => Error::Config {
                path: format!("{field}.{path}"),
                message,
            },
            Error::Calibration(m) => Error::Config {
                path: field.to_string(),
                message: m,
            },
            other => other,
        };
        let config = DetectorConfig::new(
            self.id.clone(),
            self.gate_frequency_hz,
            self.dark_count_rate_hz,
            self.deadtime_ns * NS,
            self.peak_efficiency,
        )
        .map_err(prefix)?
        .with_latency(self.latency_ns * NS);
        let resolve = |p: &Path| match base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        };
        let builtin = |name: &str, what: &str| {
            Spd::from_name(name).ok_or_else(|| Error::config(format!("{field}.{what}.name"), "expected spd1 or spd2"))
        };
        let peak = self.peak_efficiency;
        let mut profile = GateEfficiencyProfile::constant(config.gate_period(), peak).map_err(prefix)?;
        let surface = match &self.surface {
            SurfaceSpec::Linear => SuperlinearitySurface::linear(peak),
            SurfaceSpec::PowerLaw { entries, mu_min, mu_max } => {
                let entries = entries
                    .iter()
                    .map(|e| PowerLawEntry {
                        trigger_shift: e.trigger_shift_ns * NS,
                        c: e.c,
                        k: e.k,
                    })
                    .collect();
                SuperlinearitySurface::PowerLaw(
                    PowerLawSurface::new(entries, mu_min.unwrap_or(0.0), mu_max.unwrap_or(1e12)).map_err(prefix)?,
                )
            }
            SurfaceSpec::ClickProbabilities { p_f, p_h, energy } => SuperlinearitySurface::PowerLaw(
                PowerLawSurface::from_click_probabilities(*p_f, *p_h, *energy).map_err(prefix)?,
            ),
            SurfaceSpec::Table { path } => {
                SuperlinearitySurface::Table(EfficiencyTable::from_csv_path(&resolve(path)).map_err(prefix)?)
            }
            SurfaceSpec::Builtin { name } => {
                let spd = builtin(name, "surface")?;
                profile = builtin_model(spd).profile;
                SuperlinearitySurface::Table(builtin_surface(spd).clone())
            }
        };
        let timing = match &self.energy_time {
            EnergyTimeSpec::LogLinear {
                slope_ns_per_decade,
                reference_mu,
                reference_shift_ns,
                max_mu,
                fwhm_at_reference_ns,
                fwhm_slope_ns_per_decade,
                fwhm_floor_ns,
            } => {
                let m = LogLinearTiming {
                    slope: slope_ns_per_decade * NS,
                    reference_mu: *reference_mu,
                    reference_shift: reference_shift_ns * NS,
                    max_mu: *max_mu,
                    fwhm_at_reference: fwhm_at_reference_ns * NS,
                    fwhm_slope: fwhm_slope_ns_per_decade * NS,
                    fwhm_floor: fwhm_floor_ns * NS,
                };
                m.validate().map_err(prefix)?;
                EnergyTimeModel::LogLinear(m)
            }
            EnergyTimeSpec::Table { path } => {
                EnergyTimeModel::Table(EnergyTimeTable::from_csv_path(&resolve(path)).map_err(prefix)?)
            }
            EnergyTimeSpec::Builtin { name } => {
                EnergyTimeModel::Table(builtin_energy_time(builtin(name, "energy_time")?).clone())
            }
        };
        let model = DetectorModel {
            config,
            profile,
            surface,
            timing,
            p_delay: self.p_delay,
        };
        model.validate().map_err(prefix)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoincidentClickConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_window")]
    pub window_ns: f64,
}

fn default_window() -> f64 {
    2.5
}

impl Default for CoincidentClickConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            window_ns: default_window(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostDeadtimeConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_k")]
    pub slots: u64,
}

fn default_k() -> u64 {
    1
}

impl Default for PostDeadtimeConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            slots: default_k(),
        }
    }
}

/// Countermeasure toggles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountermeasureConfig {
    #[serde(default)]
    pub coincident_click: CoincidentClickConfig,
    #[serde(default)]
    pub post_deadtime: PostDeadtimeConfig,
}

/// Calibration scan: instead of Alice, every `spacing_slots` slots one pulse
/// of a grid point `(trigger shift, mu)` goes straight to one detector,
/// `pulses_per_point` times per point, cycling through the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub trigger_shifts_ns: Vec<f64>,
    pub mus: Vec<f64>,
    pub pulses_per_point: u64,
    #[serde(default)]
    pub spacing_slots: Option<u64>,
    #[serde(default)]
    pub detector: usize,
}

/// Validated, resolved session inputs.
#[derive(Debug, Clone)]
pub struct Session {
    pub config: SessionConfig,
    pub models: [DetectorModel; 2],
    pub timeline: BitSlotTimeline,
    pub k_dead: u64,
}

impl SessionConfig {
    /// Parses JSON, reporting the path of the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    /// Reads a config file; table paths inside it resolve against its
    /// directory.
    pub fn from_path(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok((Self::from_json_str(&text)?, path.parent().map(Path::to_path_buf)))
    }

    /// Validates everything and builds the detector models.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Session> {
        if self.slots == 0 {
            return Err(Error::config("slots", "must be positive"));
        }
        if self.detectors.len() != 2 {
            return Err(Error::config("detectors", "exactly two detectors required"));
        }
        let p = &self.protocol;
        if !(p.mu >= 0.0 && p.mu.is_finite()) {
            return Err(Error::config("protocol.mu", "must be non-negative"));
        }
        p.bob().validate().map_err(|_| Error::config("protocol.extinction_db", "must be positive or null"))?;
        let models = [
            self.detectors[0].build(base_dir, "detectors[0]")?,
            self.detectors[1].build(base_dir, "detectors[1]")?,
        ];
        let gate_period = models[0].config.gate_period();
        if (models[1].config.gate_period() - gate_period).abs() > 1e-9 * gate_period {
            return Err(Error::config("detectors[1].gate_frequency_hz", "both detectors must share the gate frequency"));
        }
        let expected = gate_period * p.gates_per_slot as f64 / NS;
        if p.gates_per_slot == 0 || (p.slot_period_ns - expected).abs() > 1e-9 * expected {
            return Err(Error::config(
                "protocol.slot_period_ns",
                format!("must equal gates_per_slot x gate period = {expected} ns"),
            ));
        }
        let offsets = DeviceOffsets {
            pm: p.offsets_ns.pm * NS,
            d0: p.offsets_ns.d0 * NS,
            d1: p.offsets_ns.d1 * NS,
        };
        let timeline = BitSlotTimeline::new(gate_period, p.gates_per_slot, offsets)
            .map_err(|e| Error::config("protocol.offsets_ns", e.to_string()))?;
        if !p.alice_phase_ns.is_finite() {
            return Err(Error::config("protocol.alice_phase_ns", "must be finite"));
        }
        let k_dead = p.simultaneous_deadtime_slots.unwrap_or_else(|| {
            let tau = models[0].config.deadtime().max(models[1].config.deadtime());
            (tau / timeline.slot_period() - 1e-9).ceil().max(0.0) as u64
        });
        let cm = &self.countermeasures;
        if cm.coincident_click.enabled && !(cm.coincident_click.window_ns > 0.0) {
            return Err(Error::config("countermeasures.coincident_click.window_ns", "must be positive when enabled"));
        }
        if cm.post_deadtime.enabled && cm.post_deadtime.slots == 0 {
            return Err(Error::config("countermeasures.post_deadtime.slots", "must be at least 1 when enabled"));
        }
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        if let Some(probe) = &self.probe {
            if self.attack.is_some() {
                return Err(Error::config("probe", "cannot be combined with an attack"));
            }
            if probe.trigger_shifts_ns.is_empty() || probe.mus.is_empty() {
                return Err(Error::config("probe", "needs at least one trigger shift and one mu"));
            }
            if probe.mus.iter().any(|m| !(*m > 0.0)) {
                return Err(Error::config("probe.mus", "must be positive"));
            }
            if probe.pulses_per_point == 0 {
                return Err(Error::config("probe.pulses_per_point", "must be positive"));
            }
            if probe.detector > 1 {
                return Err(Error::config("probe.detector", "must be 0 or 1"));
            }
        }
        let session = Session {
            config: self.clone(),
            models,
            timeline,
            k_dead,
        };
        super::session::check_attack(&session)?;
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = SessionConfig::from_json_str(r#"{"slots": 10}"#).unwrap();
        assert_eq!(c.protocol.slot_period_ns, 16.0);
        let s = c.resolve(None).unwrap();
        assert_eq!(s.k_dead, 273);
        assert_eq!(s.models[1].config.id(), "SPD2");
    }

    #[test]
    fn errors_name_the_field() {
        let e = SessionConfig::from_json_str(r#"{"slots": 10, "protocol": {"mu": "x"}}"#).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "protocol.mu"), "{e}");
        let e = SessionConfig::from_json_str(r#"{"slots": 10, "protocol": {"slot_period_ns": 15}}"#)
            .unwrap()
            .resolve(None)
            .unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "protocol.slot_period_ns"), "{e}");
        let e = SessionConfig::from_json_str(r#"{"slots": 10, "detectors": [{"peak_efficiency": 2}, {}]}"#)
            .unwrap()
            .resolve(None)
            .unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path.starts_with("detectors[0]")), "{e}");
        assert!(SessionConfig::from_json_str(r#"{"slots": 10, "bogus": 1}"#).is_err());
        assert!(SessionConfig::from_json_str(r#"{"slots": 0}"#).unwrap().resolve(None).is_err());
    }

    #[test]
    fn surface_kinds_parse() {
        let c = SessionConfig::from_json_str(
            r#"{"slots": 1, "detectors": [
                {"surface": {"kind": "click_probabilities", "p_f": 0.04, "p_h": 0.01, "energy": 10}},
                {"surface": {"kind": "builtin", "name": "spd2"}, "energy_time": {"kind": "builtin", "name": "spd2"}}
            ]}"#,
        )
        .unwrap();
        let s = c.resolve(None).unwrap();
        assert!((s.models[0].click_probability(0.0, 10.0) - 0.04).abs() < 1e-12);
        assert!((s.models[0].click_probability(0.0, 5.0) - 0.01).abs() < 1e-12);
        assert!(matches!(s.models[1].timing, EnergyTimeModel::Table(_)));
    }
}
