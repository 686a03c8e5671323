//! Synthetic calibration tables for the two tested detectors.
//!
//! The measured surfaces are not published as data, so the shipped tables are
//! generated from smooth closed forms tuned to the quoted figures: peak
//! superlinearity factor 0.86 (SPD1) and 0.90 (SPD2) at trigger shift 1.2 ns,
//! and a click-time separation of about 1.9 ns (SPD1) and 1.3 ns (SPD2) for
//! two pulses 7.7 dB apart. The generated CSVs live in `data/` and are
//! rebuilt with `cargo run -p spadlab-core --example gen_calibration`.

use std::f64::consts::{LN_10, PI};
use std::sync::OnceLock;

use crate::detector::{
    DetectorConfig, DetectorModel, EfficiencyTable, EnergyTimeModel, EnergyTimeTable, GateEfficiencyProfile,
    SuperlinearitySurface,
};
use crate::error::{Error, Result};
use crate::NS;

/// Trigger shift at which superlinearity and the click-time step peak.
pub const PEAK_TRIGGER_SHIFT: f64 = 1.2 * NS;
/// Fraction of an intermediate-basis pulse reaching the brighter port, `cos^2(pi/8)`.
pub const BRIGHT_PORT_FRACTION: f64 = 0.853_553_390_593_273_8;

/// Which of the two tested detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spd {
    Spd1,
    Spd2,
}

impl Spd {
    pub fn name(self) -> &'static str {
        match self {
            Spd::Spd1 => "spd1",
            Spd::Spd2 => "spd2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "spd1" => Some(Spd::Spd1),
            "spd2" => Some(Spd::Spd2),
            _ => None,
        }
    }

    pub fn config(self) -> DetectorConfig {
        match self {
            Spd::Spd1 => DetectorConfig::spd1(),
            Spd::Spd2 => DetectorConfig::spd2(),
        }
    }

    /// Generator parameters for this detector.
    pub fn params(self) -> CalibrationParams {
        match self {
            Spd::Spd1 => CalibrationParams {
                peak_efficiency: 0.098,
                max_factor: 0.86,
                step_separation: 1.9 * NS,
            },
            Spd::Spd2 => CalibrationParams {
                peak_efficiency: 0.127,
                max_factor: 0.90,
                step_separation: 1.3 * NS,
            },
        }
    }
}

/// Targets the generated tables are tuned to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub peak_efficiency: f64,
    /// Largest superlinearity factor on the 3-dB grid.
    pub max_factor: f64,
    /// Best click-time difference between the two ports of an
    /// intermediate-basis pulse, at the peak trigger shift.
    pub step_separation: f64,
}

const GATE_PERIOD: f64 = 3.2 * NS;
const SHIFT_STEP: f64 = 0.4 * NS;
const SHIFT_COUNT: usize = 8;
const EFF_FLOOR: f64 = 1e-4;
/// Width (in `ln mu`) of the superlinear rise.
const RISE_WIDTH: f64 = 3.0;
const DIP_DEPTH: f64 = 0.5;
const DIP_MU: f64 = 1e6;
const DIP_WIDTH: f64 = 1.0;
/// Decade of the click-time step at the peak trigger shift, and its width.
const STEP_DECADE: f64 = 4.0;
const STEP_WIDTH: f64 = 0.15;
const TAIL_SLOPE: f64 = 0.1 * NS;
const FWHM_FLOOR: f64 = 0.08 * NS;
const FWHM_DROP: f64 = 0.52 * NS;

/// Trigger shifts 0, 0.4, ..., 2.8 ns: eight points 400 ps apart.
pub fn trigger_shifts() -> Vec<f64> {
    (0..SHIFT_COUNT).map(|i| i as f64 * SHIFT_STEP).collect()
}

/// `n` energies starting at `start`, 3 dB apart.
pub fn energy_grid(start: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start * 10f64.powf(0.3 * i as f64)).collect()
}

/// Linear-regime gate profile: a raised cosine to the fourth power with a
/// small floor, peaking at trigger shift 0.
pub fn gate_efficiency(peak: f64, t: f64) -> f64 {
    let c = (1.0 + (2.0 * PI * t / GATE_PERIOD).cos()) / 2.0;
    peak * c.powi(4) + EFF_FLOOR
}

fn rise_weight(t: f64) -> f64 {
    let z = (t - PEAK_TRIGGER_SHIFT) / (0.6 * NS);
    0.2 + 0.8 * (-z * z).exp()
}

/// Superlinearity surface on `mu = 0.01 * 10^(0.3 i)`, `i = 0..35`.
pub fn generate_surface(params: CalibrationParams) -> Result<EfficiencyTable> {
    let shifts = trigger_shifts();
    let mus = energy_grid(0.01, 35);
    let h = 0.3 * LN_10;
    // Central difference of w * tanh(x / w) at x = 0 equals w tanh(h/w) / h.
    let amplitude = params.max_factor * h / (RISE_WIDTH * (h / RISE_WIDTH).tanh());
    let x_peak = 10f64.ln();
    let mut eta = Vec::with_capacity(shifts.len() * mus.len());
    for &t in &shifts {
        let base = gate_efficiency(params.peak_efficiency, t).ln();
        let a = amplitude * rise_weight(t);
        let dip = if t > 0.0 && t <= PEAK_TRIGGER_SHIFT + 1e-15 { DIP_DEPTH } else { 0.0 };
        for &mu in &mus {
            let x = mu.ln();
            let rise = a * RISE_WIDTH * ((x - x_peak) / RISE_WIDTH).tanh();
            let d = (x - DIP_MU.ln()) / DIP_WIDTH;
            eta.push((base + rise - dip * (-d * d).exp()).exp().min(1.0));
        }
    }
    EfficiencyTable::new(shifts, mus, eta)
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn energy_time_rows(step: f64) -> Result<EnergyTimeTable> {
    let shifts = trigger_shifts();
    let mus = energy_grid(1.0, 35);
    let mut dt = Vec::new();
    let mut fwhm = Vec::new();
    for &t in &shifts {
        let centre = STEP_DECADE + 0.5 * (t - PEAK_TRIGGER_SHIFT) / NS;
        let u0 = -centre / STEP_WIDTH;
        for &mu in &mus {
            let x = mu.log10();
            let u = (x - centre) / STEP_WIDTH;
            dt.push(-step * (logistic(u) - logistic(u0)) - TAIL_SLOPE * (x - 2.0).max(0.0));
            fwhm.push(FWHM_FLOOR + FWHM_DROP * (1.0 - logistic((x - centre) / 0.5)));
        }
    }
    EnergyTimeTable::new(shifts, mus, dt, fwhm)
}

/// Energy-time table on `mu = 10^(0.3 i)`, `i = 0..35`, with the step height
/// tuned so [`best_split`] at the peak trigger shift hits
/// `params.step_separation`.
pub fn generate_energy_time(params: CalibrationParams) -> Result<EnergyTimeTable> {
    let sep = |step: f64| -> Result<f64> {
        let model = EnergyTimeModel::Table(energy_time_rows(step)?);
        Ok(best_split(&model, PEAK_TRIGGER_SHIFT, BRIGHT_PORT_FRACTION, 1.0 - BRIGHT_PORT_FRACTION)?.separation)
    };
    let (mut lo, mut hi) = (0.0, 10.0 * NS);
    if sep(hi)? < params.step_separation {
        return Err(Error::Calibration("click-time separation target unreachable".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if sep(mid)? < params.step_separation {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    energy_time_rows(0.5 * (lo + hi))
}

/// Pulse energy maximizing the click-time gap between the two ports of a
/// split pulse, with the gap's mean click shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTiming {
    pub energy: f64,
    /// Mean shift of the port receiving `bright * energy`.
    pub bright_shift: f64,
    /// Mean shift of the port receiving `dim * energy`.
    pub dim_shift: f64,
    /// `dim_shift - bright_shift`.
    pub separation: f64,
}

/// Scans the energy range on which both port energies are inside the
/// model's validity range.
pub fn best_split(model: &EnergyTimeModel, trigger_shift: f64, bright: f64, dim: f64) -> Result<SplitTiming> {
    if !(bright > dim && dim > 0.0) {
        return Err(Error::config("split", "bright fraction must exceed dim fraction > 0"));
    }
    let (mu_min, mu_max) = match model {
        EnergyTimeModel::Table(t) => (t.mus()[0], *t.mus().last().unwrap()),
        EnergyTimeModel::LogLinear(m) => (1.0, m.max_mu),
    };
    let (e_lo, e_hi) = (mu_min / dim, mu_max / bright);
    if e_lo > e_hi {
        return Err(Error::config("split", "port ratio exceeds the model's energy range"));
    }
    let steps = 4000;
    let mut best: Option<SplitTiming> = None;
    for i in 0..=steps {
        let energy = e_lo * (e_hi / e_lo).powf(i as f64 / steps as f64);
        let b = model.timing(trigger_shift, (bright * energy).min(mu_max))?.mean_shift;
        let d = model.timing(trigger_shift, (dim * energy).max(mu_min))?.mean_shift;
        if best.is_none_or(|s| d - b > s.separation) {
            best = Some(SplitTiming {
                energy,
                bright_shift: b,
                dim_shift: d,
                separation: d - b,
            });
        }
    }
    Ok(best.unwrap())
}

const SPD1_SURFACE: &str = include_str!("../data/spd1_surface.csv");
const SPD1_ENERGY_TIME: &str = include_str!("../data/spd1_energy_time.csv");
const SPD2_SURFACE: &str = include_str!("../data/spd2_surface.csv");
const SPD2_ENERGY_TIME: &str = include_str!("../data/spd2_energy_time.csv");

/// Shipped superlinearity table.
pub fn builtin_surface(spd: Spd) -> &'static EfficiencyTable {
    static S1: OnceLock<EfficiencyTable> = OnceLock::new();
    static S2: OnceLock<EfficiencyTable> = OnceLock::new();
    let (cell, text) = match spd {
        Spd::Spd1 => (&S1, SPD1_SURFACE),
        Spd::Spd2 => (&S2, SPD2_SURFACE),
    };
    cell.get_or_init(|| {
        EfficiencyTable::from_csv_reader(text.as_bytes(), spd.name()).expect("shipped surface table is valid")
    })
}

/// Shipped energy-time table.
pub fn builtin_energy_time(spd: Spd) -> &'static EnergyTimeTable {
    static E1: OnceLock<EnergyTimeTable> = OnceLock::new();
    static E2: OnceLock<EnergyTimeTable> = OnceLock::new();
    let (cell, text) = match spd {
        Spd::Spd1 => (&E1, SPD1_ENERGY_TIME),
        Spd::Spd2 => (&E2, SPD2_ENERGY_TIME),
    };
    cell.get_or_init(|| {
        EnergyTimeTable::from_csv_reader(text.as_bytes(), spd.name()).expect("shipped energy-time table is valid")
    })
}

/// Raw CSV text of the shipped tables, `(surface, energy_time)`.
pub fn builtin_csv(spd: Spd) -> (&'static str, &'static str) {
    match spd {
        Spd::Spd1 => (SPD1_SURFACE, SPD1_ENERGY_TIME),
        Spd::Spd2 => (SPD2_SURFACE, SPD2_ENERGY_TIME),
    }
}

/// Detector model built from the shipped tables and the quoted testbench
/// parameters.
pub fn builtin_model(spd: Spd) -> DetectorModel {
    let config = spd.config();
    let peak = spd.params().peak_efficiency;
    let samples: Vec<(f64, f64)> = (0..32)
        .map(|i| {
            let t = i as f64 * GATE_PERIOD / 32.0;
            (t, gate_efficiency(peak, t).min(1.0))
        })
        .collect();
    let profile = GateEfficiencyProfile::new(config.gate_period(), &samples).expect("valid gate profile");
    DetectorModel {
        config,
        profile,
        surface: SuperlinearitySurface::Table(builtin_surface(spd).clone()),
        timing: EnergyTimeModel::Table(builtin_energy_time(spd).clone()),
        p_delay: 0.0,
    }
}
