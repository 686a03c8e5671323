use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::csvio;
use super::grid::Grid;
use super::surface::fmt;
use super::FWHM_PER_SIGMA;
use crate::error::{Error, Result};
use crate::NS;

/// Mean and jitter of the click-time shift distribution. Shifts are relative
/// to the detector's nominal single-photon response; negative means earlier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickTiming {
    pub mean_shift: f64,
    pub fwhm: f64,
}

impl ClickTiming {
    /// Standard deviation of the Gaussian with this FWHM.
    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }
}

/// Click-time response to pulse energy: brighter pulses click earlier and
/// with less jitter.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyTimeModel {
    Table(EnergyTimeTable),
    LogLinear(LogLinearTiming),
}

impl EnergyTimeModel {
    pub fn timing(&self, t: f64, mu: f64) -> Result<ClickTiming> {
        match self {
            EnergyTimeModel::Table(m) => m.timing(t, mu),
            EnergyTimeModel::LogLinear(m) => m.timing(mu),
        }
    }

    /// Timing with the query clamped onto the validity range.
    pub fn timing_clamped(&self, t: f64, mu: f64) -> ClickTiming {
        match self {
            EnergyTimeModel::Table(m) => {
                let (t, mu) = m.grid.clamp(t, mu);
                m.interp(t, mu)
            }
            EnergyTimeModel::LogLinear(m) => m.eval(mu.clamp(0.0, m.max_mu)),
        }
    }

    /// Largest advance of the mean click time over the validity range.
    pub fn max_advance(&self) -> f64 {
        match self {
            EnergyTimeModel::Table(m) => m.shift.iter().copied().fold(0.0, |a, s| a.max(-s)),
            EnergyTimeModel::LogLinear(m) => (-m.eval(m.max_mu).mean_shift).max(0.0),
        }
    }

    /// Largest jitter FWHM anywhere in the model.
    pub fn max_fwhm(&self) -> f64 {
        match self {
            EnergyTimeModel::Table(m) => m.fwhm.iter().copied().fold(0.0, f64::max),
            EnergyTimeModel::LogLinear(m) => m.fwhm_at_reference.max(m.fwhm_floor),
        }
    }
}

/// Tabulated `(t, mu) -> (mean shift, FWHM)`; bilinear in `(t, ln mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTimeTable {
    grid: Grid,
    shift: Vec<f64>,
    fwhm: Vec<f64>,
}

impl EnergyTimeTable {
    /// Row-major inputs, one row per trigger shift. Rejects tables whose mean
    /// shift or FWHM increases with `mu`.
    pub fn new(trigger_shifts: Vec<f64>, mus: Vec<f64>, shift: Vec<f64>, fwhm: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(trigger_shifts, mus)?;
        if shift.len() != grid.len() || fwhm.len() != grid.len() {
            return Err(Error::Calibration("energy-time table size does not match its axes".into()));
        }
        if fwhm.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Calibration("jitter FWHM must be positive".into()));
        }
        let n = grid.mus.len();
        for (ti, t) in grid.shifts.iter().enumerate() {
            let row = ti * n..(ti + 1) * n;
            if shift[row.clone()].windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::Calibration(format!(
                    "mean click shift increases with mu at trigger shift {} ns",
                    t / NS
                )));
            }
            if fwhm[row].windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::Calibration(format!("FWHM increases with mu at trigger shift {} ns", t / NS)));
            }
        }
        Ok(Self { grid, shift, fwhm })
    }

    pub fn trigger_shifts(&self) -> &[f64] {
        &self.grid.shifts
    }

    pub fn mus(&self) -> &[f64] {
        &self.grid.mus
    }

    /// `(mean shift, fwhm)` rows for trigger-shift index `ti`.
    pub fn row(&self, ti: usize) -> (&[f64], &[f64]) {
        let n = self.grid.mus.len();
        (&self.shift[ti * n..(ti + 1) * n], &self.fwhm[ti * n..(ti + 1) * n])
    }

    fn interp(&self, t: f64, mu: f64) -> ClickTiming {
        ClickTiming {
            mean_shift: self.grid.interpolate(&self.shift, t, mu),
            fwhm: self.grid.interpolate(&self.fwhm, t, mu),
        }
    }

    pub fn timing(&self, t: f64, mu: f64) -> Result<ClickTiming> {
        self.grid.check(t, mu)?;
        Ok(self.interp(t, mu))
    }

    /// Reads `trigger_shift_ns, mu, dt_ns, fwhm_ns`.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let rows = csvio::read_numeric(reader, source, &["trigger_shift_ns", "mu", "dt_ns", "fwhm_ns"])?;
        let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r[0] * NS, r[1])).collect();
        let (grid, flat) = Grid::from_points(&keys)?;
        let mut shift = vec![0.0; grid.len()];
        let mut fwhm = vec![0.0; grid.len()];
        for (row, k) in rows.iter().zip(flat) {
            shift[k] = row[2] * NS;
            fwhm[k] = row[3] * NS;
        }
        Self::new(grid.shifts, grid.mus, shift, fwhm)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_reader(csvio::open(path)?, &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["trigger_shift_ns", "mu", "dt_ns", "fwhm_ns"])?;
        for (ti, t) in self.grid.shifts.iter().enumerate() {
            for (mi, mu) in self.grid.mus.iter().enumerate() {
                let k = self.grid.index(ti, mi);
                w.write_record([fmt(t / NS), fmt(*mu), fmt(self.shift[k] / NS), fmt(self.fwhm[k] / NS)])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Synthetic timing: flat up to `reference_mu`, then the mean shift falls by
/// `slope` per decade of `mu` and the FWHM by `fwhm_slope` per decade down to
/// `fwhm_floor`. Independent of trigger shift. Valid for `mu` in `[0, max_mu]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogLinearTiming {
    /// Seconds per decade.
    pub slope: f64,
    pub reference_mu: f64,
    /// Seconds.
    pub reference_shift: f64,
    pub max_mu: f64,
    /// Seconds.
    pub fwhm_at_reference: f64,
    /// Seconds per decade.
    pub fwhm_slope: f64,
    /// Seconds.
    pub fwhm_floor: f64,
}

impl Default for LogLinearTiming {
    /// 0.4 ns per decade from 100 photons per pulse, up to 102 dB above one
    /// photon per pulse.
    fn default() -> Self {
        Self {
            slope: 0.4 * NS,
            reference_mu: 100.0,
            reference_shift: 0.0,
            max_mu: 10f64.powf(10.2),
            fwhm_at_reference: 0.5 * NS,
            fwhm_slope: 0.1 * NS,
            fwhm_floor: 0.08 * NS,
        }
    }
}

impl LogLinearTiming {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope >= 0.0 && self.fwhm_slope >= 0.0) {
            return Err(Error::Calibration("log-linear slopes must be non-negative".into()));
        }
        if !(self.reference_mu > 0.0 && self.max_mu > self.reference_mu) {
            return Err(Error::Calibration("log-linear needs 0 < reference_mu < max_mu".into()));
        }
        if !(self.fwhm_floor > 0.0 && self.fwhm_at_reference >= self.fwhm_floor) {
            return Err(Error::Calibration("log-linear needs 0 < fwhm_floor <= fwhm_at_reference".into()));
        }
        Ok(())
    }

    fn eval(&self, mu: f64) -> ClickTiming {
        let decades = (mu.max(self.reference_mu) / self.reference_mu).log10();
        ClickTiming {
            mean_shift: self.reference_shift - self.slope * decades,
            fwhm: (self.fwhm_at_reference - self.fwhm_slope * decades).max(self.fwhm_floor),
        }
    }

    pub fn timing(&self, mu: f64) -> Result<ClickTiming> {
        if !(0.0..=self.max_mu).contains(&mu) {
            return Err(Error::out_of_range("mean photon number", mu, 0.0, self.max_mu));
        }
        Ok(self.eval(mu))
    }
}
