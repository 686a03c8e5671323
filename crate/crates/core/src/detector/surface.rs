use std::io::{Read, Write};
use std::path::Path;

use super::csvio;
use super::grid::Grid;
use crate::error::{Error, Result};
use crate::NS;

/// Efficiency as a function of trigger shift and mean photon number,
/// `eta(t, mu)`. A detector with no superlinearity has `eta` independent of
/// `mu`.
#[derive(Debug, Clone, PartialEq)]
pub enum SuperlinearitySurface {
    Table(EfficiencyTable),
    PowerLaw(PowerLawSurface),
}

impl SuperlinearitySurface {
    /// `mu`-independent surface with efficiency `eta` everywhere.
    pub fn linear(eta: f64) -> Self {
        SuperlinearitySurface::PowerLaw(PowerLawSurface::uniform(eta, 0.0))
    }

    pub fn efficiency(&self, t: f64, mu: f64) -> Result<f64> {
        match self {
            SuperlinearitySurface::Table(s) => s.efficiency(t, mu),
            SuperlinearitySurface::PowerLaw(s) => s.efficiency(t, mu),
        }
    }

    /// Same as [`efficiency`](Self::efficiency) but with the query clamped
    /// onto the validity range first.
    pub fn efficiency_clamped(&self, t: f64, mu: f64) -> f64 {
        match self {
            SuperlinearitySurface::Table(s) => {
                let (t, mu) = s.grid.clamp(t, mu);
                s.grid.interpolate(&s.eta, t, mu).clamp(0.0, 1.0)
            }
            SuperlinearitySurface::PowerLaw(s) => {
                let (t, mu) = s.clamp(t, mu);
                s.eval(t, mu)
            }
        }
    }
}

/// Tabulated `eta(t, mu)`; bilinear in `(t, ln mu)` between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyTable {
    grid: Grid,
    eta: Vec<f64>,
}

impl EfficiencyTable {
    /// `eta` is row-major: one row of `mus.len()` values per trigger shift.
    pub fn new(trigger_shifts: Vec<f64>, mus: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(trigger_shifts, mus)?;
        if eta.len() != grid.len() {
            return Err(Error::Calibration(format!("expected {} efficiencies, got {}", grid.len(), eta.len())));
        }
        if let Some(bad) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Calibration(format!("efficiency {bad} outside [0, 1]")));
        }
        Ok(Self { grid, eta })
    }

    pub fn trigger_shifts(&self) -> &[f64] {
        &self.grid.shifts
    }

    pub fn mus(&self) -> &[f64] {
        &self.grid.mus
    }

    /// Stored row for trigger-shift index `ti`.
    pub fn row(&self, ti: usize) -> &[f64] {
        let n = self.grid.mus.len();
        &self.eta[ti * n..(ti + 1) * n]
    }

    pub fn efficiency(&self, t: f64, mu: f64) -> Result<f64> {
        self.grid.check(t, mu)?;
        Ok(self.grid.interpolate(&self.eta, t, mu).clamp(0.0, 1.0))
    }

    /// Reads `trigger_shift_ns, mu, eta`.
    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let rows = csvio::read_numeric(reader, source, &["trigger_shift_ns", "mu", "eta"])?;
        let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r[0] * NS, r[1])).collect();
        let (grid, flat) = Grid::from_points(&keys)?;
        let mut eta = vec![0.0; grid.len()];
        for (row, k) in rows.iter().zip(flat) {
            eta[k] = row[2];
        }
        Self::new(grid.shifts, grid.mus, eta)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_reader(csvio::open(path)?, &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["trigger_shift_ns", "mu", "eta"])?;
        for (ti, t) in self.grid.shifts.iter().enumerate() {
            for (mi, mu) in self.grid.mus.iter().enumerate() {
                let e = self.eta[self.grid.index(ti, mi)];
                w.write_record([fmt(t / NS), fmt(*mu), fmt(e)])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    // Shortest representation that round-trips exactly.
    format!("{v:?}")
}

/// One trigger shift of a power-law surface, `eta = c * mu^k`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerLawEntry {
    /// Seconds.
    pub trigger_shift: f64,
    pub c: f64,
    pub k: f64,
}

/// `eta(t, mu) = c(t) mu^k(t)`, with `c` and `k` interpolated linearly
/// between listed trigger shifts. A single entry applies to every `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawSurface {
    entries: Vec<PowerLawEntry>,
    mu_min: f64,
    mu_max: f64,
}

impl PowerLawSurface {
    pub fn new(mut entries: Vec<PowerLawEntry>, mu_min: f64, mu_max: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Calibration("power-law surface needs at least one entry".into()));
        }
        entries.sort_by(|a, b| a.trigger_shift.total_cmp(&b.trigger_shift));
        if entries.windows(2).any(|w| w[0].trigger_shift >= w[1].trigger_shift) {
            return Err(Error::Calibration("duplicate trigger shift in power-law surface".into()));
        }
        if !(mu_min >= 0.0 && mu_max > mu_min) {
            return Err(Error::Calibration("power-law mu range must satisfy 0 <= min < max".into()));
        }
        if entries.iter().any(|e| !(e.c >= 0.0 && e.c.is_finite() && e.k.is_finite())) {
            return Err(Error::Calibration("power-law coefficients must be finite, c >= 0".into()));
        }
        Ok(Self {
            entries,
            mu_min,
            mu_max,
        })
    }

    /// Time-independent power law valid for `mu` in `[0, 1e12]`.
    pub fn uniform(c: f64, k: f64) -> Self {
        Self::new(vec![PowerLawEntry { trigger_shift: 0.0, c, k }], 0.0, 1e12).expect("valid power law")
    }

    /// Uniform power law with click probability `p_f` at `energy` and `p_h`
    /// at `energy / 2`: with `a = -ln(1 - p)`, `k = log2(a_f / a_h) - 1` and
    /// `c = a_f / energy^(1 + k)`.
    pub fn from_click_probabilities(p_f: f64, p_h: f64, energy: f64) -> Result<Self> {
        if !(0.0 < p_h && p_h < 1.0 && 0.0 < p_f && p_f < 1.0) {
            return Err(Error::config("p_f/p_h", "must lie in (0, 1)"));
        }
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::config("energy", "must be positive"));
        }
        let (a_f, a_h) = (-(-p_f).ln_1p(), -(-p_h).ln_1p());
        let k = (a_f / a_h).log2() - 1.0;
        let c = a_f / energy.powf(1.0 + k);
        if c * energy.powf(k) > 1.0 || c * (energy / 2.0).powf(k) > 1.0 {
            return Err(Error::config("p_f/p_h", "implied efficiency exceeds 1 at this energy"));
        }
        Self::new(vec![PowerLawEntry { trigger_shift: 0.0, c, k }], 0.0, 1e12)
    }

    pub fn entries(&self) -> &[PowerLawEntry] {
        &self.entries
    }

    pub fn mu_range(&self) -> (f64, f64) {
        (self.mu_min, self.mu_max)
    }

    fn t_range(&self) -> Option<(f64, f64)> {
        (self.entries.len() > 1)
            .then(|| (self.entries[0].trigger_shift, self.entries.last().unwrap().trigger_shift))
    }

    fn clamp(&self, t: f64, mu: f64) -> (f64, f64) {
        let t = match self.t_range() {
            Some((a, b)) => t.clamp(a, b),
            None => t,
        };
        (t, mu.clamp(self.mu_min, self.mu_max))
    }

    fn coefficients(&self, t: f64) -> (f64, f64) {
        if self.entries.len() == 1 {
            let e = self.entries[0];
            return (e.c, e.k);
        }
        let hi = self
            .entries
            .partition_point(|e| e.trigger_shift <= t)
            .clamp(1, self.entries.len() - 1);
        let (a, b) = (self.entries[hi - 1], self.entries[hi]);
        let w = ((t - a.trigger_shift) / (b.trigger_shift - a.trigger_shift)).clamp(0.0, 1.0);
        (a.c + w * (b.c - a.c), a.k + w * (b.k - a.k))
    }

    fn eval(&self, t: f64, mu: f64) -> f64 {
        let (c, k) = self.coefficients(t);
        if k == 0.0 {
            return c.clamp(0.0, 1.0);
        }
        let v = c * mu.powf(k);
        if v.is_nan() {
            0.0
        } else {
            v.clamp(0.0, 1.0)
        }
    }

    pub fn efficiency(&self, t: f64, mu: f64) -> Result<f64> {
        if let Some((a, b)) = self.t_range() {
            if !(a..=b).contains(&t) {
                return Err(Error::out_of_range("trigger shift", t, a, b));
            }
        }
        if !(self.mu_min..=self.mu_max).contains(&mu) {
            return Err(Error::out_of_range("mean photon number", mu, self.mu_min, self.mu_max));
        }
        Ok(self.eval(t, mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_power_law_is_mu_independent() {
        let s = SuperlinearitySurface::linear(0.1);
        for mu in [0.0, 1e-3, 1.0, 1e6] {
            assert_eq!(s.efficiency(0.0, mu).unwrap(), 0.1);
        }
    }

    #[test]
    fn power_law_doubling_ratio() {
        let s = PowerLawSurface::uniform(1e-3, 0.86);
        let r = s.efficiency(0.0, 20.0).unwrap() / s.efficiency(0.0, 10.0).unwrap();
        assert!((r - 2f64.powf(0.86)).abs() < 1e-12);
        assert!((r - 1.8).abs() < 0.02);
    }

    #[test]
    fn power_law_interpolates_in_t_and_rejects_out_of_range() {
        let s = PowerLawSurface::new(
            vec![
                PowerLawEntry { trigger_shift: 0.0, c: 0.1, k: 0.0 },
                PowerLawEntry { trigger_shift: 1.0, c: 0.3, k: 0.0 },
            ],
            0.0,
            100.0,
        )
        .unwrap();
        assert!((s.efficiency(0.5, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(s.efficiency(1.5, 1.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(s.efficiency(0.5, 200.0), Err(Error::OutOfRange { .. })));
    }

    fn table() -> EfficiencyTable {
        EfficiencyTable::new(vec![0.0, 1.0], vec![1.0, 10.0, 100.0], vec![0.1, 0.2, 0.3, 0.01, 0.02, 0.03]).unwrap()
    }

    #[test]
    fn table_nodes_are_exact() {
        let t = table();
        assert_eq!(t.efficiency(0.0, 10.0).unwrap(), 0.2);
        assert_eq!(t.efficiency(1.0, 100.0).unwrap(), 0.03);
    }

    #[test]
    fn table_is_bilinear_in_log_mu() {
        let t = table();
        let mid = t.efficiency(0.0, 10f64.sqrt()).unwrap();
        assert!((mid - 0.15).abs() < 1e-12);
        let both = t.efficiency(0.5, 10f64.sqrt()).unwrap();
        assert!((both - 0.5 * (0.15 + 0.015)).abs() < 1e-12);
        assert!(t.efficiency(0.0, 0.5).is_err());
        assert!(t.efficiency(-0.1, 5.0).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let t = table();
        let mut buf = Vec::new();
        // CSV is written in ns; rebuild with ns-valued shifts to compare.
        let t_ns = EfficiencyTable::new(vec![0.0, 1e-9], t.mus().to_vec(), t.eta.clone()).unwrap();
        t_ns.write_csv(&mut buf).unwrap();
        let back = EfficiencyTable::from_csv_reader(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.row(1), t_ns.row(1));
        assert_eq!(back.mus(), t_ns.mus());
    }

    #[test]
    fn csv_errors_name_the_line() {
        let data = "trigger_shift_ns,mu,eta\n0,1,0.1\n0,x,0.2\n";
        let err = EfficiencyTable::from_csv_reader(data.as_bytes(), "f.csv").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let missing = "trigger_shift_ns,mu\n0,1\n";
        assert!(EfficiencyTable::from_csv_reader(missing.as_bytes(), "f.csv").is_err());
    }
}
