//! Rectangular (trigger shift, mean photon number) grid with bilinear
//! interpolation in (t, ln mu).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grid {
    pub(crate) shifts: Vec<f64>,
    pub(crate) mus: Vec<f64>,
    ln_mus: Vec<f64>,
}

/// Interpolation stencil: up to four (flat index, weight) pairs.
pub(crate) type Stencil = [(usize, f64); 4];

impl Grid {
    pub(crate) fn new(shifts: Vec<f64>, mus: Vec<f64>) -> Result<Self> {
        if shifts.is_empty() || mus.is_empty() {
            return Err(Error::Calibration("grid axes must be non-empty".into()));
        }
        if !strictly_increasing(&shifts) || !strictly_increasing(&mus) {
            return Err(Error::Calibration("grid axes must be strictly increasing".into()));
        }
        if mus[0] <= 0.0 {
            return Err(Error::Calibration("mean photon numbers on a grid must be positive".into()));
        }
        let ln_mus = mus.iter().map(|m| m.ln()).collect();
        Ok(Self { shifts, mus, ln_mus })
    }

    /// Collects scattered `(t, mu)` keys into axes, checking that every
    /// combination appears exactly once. Returns the axes and, for each input
    /// row, its flat index.
    pub(crate) fn from_points(points: &[(f64, f64)]) -> Result<(Self, Vec<usize>)> {
        let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut ms: Vec<f64> = points.iter().map(|p| p.1).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ms.sort_by(f64::total_cmp);
        ms.dedup();
        let grid = Self::new(ts, ms)?;
        let t_index: BTreeMap<u64, usize> =
            grid.shifts.iter().enumerate().map(|(i, t)| (t.to_bits(), i)).collect();
        let m_index: BTreeMap<u64, usize> =
            grid.mus.iter().enumerate().map(|(i, m)| (m.to_bits(), i)).collect();
        let mut seen = vec![false; grid.len()];
        let mut flat = Vec::with_capacity(points.len());
        for &(t, m) in points {
            let k = t_index[&t.to_bits()] * grid.mus.len() + m_index[&m.to_bits()];
            if seen[k] {
                return Err(Error::Calibration(format!("duplicate grid point (t={t}, mu={m})")));
            }
            seen[k] = true;
            flat.push(k);
        }
        if flat.len() != grid.len() {
            return Err(Error::Calibration(format!(
                "incomplete grid: {} points for {} x {} axes",
                flat.len(),
                grid.shifts.len(),
                grid.mus.len()
            )));
        }
        Ok((grid, flat))
    }

    pub(crate) fn len(&self) -> usize {
        self.shifts.len() * self.mus.len()
    }

    pub(crate) fn index(&self, ti: usize, mi: usize) -> usize {
        ti * self.mus.len() + mi
    }

    pub(crate) fn t_range(&self) -> (f64, f64) {
        (self.shifts[0], *self.shifts.last().unwrap())
    }

    pub(crate) fn mu_range(&self) -> (f64, f64) {
        (self.mus[0], *self.mus.last().unwrap())
    }

    pub(crate) fn check(&self, t: f64, mu: f64) -> Result<()> {
        let (t0, t1) = self.t_range();
        if !(t0..=t1).contains(&t) {
            return Err(Error::out_of_range("trigger shift", t, t0, t1));
        }
        let (m0, m1) = self.mu_range();
        if !(m0..=m1).contains(&mu) {
            return Err(Error::out_of_range("mean photon number", mu, m0, m1));
        }
        Ok(())
    }

    pub(crate) fn clamp(&self, t: f64, mu: f64) -> (f64, f64) {
        let (t0, t1) = self.t_range();
        let (m0, m1) = self.mu_range();
        (t.clamp(t0, t1), mu.clamp(m0, m1))
    }

    /// Stencil for an in-range query. Exact grid nodes get a single weight of
    /// one, so the stored value is returned unchanged.
    pub(crate) fn stencil(&self, t: f64, mu: f64) -> Stencil {
        let (ti, tw) = bracket(&self.shifts, t);
        let (mi, mw) = bracket(&self.ln_mus, mu.ln());
        let ti1 = (ti + 1).min(self.shifts.len() - 1);
        let mi1 = (mi + 1).min(self.mus.len() - 1);
        [
            (self.index(ti, mi), (1.0 - tw) * (1.0 - mw)),
            (self.index(ti, mi1), (1.0 - tw) * mw),
            (self.index(ti1, mi), tw * (1.0 - mw)),
            (self.index(ti1, mi1), tw * mw),
        ]
    }

    pub(crate) fn interpolate(&self, values: &[f64], t: f64, mu: f64) -> f64 {
        self.stencil(t, mu)
            .iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|&(k, w)| w * values[k])
            .sum()
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

/// Lower bracket index and fractional weight of `x` on a sorted axis.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    if axis.len() == 1 {
        return (0, 0.0);
    }
    let hi = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1);
    let lo = hi - 1;
    if x <= axis[lo] {
        return (lo, 0.0);
    }
    if x >= axis[hi] {
        return (hi, 0.0);
    }
    (lo, (x - axis[lo]) / (axis[hi] - axis[lo]))
}
