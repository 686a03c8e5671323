use crate::error::{Error, Result};

/// Periodic single-photon efficiency profile `eta(t) = eta(t + T)` of a gated
/// detector, interpolated linearly between samples with periodic wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct GateEfficiencyProfile {
    period: f64,
    times: Vec<f64>,
    etas: Vec<f64>,
}

impl GateEfficiencyProfile {
    pub fn new(period: f64, samples: &[(f64, f64)]) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Calibration("gate period must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Calibration("gate profile needs at least one sample".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for &(t, eta) in samples {
            if !(0.0..period).contains(&t) {
                return Err(Error::Calibration(format!("profile sample time {t} outside [0, {period})")));
            }
            if t <= prev {
                return Err(Error::Calibration("profile sample times must be strictly increasing".into()));
            }
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Calibration(format!("profile efficiency {eta} outside [0, 1]")));
            }
            prev = t;
        }
        Ok(Self {
            period,
            times: samples.iter().map(|s| s.0).collect(),
            etas: samples.iter().map(|s| s.1).collect(),
        })
    }

    pub fn constant(period: f64, eta: f64) -> Result<Self> {
        Self::new(period, &[(0.0, eta)])
    }

    /// Raised-cosine gate: `floor + (peak - floor) * ((1 + cos(2 pi t / T)) / 2)^sharpness`,
    /// sampled at `n` points, maximum at `t = 0`.
    pub fn sinusoidal(period: f64, peak: f64, floor: f64, sharpness: f64, n: usize) -> Result<Self> {
        let samples: Vec<(f64, f64)> = (0..n.max(1))
            .map(|i| {
                let t = period * i as f64 / n.max(1) as f64;
                let c = 0.5 * (1.0 + (std::f64::consts::TAU * t / period).cos());
                (t, floor + (peak - floor) * c.powf(sharpness))
            })
            .collect();
        Self::new(period, &samples)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.etas.iter().copied())
    }

    pub fn peak(&self) -> f64 {
        self.etas.iter().copied().fold(0.0, f64::max)
    }

    /// `eta(t)` for any real `t`.
    pub fn efficiency(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 1 {
            return self.etas[0];
        }
        let mut x = t.rem_euclid(self.period);
        if x >= self.period {
            x = 0.0;
        }
        // Index of the last sample at or before x; wrap to the last sample
        // when x precedes the first one.
        let idx = self.times.partition_point(|&s| s <= x);
        let (t0, e0, t1, e1) = if idx == 0 {
            (self.times[n - 1] - self.period, self.etas[n - 1], self.times[0], self.etas[0])
        } else if idx == n {
            (self.times[n - 1], self.etas[n - 1], self.times[0] + self.period, self.etas[0])
        } else {
            (self.times[idx - 1], self.etas[idx - 1], self.times[idx], self.etas[idx])
        };
        let w = (x - t0) / (t1 - t0);
        (e0 + w * (e1 - e0)).clamp(0.0, 1.0)
    }
}
