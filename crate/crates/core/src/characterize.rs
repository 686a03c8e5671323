//! Certification math for detector superlinearity.
//!
//! Count rates measured in a coincidence window are inverted to an efficiency
//! `eta(t, mu)`; a detector is superlinear when efficiency ever rises with
//! pulse energy at fixed trigger shift, and the log-log slope
//! `S = d ln eta / d ln mu` quantifies by how much.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::NS;

/// Default witness tolerance on `eta` (absolute).
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Default relative plateau tolerance for saturation flags.
pub const DEFAULT_DELTA_SAT: f64 = 1e-3;

/// One measured point of the count-rate scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRateRecord {
    /// Seconds.
    pub trigger_shift: f64,
    pub mu: f64,
    /// Coincidence count rate `R`, hertz.
    pub rate: f64,
    /// Laser repetition rate `f`, hertz.
    pub rep_rate: f64,
    /// Coincidence window `theta`, seconds.
    pub window: f64,
}

impl CountRateRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) {
            return Err(Error::config("rate_hz", "must be non-negative"));
        }
        if !(self.rep_rate > 0.0) {
            return Err(Error::config("f_hz", "must be positive"));
        }
        if !(self.mu > 0.0) {
            return Err(Error::config("mu", "must be positive"));
        }
        if !(self.window > 0.0) {
            return Err(Error::config("theta_ns", "must be positive"));
        }
        Ok(())
    }
}

/// Sidecar metadata of a count-rate scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementMeta {
    pub f_hz: f64,
    pub theta_ns: f64,
    #[serde(rename = "F_hz")]
    pub gate_frequency_hz: f64,
    #[serde(rename = "D_hz")]
    pub dark_count_rate_hz: f64,
}

impl MeasurementMeta {
    /// Testbench of the tested detectors: 1 kHz laser, 13 ns window,
    /// 312.5 MHz gating, SPD1 dark count rate.
    pub fn testbench() -> Self {
        Self {
            f_hz: 1e3,
            theta_ns: 13.0,
            gate_frequency_hz: 312.5e6,
            dark_count_rate_hz: 428.0,
        }
    }

    pub fn dark_probability(&self) -> f64 {
        self.dark_count_rate_hz / self.gate_frequency_hz
    }

    /// Window length in gates, `theta F`; kept as a real number.
    pub fn window_gates(&self) -> f64 {
        self.theta_ns * NS * self.gate_frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("f_hz", self.f_hz),
            ("theta_ns", self.theta_ns),
            ("F_hz", self.gate_frequency_hz),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive and finite"));
            }
        }
        if !(self.dark_count_rate_hz >= 0.0) || self.dark_probability() >= 1.0 {
            return Err(Error::config("D_hz", "must satisfy 0 <= D < F"));
        }
        Ok(())
    }

    pub fn record(&self, trigger_shift: f64, mu: f64, rate: f64) -> CountRateRecord {
        CountRateRecord {
            trigger_shift,
            mu,
            rate,
            rep_rate: self.f_hz,
            window: self.theta_ns * NS,
        }
    }
}

/// Expected coincidence count rate: photon clicks plus dark clicks inside a
/// window of `window_gates` gates (real exponent).
pub fn predicted_click_rate(rep_rate: f64, eta: f64, mu: f64, dark_probability: f64, window_gates: f64) -> f64 {
    let no_photon_click = (-eta * mu).exp();
    let dark_in_window = -(window_gates * (-dark_probability).ln_1p()).exp_m1();
    rep_rate * (1.0 - no_photon_click) + rep_rate * no_photon_click * dark_in_window
}

/// Efficiency recovered from one count-rate point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub eta: f64,
    /// False when dark counts alone exceed the observed rate (`eta < 0`).
    pub valid: bool,
}

/// Inverts [`predicted_click_rate`] for `eta`. Negative results are reported
/// as invalid, never clamped.
pub fn efficiency_from_rate(rec: &CountRateRecord, dark_probability: f64, gate_frequency: f64) -> Result<EtaEstimate> {
    rec.validate()?;
    if rec.rate >= rec.rep_rate {
        return Err(Error::Saturated {
            rate_hz: rec.rate,
            rep_rate_hz: rec.rep_rate,
        });
    }
    let window_gates = rec.window * gate_frequency;
    // ln[(1 - P_D)^(theta F)] - ln(1 - R/f)
    let log_ratio = window_gates * (-dark_probability).ln_1p() - (-rec.rate / rec.rep_rate).ln_1p();
    let eta = log_ratio / rec.mu;
    Ok(EtaEstimate { eta, valid: eta >= 0.0 })
}

/// Central-difference log-log slope at an interior sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorPoint {
    pub index: usize,
    pub mu: f64,
    /// `None` when a neighbour has `eta <= 0` (or is otherwise unusable).
    pub s: Option<f64>,
}

/// `S_i = (ln eta_{i+1} - ln eta_{i-1}) / (ln mu_{i+1} - ln mu_{i-1})` for every
/// interior sample of `(mu, eta)` pairs at fixed trigger shift.
pub fn superlinearity_factor(samples: &[(f64, f64)]) -> Result<Vec<FactorPoint>> {
    if samples.len() < 3 {
        return Err(Error::Calibration("superlinearity factor needs at least 3 samples".into()));
    }
    if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) || samples[0].0 <= 0.0 {
        return Err(Error::Calibration("mu must be positive and strictly increasing".into()));
    }
    let usable = |eta: f64| eta > 0.0 && eta.is_finite();
    Ok((1..samples.len() - 1)
        .map(|i| {
            let (mu_lo, eta_lo) = samples[i - 1];
            let (mu_hi, eta_hi) = samples[i + 1];
            let s = (usable(eta_lo) && usable(eta_hi)).then(|| (eta_hi.ln() - eta_lo.ln()) / (mu_hi.ln() - mu_lo.ln()));
            FactorPoint {
                index: i,
                mu: samples[i].0,
                s,
            }
        })
        .collect())
}

/// Saturation flags, one per record, in input order. Within each trigger
/// shift (ordered by `mu`) the trailing run of points whose rate lies within
/// `delta` (relative) of the top-energy rate is flagged when it holds at least
/// two points; any point with `R >= f` is flagged as well.
pub fn saturation_mask(records: &[CountRateRecord], delta: f64) -> Vec<bool> {
    let mut flags: Vec<bool> = records.iter().map(|r| r.rate >= r.rep_rate).collect();
    for idx in group_by_shift(records).into_values() {
        let top = records[*idx.last().unwrap()].rate;
        let run: Vec<usize> = idx
            .iter()
            .rev()
            .take_while(|&&i| (records[i].rate - top).abs() <= delta * top.abs())
            .copied()
            .collect();
        if run.len() >= 2 {
            for i in run {
                flags[i] = true;
            }
        }
    }
    flags
}

/// Record indices grouped by trigger shift, each group sorted by `mu`.
fn group_by_shift(records: &[CountRateRecord]) -> BTreeMap<OrdF64, Vec<usize>> {
    let mut groups: BTreeMap<OrdF64, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(OrdF64(r.trigger_shift)).or_default().push(i);
    }
    for idx in groups.values_mut() {
        idx.sort_by(|&a, &b| records[a].mu.total_cmp(&records[b].mu));
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// QBER of an intercept-resend attack on superlinear detectors, where `p_f`
/// is the click probability for the full resent pulse and `p_h` for half of
/// it.
pub fn intercept_resend_qber(p_f: f64, p_h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_f) || !(0.0..=1.0).contains(&p_h) {
        return Err(Error::config("p_f/p_h", "probabilities must lie in [0, 1]"));
    }
    if p_f == 0.0 && p_h == 0.0 {
        return Err(Error::UndefinedQber);
    }
    let half = 2.0 * p_h - p_h * p_h;
    Ok(half / (2.0 * p_f + 2.0 * half))
}

/// One grid point of the estimated efficiency surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub mu: f64,
    pub rate: f64,
    /// `None` when the rate is at or above the repetition rate.
    pub eta: Option<f64>,
    pub saturated: bool,
    pub valid: bool,
}

impl EstimatePoint {
    pub fn usable(&self) -> bool {
        !self.saturated && self.valid && self.eta.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    /// Seconds.
    pub trigger_shift: f64,
    pub points: Vec<EstimatePoint>,
}

/// `eta(t, mu)` estimates with saturation and validity flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySurfaceEstimate {
    pub rows: Vec<EstimateRow>,
}

impl EfficiencySurfaceEstimate {
    /// Inverts every record and applies the saturation mask.
    pub fn from_records(records: &[CountRateRecord], meta: &MeasurementMeta, delta_sat: f64) -> Result<Self> {
        meta.validate()?;
        for r in records {
            r.validate()?;
        }
        let mask = saturation_mask(records, delta_sat);
        let p_d = meta.dark_probability();
        let mut rows = Vec::new();
        for (t, idx) in group_by_shift(records) {
            let mut points = Vec::with_capacity(idx.len());
            for i in idx {
                let r = &records[i];
                let (eta, valid) = match efficiency_from_rate(r, p_d, meta.gate_frequency_hz) {
                    Ok(e) => (Some(e.eta), e.valid),
                    Err(Error::Saturated { .. }) => (None, false),
                    Err(e) => return Err(e),
                };
                points.push(EstimatePoint {
                    mu: r.mu,
                    rate: r.rate,
                    eta,
                    saturated: mask[i],
                    valid,
                });
            }
            if points.windows(2).any(|w| w[0].mu == w[1].mu) {
                return Err(Error::Calibration(format!("duplicate mu at trigger shift {} ns", t.0 / NS)));
            }
            rows.push(EstimateRow {
                trigger_shift: t.0,
                points,
            });
        }
        Ok(Self { rows })
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.points.is_empty())
    }
}

/// Pair of energies at one trigger shift where efficiency rises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trigger_shift_ns: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub eta1: f64,
    pub eta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub superlinear: bool,
    /// The pair maximizing `eta(mu2) - eta(mu1)`, present when superlinear.
    pub witness: Option<Witness>,
}

/// True iff some unmasked pair `mu1 < mu2` at one trigger shift has
/// `eta(mu2) - eta(mu1) > epsilon`.
pub fn is_superlinear(estimate: &EfficiencySurfaceEstimate, epsilon: f64) -> Result<Verdict> {
    let mut best: Option<(f64, Witness)> = None;
    let mut any = false;
    for row in &estimate.rows {
        let mut low: Option<(f64, f64)> = None;
        for p in row.points.iter().filter(|p| p.usable()) {
            any = true;
            let eta = p.eta.unwrap();
            if let Some((mu1, eta1)) = low {
                let gain = eta - eta1;
                if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    best = Some((
                        gain,
                        Witness {
                            trigger_shift_ns: row.trigger_shift / NS,
                            mu1,
                            mu2: p.mu,
                            eta1,
                            eta2: eta,
                        },
                    ));
                }
            }
            if low.is_none_or(|(_, e)| eta < e) {
                low = Some((p.mu, eta));
            }
        }
    }
    if !any {
        return Err(Error::Indeterminate);
    }
    Ok(match best {
        Some((gain, w)) if gain > epsilon => Verdict {
            superlinear: true,
            witness: Some(w),
        },
        _ => Verdict {
            superlinear: false,
            witness: None,
        },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CharacterizeOptions {
    pub epsilon: f64,
    pub delta_sat: f64,
}

impl CharacterizeOptions {
    pub fn new() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            delta_sat: DEFAULT_DELTA_SAT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePointReport {
    pub trigger_shift_ns: f64,
    pub mu: f64,
    pub rate_hz: f64,
    pub eta: Option<f64>,
    pub saturated: bool,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub trigger_shift_ns: f64,
    pub mu: f64,
    #[serde(rename = "S")]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxFactor {
    pub value: f64,
    pub trigger_shift_ns: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedPoint {
    pub trigger_shift_ns: f64,
    pub mu: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberPoint {
    pub trigger_shift_ns: f64,
    pub mu: f64,
    pub p_f: f64,
    pub p_h: f64,
    pub qber: f64,
}

/// Full characterization output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperlinearityReport {
    pub eta_surface: Vec<SurfacePointReport>,
    #[serde(rename = "S_grid")]
    pub s_grid: Vec<FactorReport>,
    #[serde(rename = "max_S")]
    pub max_s: Option<MaxFactor>,
    pub verdict: bool,
    pub witness: Option<Witness>,
    /// Whether the verdict agrees with the sign of the largest `S`.
    pub factor_agrees: bool,
    pub masked_points: Vec<MaskedPoint>,
    pub eq8_qber_curve: Vec<QberPoint>,
}

/// Runs the whole pipeline on a count-rate scan.
pub fn characterize(
    records: &[CountRateRecord],
    meta: &MeasurementMeta,
    opts: CharacterizeOptions,
) -> Result<SuperlinearityReport> {
    let estimate = EfficiencySurfaceEstimate::from_records(records, meta, opts.delta_sat)?;
    let verdict = is_superlinear(&estimate, opts.epsilon)?;

    let mut eta_surface = Vec::new();
    let mut masked_points = Vec::new();
    let mut s_grid = Vec::new();
    let mut max_s: Option<MaxFactor> = None;
    let mut eq8_qber_curve = Vec::new();

    for row in &estimate.rows {
        let t_ns = row.trigger_shift / NS;
        for p in &row.points {
            eta_surface.push(SurfacePointReport {
                trigger_shift_ns: t_ns,
                mu: p.mu,
                rate_hz: p.rate,
                eta: p.eta,
                saturated: p.saturated,
                valid: p.valid,
            });
            let reason = if p.eta.is_none() {
                Some("rate at or above repetition rate")
            } else if p.saturated {
                Some("saturation plateau")
            } else if !p.valid {
                Some("negative efficiency: dark counts exceed observed rate")
            } else {
                None
            };
            if let Some(reason) = reason {
                masked_points.push(MaskedPoint {
                    trigger_shift_ns: t_ns,
                    mu: p.mu,
                    reason: reason.to_string(),
                });
            }
        }

        let samples: Vec<(f64, f64)> = row
            .points
            .iter()
            .map(|p| (p.mu, if p.usable() { p.eta.unwrap() } else { f64::NAN }))
            .collect();
        if samples.len() >= 3 {
            for fp in superlinearity_factor(&samples)? {
                let s = fp.s.filter(|_| row.points[fp.index].usable());
                if let Some(v) = s {
                    if max_s.is_none_or(|m| v > m.value) {
                        max_s = Some(MaxFactor {
                            value: v,
                            trigger_shift_ns: t_ns,
                            mu: fp.mu,
                        });
                    }
                }
                s_grid.push(FactorReport {
                    trigger_shift_ns: t_ns,
                    mu: fp.mu,
                    s,
                });
            }
        }

        for (i, p) in row.points.iter().enumerate().filter(|(_, p)| p.usable()) {
            let Some(eta_half) = interpolate_row(&row.points[..=i], p.mu / 2.0) else {
                continue;
            };
            let p_f = -(-p.eta.unwrap() * p.mu).exp_m1();
            let p_h = -(-eta_half * p.mu / 2.0).exp_m1();
            if let Ok(qber) = intercept_resend_qber(p_f, p_h) {
                eq8_qber_curve.push(QberPoint {
                    trigger_shift_ns: t_ns,
                    mu: p.mu,
                    p_f,
                    p_h,
                    qber,
                });
            }
        }
    }

    let factor_agrees = match max_s {
        Some(m) => verdict.superlinear == (m.value > 0.0) || m.value.abs() <= opts.epsilon,
        None => true,
    };
    Ok(SuperlinearityReport {
        eta_surface,
        s_grid,
        max_s,
        verdict: verdict.superlinear,
        witness: verdict.witness,
        factor_agrees,
        masked_points,
        eq8_qber_curve,
    })
}

/// `eta` at `mu` by linear interpolation in `ln mu` between two adjacent
/// usable points of a row.
fn interpolate_row(points: &[EstimatePoint], mu: f64) -> Option<f64> {
    let hi = points.iter().position(|p| p.mu >= mu)?;
    let b = &points[hi];
    if !b.usable() {
        return None;
    }
    if b.mu == mu {
        return b.eta;
    }
    let a = points.get(hi.checked_sub(1)?)?;
    if !a.usable() {
        return None;
    }
    let w = (mu.ln() - a.mu.ln()) / (b.mu.ln() - a.mu.ln());
    Some(a.eta.unwrap() + w * (b.eta.unwrap() - a.eta.unwrap()))
}

/// Reads `trigger_shift_ns, mu, rate_hz` rows and attaches the sidecar
/// metadata.
pub fn read_rates_csv<R: Read>(reader: R, source: &str, meta: &MeasurementMeta) -> Result<Vec<CountRateRecord>> {
    let rows = crate::detector::read_numeric_csv(reader, source, &["trigger_shift_ns", "mu", "rate_hz"])?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let rec = meta.record(r[0] * NS, r[1], r[2]);
        rec.validate().map_err(|e| Error::Row {
            path: source.to_string(),
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_meta_json(path: &Path) -> Result<MeasurementMeta> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let meta: MeasurementMeta = serde_json::from_str(&text)?;
    meta.validate()?;
    Ok(meta)
}

/// Writes a rate scan as `trigger_shift_ns, mu, rate_hz`.
pub fn write_rates_csv<W: std::io::Write>(records: &[CountRateRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trigger_shift_ns", "mu", "rate_hz"])?;
    for r in records {
        w.write_record([
            format!("{:?}", r.trigger_shift / NS),
            format!("{:?}", r.mu),
            format!("{:?}", r.rate),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const F: f64 = 312.5e6;

    #[test]
    fn click_rate_examples() {
        assert_eq!(predicted_click_rate(1e3, 0.0, 5.0, 0.0, 4.0625), 0.0);
        let p_d = 428.0 / F;
        let theta_f: f64 = 13e-9 * F;
        assert!((theta_f - 4.0625).abs() < 1e-12);
        let r = predicted_click_rate(1e3, 0.1, 1.0, p_d, theta_f);
        // direct evaluation: 1000(1 - e^-0.1) + 1000 e^-0.1 [1 - (1 - P_D)^4.0625]
        let photon = 1e3 * (1.0 - (-0.1f64).exp());
        let dark = 1e3 * (-0.1f64).exp() * (1.0 - (1.0 - p_d).powf(theta_f));
        assert!((r - (photon + dark)).abs() < 1e-12);
        assert!((r - 95.168).abs() < 1e-3, "{r}");
        assert!((dark - 5.03e-3).abs() < 1e-5, "{dark}");
        let dark_free = predicted_click_rate(1e3, 0.3, 2.0, 0.0, 4.0625);
        assert!((dark_free - 1e3 * crate::detector::coherent_click_probability(0.3, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn inversion_examples() {
        let meta = MeasurementMeta {
            dark_count_rate_hz: 0.0,
            ..MeasurementMeta::testbench()
        };
        let zero = efficiency_from_rate(&meta.record(0.0, 1.0, 0.0), 0.0, F).unwrap();
        assert_eq!(zero.eta, 0.0);
        assert!(zero.valid);
        let r = 1e3 * (1.0 - (-0.1f64).exp());
        let e = efficiency_from_rate(&meta.record(0.0, 1.0, r), 0.0, F).unwrap();
        assert!((e.eta - 0.1).abs() < 1e-12);
        assert!(matches!(
            efficiency_from_rate(&meta.record(0.0, 1.0, 1e3), 0.0, F),
            Err(Error::Saturated { .. })
        ));
    }

    #[test]
    fn dark_excess_is_flagged_not_clamped() {
        let meta = MeasurementMeta::testbench();
        let e = efficiency_from_rate(&meta.record(0.0, 1.0, 0.0), meta.dark_probability(), F).unwrap();
        assert!(e.eta < 0.0);
        assert!(!e.valid);
    }

    #[test]
    fn factor_on_constant_and_power_law() {
        let mus: Vec<f64> = (0..12).map(|i| 10f64.powf(0.3 * i as f64)).collect();
        let flat: Vec<(f64, f64)> = mus.iter().map(|&m| (m, 0.1)).collect();
        assert!(superlinearity_factor(&flat).unwrap().iter().all(|p| p.s == Some(0.0)));
        let pl: Vec<(f64, f64)> = mus.iter().map(|&m| (m, 1e-3 * m.powf(0.86))).collect();
        for p in superlinearity_factor(&pl).unwrap() {
            assert!((p.s.unwrap() - 0.86).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_skips_non_positive_neighbours() {
        let s = superlinearity_factor(&[(1.0, 0.1), (2.0, 0.0), (3.0, 0.1), (4.0, 0.2)]).unwrap();
        assert!(s[0].s.is_some());
        assert_eq!(s[1].s, None);
        assert!(superlinearity_factor(&[(1.0, 0.1), (2.0, 0.1)]).is_err());
        assert!(superlinearity_factor(&[(2.0, 0.1), (1.0, 0.1), (3.0, 0.1)]).is_err());
    }

    fn rows(t: f64, mu_rates: &[(f64, f64)]) -> Vec<CountRateRecord> {
        let meta = MeasurementMeta::testbench();
        mu_rates.iter().map(|&(m, r)| meta.record(t, m, r)).collect()
    }

    #[test]
    fn saturation_mask_examples() {
        let plateau: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 + 1.0, if i < 5 { 10.0 * i as f64 } else { 999.0 })).collect();
        let mask = saturation_mask(&rows(0.0, &plateau), DEFAULT_DELTA_SAT);
        assert_eq!(mask.iter().filter(|m| **m).count(), 5);
        assert!(mask[5..].iter().all(|m| *m));

        let rising: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 + 1.0, 50.0 * i as f64)).collect();
        assert!(saturation_mask(&rows(0.0, &rising), DEFAULT_DELTA_SAT).iter().all(|m| !m));
    }

    #[test]
    fn saturation_mask_flags_capped_region() {
        let f = 1e3;
        let eta = 0.1;
        let mus: Vec<f64> = (0..30).map(|i| 0.01 * 10f64.powf(0.3 * i as f64)).collect();
        let mu_star = 40.0;
        let data: Vec<(f64, f64)> = mus
            .iter()
            .map(|&m| {
                let r = f * (1.0 - (-eta * m).exp());
                (m, if m >= mu_star { 0.999 * f } else { r })
            })
            .collect();
        let mask = saturation_mask(&rows(0.0, &data), 1e-3);
        for (m, flag) in mus.iter().zip(mask) {
            assert_eq!(flag, *m >= mu_star, "mu {m}");
        }
    }

    #[test]
    fn qber_examples() {
        assert_eq!(intercept_resend_qber(1.0, 1.0).unwrap(), 0.25);
        assert_eq!(intercept_resend_qber(0.3, 0.0).unwrap(), 0.0);
        let q = intercept_resend_qber(0.04, 0.01).unwrap();
        // (0.02 - 0.0001) / (0.08 + 2 * 0.0199)
        assert!((q - 0.0199 / 0.1198).abs() < 1e-15);
        assert!((q - 0.16611).abs() < 1e-5);
        let lin = intercept_resend_qber(1.0 - (-0.02f64).exp(), 1.0 - (-0.01f64).exp()).unwrap();
        assert!((lin - 0.25).abs() < 1e-4);
        assert!(matches!(intercept_resend_qber(0.0, 0.0), Err(Error::UndefinedQber)));
    }

    fn estimate(rows: Vec<Vec<(f64, f64)>>) -> EfficiencySurfaceEstimate {
        EfficiencySurfaceEstimate {
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, pts)| EstimateRow {
                    trigger_shift: i as f64 * 0.4 * NS,
                    points: pts
                        .into_iter()
                        .map(|(mu, eta)| EstimatePoint {
                            mu,
                            rate: 0.0,
                            eta: Some(eta),
                            saturated: false,
                            valid: true,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn verdict_examples() {
        let constant = estimate(vec![vec![(1.0, 0.1), (2.0, 0.1), (4.0, 0.1)]]);
        assert!(!is_superlinear(&constant, DEFAULT_EPSILON).unwrap().superlinear);

        let decreasing = estimate(vec![vec![(1.0, 0.3), (2.0, 0.2), (4.0, 0.1)]]);
        assert!(!is_superlinear(&decreasing, DEFAULT_EPSILON).unwrap().superlinear);

        let dip = estimate(vec![vec![(1.0, 0.10), (2.0, 0.08), (4.0, 0.07), (8.0, 0.09), (16.0, 0.11)]]);
        let v = is_superlinear(&dip, DEFAULT_EPSILON).unwrap();
        assert!(v.superlinear);
        let w = v.witness.unwrap();
        assert_eq!((w.mu1, w.mu2), (4.0, 16.0));
        assert!(w.mu1 < w.mu2 && w.eta1 < w.eta2);

        let mut masked = estimate(vec![vec![(1.0, 0.1), (2.0, 0.2)]]);
        for p in &mut masked.rows[0].points {
            p.saturated = true;
        }
        assert!(matches!(is_superlinear(&masked, DEFAULT_EPSILON), Err(Error::Indeterminate)));
    }

    #[test]
    fn verdict_respects_tolerance() {
        let tiny = estimate(vec![vec![(1.0, 0.1), (2.0, 0.1 + 5e-5)]]);
        assert!(!is_superlinear(&tiny, DEFAULT_EPSILON).unwrap().superlinear);
        assert!(is_superlinear(&tiny, 1e-5).unwrap().superlinear);
    }

    #[test]
    fn pipeline_recovers_power_law() {
        let meta = MeasurementMeta::testbench();
        let mus: Vec<f64> = (0..20).map(|i| 0.01 * 10f64.powf(0.3 * i as f64)).collect();
        let mut recs = Vec::new();
        for t in [0.0, 0.4 * NS] {
            for &m in &mus {
                let eta = 1e-3 * m.powf(0.86);
                let r = predicted_click_rate(meta.f_hz, eta, m, meta.dark_probability(), meta.window_gates());
                recs.push(meta.record(t, m, r));
            }
        }
        let rep = characterize(&recs, &meta, CharacterizeOptions::new()).unwrap();
        assert!(rep.verdict);
        assert!(rep.factor_agrees);
        let max = rep.max_s.unwrap();
        assert!((max.value - 0.86).abs() < 1e-6, "{}", max.value);
        assert!(!rep.eq8_qber_curve.is_empty());
        assert!(rep.eq8_qber_curve.iter().all(|q| (0.0..=0.5).contains(&q.qber)));
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["eta_surface", "S_grid", "max_S", "verdict", "witness", "masked_points", "eq8_qber_curve"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    proptest! {
        #[test]
        fn forward_inverse_identity(
            eta in 1e-4f64..1.0,
            mu in 1e-2f64..20.0,
            dark in 0.0f64..5e3,
            theta_ns in 1.0f64..50.0,
        ) {
            let meta = MeasurementMeta { f_hz: 1e3, theta_ns, gate_frequency_hz: F, dark_count_rate_hz: dark };
            let r = predicted_click_rate(meta.f_hz, eta, mu, meta.dark_probability(), meta.window_gates());
            prop_assume!(r < meta.f_hz * (1.0 - 1e-6));
            let back = efficiency_from_rate(&meta.record(0.0, mu, r), meta.dark_probability(), F).unwrap();
            prop_assert!(((back.eta - eta) / eta).abs() < 1e-9, "{} vs {}", back.eta, eta);
        }

        #[test]
        fn qber_bounds_and_monotonicity(pf in 0.0f64..=1.0, ph in 0.0f64..=1.0, d in 0.0f64..0.2) {
            prop_assume!(pf > 0.0 || ph > 0.0);
            let q = intercept_resend_qber(pf, ph).unwrap();
            prop_assert!((0.0..=0.5).contains(&q));
            prop_assert!(intercept_resend_qber((pf + d).min(1.0), ph).unwrap() <= q + 1e-15);
            prop_assert!(intercept_resend_qber(pf, (ph + d).min(1.0)).unwrap() >= q - 1e-15);
        }
    }
}
