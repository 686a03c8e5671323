//! Per-click trace CSV and click-time histograms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::detector::{ClickCause, ClickEvent};
use crate::error::{Error, Result};
use crate::protocol::Device;
use crate::NS;

/// One trace line. The last three columns describe the originating pulse
/// and are empty for dark clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: i64,
    pub device: String,
    pub click_time_ns: f64,
    pub cause: String,
    pub decision: String,
    pub trigger_shift_ns: Option<f64>,
    pub mu: Option<f64>,
    /// Click time minus arrival and latency.
    pub shift_ns: Option<f64>,
}

impl TraceRow {
    pub fn from_click(slot: i64, c: &ClickEvent, decision: &str) -> Self {
        Self {
            slot,
            device: Device::detector(c.detector).as_str().to_string(),
            click_time_ns: c.time / NS,
            cause: c.cause.as_str().to_string(),
            decision: decision.to_string(),
            trigger_shift_ns: c.trigger_shift.map(|t| t / NS),
            mu: c.mu,
            shift_ns: c.shift.map(|s| s / NS),
        }
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "slot",
            "device",
            "click_time_ns",
            "cause",
            "decision",
            "trigger_shift_ns",
            "mu",
            "shift_ns",
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_trace<R: Read>(reader: R, source: &str) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| Error::Row {
            path: source.to_string(),
            line: i as u64 + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// One histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub trigger_shift_ns: f64,
    pub mu: f64,
    pub bin_center_ns: f64,
    /// Normalized so each group's highest bin is 1.
    pub density: f64,
}

/// Click-time-shift histograms per `(trigger shift, mu)` over `bins` equal
/// bins spanning each group's range. Dark clicks are ignored.
pub fn histogram(rows: &[TraceRow], bins: usize) -> Result<Vec<HistogramRow>> {
    if bins == 0 {
        return Err(Error::config("bins", "must be at least 1"));
    }
    let mut samples: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.cause != ClickCause::Dark.as_str())
        .filter_map(|r| Some((r.trigger_shift_ns?, r.mu?, r.shift_ns?)))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut out = Vec::new();
    for group in samples.chunk_by(|a, b| a.0 == b.0 && a.1 == b.1) {
        let (t, mu) = (group[0].0, group[0].1);
        let lo = group[0].2;
        let hi = group[group.len() - 1].2;
        if hi == lo {
            out.push(HistogramRow {
                trigger_shift_ns: t,
                mu,
                bin_center_ns: lo,
                density: 1.0,
            });
            continue;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for s in group {
            let k = (((s.2 - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let peak = *counts.iter().max().unwrap() as f64;
        out.extend(counts.iter().enumerate().map(|(k, &c)| HistogramRow {
            trigger_shift_ns: t,
            mu,
            bin_center_ns: lo + (k as f64 + 0.5) * width,
            density: c as f64 / peak,
        }));
    }
    Ok(out)
}

/// Mean and FWHM of one histogram group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub trigger_shift_ns: f64,
    pub mu: f64,
    pub mean_ns: f64,
    /// Width at half maximum, interpolated between bins.
    pub fwhm_ns: f64,
    pub bin_width_ns: f64,
}

/// Summarizes every group of a histogram table.
pub fn summarize(hist: &[HistogramRow]) -> Vec<HistogramSummary> {
    hist.chunk_by(|a, b| a.trigger_shift_ns == b.trigger_shift_ns && a.mu == b.mu)
        .map(|g| {
            let total: f64 = g.iter().map(|r| r.density).sum();
            let mean = g.iter().map(|r| r.density * r.bin_center_ns).sum::<f64>() / total;
            let width = if g.len() > 1 { g[1].bin_center_ns - g[0].bin_center_ns } else { 0.0 };
            let first = g.iter().position(|r| r.density >= 0.5).unwrap();
            let last = g.iter().rposition(|r| r.density >= 0.5).unwrap();
            let cross = |a: &HistogramRow, b: &HistogramRow| {
                a.bin_center_ns + (0.5 - a.density) / (b.density - a.density) * (b.bin_center_ns - a.bin_center_ns)
            };
            let left = if first > 0 { cross(&g[first - 1], &g[first]) } else { g[first].bin_center_ns - width / 2.0 };
            let right = if last + 1 < g.len() { cross(&g[last], &g[last + 1]) } else { g[last].bin_center_ns + width / 2.0 };
            HistogramSummary {
                trigger_shift_ns: g[0].trigger_shift_ns,
                mu: g[0].mu,
                mean_ns: mean,
                fwhm_ns: right - left,
                bin_width_ns: width,
            }
        })
        .collect()
}
