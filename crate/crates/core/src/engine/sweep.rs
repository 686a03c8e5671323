//! Parameter sweeps over session configs.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::SessionConfig;
use super::session::{run_resolved, SessionMetrics};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// One swept parameter: a JSON pointer into the session config and its
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<Value>,
}

/// Sweep file: a base session config and the axes of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: Value,
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: u64,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
    pub metrics: SessionMetrics,
}

/// `n` mean photon numbers from `start`, `step_db` apart, covering `span_db`.
pub fn energy_grid_db(start: f64, step_db: f64, span_db: f64) -> Vec<f64> {
    let n = (span_db / step_db).round() as usize + 1;
    (0..n).map(|i| start * 10f64.powf(i as f64 * step_db / 10.0)).collect()
}

fn set_pointer(root: &mut Value, pointer: &str, value: Value) -> Result<()> {
    if !pointer.starts_with('/') {
        return Err(Error::config("axes.path", format!("`{pointer}` is not a JSON pointer")));
    }
    let mut cur = root;
    let parts: Vec<String> = pointer[1..].split('/').map(|p| p.replace("~1", "/").replace("~0", "~")).collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.clone(), value);
                    return Ok(());
                }
                map.entry(part.clone()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config("axes.path", format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config("axes.path", format!("index {idx} out of bounds ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config("axes.path", format!("`{pointer}` crosses a non-container value"))),
        };
    }
    *cur = value;
    Ok(())
}

/// Cell configs in row-major order (last axis fastest), each seeded with
/// `derive_seed(master_seed, cell)`.
pub fn expand(base: &Value, axes: &[SweepAxis], master_seed: u64) -> Result<Vec<(SessionConfig, BTreeMap<String, Value>)>> {
    if axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::config("axes", "every axis needs at least one value"));
    }
    let cells: usize = axes.iter().map(|a| a.values.len()).product();
    let mut out = Vec::with_capacity(cells);
    for cell in 0..cells {
        let mut v = base.clone();
        let mut params = BTreeMap::new();
        let mut rem = cell;
        for axis in axes.iter().rev() {
            let k = rem % axis.values.len();
            rem /= axis.values.len();
            set_pointer(&mut v, &axis.path, axis.values[k].clone())?;
            params.insert(axis.path.clone(), axis.values[k].clone());
        }
        let mut cfg = SessionConfig::from_json_value(v).map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("base.{path}"), format!("cell {cell}: {message}")),
            other => other,
        })?;
        cfg.seed = derive_seed(master_seed, cell as u64);
        cfg.trace = false;
        out.push((cfg, params));
    }
    Ok(out)
}

/// Runs every cell in parallel; rows come back in cell order.
pub fn sweep(base: &Value, axes: &[SweepAxis], master_seed: u64, base_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let cells = expand(base, axes, master_seed)?;
    let resolved = cells
        .iter()
        .map(|(c, _)| c.resolve(base_dir))
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<Result<SessionMetrics>> =
        resolved.par_iter().map(|s| run_resolved(s).map(|o| o.metrics)).collect();
    cells
        .into_iter()
        .zip(metrics)
        .enumerate()
        .map(|(i, ((cfg, params), m))| {
            Ok(SweepRow {
                cell: i as u64,
                seed: cfg.seed,
                params,
                metrics: m?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn three_db_energy_grid() {
        let g = energy_grid_db(1.0, 3.0, 102.0);
        assert_eq!(g.len(), 35);
        assert!((g[34] / 10f64.powf(10.2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pointer_creates_objects() {
        let mut v = json!({"slots": 1});
        set_pointer(&mut v, "/protocol/mu", json!(0.3)).unwrap();
        assert_eq!(v["protocol"]["mu"], json!(0.3));
        let mut v = json!({"detectors": [{}, {}]});
        set_pointer(&mut v, "/detectors/1/dark_count_rate_hz", json!(0)).unwrap();
        assert_eq!(v["detectors"][1]["dark_count_rate_hz"], json!(0));
        assert!(set_pointer(&mut v, "/detectors/5/x", json!(0)).is_err());
        assert!(set_pointer(&mut v, "protocol", json!(0)).is_err());
    }

    #[test]
    fn cartesian_order() {
        let axes = vec![
            SweepAxis {
                path: "/protocol/mu".into(),
                values: vec![json!(0.1), json!(0.2)],
            },
            SweepAxis {
                path: "/protocol/four_state".into(),
                values: vec![json!(false), json!(true)],
            },
        ];
        let cells = expand(&json!({"slots": 10}), &axes, 1).unwrap();
        let mus: Vec<f64> = cells.iter().map(|(c, _)| c.protocol.mu).collect();
        assert_eq!(mus, vec![0.1, 0.1, 0.2, 0.2]);
        assert!(cells[1].0.protocol.four_state);
        assert_eq!(cells[2].0.seed, derive_seed(1, 2));
    }
}
