//! Report writers: sweep results and metrics as CSV, anything serializable
//! as JSON. Numeric cells use the same 17-significant-digit encoding as the
//! dataset path so re-runs diff cleanly.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::eval::{MetricsReport, SweepResult};
use crate::model::TrainLog;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

/// Long format: variant, axis, seed, metric, value. Failed points emit a
/// single row with metric "failed" and an empty value.
pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", &sweep.axis_name, "seed", "metric", "value"])?;
    for curve in &sweep.curves {
        for (point, axis) in curve.points.iter().zip(&sweep.axis_values) {
            match point {
                Some(report) => {
                    for m in &report.per_seed {
                        for (name, value) in [("mae", m.mae), ("rmse", m.rmse), ("pehe", m.pehe)] {
                            w.write_record([
                                curve.variant.clone(),
                                num(*axis),
                                m.seed.to_string(),
                                name.to_string(),
                                num(value),
                            ])?;
                        }
                    }
                }
                None => {
                    w.write_record([
                        curve.variant.clone(),
                        num(*axis),
                        String::new(),
                        "failed".to_string(),
                        String::new(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per seed plus mean and (when present) stderr rows.
pub fn write_metrics_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "mae", "rmse", "pehe"])?;
    for m in &report.per_seed {
        w.write_record([m.seed.to_string(), num(m.mae), num(m.rmse), num(m.pehe)])?;
    }
    w.write_record(["mean".into(), num(report.mae), num(report.rmse), num(report.pehe)])?;
    if let Some(se) = &report.stderr {
        w.write_record(["stderr".into(), num(se.mae), num(se.rmse), num(se.pehe)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch training curve: epoch, huber, triplet, n_triples.
pub fn write_train_log_csv(log: &TrainLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "huber", "triplet", "n_triples"])?;
    for e in &log.epochs {
        w.write_record([e.epoch.to_string(), num(e.huber), num(e.triplet), e.n_triples.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
