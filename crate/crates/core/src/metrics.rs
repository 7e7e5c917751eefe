//! Error metrics against a noise-free reference.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub pixels: usize,
    /// Same metrics restricted to labelled pixel groups, if requested.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub regions: BTreeMap<String, RegionMetrics>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RegionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub pixels: usize,
}

fn check_dims(truth: &Image, estimate: &Image) -> Result<()> {
    if truth.width() != estimate.width() || truth.height() != estimate.height() {
        return Err(Error::DimensionMismatch(
            truth.width(),
            truth.height(),
            estimate.width(),
            estimate.height(),
        ));
    }
    Ok(())
}

fn accumulate(pairs: impl Iterator<Item = (f64, f64)>) -> RegionMetrics {
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (t, e) in pairs {
        let d = e - t;
        abs += d.abs();
        sq += d * d;
        n += 1;
    }
    if n == 0 {
        return RegionMetrics::default();
    }
    RegionMetrics {
        mae: abs / n as f64,
        mse: sq / n as f64,
        pixels: n,
    }
}

/// Mean absolute and mean squared error of `estimate` against `truth`.
pub fn metrics(truth: &Image, estimate: &Image) -> Result<MetricsReport> {
    check_dims(truth, estimate)?;
    let all = accumulate(truth.pixels().iter().copied().zip(estimate.pixels().iter().copied()));
    Ok(MetricsReport {
        mae: all.mae,
        mse: all.mse,
        pixels: all.pixels,
        regions: BTreeMap::new(),
    })
}

/// Like [`metrics`], with a breakdown by per-pixel label.
pub fn metrics_by_label<L: ToString>(truth: &Image, estimate: &Image, labels: &[L]) -> Result<MetricsReport> {
    let mut report = metrics(truth, estimate)?;
    if labels.len() != truth.len() {
        return Err(Error::arg(format!(
            "{} labels for {} pixels",
            labels.len(),
            truth.len()
        )));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, l) in labels.iter().enumerate() {
        groups.entry(l.to_string()).or_default().push(k);
    }
    for (name, idx) in groups {
        let m = accumulate(idx.iter().map(|&k| (truth.pixels()[k], estimate.pixels()[k])));
        report.regions.insert(name, m);
    }
    Ok(report)
}

/// Percentage change of `value` relative to `baseline`; negative means a reduction.
pub fn percent_change(baseline: f64, value: f64) -> f64 {
    if baseline == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (value - baseline) / baseline
    }
}

/// Writes named reports as CSV rows `name,region,mae,mse,pixels`.
pub fn write_csv<W: Write>(out: W, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "region", "mae", "mse", "pixels"])?;
    for (name, r) in rows {
        w.write_record([
            name,
            "all",
            &r.mae.to_string(),
            &r.mse.to_string(),
            &r.pixels.to_string(),
        ])?;
        for (region, m) in &r.regions {
            w.write_record([
                name,
                region,
                &m.mae.to_string(),
                &m.mse.to_string(),
                &m.pixels.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
