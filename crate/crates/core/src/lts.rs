//! Exact one-dimensional least trimmed squares.
//!
//! In one dimension the `h = n - r` observations minimizing the sum of squared
//! residuals always form a contiguous block of the sorted sample, so the LTS
//! location is the mean of the best of the `r + 1` sorted blocks.

use crate::error::{Error, Result};
use crate::image::Window;

/// Trimming fraction `l` in `[0, 0.5)`; `l = 0` disables trimming.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrimConfig {
    l: f64,
}

impl TrimConfig {
    pub fn new(l: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&l) {
            return Err(Error::arg(format!("trim fraction {l} not in [0, 0.5)")));
        }
        Ok(TrimConfig { l })
    }

    pub fn none() -> Self {
        TrimConfig { l: 0.0 }
    }

    pub fn fraction(&self) -> f64 {
        self.l
    }

    /// `floor(l * n)`. The epsilon keeps products such as `0.15 * 20` from
    /// rounding below an integer.
    pub fn trim_count(&self, n: usize) -> usize {
        ((self.l * n as f64) + 1e-9).floor() as usize
    }

    /// `ceil((1 - l) * n)`, which always equals `n - floor(l * n)`.
    pub fn retained_count(&self, n: usize) -> usize {
        n - self.trim_count(n)
    }
}

/// Result of trimming one window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimOutcome {
    pub lts_center: f64,
    /// Positions (into the window's entries) of the retained observations, ascending.
    pub retained: Vec<usize>,
    /// Largest retained squared residual.
    pub threshold: f64,
    /// Number of trimmed observations.
    pub r: usize,
}

/// LTS location of `values` with `r` observations trimmed.
pub fn lts_center(values: &[f64], r: usize) -> Result<f64> {
    lts_block(values, r).map(|(_, c)| c)
}

/// Like [`lts_center`], also returning the start of the winning block in
/// sorted order. Among equally good blocks the lowest start wins.
pub fn lts_block(values: &[f64], r: usize) -> Result<(usize, f64)> {
    if values.is_empty() {
        return Err(Error::arg("LTS of an empty sample"));
    }
    if r >= values.len() {
        return Err(Error::arg(format!(
            "trim count {r} must be below sample size {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = sorted.len() - r;
    let hf = h as f64;

    let mut best = (0usize, f64::INFINITY, 0.0);
    for start in 0..=r {
        let block = &sorted[start..start + h];
        let base = block[0];
        let (mut sum, mut sq) = (0.0, 0.0);
        for &v in block {
            let d = v - base;
            sum += d;
            sq += d * d;
        }
        // h * (within-block sum of squares)
        let crit = hf * sq - sum * sum;
        if crit < best.1 {
            best = (start, crit, block.iter().sum::<f64>() / hf);
        }
    }
    Ok((best.0, best.2))
}

/// Trims a plain list of observations; positions refer to `values`.
pub fn trim_values(values: &[f64], cfg: TrimConfig) -> Result<TrimOutcome> {
    let n = values.len();
    if n == 0 {
        return Err(Error::arg("cannot trim an empty window"));
    }
    let r = cfg.trim_count(n);
    let keep = n - r;
    let center = lts_center(values, r)?;
    let resid: Vec<f64> = values.iter().map(|&y| (center - y) * (center - y)).collect();

    // stable ordering by residual then position: on ties at the threshold the
    // highest positions are dropped first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].total_cmp(&resid[b]).then(a.cmp(&b)));
    let threshold = resid[order[keep - 1]];
    let mut retained = order[..keep].to_vec();
    retained.sort_unstable();

    Ok(TrimOutcome {
        lts_center: center,
        retained,
        threshold,
        r,
    })
}

/// Computes the trimmed set `R` of a window.
pub fn trim_window(win: &Window, cfg: TrimConfig) -> Result<TrimOutcome> {
    trim_values(&win.values(), cfg)
}
