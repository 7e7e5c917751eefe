//! Empirical robustness probes: worst-case bias under adversarial
//! replacement of window observations, and the TM support bound.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::image::{BorderMode, Image, Window};
use crate::lts::TrimConfig;
use crate::smoother::{smooth_values, smooth_window, Scale, SmootherParams};

/// Interval that must contain the TM estimate whenever at most `r`
/// observations of a `count`-point window are replaced, `r` being the trim
/// count. `y_min` and `y_max` refer to the clean window.
pub fn tm_support_bound(y_min: f64, y_max: f64, count: usize, r: usize, g: f64) -> Result<(f64, f64)> {
    if !(y_min <= y_max) || !y_min.is_finite() || !y_max.is_finite() {
        return Err(Error::arg("bound needs a finite range with y_min <= y_max"));
    }
    if r >= count {
        return Err(Error::arg(format!("trim count {r} must be below window size {count}")));
    }
    if !(g > 0.0) {
        return Err(Error::arg("g must be positive"));
    }
    let spread = 2.0 * ((count - r) as f64).sqrt() * (y_max - y_min);
    Ok((y_min - spread - g, y_max + spread + g))
}

/// How replacement positions and values are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `+M` at positions taken in raster order from the top-left corner.
    AllPlus,
    /// `-M` at the same positions.
    AllMinus,
    /// `+M` starting at the center and moving outward.
    Center,
    /// Alternating `+M` and `-M`, center first.
    Split,
    /// `+M` plus small offsets, forming a tight competing cluster.
    Cluster,
    /// Seeded random positions and values in `[-M, M]`.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::AllPlus,
        Strategy::AllMinus,
        Strategy::Center,
        Strategy::Split,
        Strategy::Cluster,
        Strategy::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::AllPlus => "all_plus",
            Strategy::AllMinus => "all_minus",
            Strategy::Center => "center",
            Strategy::Split => "split",
            Strategy::Cluster => "cluster",
            Strategy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Offsets `M` added to the clean window median.
    pub magnitudes: Vec<f64>,
    pub strategies: Vec<Strategy>,
    /// Trials per replacement count for [`Strategy::Random`], each with a
    /// magnitude drawn from `magnitudes`.
    pub random_trials: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            magnitudes: vec![1e1, 1e2, 1e3, 1e6, 1e9],
            strategies: Strategy::ALL.to_vec(),
            random_trials: 64,
            seed: 0,
        }
    }
}

/// One contaminated window and its estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeTrial {
    pub strategy: Strategy,
    pub magnitude: f64,
    pub r: usize,
    pub estimate: f64,
    pub bias: f64,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasProbeReport {
    pub r: usize,
    pub l: f64,
    pub g: f64,
    pub clean_estimate: f64,
    /// Largest bias over all trials with at most `r` replacements.
    pub worst_bias: f64,
    /// TM support bound when `l > 0` and `r` does not exceed the trim count.
    pub bound: Option<(f64, f64)>,
    pub violations: usize,
    pub trials: Vec<ProbeTrial>,
}

/// Builds the full square window of side `2 * radius + 1` from row-major values.
pub fn square_window(values: &[f64], radius: usize) -> Result<Window> {
    let side = 2 * radius + 1;
    if values.len() != side * side {
        return Err(Error::arg(format!(
            "expected {} window values for radius {radius}, got {}",
            side * side,
            values.len()
        )));
    }
    let img = Image::new(side, side, values.to_vec())?;
    img.window(radius, radius, radius, BorderMode::Clip)
}

fn fixed_g(params: &SmootherParams) -> Result<f64> {
    match params.g {
        Scale::Fixed(g) => Ok(g),
        Scale::Auto => Err(Error::arg("bias probes need a fixed g")),
    }
}

/// Window positions sorted by distance from the center, ties in raster order.
fn center_out(win: &Window) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..win.len()).collect();
    let c = win.entries[win.center_index()];
    let d = |k: usize| {
        let e = &win.entries[k];
        let (dr, dc) = (e.row as f64 - c.row as f64, e.col as f64 - c.col as f64);
        dr * dr + dc * dc
    };
    idx.sort_by(|&a, &b| d(a).total_cmp(&d(b)).then(a.cmp(&b)));
    idx
}

fn replacements(
    strategy: Strategy,
    win: &Window,
    r: usize,
    m: f64,
    reference: f64,
    g: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, f64)> {
    match strategy {
        Strategy::AllPlus => (0..r).map(|k| (k, reference + m)).collect(),
        Strategy::AllMinus => (0..r).map(|k| (k, reference - m)).collect(),
        Strategy::Center => center_out(win)
            .into_iter()
            .take(r)
            .map(|k| (k, reference + m))
            .collect(),
        Strategy::Split => center_out(win)
            .into_iter()
            .take(r)
            .enumerate()
            .map(|(j, k)| (k, if j % 2 == 0 { reference + m } else { reference - m }))
            .collect(),
        Strategy::Cluster => center_out(win)
            .into_iter()
            .take(r)
            .enumerate()
            .map(|(j, k)| (k, reference + m + g * 0.125 * j as f64))
            .collect(),
        Strategy::Random => {
            let mut idx: Vec<usize> = (0..win.len()).collect();
            idx.shuffle(rng);
            idx.into_iter()
                .take(r)
                .map(|k| (k, reference + rng.random_range(-m..=m)))
                .collect()
        }
    }
}

/// Estimates the worst bias of the smoother at the window center when up to
/// `r` observations are replaced.
pub fn max_bias_probe(
    values: &[f64],
    radius: usize,
    r: usize,
    params: &SmootherParams,
    cfg: &ProbeConfig,
) -> Result<BiasProbeReport> {
    params.validate()?;
    let g = fixed_g(params)?;
    let win = square_window(values, radius)?;
    let n = win.len();
    if r >= n {
        return Err(Error::arg(format!("cannot replace {r} of {n} observations")));
    }
    let clean = smooth_window(&win, g, params)?.value;
    let mut sorted = win.values();
    sorted.sort_by(f64::total_cmp);
    let (y_min, y_max) = (sorted[0], sorted[n - 1]);

    let trim = TrimConfig::new(params.l)?.trim_count(n);
    let bound = if params.l > 0.0 && r <= trim {
        Some(tm_support_bound(y_min, y_max, n, trim, g)?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::new();
    for rr in 1..=r {
        trials.extend(run_trials(&win, rr, params, cfg, g, clean, bound, &mut rng)?);
    }
    let worst_bias = trials.iter().map(|t| t.bias).fold(0.0, f64::max);
    let violations = trials.iter().filter(|t| t.within_bound == Some(false)).count();
    Ok(BiasProbeReport {
        r,
        l: params.l,
        g,
        clean_estimate: clean,
        worst_bias,
        bound,
        violations,
        trials,
    })
}

/// Bias level treated as breakdown: ten times the larger of the clean
/// window range and `g`.
pub fn breakdown_threshold(values: &[f64], g: f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    10.0 * (hi - lo).max(g)
}

/// Smallest replaced fraction `r / n` at which the probed worst bias exceeds
/// [`breakdown_threshold`], or `None` if no `r < n / 2` breaks the smoother.
pub fn breakdown_estimate(
    values: &[f64],
    radius: usize,
    params: &SmootherParams,
    cfg: &ProbeConfig,
) -> Result<Option<f64>> {
    params.validate()?;
    let g = fixed_g(params)?;
    let threshold = breakdown_threshold(values, g);
    let win = square_window(values, radius)?;
    let clean = smooth_window(&win, g, params)?.value;
    let n = values.len();
    for r in 1..n.div_ceil(2) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
        let trials = run_trials(&win, r, params, cfg, g, clean, None, &mut rng)?;
        if trials.iter().any(|t| t.bias > threshold) {
            return Ok(Some(r as f64 / n as f64));
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn run_trials(
    win: &Window,
    r: usize,
    params: &SmootherParams,
    cfg: &ProbeConfig,
    g: f64,
    clean: f64,
    bound: Option<(f64, f64)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ProbeTrial>> {
    let mut sorted = win.values();
    sorted.sort_by(f64::total_cmp);
    let reference = sorted[(sorted.len() - 1) / 2];
    let weights = if params.uniform_weights {
        vec![1.0; win.len()]
    } else {
        DensityField::from_window(win, g)?.weights().to_vec()
    };
    let center = win.center_index();
    let mut trials = Vec::new();
    for &strategy in &cfg.strategies {
        // fixed strategies try every magnitude once; random trials draw one
        let runs: Vec<f64> = if strategy == Strategy::Random {
            if cfg.magnitudes.is_empty() {
                Vec::new()
            } else {
                (0..cfg.random_trials)
                    .map(|_| cfg.magnitudes[rng.random_range(0..cfg.magnitudes.len())])
                    .collect()
            }
        } else {
            cfg.magnitudes.clone()
        };
        for m in runs {
            let mut vals = win.values();
            for (k, v) in replacements(strategy, win, r, m, reference, g, rng) {
                vals[k] = v;
            }
            let estimate = smooth_values(vals, weights.clone(), center, g, params)?.value;
            trials.push(ProbeTrial {
                strategy,
                magnitude: m,
                r,
                estimate,
                bias: (estimate - clean).abs(),
                within_bound: bound.map(|(lo, hi)| estimate >= lo && estimate <= hi),
            });
        }
    }
    Ok(trials)
}

/// `count` seeded windows of side `2 * radius + 1`: a random level plus
/// Gaussian noise, with an occasional step edge through the window.
pub fn random_windows(count: usize, radius: usize, seed: u64) -> Vec<Vec<f64>> {
    let side = 2 * radius + 1;
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let level: f64 = rng.random_range(0.0..=255.0);
            let sigma: f64 = rng.random_range(0.0..=30.0);
            let step: f64 = if rng.random_bool(0.3) {
                rng.random_range(-150.0..=150.0)
            } else {
                0.0
            };
            let (a, b): (f64, f64) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            (0..side * side)
                .map(|p| {
                    let (i, j) = ((p / side) as f64 - radius as f64, (p % side) as f64 - radius as f64);
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    level + if a * i + b * j > 0.0 { step } else { 0.0 } + sigma * z
                })
                .collect()
        })
        .collect()
}

/// Runs [`max_bias_probe`] over many windows in parallel; window `k` uses
/// seed `cfg.seed + k`, and reports come back in window order.
pub fn probe_windows(
    windows: &[Vec<f64>],
    radius: usize,
    r: usize,
    params: &SmootherParams,
    cfg: &ProbeConfig,
) -> Result<Vec<BiasProbeReport>> {
    windows
        .par_iter()
        .enumerate()
        .map(|(k, v)| {
            let cfg = ProbeConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                ..cfg.clone()
            };
            max_bias_probe(v, radius, r, params, &cfg)
        })
        .collect()
}

/// Writes the trials of one or more reports as CSV.
pub fn write_trials_csv<W: Write>(out: W, reports: &[BiasProbeReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "window",
        "strategy",
        "magnitude",
        "r",
        "estimate",
        "bias",
        "within_bound",
    ])?;
    for (i, rep) in reports.iter().enumerate() {
        for t in &rep.trials {
            w.write_record([
                i.to_string(),
                t.strategy.name().to_string(),
                t.magnitude.to_string(),
                t.r.to_string(),
                t.estimate.to_string(),
                t.bias.to_string(),
                t.within_bound.map_or(String::new(), |b| b.to_string()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
