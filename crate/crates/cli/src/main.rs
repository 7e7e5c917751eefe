//! `tmsmooth`: synthesize scenes, add noise, smooth, evaluate and probe.

mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tmsmooth::metrics::{percent_change, write_csv};
use tmsmooth::probe::{breakdown_estimate, square_window, write_trials_csv};
use tmsmooth::scene::{add_noise, rasterize, SceneConfig, SceneSpec};
use tmsmooth::smoother::{median_smooth, smooth_with_report, SmoothReport};
use tmsmooth::{
    metrics, probe_windows, random_windows, read_pgm, write_pgm, BorderMode, GridGeometry, Image, MetricsReport,
    ModeSearch, NoiseSpec, ProbeConfig, Scale, SmootherParams, Strategy,
};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "tmsmooth",
    version,
    about = "Outlier-robust, corner-preserving image smoothing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a piecewise-constant scene to PGM.
    Synth(SynthArgs),
    /// Add Gaussian noise and white/black outliers to a PGM image.
    Noise(NoiseArgs),
    /// Smooth a PGM image with the TM-, M- or median smoother.
    Smooth(SmoothArgs),
    /// Compare estimates against a reference image.
    Eval(EvalArgs),
    /// Probe worst-case bias under adversarial window contamination.
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    TestCard,
    Wedge,
    Ramp,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML scene description.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Opening angle for the wedge preset, in degrees.
    #[arg(long, default_value_t = 90.0)]
    angle: f64,
    /// Square image size; overrides the config.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a noisy copy using the config's `[noise]` table.
    #[arg(long)]
    noisy_out: Option<PathBuf>,
    /// Write plain (P2) instead of raw (P5) PGM.
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    p_white: f64,
    #[arg(long, default_value_t = 0.0)]
    p_black: f64,
    #[arg(long, default_value_t = 255.0)]
    white: f64,
    #[arg(long, default_value_t = 0.0)]
    black: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truncate the Gaussian noise to (-a, a).
    #[arg(long)]
    truncate: Option<f64>,
    #[arg(long)]
    ascii: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Tm,
    Median,
}

#[derive(Clone, Copy, ValueEnum)]
enum Border {
    Clip,
    Replicate,
}

impl From<Border> for BorderMode {
    fn from(b: Border) -> Self {
        match b {
            Border::Clip => BorderMode::Clip,
            Border::Replicate => BorderMode::Replicate,
        }
    }
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Intensity bandwidth: `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    g: String,
    /// Trimming fraction; 0 gives the M-smoother.
    #[arg(long, default_value_t = 0.15)]
    l: f64,
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long, value_enum, default_value = "clip")]
    border: Border,
    #[arg(long, value_enum, default_value = "tm")]
    method: Method,
    #[arg(long, default_value_t = ModeSearch::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = ModeSearch::default().max_iter)]
    max_iter: usize,
    /// JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include wall time in the report (makes it non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    /// Estimate images; percentage changes are relative to the first.
    #[arg(long, required = true)]
    estimate: Vec<PathBuf>,
    /// Optional names for the estimates, in order.
    #[arg(long)]
    name: Vec<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Comma-separated window values in row-major order.
    #[arg(long, conflicts_with_all = ["input", "random_windows"])]
    values: Option<String>,
    /// Image to take a window from (with --row and --col).
    #[arg(long, requires_all = ["row", "col"], conflicts_with = "random_windows")]
    input: Option<PathBuf>,
    #[arg(long)]
    row: Option<usize>,
    #[arg(long)]
    col: Option<usize>,
    /// Number of seeded random windows to probe.
    #[arg(long)]
    random_windows: Option<usize>,
    #[arg(long, default_value_t = 2)]
    radius: usize,
    #[arg(long, default_value_t = 0.15)]
    l: f64,
    /// Number of replaced observations.
    #[arg(long)]
    r: usize,
    #[arg(long)]
    g: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1e1, 1e2, 1e3, 1e6, 1e9])]
    magnitudes: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also estimate the breakdown fraction of each window.
    #[arg(long)]
    breakdown: bool,
    /// Per-trial CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn read_image(path: &Path) -> CliResult<Image> {
    let bytes = fs::read(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    read_pgm(&bytes).map_err(|source| CliError::Input {
        path: path.into(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.into(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(tmsmooth::Error::from)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let (scene, cfg) = match (&a.config, a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let cfg = SceneConfig::from_toml_str(&text)?;
            (cfg.scene(), cfg)
        }
        (None, Some(p)) => {
            let scene = match p {
                Preset::TestCard => SceneSpec::test_card(),
                Preset::Wedge => SceneSpec::wedge(a.angle, 0.0, 255.0),
                Preset::Ramp => SceneSpec::ramp(),
            };
            (scene, SceneConfig::default())
        }
        (None, None) => return Err(CliError::Usage("synth needs --config or --preset".into())),
    };
    let rows = a.rows.or(a.size).or(cfg.rows).unwrap_or(100);
    let cols = a.cols.or(a.size).or(cfg.cols).unwrap_or(rows);
    let truth = rasterize(&scene, GridGeometry::new(rows, cols)?)?;
    write_file(&a.out, &write_pgm(&truth, !a.ascii))?;

    let (lo, hi) = truth
        .pixels()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    println!(
        "scene: {rows}x{cols}, {} region(s), levels {lo}..{hi} -> {}",
        scene.regions.len(),
        a.out.display()
    );
    if let Some(path) = &a.noisy_out {
        let ns = cfg
            .noise
            .ok_or_else(|| CliError::Usage("--noisy-out needs a [noise] table in the config".into()))?;
        let noisy = add_noise(&truth, &ns)?;
        write_file(path, &write_pgm(&noisy, !a.ascii))?;
        println!("noisy copy (seed {}) -> {}", ns.seed, path.display());
    }
    Ok(())
}

fn noise(a: NoiseArgs) -> CliResult<()> {
    let img = read_image(&a.input)?;
    let ns = NoiseSpec {
        sigma: a.sigma,
        truncate: a.truncate,
        p_white: a.p_white,
        p_black: a.p_black,
        white: a.white,
        black: a.black,
        seed: a.seed,
    };
    let noisy = add_noise(&img, &ns)?;
    write_file(&a.out, &write_pgm(&noisy, !a.ascii))
}

#[derive(Serialize)]
struct SmoothRun {
    input: String,
    output: String,
    method: &'static str,
    tol: f64,
    max_iter: usize,
    #[serde(flatten)]
    report: SmoothReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

fn parse_scale(text: &str) -> CliResult<Scale> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(Scale::Auto);
    }
    text.parse::<f64>()
        .ok()
        .filter(|g| *g > 0.0 && g.is_finite())
        .map(Scale::Fixed)
        .ok_or_else(|| CliError::Usage(format!("--g must be `auto` or a positive number, got `{text}`")))
}

fn smooth(a: SmoothArgs) -> CliResult<()> {
    let img = read_image(&a.input)?;
    let params = SmootherParams {
        radius: a.radius,
        g: parse_scale(&a.g)?,
        l: a.l,
        search: ModeSearch {
            tol: a.tol,
            max_iter: a.max_iter,
        },
        border: a.border.into(),
        uniform_weights: false,
    };
    let started = Instant::now();
    let (out, report, method) = match a.method {
        Method::Tm => {
            let (out, report) = smooth_with_report(&img, &params)?;
            (out, report, if params.l > 0.0 { "tm" } else { "m" })
        }
        Method::Median => {
            if a.radius == 0 {
                return Err(CliError::Usage("--radius must be at least 1".into()));
            }
            let report = SmoothReport {
                radius: a.radius,
                border: BorderMode::Clip,
                pixels: img.len(),
                ..Default::default()
            };
            (median_smooth(&img, a.radius)?, report, "median")
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    write_file(&a.out, &write_pgm(&out, !a.ascii))?;
    if method == "median" {
        eprintln!("median: radius {}, {} pixels", report.radius, report.pixels);
    } else {
        eprintln!(
            "{method}: g = {:.4}{}, {} pixels, {} fallback",
            report.g,
            if report.g_auto { " (auto)" } else { "" },
            report.pixels,
            report.fallback_pixels
        );
    }
    if let Some(path) = &a.report {
        let run = SmoothRun {
            input: a.input.display().to_string(),
            output: a.out.display().to_string(),
            method,
            tol: a.tol,
            max_iter: a.max_iter,
            report,
            wall_time_s: a.timing.then_some(elapsed),
        };
        write_json(path, &run)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    name: String,
    path: String,
    #[serde(flatten)]
    metrics: MetricsReport,
    mae_change_pct: f64,
    mse_change_pct: f64,
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let truth = read_image(&a.truth)?;
    let mut rows: Vec<EvalRow> = Vec::new();
    for (k, path) in a.estimate.iter().enumerate() {
        let est = read_image(path)?;
        let m = metrics(&truth, &est).map_err(|source| CliError::Input {
            path: path.clone(),
            source,
        })?;
        let name = a.name.get(k).cloned().unwrap_or_else(|| {
            path.file_stem()
                .map_or_else(|| format!("estimate{k}"), |s| s.to_string_lossy().into_owned())
        });
        let (mae0, mse0) = rows.first().map_or((m.mae, m.mse), |r| (r.metrics.mae, r.metrics.mse));
        rows.push(EvalRow {
            name,
            path: path.display().to_string(),
            mae_change_pct: percent_change(mae0, m.mae),
            mse_change_pct: percent_change(mse0, m.mse),
            metrics: m,
        });
    }
    println!(
        "{:<20} {:>10} {:>9} {:>12} {:>9}",
        "name", "mae", "change", "mse", "change"
    );
    for r in &rows {
        println!(
            "{:<20} {:>10.3} {:>8.1}% {:>12.3} {:>8.1}%",
            r.name, r.metrics.mae, r.mae_change_pct, r.metrics.mse, r.mse_change_pct
        );
    }
    if let Some(path) = &a.csv {
        let mut buf = Vec::new();
        let named: Vec<(String, MetricsReport)> = rows.iter().map(|r| (r.name.clone(), r.metrics.clone())).collect();
        write_csv(&mut buf, &named)?;
        write_file(path, &buf)?;
    }
    if let Some(path) = &a.json {
        write_json(path, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ProbeWindowSummary {
    window: usize,
    clean_estimate: f64,
    worst_bias: f64,
    bound: Option<(f64, f64)>,
    violations: usize,
    trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakdown: Option<Option<f64>>,
}

#[derive(Serialize)]
struct ProbeSummary {
    radius: usize,
    l: f64,
    g: f64,
    r: usize,
    magnitudes: Vec<f64>,
    random_trials: usize,
    seed: u64,
    windows: usize,
    max_worst_bias: f64,
    total_violations: usize,
    per_window: Vec<ProbeWindowSummary>,
}

fn probe(a: ProbeArgs) -> CliResult<()> {
    let windows: Vec<Vec<f64>> = if let Some(text) = &a.values {
        let vals = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("--values: {e}")))?;
        vec![vals]
    } else if let Some(path) = &a.input {
        let img = read_image(path)?;
        let (row, col) = (a.row.unwrap_or(0), a.col.unwrap_or(0));
        let win = img.window(row, col, a.radius, BorderMode::Replicate)?;
        vec![win.values()]
    } else if let Some(n) = a.random_windows {
        random_windows(n, a.radius, a.seed)
    } else {
        return Err(CliError::Usage(
            "probe needs --values, --input or --random-windows".into(),
        ));
    };
    for w in &windows {
        square_window(w, a.radius)?;
    }
    let params = SmootherParams {
        radius: a.radius,
        g: Scale::Fixed(a.g),
        l: a.l,
        ..Default::default()
    };
    let cfg = ProbeConfig {
        magnitudes: a.magnitudes.clone(),
        strategies: Strategy::ALL.to_vec(),
        random_trials: a.trials,
        seed: a.seed,
    };
    let reports = probe_windows(&windows, a.radius, a.r, &params, &cfg)?;
    let mut per_window = Vec::with_capacity(reports.len());
    for (k, rep) in reports.iter().enumerate() {
        let breakdown = if a.breakdown {
            Some(breakdown_estimate(&windows[k], a.radius, &params, &cfg)?)
        } else {
            None
        };
        per_window.push(ProbeWindowSummary {
            window: k,
            clean_estimate: rep.clean_estimate,
            worst_bias: rep.worst_bias,
            bound: rep.bound,
            violations: rep.violations,
            trials: rep.trials.len(),
            breakdown,
        });
    }
    let summary = ProbeSummary {
        radius: a.radius,
        l: a.l,
        g: a.g,
        r: a.r,
        magnitudes: a.magnitudes.clone(),
        random_trials: a.trials,
        seed: a.seed,
        windows: windows.len(),
        max_worst_bias: reports.iter().map(|r| r.worst_bias).fold(0.0, f64::max),
        total_violations: reports.iter().map(|r| r.violations).sum(),
        per_window,
    };
    println!(
        "probed {} window(s), r = {}, l = {}, g = {}: max worst bias {:.6e}, bound violations {}",
        summary.windows, summary.r, summary.l, summary.g, summary.max_worst_bias, summary.total_violations
    );
    if windows.len() == 1 {
        let w = &summary.per_window[0];
        if let Some((lo, hi)) = w.bound {
            println!("support bound [{lo:.6}, {hi:.6}]");
        }
        if let Some(b) = w.breakdown {
            match b {
                Some(f) => println!("breakdown at fraction {f:.6}"),
                None => println!("no breakdown below half the window"),
            }
        }
    }
    if let Some(path) = &a.csv {
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &reports)?;
        write_file(path, &buf)?;
    }
    if let Some(path) = &a.json {
        write_json(path, &summary)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Noise(a) => noise(a),
        Command::Smooth(a) => smooth(a),
        Command::Eval(a) => eval(a),
        Command::Probe(a) => probe(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
