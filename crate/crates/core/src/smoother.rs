//! Per-pixel M- and TM-smoothing, automatic scale selection and a median
//! baseline.

use rayon::prelude::*;

use crate::density::{DensityField, ModeSearch};
use crate::error::{Error, Result};
use crate::image::{BorderMode, Image, Window};
use crate::lts::{trim_values, TrimConfig};

/// Intensity bandwidth: either fixed or the median of window IQRs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Scale {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherParams {
    /// Window half-width in pixels; 2 gives the 5x5 window.
    pub radius: usize,
    pub g: Scale,
    /// Trimming fraction; 0 selects the plain M-smoother.
    pub l: f64,
    pub search: ModeSearch,
    pub border: BorderMode,
    /// Diagnostic: give every window entry the same spatial weight.
    pub uniform_weights: bool,
}

impl Default for SmootherParams {
    fn default() -> Self {
        SmootherParams {
            radius: 2,
            g: Scale::Auto,
            l: 0.15,
            search: ModeSearch::default(),
            border: BorderMode::Clip,
            uniform_weights: false,
        }
    }
}

impl SmootherParams {
    /// The M-smoother with a fixed bandwidth.
    pub fn m_smoother(g: f64) -> Self {
        SmootherParams {
            g: Scale::Fixed(g),
            l: 0.0,
            ..Default::default()
        }
    }

    /// The TM-smoother with a fixed bandwidth and trimming fraction.
    pub fn tm_smoother(g: f64, l: f64) -> Self {
        SmootherParams {
            g: Scale::Fixed(g),
            l,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::arg("window radius must be at least 1"));
        }
        TrimConfig::new(self.l)?;
        if let Scale::Fixed(g) = self.g {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::arg(format!("g = {g} must be positive")));
            }
        }
        if !(self.search.tol > 0.0) {
            return Err(Error::arg("tolerance must be positive"));
        }
        Ok(())
    }

    /// Resolves an automatic scale against `img`.
    pub fn resolve_g(&self, img: &Image) -> Result<f64> {
        match self.g {
            Scale::Fixed(g) => Ok(g),
            Scale::Auto => auto_scale(img, self.radius),
        }
    }
}

/// Counters gathered over one smoothing pass.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct SmoothReport {
    pub g: f64,
    pub g_auto: bool,
    pub l: f64,
    pub radius: usize,
    pub border: BorderMode,
    pub pixels: usize,
    /// Window entries removed by trimming, summed over pixels.
    pub trimmed_entries: usize,
    /// Pixels whose density field was degenerate and fell back to the window median.
    pub fallback_pixels: usize,
    pub nonconverged_pixels: usize,
    pub boundary_modes: usize,
    /// Pixels whose start value lay outside the retained support.
    pub both_direction_searches: usize,
}

/// Result of smoothing a single pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelOutcome {
    pub value: f64,
    pub trimmed: usize,
    pub fallback: bool,
    pub converged: bool,
    pub boundary: bool,
    pub both_directions: bool,
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Estimate at the center of `win` with a resolved bandwidth `g`.
pub fn smooth_window(win: &Window, g: f64, params: &SmootherParams) -> Result<PixelOutcome> {
    let weights = if params.uniform_weights {
        vec![1.0; win.len()]
    } else {
        DensityField::from_window(win, g)?.weights().to_vec()
    };
    smooth_values(win.values(), weights, win.center_index(), g, params)
}

/// Estimate from raw window values and spatial weights; `center` indexes the
/// start observation.
pub(crate) fn smooth_values(
    values: Vec<f64>,
    weights: Vec<f64>,
    center: usize,
    g: f64,
    params: &SmootherParams,
) -> Result<PixelOutcome> {
    let trim = TrimConfig::new(params.l)?;
    // the start is the untrimmed center observation, even when it was trimmed
    let start = values[center];
    let mut trimmed = 0;
    let mut retained = None;
    if params.l > 0.0 {
        let outcome = trim_values(&values, trim)?;
        trimmed = outcome.r;
        retained = Some(outcome.retained);
    }
    let mut field = DensityField::new(values, weights, g)?;
    if let Some(positions) = retained {
        field = field.with_retained(&positions)?;
    }
    match field.nearest_mode(start, &params.search) {
        Ok(m) => Ok(PixelOutcome {
            value: m.mode,
            trimmed,
            fallback: false,
            converged: m.converged,
            boundary: m.boundary,
            both_directions: m.direction == crate::density::Direction::Both,
        }),
        Err(Error::DegenerateField) => Ok(PixelOutcome {
            value: lower_median(&mut field.values().to_vec()),
            trimmed,
            fallback: true,
            converged: false,
            boundary: false,
            both_directions: false,
        }),
        Err(e) => Err(e),
    }
}

/// Estimate at one pixel of `img` with a resolved bandwidth `g`.
pub fn smooth_pixel(img: &Image, row: usize, col: usize, g: f64, params: &SmootherParams) -> Result<PixelOutcome> {
    let win = img.window(row, col, params.radius, params.border)?;
    smooth_window(&win, g, params)
}

/// Smooths every pixel of `img`.
pub fn smooth(img: &Image, params: &SmootherParams) -> Result<Image> {
    smooth_with_report(img, params).map(|(out, _)| out)
}

/// Smooths every pixel and reports the resolved bandwidth and counters.
///
/// Pixels are independent, so rows are processed in parallel; the result
/// does not depend on the schedule.
pub fn smooth_with_report(img: &Image, params: &SmootherParams) -> Result<(Image, SmoothReport)> {
    params.validate()?;
    let g = params.resolve_g(img)?;
    let (w, h) = (img.width(), img.height());
    let rows: Vec<Vec<PixelOutcome>> = (0..h)
        .into_par_iter()
        .map(|row| (0..w).map(|col| smooth_pixel(img, row, col, g, params)).collect())
        .collect::<Result<_>>()?;

    let mut report = SmoothReport {
        g,
        g_auto: matches!(params.g, Scale::Auto),
        l: params.l,
        radius: params.radius,
        border: params.border,
        pixels: w * h,
        ..Default::default()
    };
    let mut pixels = Vec::with_capacity(w * h);
    for o in rows.iter().flatten() {
        pixels.push(o.value);
        report.trimmed_entries += o.trimmed;
        report.fallback_pixels += o.fallback as usize;
        report.nonconverged_pixels += (!o.converged && !o.fallback) as usize;
        report.boundary_modes += o.boundary as usize;
        report.both_direction_searches += o.both_directions as usize;
    }
    Ok((Image::new(w, h, pixels)?, report))
}

/// Interquartile range with quartiles at ranks `ceil(k/4)` and `ceil(3k/4)`.
pub fn window_iqr(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    let q1 = values[k.div_ceil(4) - 1];
    let q3 = values[(3 * k).div_ceil(4) - 1];
    q3 - q1
}

/// Median over all pixel windows of the window interquartile range.
pub fn auto_scale(img: &Image, radius: usize) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    let mut iqrs: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).map(move |col| {
                let win = img.window(row, col, radius, BorderMode::Clip).expect("in bounds");
                window_iqr(&mut win.values())
            })
        })
        .collect();
    let g = lower_median(&mut iqrs);
    if g < 1e-6 {
        return Err(Error::DegenerateScale(g));
    }
    Ok(g)
}

/// Window median with the lower middle value on even counts.
pub fn median_smooth(img: &Image, radius: usize) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|row| {
            (0..w)
                .map(|col| {
                    let win = img.window(row, col, radius, BorderMode::Clip).expect("in bounds");
                    lower_median(&mut win.values())
                })
                .collect()
        })
        .collect();
    Image::new(w, h, rows.concat())
}
