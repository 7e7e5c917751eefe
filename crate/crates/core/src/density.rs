//! Window density fields and the nearest-mode search.
//!
//! A [`DensityField`] is the kernel density estimate
//! `F(y) = sum_k w_k L_g(y - Y_k)` over the retained window observations,
//! with `L_g(v) = L(v/g)/g` and spatial weights `w_k = K_h(x0 - x_k)/n^2`.
//! Because `L` is a truncated Gaussian, `F` is smooth except at the
//! breakpoints `Y_k +- g`, where it may jump. The mode search walks from the
//! starting value one smooth piece at a time, so an ascent can never step over
//! the nearest local maximum in its direction.

use crate::error::{Error, Result};
use crate::image::Window;
use crate::kernels::{k2, l012_closed};

/// Controls for [`DensityField::nearest_mode`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeSearch {
    /// Convergence tolerance on the dimensionless slope `g^2 |F'|`.
    pub tol: f64,
    /// Newton iterations before falling back to a grid scan.
    pub max_iter: usize,
}

impl Default for ModeSearch {
    fn default() -> Self {
        ModeSearch {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl ModeSearch {
    /// Threshold on `|F'|` for bandwidth `g`.
    pub fn slope_tol(&self, g: f64) -> f64 {
        self.tol / (g * g)
    }
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const POLISH_STEPS: usize = 3;
const POLISH_MAX: f64 = 1e-3;
/// Newton steps are capped at `g * MAX_STEP`; convex-region steps are `g * CONVEX_STEP`.
const MAX_STEP: f64 = 0.25;
const CONVEX_STEP: f64 = 1.0 / 16.0;
/// Grid-scan resolution as a fraction of `g`.
const SCAN_STEP: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Both,
    Stay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    pub mode: f64,
    pub iterations: usize,
    pub direction: Direction,
    /// `g^2 |F'(mode)| <= tol` for a smooth mode; always true for a boundary mode.
    pub converged: bool,
    /// The mode sits on a support breakpoint where `F` drops (or `F'` flips
    /// sign across a kink) rather than at a zero of `F'`.
    pub boundary: bool,
    /// `F(mode)`; for a boundary mode the larger one-sided limit.
    pub field_value: f64,
    /// `(y, F(y))` of the accepted ascent iterates of the winning search branch.
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    f: f64,
    d1: f64,
    d2: f64,
}

#[derive(Debug, Clone)]
struct Found {
    y: f64,
    f: f64,
    converged: bool,
    boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
    weights: Vec<f64>,
    retained: Vec<bool>,
    g: f64,
    /// Per-entry support `(Y - g, Y + g)`.
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Sorted, deduplicated support endpoints of retained entries with positive weight.
    breakpoints: Vec<f64>,
}

impl DensityField {
    /// A field over all `values` with the given nonnegative spatial weights.
    pub fn new(values: Vec<f64>, weights: Vec<f64>, g: f64) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::arg(format!("intensity bandwidth g = {g} must be positive")));
        }
        if values.len() != weights.len() {
            return Err(Error::arg("values and weights differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite observation"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::arg("spatial weights must be finite and nonnegative"));
        }
        let lo = values.iter().map(|y| y - g).collect();
        let hi = values.iter().map(|y| y + g).collect();
        let retained = vec![true; values.len()];
        let mut field = DensityField {
            values,
            weights,
            retained,
            g,
            lo,
            hi,
            breakpoints: Vec::new(),
        };
        field.rebuild_breakpoints();
        Ok(field)
    }

    /// Field of a window, weighting each entry by `K(u) / (h1 h2 n1 n2)`.
    pub fn from_window(win: &Window, g: f64) -> Result<Self> {
        if win.radius == 0 {
            return Err(Error::arg("window radius must be at least 1"));
        }
        let norm = win.h[0] * win.h[1] * win.n[0] as f64 * win.n[1] as f64;
        let weights = win.entries.iter().map(|e| k2(e.offset) / norm).collect();
        DensityField::new(win.values(), weights, g)
    }

    /// Restricts the field to the entries at `positions` (the trimmed set).
    pub fn with_retained(mut self, positions: &[usize]) -> Result<Self> {
        let mut mask = vec![false; self.values.len()];
        for &p in positions {
            *mask
                .get_mut(p)
                .ok_or_else(|| Error::arg(format!("retained position {p} out of range")))? = true;
        }
        self.retained = mask;
        self.rebuild_breakpoints();
        Ok(self)
    }

    fn rebuild_breakpoints(&mut self) {
        let mut bp: Vec<f64> = Vec::with_capacity(2 * self.values.len());
        for k in self.active() {
            bp.push(self.lo[k]);
            bp.push(self.hi[k]);
        }
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        self.breakpoints = bp;
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(move |&k| self.retained[k] && self.weights[k] > 0.0)
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn retained_mask(&self) -> &[bool] {
        &self.retained
    }

    /// `[min, max]` of the retained observations with positive weight.
    pub fn retained_range(&self) -> Option<(f64, f64)> {
        self.active().fold(None, |acc, k| {
            let y = self.values[k];
            Some(match acc {
                None => (y, y),
                Some((a, b)) => (f64::min(a, y), f64::max(b, y)),
            })
        })
    }

    /// Sums the retained kernel terms; `side` selects a one-sided limit
    /// (`+1` from above, `-1` from below, `0` the plain value).
    fn eval_side(&self, y: f64, side: i8) -> Eval {
        let g = self.g;
        let (mut f, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for k in 0..self.values.len() {
            if !self.retained[k] {
                continue;
            }
            let (lo, hi) = (self.lo[k], self.hi[k]);
            let inside = match side {
                0 => lo < y && y < hi,
                s if s > 0 => lo <= y && y < hi,
                _ => lo < y && y <= hi,
            };
            if !inside {
                continue;
            }
            // membership was decided on the breakpoints; clamp rounding at the edges
            let v = ((y - self.values[k]) / g).clamp(-1.0, 1.0);
            let (p, p1, p2) = l012_closed(v);
            let w = self.weights[k];
            f += w * p;
            d1 += w * p1;
            d2 += w * p2;
        }
        Eval {
            f: f / g,
            d1: d1 / (g * g),
            d2: d2 / (g * g * g),
        }
    }

    /// `F(y)`.
    pub fn value(&self, y: f64) -> f64 {
        self.eval_side(y, 0).f
    }

    /// `F'(y)`.
    pub fn d1(&self, y: f64) -> f64 {
        self.eval_side(y, 0).d1
    }

    /// `F''(y)`.
    pub fn d2(&self, y: f64) -> f64 {
        self.eval_side(y, 0).d2
    }

    /// `(F, F', F'')` at `y`.
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        let e = self.eval_side(y, 0);
        (e.f, e.d1, e.d2)
    }

    fn next_breakpoint(&self, y: f64, dir: i8) -> Option<f64> {
        if dir > 0 {
            let i = self.breakpoints.partition_point(|&b| b <= y);
            self.breakpoints.get(i).copied()
        } else {
            let i = self.breakpoints.partition_point(|&b| b < y);
            i.checked_sub(1).map(|i| self.breakpoints[i])
        }
    }

    /// Local maximum of `F` nearest to `start`, per the M/TM selection rule.
    ///
    /// An ascending start climbs to the first maximum in its ascending
    /// direction. A stationary maximum is returned as is. A start where
    /// `F = 0` (an outlier outside the retained support) or a stationary
    /// non-maximum searches both directions and keeps the closer maximum,
    /// the smaller one on an exact tie.
    pub fn nearest_mode(&self, start: f64, search: &ModeSearch) -> Result<ModeResult> {
        if self.active().next().is_none() {
            return Err(Error::DegenerateField);
        }
        if !start.is_finite() {
            return Err(Error::arg("mode search start must be finite"));
        }
        if !(search.tol > 0.0) {
            return Err(Error::arg("mode search tolerance must be positive"));
        }
        let mut walker = Walker {
            field: self,
            search,
            iterations: 0,
            trace: Vec::new(),
        };
        let e = self.eval_side(start, 0);
        let tol = search.slope_tol(self.g);

        if e.f > 0.0 && e.d1.abs() > tol {
            let dir = if e.d1 > 0.0 { 1 } else { -1 };
            let found = walker.ascend(start, dir);
            return Ok(walker.finish(found, if dir > 0 { Direction::Up } else { Direction::Down }));
        }
        if e.f > 0.0 && e.d2 < 0.0 {
            let found = Found {
                y: start,
                f: e.f,
                converged: true,
                boundary: false,
            };
            walker.trace.push((start, e.f));
            return Ok(walker.finish(found, Direction::Stay));
        }

        let mut up = Walker {
            field: self,
            search,
            iterations: 0,
            trace: Vec::new(),
        };
        let up_found = up.first_max(start, 1);
        let down_found = walker.first_max(start, -1);
        let iterations = up.iterations + walker.iterations;
        let (found, mut chosen) = match (up_found, down_found) {
            (Some(u), Some(d)) => {
                if (u.y - start).abs() < (start - d.y).abs() {
                    (u, up)
                } else {
                    (d, walker)
                }
            }
            (Some(u), None) => (u, up),
            (None, Some(d)) => (d, walker),
            (None, None) => return Err(Error::DegenerateField),
        };
        chosen.iterations = iterations;
        Ok(chosen.finish(found, Direction::Both))
    }
}

struct Walker<'a> {
    field: &'a DensityField,
    search: &'a ModeSearch,
    iterations: usize,
    trace: Vec<(f64, f64)>,
}

impl Walker<'_> {
    fn finish(self, found: Found, direction: Direction) -> ModeResult {
        ModeResult {
            mode: found.y,
            iterations: self.iterations,
            direction,
            converged: found.converged,
            boundary: found.boundary,
            field_value: found.f,
            trace: self.trace,
        }
    }

    /// A few pure Newton steps inside the current smooth piece, kept only
    /// while they raise `F` and shrink `|F'|`.
    fn polish(&mut self, mut y: f64, mut e: Eval) -> (f64, Eval) {
        let f = self.field;
        for _ in 0..POLISH_STEPS {
            if !(e.d2 < 0.0) || e.d1 == 0.0 {
                break;
            }
            let step = -e.d1 / e.d2;
            if step.abs() > f.g * POLISH_MAX {
                break;
            }
            let dir = if step > 0.0 { 1 } else { -1 };
            if f.next_breakpoint(y, dir).is_some_and(|b| (b - y).abs() <= step.abs()) {
                break;
            }
            let cand = y + step;
            let next = f.eval_side(cand, 0);
            if cand == y || next.f < e.f || next.d1.abs() >= e.d1.abs() {
                break;
            }
            self.iterations += 1;
            y = cand;
            e = next;
        }
        (y, e)
    }

    /// Nearest local maximum strictly beyond `y0` in direction `dir`,
    /// passing through any descending or empty stretch first.
    fn first_max(&mut self, y0: f64, dir: i8) -> Option<Found> {
        let f = self.field;
        let d = dir as f64;
        let tol = self.search.slope_tol(f.g);
        let step = f.g * SCAN_STEP;
        let mut y = y0;
        loop {
            let here = f.eval_side(y, dir);
            if here.f > 0.0 && here.d1 * d > tol {
                return Some(self.ascend(y, dir));
            }
            let b = f.next_breakpoint(y, dir)?;
            let next = if here.f == 0.0 || (b - y).abs() <= step {
                b
            } else {
                y + d * step
            };
            self.iterations += 1;
            if next == b {
                let before = f.eval_side(b, -dir);
                let after = f.eval_side(b, dir);
                if after.f > before.f && after.d1 * d <= tol {
                    return Some(Found {
                        y: b,
                        f: after.f,
                        converged: true,
                        boundary: true,
                    });
                }
            }
            y = next;
        }
    }

    /// Climbs from `y`, where `F` increases in direction `dir`, to the first
    /// local maximum.
    fn ascend(&mut self, mut y: f64, dir: i8) -> Found {
        let f = self.field;
        let d = dir as f64;
        let tol = self.search.slope_tol(f.g);
        let g = f.g;
        let mut newton_iters = 0;
        let mut scanning = false;
        let mut here = f.eval_side(y, dir);
        self.trace.push((y, here.f));

        loop {
            if here.d1.abs() <= tol {
                let (y, e) = self.polish(y, here);
                return Found {
                    y,
                    f: e.f,
                    converged: true,
                    boundary: false,
                };
            }
            let b = f.next_breakpoint(y, dir).unwrap_or(f64::INFINITY * d);
            if newton_iters >= self.search.max_iter {
                scanning = true;
            }

            let (y_new, behind) = if scanning {
                let y_new = if (b - y).abs() <= g * SCAN_STEP {
                    b
                } else {
                    y + d * g * SCAN_STEP
                };
                self.iterations += 1;
                (y_new, f.eval_side(y_new, -dir))
            } else {
                newton_iters += 1;
                self.iterations += 1;
                let mut delta = if here.d2 < 0.0 {
                    -here.d1 / here.d2
                } else {
                    d * g * CONVEX_STEP
                };
                delta = delta.clamp(-g * MAX_STEP, g * MAX_STEP);
                let target = if delta.abs() >= (b - y).abs() { b } else { y + delta };
                delta = target - y;
                let mut alpha = 1.0;
                let mut accepted = None;
                for _ in 0..=MAX_BACKTRACKS {
                    let cand = if alpha == 1.0 { target } else { y + alpha * delta };
                    let e = f.eval_side(cand, -dir);
                    if cand != y && e.f >= here.f + ARMIJO_C1 * alpha * here.d1 * delta {
                        accepted = Some((cand, e));
                        break;
                    }
                    alpha *= 0.5;
                }
                match accepted {
                    Some(a) => a,
                    None => {
                        scanning = true;
                        continue;
                    }
                }
            };

            if behind.d1 * d < -tol || (scanning && behind.d1 * d <= tol && y_new != b) {
                // F' changed sign inside (y, y_new]
                return self.bracketed(y, y_new, dir);
            }
            if y_new == b {
                let after = f.eval_side(b, dir);
                if after.f < behind.f || after.d1 * d <= tol {
                    self.trace.push((b, behind.f.max(after.f)));
                    return Found {
                        y: b,
                        f: behind.f.max(after.f),
                        converged: true,
                        boundary: true,
                    };
                }
                y = b;
                here = after;
            } else {
                y = y_new;
                here = f.eval_side(y, dir);
            }
            self.trace.push((y, here.f));
        }
    }

    /// `F'` points along `dir` at `a` and not at `b`, both in one smooth
    /// piece: scan for the first sign change, then bisect it.
    fn bracketed(&mut self, a: f64, b: f64, dir: i8) -> Found {
        let f = self.field;
        let d = dir as f64;
        let tol = self.search.slope_tol(f.g);
        let step = f.g * SCAN_STEP;
        let slope = |y: f64| {
            // b may sit on a breakpoint; approach it from inside the piece
            if y == b {
                f.eval_side(y, -dir)
            } else {
                f.eval_side(y, 0)
            }
        };

        let mut lo = a;
        let mut hi = b;
        let mut y = a;
        while (b - y).abs() > step {
            let p = y + d * step;
            self.iterations += 1;
            if slope(p).d1 * d <= 0.0 {
                hi = p;
                break;
            }
            lo = p;
            y = p;
        }

        // safeguarded Newton: bisect whenever the Newton point leaves the
        // bracket or fails to halve the previous step
        let mut x = 0.5 * (lo + hi);
        let mut last_step = (hi - lo).abs();
        for _ in 0..200 {
            self.iterations += 1;
            let e = slope(x);
            if e.d1.abs() <= tol {
                let (x, e) = self.polish(x, e);
                self.trace.push((x, e.f));
                return Found {
                    y: x,
                    f: e.f,
                    converged: true,
                    boundary: false,
                };
            }
            if e.d1 * d > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let (left, right) = (lo.min(hi), lo.max(hi));
            let newton = if e.d2 < 0.0 { x - e.d1 / e.d2 } else { f64::NAN };
            let next = if newton > left && newton < right && (newton - x).abs() <= 0.5 * last_step {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == lo || next == hi {
                break;
            }
            last_step = (next - x).abs();
            x = next;
        }
        let (el, eh) = (slope(lo), slope(hi));
        let (y, e) = if el.d1.abs() <= eh.d1.abs() { (lo, el) } else { (hi, eh) };
        self.trace.push((y, e.f));
        Found {
            y,
            f: e.f,
            converged: e.d1.abs() <= tol,
            boundary: false,
        }
    }
}
