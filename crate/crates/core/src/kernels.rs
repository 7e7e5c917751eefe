//! Truncated standard-normal kernels.
//!
//! The intensity kernel `L` is the standard normal density restricted to the
//! open interval `(-1, 1)` and renormalized to unit mass. The spatial kernel
//! `K` is the product of two such densities on the closed square `[-1, 1]^2`,
//! so every position of a `(2w+1)^2` window (whose outer ring sits at
//! `|u| = 1`) carries positive weight.

use std::f64::consts::PI;

/// Mass of the standard normal on `(-1, 1)`, `erf(1/sqrt 2)`.
pub const TRUNCATED_MASS: f64 = 0.682_689_492_137_085_9;

#[inline]
fn gauss(v: f64) -> f64 {
    (-0.5 * v * v).exp() / (2.0 * PI).sqrt()
}

/// Intensity kernel `L(v)`.
#[inline]
pub fn l0(v: f64) -> f64 {
    if v.abs() < 1.0 {
        gauss(v) / TRUNCATED_MASS
    } else {
        0.0
    }
}

/// `L'(v)`.
#[inline]
pub fn l1(v: f64) -> f64 {
    if v.abs() < 1.0 {
        -v * (gauss(v) / TRUNCATED_MASS)
    } else {
        0.0
    }
}

/// `L''(v)`.
#[inline]
pub fn l2(v: f64) -> f64 {
    if v.abs() < 1.0 {
        (v * v - 1.0) * (gauss(v) / TRUNCATED_MASS)
    } else {
        0.0
    }
}

/// All three of `L, L', L''` at once (one exponential).
#[inline]
pub fn l012(v: f64) -> (f64, f64, f64) {
    if v.abs() < 1.0 {
        let p = gauss(v) / TRUNCATED_MASS;
        (p, -v * p, (v * v - 1.0) * p)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// `(L, L', L'')` by the interior formula, also at `|v| = 1` (the one-sided
/// limits from inside the support).
#[inline]
pub(crate) fn l012_closed(v: f64) -> (f64, f64, f64) {
    let p = gauss(v) / TRUNCATED_MASS;
    (p, -v * p, (v * v - 1.0) * p)
}

#[inline]
fn closed_factor(v: f64) -> f64 {
    if v.abs() <= 1.0 {
        gauss(v) / TRUNCATED_MASS
    } else {
        0.0
    }
}

/// Spatial kernel `K(u) = L(u1) L(u2)`, supported on the closed square.
#[inline]
pub fn k2(u: [f64; 2]) -> f64 {
    closed_factor(u[0]) * closed_factor(u[1])
}
