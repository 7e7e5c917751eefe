//! Synthetic piecewise-constant scenes and the contaminated noise model.
//!
//! A scene is `m(x) = mu(x) + sum_k d_k 1{x in D_k}` on the unit square, where
//! `x = (x1, x2)` is the (row, column) design coordinate. Regions are closed
//! sets: boundary points belong to the region.
//!
//! Noise follows `Y = (1 - delta)(m + eps) + delta * outlier`, with `delta`
//! choosing a white or black outlier and `eps` Gaussian. Every pixel draws
//! from its own ChaCha stream keyed by `(seed, pixel index)`, so results do
//! not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GridGeometry, Image};

const MEMBERSHIP_EPS: f64 = 1e-12;

/// Background field `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    Constant(f64),
    /// `c0 + c1 * x1 + c2 * x2`.
    Affine([f64; 3]),
}

impl Default for Base {
    fn default() -> Self {
        Base::Constant(0.0)
    }
}

impl Base {
    pub fn at(&self, x: [f64; 2]) -> f64 {
        match *self {
            Base::Constant(c) => c,
            Base::Affine([c0, c1, c2]) => c0 + c1 * x[0] + c2 * x[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// Points within `extent` of `vertex` whose direction lies within
    /// `angle_deg / 2` of `bisector`.
    Wedge {
        vertex: [f64; 2],
        bisector: [f64; 2],
        angle_deg: f64,
        #[serde(default = "default_extent")]
        extent: f64,
    },
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    /// Axis-aligned rectangle spanned by two opposite corners.
    Rectangle {
        from: [f64; 2],
        to: [f64; 2],
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

fn default_extent() -> f64 {
    f64::INFINITY
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Wedge {
                bisector,
                angle_deg,
                extent,
                ..
            } => {
                if !(*angle_deg > 0.0 && *angle_deg < 360.0) {
                    return Err(Error::Config(format!("wedge angle {angle_deg} not in (0, 360)")));
                }
                if bisector[0].hypot(bisector[1]) == 0.0 {
                    return Err(Error::Config("wedge bisector must be nonzero".into()));
                }
                if !(*extent > 0.0) {
                    return Err(Error::Config("wedge extent must be positive".into()));
                }
            }
            Shape::Disk { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("disk radius must be positive".into()));
                }
            }
            Shape::Rectangle { .. } => {}
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::Config("polygon needs at least 3 vertices".into()));
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership of `p`.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Wedge {
                vertex,
                bisector,
                angle_deg,
                extent,
            } => {
                let q = [p[0] - vertex[0], p[1] - vertex[1]];
                let dist = q[0].hypot(q[1]);
                if dist > extent + MEMBERSHIP_EPS {
                    return false;
                }
                if dist == 0.0 {
                    return true;
                }
                let b = bisector[0].hypot(bisector[1]);
                let cos = ((q[0] * bisector[0] + q[1] * bisector[1]) / (dist * b)).clamp(-1.0, 1.0);
                cos.acos() <= angle_deg.to_radians() / 2.0 + MEMBERSHIP_EPS
            }
            Shape::Disk { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) <= radius + MEMBERSHIP_EPS,
            Shape::Rectangle { from, to } => (0..2).all(|k| {
                let (a, b) = (from[k].min(to[k]), from[k].max(to[k]));
                p[k] >= a - MEMBERSHIP_EPS && p[k] <= b + MEMBERSHIP_EPS
            }),
            Shape::Polygon { vertices } => polygon_contains(vertices, p),
        }
    }
}

fn polygon_contains(vs: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = vs.len();
    let mut inside = false;
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        // on the edge counts as inside
        let (ab, ap) = ([b[0] - a[0], b[1] - a[1]], [p[0] - a[0], p[1] - a[1]]);
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let closest = [a[0] + t * ab[0], a[1] + t * ab[1]];
        if (p[0] - closest[0]).hypot(p[1] - closest[1]) <= MEMBERSHIP_EPS {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// A jump region `D` with height `d > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub height: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub base: Base,
    #[serde(default, rename = "region")]
    pub regions: Vec<RegionSpec>,
}

impl SceneSpec {
    pub fn constant(level: f64) -> Self {
        SceneSpec {
            base: Base::Constant(level),
            regions: Vec::new(),
        }
    }

    pub fn with_region(mut self, shape: Shape, height: f64) -> Self {
        self.regions.push(RegionSpec { shape, height });
        self
    }

    /// Two-level scene with a single wedge of the given angle, vertex at the
    /// center of the unit square, opening toward increasing rows.
    pub fn wedge(angle_deg: f64, low: f64, high: f64) -> Self {
        SceneSpec::constant(low).with_region(
            Shape::Wedge {
                vertex: [0.5, 0.5],
                bisector: [1.0, 0.0],
                angle_deg,
                extent: f64::INFINITY,
            },
            high - low,
        )
    }

    /// Smooth affine ramp from 50 to 210 with no jumps.
    pub fn ramp() -> Self {
        SceneSpec {
            base: Base::Affine([50.0, 100.0, 60.0]),
            regions: Vec::new(),
        }
    }

    /// A geometric test card: sharp and blunt corners, straight and curved
    /// edges over a dark background, levels in 0..=255.
    pub fn test_card() -> Self {
        SceneSpec::constant(30.0)
            .with_region(
                Shape::Rectangle {
                    from: [0.08, 0.08],
                    to: [0.42, 0.45],
                },
                120.0,
            )
            .with_region(
                Shape::Polygon {
                    vertices: vec![[0.10, 0.55], [0.45, 0.92], [0.45, 0.60]],
                },
                200.0,
            )
            .with_region(
                Shape::Disk {
                    center: [0.72, 0.25],
                    radius: 0.17,
                },
                70.0,
            )
            .with_region(
                Shape::Wedge {
                    vertex: [0.55, 0.60],
                    bisector: [1.0, 0.6],
                    angle_deg: 40.0,
                    extent: 0.38,
                },
                160.0,
            )
            .with_region(
                Shape::Polygon {
                    vertices: vec![[0.60, 0.45], [0.92, 0.45], [0.92, 0.58], [0.75, 0.52]],
                },
                95.0,
            )
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.regions {
            r.shape.validate()?;
            if !(r.height > 0.0 && r.height.is_finite()) {
                return Err(Error::Config(format!("region height {} must be positive", r.height)));
            }
        }
        Ok(())
    }

    /// `m(x)` at a point of the unit square.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        self.base.at(x)
            + self
                .regions
                .iter()
                .filter(|r| r.shape.contains(x))
                .map(|r| r.height)
                .sum::<f64>()
    }

    /// Which regions contain `x`, as a bitmask over region order (first 64).
    pub fn membership(&self, x: [f64; 2]) -> u64 {
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.shape.contains(x))
            .fold(0, |m, (k, _)| m | (1u64 << (k % 64)))
    }
}

/// Renders `scene` at the design points of `geom`, without anti-aliasing.
pub fn rasterize(scene: &SceneSpec, geom: GridGeometry) -> Result<Image> {
    scene.validate()?;
    Image::from_fn(geom.n_cols, geom.n_rows, |row, col| {
        let x = geom.design_point(row, col).expect("in range");
        scene.value_at(x)
    })
}

/// Per-pixel region class for region-wise metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    /// Not inside any region and no region boundary nearby.
    Outside,
    /// Inside at least one region and no region boundary nearby.
    Inside,
    /// Within `band` pixels (Chebyshev) of a pixel with a different membership.
    Edge,
}

/// Classifies every pixel as inside, outside, or near an edge.
pub fn region_classes(scene: &SceneSpec, geom: GridGeometry, band: usize) -> Vec<RegionClass> {
    let (rows, cols) = (geom.n_rows, geom.n_cols);
    let member: Vec<u64> = (0..rows * cols)
        .map(|k| scene.membership(geom.design_point(k / cols, k % cols).expect("in range")))
        .collect();
    let b = band as isize;
    (0..rows * cols)
        .map(|k| {
            let (r, c) = ((k / cols) as isize, (k % cols) as isize);
            let m = member[k];
            for dr in -b..=b {
                for dc in -b..=b {
                    let (rr, cc) = (r + dr, c + dc);
                    let inside = rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols;
                    if inside && member[rr as usize * cols + cc as usize] != m {
                        return RegionClass::Edge;
                    }
                }
            }
            if m == 0 {
                RegionClass::Outside
            } else {
                RegionClass::Inside
            }
        })
        .collect()
}

/// Background noise and outlier contamination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of the Gaussian background noise.
    pub sigma: f64,
    /// If set, the noise is truncated to `(-a, a)` by rejection.
    pub truncate: Option<f64>,
    pub p_white: f64,
    pub p_black: f64,
    pub white: f64,
    pub black: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: 0.0,
            truncate: None,
            p_white: 0.0,
            p_black: 0.0,
            white: 255.0,
            black: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma {} must be >= 0", self.sigma)));
        }
        let probs_ok = (0.0..=1.0).contains(&self.p_white)
            && (0.0..=1.0).contains(&self.p_black)
            && self.p_white + self.p_black <= 1.0;
        if !probs_ok {
            return Err(Error::Config(
                "outlier probabilities must be in [0,1] and sum to at most 1".into(),
            ));
        }
        if let Some(a) = self.truncate {
            if !(a > 0.0) {
                return Err(Error::Config(format!("truncation bound {a} must be positive")));
            }
        }
        Ok(())
    }
}

/// Outcome of the noise draw for one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelNoise {
    White,
    Black,
    Clean(f64),
}

/// The noise draw for the pixel at row-major position `index`.
pub fn draw_pixel_noise(ns: &NoiseSpec, index: u64) -> PixelNoise {
    let mut rng = ChaCha8Rng::seed_from_u64(ns.seed);
    rng.set_stream(index);
    let u: f64 = rng.random();
    if u < ns.p_white {
        return PixelNoise::White;
    }
    if u < ns.p_white + ns.p_black {
        return PixelNoise::Black;
    }
    if ns.sigma == 0.0 {
        return PixelNoise::Clean(0.0);
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let eps = ns.sigma * z;
        match ns.truncate {
            Some(a) if eps.abs() >= a => continue,
            _ => return PixelNoise::Clean(eps),
        }
    }
}

/// Applies the contaminated noise model to `img`.
pub fn add_noise(img: &Image, ns: &NoiseSpec) -> Result<Image> {
    ns.validate()?;
    let pixels = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(k, &m)| match draw_pixel_noise(ns, k as u64) {
            PixelNoise::White => ns.white,
            PixelNoise::Black => ns.black,
            PixelNoise::Clean(eps) => m + eps,
        })
        .collect();
    Image::new(img.width(), img.height(), pixels)
}

/// Scene and optional noise as read from a TOML config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    #[serde(default)]
    pub base: Base,
    #[serde(default, rename = "region")]
    pub regions: Vec<RegionSpec>,
    pub noise: Option<NoiseSpec>,
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.scene().validate()?;
        if let Some(n) = &cfg.noise {
            n.validate()?;
        }
        Ok(cfg)
    }

    pub fn scene(&self) -> SceneSpec {
        SceneSpec {
            base: self.base,
            regions: self.regions.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_region_is_constant() {
        let s = SceneSpec::constant(50.0).with_region(
            Shape::Rectangle {
                from: [0.0, 0.0],
                to: [1.0, 1.0],
            },
            100.0,
        );
        let img = rasterize(&s, GridGeometry::square(5).unwrap()).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 150.0));
    }

    #[test]
    fn affine_ramp() {
        let s = SceneSpec {
            base: Base::Affine([10.0, 100.0, -20.0]),
            regions: vec![],
        };
        let geom = GridGeometry::new(4, 3).unwrap();
        let img = rasterize(&s, geom).unwrap();
        assert_eq!((img.width(), img.height()), (3, 4));
        let x = geom.design_point(2, 1).unwrap();
        assert_eq!(img.get(2, 1), 10.0 + 100.0 * x[0] - 20.0 * x[1]);
    }

    #[test]
    fn right_angle_wedge_on_4x4() {
        // independent check: angle to the bisector (1,0) via atan2 of the offset
        let s = SceneSpec::wedge(90.0, 0.0, 1.0);
        let geom = GridGeometry::square(4).unwrap();
        let img = rasterize(&s, geom).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                let [x1, x2] = geom.design_point(row, col).unwrap();
                let (dx, dy) = (x1 - 0.5, x2 - 0.5);
                let angle = dy.atan2(dx).abs();
                let expect = angle <= std::f64::consts::FRAC_PI_4 + 1e-12;
                assert_eq!(img.get(row, col) == 1.0, expect, "({row},{col})");
            }
        }
        // rows 2,3 contain (0.625, 0.625) etc: diagonal offsets sit exactly on the boundary
        let inside: Vec<(usize, usize)> = (0..16)
            .map(|k| (k / 4, k % 4))
            .filter(|&(r, c)| img.get(r, c) == 1.0)
            .collect();
        assert_eq!(inside, vec![(2, 1), (2, 2), (3, 0), (3, 1), (3, 2), (3, 3)]);
    }

    #[test]
    fn polygon_boundary_is_closed() {
        let tri = Shape::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(tri.contains([0.5, 0.5]));
        assert!(tri.contains([0.2, 0.2]));
        assert!(tri.contains([0.0, 0.0]));
        assert!(!tri.contains([0.6, 0.6]));
    }

    #[test]
    fn noise_identity_and_determinism() {
        let img = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64).unwrap();
        assert_eq!(add_noise(&img, &NoiseSpec::default()).unwrap(), img);
        let white = NoiseSpec {
            p_white: 1.0,
            ..Default::default()
        };
        assert!(add_noise(&img, &white).unwrap().pixels().iter().all(|&v| v == 255.0));
        let ns = NoiseSpec {
            sigma: 26.0,
            p_white: 0.01,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(add_noise(&img, &ns).unwrap(), add_noise(&img, &ns).unwrap());
        let other = NoiseSpec { seed: 10, ..ns };
        assert_ne!(add_noise(&img, &ns).unwrap(), add_noise(&img, &other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let bad = NoiseSpec {
            p_white: 0.7,
            p_black: 0.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let s = SceneSpec::constant(0.0).with_region(
            Shape::Disk {
                center: [0.5, 0.5],
                radius: 0.1,
            },
            -3.0,
        );
        assert!(rasterize(&s, GridGeometry::square(3).unwrap()).is_err());
    }

    #[test]
    fn toml_config() {
        let text = r#"
            rows = 32
            cols = 48
            base = { constant = 10.0 }

            [[region]]
            shape = "wedge"
            vertex = [0.5, 0.5]
            bisector = [1.0, 0.0]
            angle_deg = 60.0
            height = 200.0

            [[region]]
            shape = "disk"
            center = [0.2, 0.2]
            radius = 0.1
            height = 50.0

            [noise]
            sigma = 26.0
            p_white = 0.01
            seed = 3
        "#;
        let cfg = SceneConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.rows, Some(32));
        assert_eq!(cfg.regions.len(), 2);
        assert_eq!(cfg.noise.unwrap().sigma, 26.0);
        assert_eq!(cfg.noise.unwrap().white, 255.0);
        assert!(SceneConfig::from_toml_str("[[region]]\nshape = \"blob\"\nheight = 1.0").is_err());
    }

    #[test]
    fn classes_mark_edges() {
        let s = SceneSpec::wedge(90.0, 0.0, 255.0);
        let geom = GridGeometry::square(16).unwrap();
        let cls = region_classes(&s, geom, 1);
        assert_eq!(cls[0], RegionClass::Outside);
        assert_eq!(cls[15 * 16 + 8], RegionClass::Inside);
        assert!(cls.contains(&RegionClass::Edge));
    }
}
