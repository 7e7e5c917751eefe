//! Grayscale images on the equidistant design grid, window extraction and
//! PGM (P2/P5) input/output.
//!
//! All indices are zero-based `(row, col)` pairs with the origin at the
//! top-left pixel. The design point of pixel `(row, col)` on an
//! `n_rows x n_cols` grid is `((row + 1/2) / n_rows, (col + 1/2) / n_cols)`,
//! i.e. the usual `(i - 1/2) / n` map written for zero-based indices.

use crate::error::{Error, Result};

/// A rectangular grid of real-valued intensities, stored row-major.
///
/// Values are nominally on the 0..=255 scale but are never clamped here;
/// clamping happens only on PGM export.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image dimensions must be at least 1x1"));
        }
        if pixels.len() != width * height {
            return Err(Error::arg(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(pos) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("pixel {pos} is not finite")));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Image::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn try_get(&self, row: usize, col: usize) -> Result<f64> {
        self.check_index(row, col)?;
        Ok(self.get(row, col))
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            n_rows: self.height,
            n_cols: self.width,
        }
    }

    /// Applies `f` to every pixel value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(self.width, self.height, self.pixels.iter().map(|&v| f(v)).collect())
    }

    /// Same image after the clamp-and-round pass applied by PGM export.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| quantize(v) as f64).collect(),
        }
    }

    pub(crate) fn check_index(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.height || col >= self.width {
            return Err(Error::Index {
                row,
                col,
                rows: self.height,
                cols: self.width,
            });
        }
        Ok(())
    }

    /// Extracts the window of Chebyshev radius `radius` around `(row, col)`.
    ///
    /// With [`BorderMode::Clip`] the window only contains in-bounds pixels, so
    /// border windows are smaller. With [`BorderMode::Replicate`] every window
    /// has `(2r+1)^2` entries; out-of-bounds positions take the value of the
    /// nearest in-bounds pixel while keeping their own spatial offset.
    pub fn window(&self, row: usize, col: usize, radius: usize, border: BorderMode) -> Result<Window> {
        self.check_index(row, col)?;
        let w = radius as isize;
        let geom = self.geometry();
        let h = [radius as f64 / geom.n_rows as f64, radius as f64 / geom.n_cols as f64];
        let side = 2 * radius + 1;
        let mut entries = Vec::with_capacity(side * side);
        let mut center_pos = 0;
        for dr in -w..=w {
            let r = row as isize + dr;
            for dc in -w..=w {
                let c = col as isize + dc;
                let inside = r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width;
                let (src_r, src_c) = match (inside, border) {
                    (true, _) => (r as usize, c as usize),
                    (false, BorderMode::Clip) => continue,
                    (false, BorderMode::Replicate) => (
                        r.clamp(0, self.height as isize - 1) as usize,
                        c.clamp(0, self.width as isize - 1) as usize,
                    ),
                };
                if dr == 0 && dc == 0 {
                    center_pos = entries.len();
                }
                // (x0 - x_ij) / h reduces to -(offset in pixels) / radius on each axis.
                let offset = if radius == 0 {
                    [0.0, 0.0]
                } else {
                    [-dr as f64 / w as f64, -dc as f64 / w as f64]
                };
                entries.push(WindowEntry {
                    row: src_r,
                    col: src_c,
                    value: self.get(src_r, src_c),
                    offset,
                });
            }
        }
        Ok(Window {
            center: (row, col),
            radius,
            h,
            n: [geom.n_rows, geom.n_cols],
            entries,
            center_pos,
        })
    }
}

/// How windows behave at the image border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderMode {
    /// Drop out-of-bounds positions (variable window size).
    #[default]
    Clip,
    /// Pad by replicating the nearest edge pixel (fixed window size).
    Replicate,
}

/// Per-axis pixel counts of the equidistant design on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub n_rows: usize,
    pub n_cols: usize,
}

impl GridGeometry {
    pub fn new(n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::arg("grid must have at least one row and column"));
        }
        Ok(GridGeometry { n_rows, n_cols })
    }

    pub fn square(n: usize) -> Result<Self> {
        GridGeometry::new(n, n)
    }

    /// Design point of the zero-based pixel `(row, col)`, strictly inside `(0,1)^2`.
    pub fn design_point(&self, row: usize, col: usize) -> Result<[f64; 2]> {
        if row >= self.n_rows || col >= self.n_cols {
            return Err(Error::Index {
                row,
                col,
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        Ok([
            (row as f64 + 0.5) / self.n_rows as f64,
            (col as f64 + 0.5) / self.n_cols as f64,
        ])
    }

    /// Index of the design point closest to `x` in the Euclidean norm.
    ///
    /// A coordinate exactly halfway between two design points resolves to the
    /// lower index.
    pub fn nearest_index(&self, x: [f64; 2]) -> (usize, usize) {
        fn axis(x: f64, n: usize) -> usize {
            // design points are (k + 1/2)/n, so the nearest k is ceil(n x - 1) at a tie
            let t = x * n as f64 - 0.5;
            let k = if t.fract() == 0.5 || t.fract() == -0.5 {
                t.floor()
            } else {
                t.round()
            };
            (k.max(0.0) as usize).min(n - 1)
        }
        (axis(x[0], self.n_rows), axis(x[1], self.n_cols))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    /// Normalized spatial offset `(x0 - x_ij) / h`, componentwise in `[-1, 1]`.
    pub offset: [f64; 2],
}

/// The observations of one pixel's window, ordered by (row, column).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub center: (usize, usize),
    pub radius: usize,
    /// Spatial bandwidth per axis, `radius / n`.
    pub h: [f64; 2],
    /// Grid size per axis.
    pub n: [usize; 2],
    pub entries: Vec<WindowEntry>,
    center_pos: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    /// Position of the center pixel inside `entries`.
    pub fn center_index(&self) -> usize {
        self.center_pos
    }

    pub fn center_value(&self) -> f64 {
        self.entries[self.center_pos].value
    }

    /// Replaces the values of the window (same order as `entries`).
    pub fn with_values(&self, values: &[f64]) -> Result<Window> {
        if values.len() != self.entries.len() {
            return Err(Error::arg("value count does not match window size"));
        }
        let mut out = self.clone();
        for (e, &v) in out.entries.iter_mut().zip(values) {
            e.value = v;
        }
        Ok(out)
    }
}

/// Clamp to `[0, 255]`, then round half away from zero.
pub fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Serializes `img` as PGM with maxval 255. `binary` selects P5 over P2.
pub fn write_pgm(img: &Image, binary: bool) -> Vec<u8> {
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    if binary {
        out.extend(img.pixels.iter().map(|&v| quantize(v)));
    } else {
        for row in img.pixels.chunks(img.width) {
            // keep lines under 70 characters
            for line in row.chunks(16) {
                let text: Vec<String> = line.iter().map(|&v| quantize(v).to_string()).collect();
                out.extend_from_slice(text.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                self.err(format!("unexpected end of data, expected {what}"))
            } else {
                self.err(format!("expected {what}"))
            });
        }
        let digits = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        digits.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("{what} out of range"),
        })
    }
}

/// Parses a P2 (ASCII) or P5 (binary, 8-bit) PGM.
///
/// Samples are rescaled to the 0..=255 range when maxval is below 255.
pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(cur.err("missing magic number"));
    }
    let binary = match &bytes[..2] {
        b"P2" => false,
        b"P5" => true,
        _ => return Err(cur.err("magic number must be P2 or P5")),
    };
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    cur.skip_space_and_comments();
    let maxval_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: maxval_pos,
            message: "zero image dimension".into(),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse {
            offset: maxval_pos,
            message: format!("maxval {maxval} not in 1..=255"),
        });
    }
    let scale = 255.0 / maxval as f64;
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected whitespace after maxval"));
        }
        cur.pos += 1;
        let raster = &bytes[cur.pos..];
        if raster.len() < count {
            return Err(Error::Parse {
                offset: bytes.len(),
                message: format!("truncated raster: {} of {count} bytes", raster.len()),
            });
        }
        for (k, &b) in raster[..count].iter().enumerate() {
            if b as u32 > maxval {
                return Err(Error::Parse {
                    offset: cur.pos + k,
                    message: format!("sample {b} exceeds maxval {maxval}"),
                });
            }
            pixels.push(b as f64 * scale);
        }
    } else {
        for _ in 0..count {
            cur.skip_space_and_comments();
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            pixels.push(v as f64 * scale);
        }
    }
    Image::new(width, height, pixels)
}
