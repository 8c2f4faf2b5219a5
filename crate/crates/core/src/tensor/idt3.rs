//! Integral tensor: per-orientation running sums of a [`Dt3Tensor`] along
//! lines of that orientation, giving constant-time edge integrals.
//!
//! Each bin is stored in a line-pixel layout. For x-dominant bins a raster
//! row is indexed by image `y` and a pixel by `x'`; for y-dominant bins a row
//! is indexed by `x'` and a pixel by `y`. `x' = x` for bins with a
//! non-negative x direction and `x' = width - 1 - x` otherwise, so every
//! integration line advances by `d_s ∈ [0, 1]` rows per pixel.
//!
//! Cell `(row, p)` belongs to line `l = row - floor(p·d_s)` and holds the sum
//! of that line's integrand over pixels `0..p` (exclusive). The integrand at
//! pixel `p` is the slice value at cross coordinate `l + p·d_s`, linearly
//! interpolated between the two adjacent raster rows. Lines restart at zero
//! where they enter the raster; parts outside contribute nothing.

use crate::error::{invalid, Result};
use crate::pose::{fold_orientation, Vec2};

use super::dt3::{bracket_bins, Dt3Tensor};

/// Trigonometric values below this are snapped to zero, and slopes within
/// this of one are snapped to one.
const SNAP: f64 = 1e-12;

/// Shortest edge accepted by the distance evaluators, pixels.
pub const MIN_EDGE_LENGTH: f64 = 1e-6;

/// Per-bin constants used by the integral reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationPrecomp {
    /// The bin direction has a non-negative x component.
    pub x_positive: bool,
    /// `|cos θ| >= sin θ`: lines are indexed by `y`, pixels by `x'`.
    pub x_dominant: bool,
    /// Pixel steps per unit of arc length along the line.
    pub d_p: f64,
    /// Row advance per pixel step.
    pub d_s: f64,
    /// Pixel offset of the perpendicular foot per unit of row offset.
    pub l_p: f64,
}

/// Constants for the bin at angle `bin·π/n_orient`.
pub fn precompute_orientation(bin: usize, n_orient: usize) -> Result<OrientationPrecomp> {
    if bin >= n_orient {
        return Err(invalid(format!("bin {bin} out of range for {n_orient} orientations")));
    }
    let o = bin as f64 * std::f64::consts::PI / n_orient as f64;
    let snap = |v: f64| if v.abs() < SNAP { 0.0 } else { v };
    let (dx, dy) = (snap(o.cos()), snap(o.sin()));
    let d_a = dx.abs();
    let x_positive = dx >= 0.0;
    let x_dominant = d_a >= dy;
    let d_p = if x_dominant { d_a } else { dy };
    let mut d_s = if x_dominant { dy / d_a } else { d_a / dy };
    if (d_s - 1.0).abs() < SNAP {
        d_s = 1.0;
    }
    Ok(OrientationPrecomp {
        x_positive,
        x_dominant,
        d_p,
        d_s,
        l_p: d_a * dy,
    })
}

/// A value read from the integral tensor, with a flag set when any read fell
/// outside the raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub value: f64,
    pub truncated: bool,
}

/// One orientation bin of the integral tensor.
#[derive(Debug, Clone)]
pub struct IntegralSlice {
    precomp: OrientationPrecomp,
    /// Image width; the mirror axis for `x'`.
    image_width: usize,
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`.
    data: Vec<f64>,
    /// Full in-raster sum per line, indexed by `l - line_min`.
    totals: Vec<f64>,
    line_min: i64,
}

impl IntegralSlice {
    fn build(dt3: &Dt3Tensor, bin: usize) -> Self {
        let precomp = precompute_orientation(bin, dt3.n_orient()).expect("bin in range");
        let (w, h) = (dt3.width(), dt3.height());
        let (rows, cols) = if precomp.x_dominant { (h, w) } else { (w, h) };
        let slice = dt3.slice(bin);
        // Slice value at layout cell (row, p).
        let value = |row: usize, p: usize| -> f64 {
            let (x_prime, y) = if precomp.x_dominant { (p, row) } else { (row, p) };
            let x = if precomp.x_positive { x_prime } else { w - 1 - x_prime };
            slice[y * w + x]
        };
        let d_s = precomp.d_s;
        let shift = |p: usize| (p as f64 * d_s).floor() as i64;
        let frac = |p: usize| p as f64 * d_s - (p as f64 * d_s).floor();
        // Integrand of the line through row `row` at pixel `p`.
        let integrand = |row: usize, p: usize| -> f64 {
            let t = frac(p);
            let v0 = value(row, p);
            if t == 0.0 {
                return v0;
            }
            let v1 = value((row + 1).min(rows - 1), p);
            v0 + (v1 - v0) * t
        };

        let line_min = -shift(cols);
        let n_lines = (rows as i64 - line_min) as usize;
        let mut totals = vec![0.0; n_lines];
        let stride = cols + 1;
        let mut data = vec![0.0; rows * stride];
        for p in 0..=cols {
            for row in 0..rows {
                let l = row as i64 - shift(p);
                let e = if p == 0 {
                    0.0
                } else {
                    let prev = l + shift(p - 1);
                    if prev >= 0 && prev < rows as i64 {
                        let prev = prev as usize;
                        data[prev * stride + p - 1] + integrand(prev, p - 1)
                    } else {
                        0.0
                    }
                };
                data[row * stride + p] = e;
                let end = if p < cols { e + integrand(row, p) } else { e };
                let slot = &mut totals[(l - line_min) as usize];
                if end > *slot {
                    *slot = end;
                }
            }
        }
        Self {
            precomp,
            image_width: w,
            rows,
            cols,
            data,
            totals,
            line_min,
        }
    }

    pub fn precomp(&self) -> &OrientationPrecomp {
        &self.precomp
    }

    /// `(rows, cols)` of the line-pixel layout; each row stores `cols + 1`
    /// running sums.
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Running sum of line `line` before pixel `pixel`. Positions before the
    /// line enters the raster read 0, positions after it leaves read the
    /// line total; both set the truncation flag.
    pub fn line_value(&self, line: i64, pixel: i64) -> Reading {
        let total = || {
            let i = line - self.line_min;
            if i >= 0 && (i as usize) < self.totals.len() {
                self.totals[i as usize]
            } else {
                0.0
            }
        };
        if pixel < 0 {
            return Reading { value: 0.0, truncated: true };
        }
        if pixel > self.cols as i64 {
            return Reading { value: total(), truncated: true };
        }
        let row = line + (pixel as f64 * self.precomp.d_s).floor() as i64;
        if row < 0 {
            Reading { value: 0.0, truncated: true }
        } else if row >= self.rows as i64 {
            Reading { value: total(), truncated: true }
        } else {
            Reading {
                value: self.data[row as usize * (self.cols + 1) + pixel as usize],
                truncated: false,
            }
        }
    }

    /// Running sum at fractional `pixel`, linear between the two nearest
    /// integer pixels of the same line.
    pub fn get_pixel_value(&self, line: i64, pixel: f64) -> Reading {
        let pa = pixel.floor();
        let dp = pixel - pa;
        let a = self.line_value(line, pa as i64);
        if dp == 0.0 {
            return a;
        }
        let b = self.line_value(line, pa as i64 + 1);
        Reading {
            value: a.value + (b.value - a.value) * dp,
            truncated: a.truncated || b.truncated,
        }
    }

    /// Integral of the slice along a span of this bin's orientation centered
    /// at `center` (image pixels) with half-length `radius` (pixels of arc
    /// length).
    ///
    /// The center generally falls between two integration lines. Each line
    /// is read around the perpendicular foot of the center on it, and the
    /// two integrals are blended by the center's fractional line offset.
    /// The result is in units of distance times arc length: the running
    /// sums advance one pixel step per `1/d_p` of arc length, hence the
    /// final division by `d_p`. Span ends are shifted by half a pixel so that
    /// cell `p` covers `[p - 0.5, p + 0.5]`.
    pub fn get_image_value(&self, center: Vec2, radius: f64) -> Reading {
        let pc = &self.precomp;
        let m = self.image_width as f64;
        let x = if pc.x_positive { center.x } else { m - 1.0 - center.x };
        let (p, l) = if pc.x_dominant {
            (x, center.y - x * pc.d_s)
        } else {
            (center.y, x - center.y * pc.d_s)
        };
        let la = l.floor();
        let dl = l - la;
        let la = la as i64;
        let pa = p + dl * pc.l_p;
        let pb = pa - pc.l_p;
        let rp = radius * pc.d_p;
        let va1 = self.get_pixel_value(la, pa - rp + 0.5);
        let va2 = self.get_pixel_value(la, pa + rp + 0.5);
        let vb1 = self.get_pixel_value(la + 1, pb - rp + 0.5);
        let vb2 = self.get_pixel_value(la + 1, pb + rp + 0.5);
        let da = va2.value - va1.value;
        let db = vb2.value - vb1.value;
        // Only reads that actually carry weight may flag truncation.
        let ta = dl < 1.0 && (va1.truncated || va2.truncated);
        let tb = dl > 0.0 && (vb1.truncated || vb2.truncated);
        Reading {
            value: (da + (db - da) * dl) / pc.d_p,
            truncated: ta || tb,
        }
    }
}

/// Integral form of a [`Dt3Tensor`], one [`IntegralSlice`] per bin.
#[derive(Debug, Clone)]
pub struct Idt3Tensor {
    width: usize,
    height: usize,
    slices: Vec<IntegralSlice>,
}

impl Idt3Tensor {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_orient(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, bin: usize) -> &IntegralSlice {
        &self.slices[bin]
    }
}

pub fn build_idt3(dt3: &Dt3Tensor) -> Idt3Tensor {
    Idt3Tensor {
        width: dt3.width(),
        height: dt3.height(),
        slices: (0..dt3.n_orient()).map(|b| IntegralSlice::build(dt3, b)).collect(),
    }
}

/// Mean tensor distance along the image edge `end_a → end_b`.
///
/// The edge is rotated about its midpoint onto the two bins bracketing its
/// orientation; both span integrals are blended linearly in angle and
/// divided by the edge length.
pub fn edge_distance_idt3(idt3: &Idt3Tensor, end_a: Vec2, end_b: Vec2) -> Result<Reading> {
    let delta = end_b - end_a;
    let d = delta.norm();
    if !(d > MIN_EDGE_LENGTH) {
        return Err(invalid(format!("edge length {d} too short")));
    }
    let c = 0.5 * (end_a + end_b);
    let r = 0.5 * d;
    let (za, zb, dz) = bracket_bins(fold_orientation(delta), idt3.n_orient());
    let va = idt3.slices[za].get_image_value(c, r);
    let vb = idt3.slices[zb].get_image_value(c, r);
    Ok(Reading {
        value: (va.value + (vb.value - va.value) * dz) / d,
        truncated: (dz < 1.0 && va.truncated) || (dz > 0.0 && vb.truncated),
    })
}
