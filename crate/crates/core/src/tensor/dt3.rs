use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::edges::Segment2D;
use crate::error::{invalid, Error, Result};

use super::quantize_orientation;

pub const DEFAULT_ORIENTATIONS: usize = 60;
pub const DEFAULT_LAMBDA_THETA: f64 = 100.0;
pub const DEFAULT_SMOOTHING_SIGMA: f64 = 1.0;

/// `"DT3\0"` read as a little-endian `u32`.
const DUMP_MAGIC: u32 = u32::from_le_bytes(*b"DT3\0");

/// Stand-in for "no feature" in the squared-distance transform.
const FAR: f64 = 1e20;

/// Directional distance field: per pixel and orientation bin, the penalized
/// distance (pixels) to the nearest image segment.
///
/// Stored slice-major: `values[(bin * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dt3Tensor {
    width: usize,
    height: usize,
    n_orient: usize,
    lambda_theta: f64,
    values: Vec<f64>,
}

impl Dt3Tensor {
    /// Tensor with `f(x, y, bin)` at every cell.
    pub fn from_fn(
        width: usize,
        height: usize,
        n_orient: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height, n_orient)?;
        let mut values = Vec::with_capacity(width * height * n_orient);
        for b in 0..n_orient {
            for y in 0..height {
                for x in 0..width {
                    let v = f(x, y, b);
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(invalid(format!("tensor value {v} at ({x},{y},{b})")));
                    }
                    values.push(v);
                }
            }
        }
        Ok(Self {
            width,
            height,
            n_orient,
            lambda_theta: DEFAULT_LAMBDA_THETA,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_orient(&self) -> usize {
        self.n_orient
    }

    pub fn lambda_theta(&self) -> f64 {
        self.lambda_theta
    }

    pub fn get(&self, x: usize, y: usize, bin: usize) -> f64 {
        self.values[(bin * self.height + y) * self.width + x]
    }

    /// Row-major `height × width` raster of one orientation bin.
    pub fn slice(&self, bin: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.values[bin * n..(bin + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear read of one slice, clamped to the raster. The flag reports
    /// whether `(x, y)` lay outside `[0, w-1] × [0, h-1]`.
    pub fn bilinear(&self, bin: usize, x: f64, y: f64) -> (f64, bool) {
        let (w, h) = (self.width as f64, self.height as f64);
        let truncated = !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0);
        let x = x.clamp(0.0, w - 1.0);
        let y = y.clamp(0.0, h - 1.0);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let s = self.slice(bin);
        let at = |xx: usize, yy: usize| s[yy * self.width + xx];
        let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
        let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
        (top + (bottom - top) * fy, truncated)
    }

    /// Bilinear in space, linear between the two bins bracketing `theta`.
    pub fn sample(&self, x: f64, y: f64, theta: f64) -> (f64, bool) {
        let (za, zb, dz) = bracket_bins(theta, self.n_orient);
        let (va, ta) = self.bilinear(za, x, y);
        let (vb, tb) = self.bilinear(zb, x, y);
        (va + (vb - va) * dz, ta || tb)
    }

    /// Writes the flat binary dump: `magic, width, height, n_orient` as
    /// little-endian `u32`, then slice-major little-endian `f32` values.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        for v in [
            DUMP_MAGIC,
            self.width as u32,
            self.height as u32,
            self.n_orient as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a dump written by [`Dt3Tensor::write_dump`]. The penalty factor
    /// is not stored and is reported as the default.
    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut header = [0u32; 4];
        for h in &mut header {
            r.read_exact(&mut word)
                .map_err(|_| Error::Format("truncated tensor header".into()))?;
            *h = u32::from_le_bytes(word);
        }
        if header[0] != DUMP_MAGIC {
            return Err(Error::Format(format!("bad tensor magic {:#x}", header[0])));
        }
        let (width, height, n_orient) = (header[1] as usize, header[2] as usize, header[3] as usize);
        check_dims(width, height, n_orient).map_err(|e| Error::Format(e.to_string()))?;
        let n = width * height * n_orient;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format("truncated tensor data".into()))?;
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Format("tensor contains negative or non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            n_orient,
            lambda_theta: DEFAULT_LAMBDA_THETA,
            values,
        })
    }
}

fn check_dims(width: usize, height: usize, n_orient: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(invalid("tensor dimensions must be positive"));
    }
    if n_orient < 2 {
        return Err(invalid("need at least 2 orientation bins"));
    }
    Ok(())
}

/// Lower bin, upper bin (circular) and the fractional position between them.
pub(crate) fn bracket_bins(theta: f64, n_orient: usize) -> (usize, usize, f64) {
    let z = theta.rem_euclid(PI) * n_orient as f64 / PI;
    let zf = z.floor();
    let za = (zf as usize) % n_orient;
    (za, (za + 1) % n_orient, (z - zf).clamp(0.0, 1.0))
}

/// Per-bin Euclidean distance transform of the rasterized segments, before
/// any mixing between orientations. Bins without segment pixels hold `+∞`.
pub fn build_distance_slices(
    segments: &[Segment2D],
    width: usize,
    height: usize,
    n_orient: usize,
) -> Result<Dt3Tensor> {
    check_dims(width, height, n_orient)?;
    if segments.is_empty() {
        return Err(Error::NoSegments);
    }
    let n = width * height;
    let mut feature = vec![false; n * n_orient];
    let mut occupied = vec![false; n_orient];
    for s in segments {
        let bin = quantize_orientation(s.orientation, n_orient);
        let mark = &mut feature[bin * n..(bin + 1) * n];
        rasterize_line(s, width, height, |x, y| {
            mark[y * width + x] = true;
            occupied[bin] = true;
        });
    }
    if !occupied.contains(&true) {
        return Err(Error::NoSegments);
    }
    let mut values = vec![f64::INFINITY; n * n_orient];
    for b in (0..n_orient).filter(|&b| occupied[b]) {
        let out = &mut values[b * n..(b + 1) * n];
        euclidean_dt(&feature[b * n..(b + 1) * n], width, height, out);
    }
    Ok(Dt3Tensor {
        width,
        height,
        n_orient,
        lambda_theta: DEFAULT_LAMBDA_THETA,
        values,
    })
}

/// Mixes orientations in place: `v(θ) = min(v(θ), v(θ') + λ·|θ - θ'|)` with
/// the circular angle difference in radians, via forward and backward
/// recursions run twice around the circle.
pub fn apply_orientation_penalty(dt3: &mut Dt3Tensor, lambda_theta: f64) -> Result<()> {
    if !(lambda_theta >= 0.0 && lambda_theta.is_finite()) {
        return Err(invalid("lambda_theta must be finite and non-negative"));
    }
    let (n, nb) = (dt3.width * dt3.height, dt3.n_orient);
    let step = lambda_theta * PI / nb as f64;
    for k in 1..2 * nb {
        let (prev, cur) = ((k - 1) % nb, k % nb);
        for i in 0..n {
            let c = dt3.values[prev * n + i] + step;
            let v = &mut dt3.values[cur * n + i];
            if c < *v {
                *v = c;
            }
        }
    }
    for k in (0..2 * nb - 1).rev() {
        let (next, cur) = ((k + 1) % nb, k % nb);
        for i in 0..n {
            let c = dt3.values[next * n + i] + step;
            let v = &mut dt3.values[cur * n + i];
            if c < *v {
                *v = c;
            }
        }
    }
    dt3.lambda_theta = lambda_theta;
    Ok(())
}

/// Unsmoothed tensor: per-bin distance transforms mixed across orientations.
pub fn build_dt3(
    segments: &[Segment2D],
    width: usize,
    height: usize,
    n_orient: usize,
    lambda_theta: f64,
) -> Result<Dt3Tensor> {
    let mut t = build_distance_slices(segments, width, height, n_orient)?;
    apply_orientation_penalty(&mut t, lambda_theta)?;
    Ok(t)
}

/// Circular Gaussian filter across bins, truncated at `3σ` and renormalized.
pub fn smooth_dt3(dt3: &Dt3Tensor, sigma_bins: f64) -> Result<Dt3Tensor> {
    if !(sigma_bins > 0.0 && sigma_bins.is_finite()) {
        return Err(invalid("smoothing sigma must be positive"));
    }
    let nb = dt3.n_orient;
    let radius = (3.0 * sigma_bins).ceil() as i64;
    // Fold the kernel onto the circle so wide kernels wrap correctly.
    let mut kernel = vec![0.0; nb];
    for k in -radius..=radius {
        let w = (-0.5 * (k as f64 / sigma_bins).powi(2)).exp();
        kernel[k.rem_euclid(nb as i64) as usize] += w;
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);
    let taps: Vec<(usize, f64)> = kernel
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(k, w)| (k, *w))
        .collect();

    let n = dt3.width * dt3.height;
    let mut values = vec![0.0; n * nb];
    // Pixel chunks across all bins keep the working set in cache.
    const CHUNK: usize = 2048;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        for b in 0..nb {
            let out = &mut values[b * n + start..b * n + end];
            for &(k, w) in &taps {
                let src = &dt3.slice((b + k) % nb)[start..end];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
    Ok(Dt3Tensor {
        width: dt3.width,
        height: dt3.height,
        n_orient: nb,
        lambda_theta: dt3.lambda_theta,
        values,
    })
}

/// One-pixel line raster between the rounded endpoints; pixels outside the
/// raster are skipped.
fn rasterize_line(s: &Segment2D, width: usize, height: usize, mut put: impl FnMut(usize, usize)) {
    let (mut x0, mut y0) = (s.end_a.x.round() as i64, s.end_a.y.round() as i64);
    let (x1, y1) = (s.end_b.x.round() as i64, s.end_b.y.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as usize) < width && (y0 as usize) < height {
            put(x0 as usize, y0 as usize);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Exact Euclidean distance transform (separable lower-envelope method).
fn euclidean_dt(feature: &[bool], width: usize, height: usize, out: &mut [f64]) {
    let m = width.max(height);
    let mut f = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut v = vec![0usize; m];
    let mut z = vec![0.0; m + 1];
    let mut sq: Vec<f64> = feature.iter().map(|&on| if on { 0.0 } else { FAR }).collect();
    for x in 0..width {
        for y in 0..height {
            f[y] = sq[y * width + x];
        }
        dt_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for y in 0..height {
            sq[y * width + x] = d[y];
        }
    }
    for y in 0..height {
        let row = &sq[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        dt_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        for x in 0..width {
            out[y * width + x] = if d[x] >= FAR * 0.5 {
                f64::INFINITY
            } else {
                d[x].sqrt()
            };
        }
    }
}

fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *dq = diff * diff + f[p];
    }
}
