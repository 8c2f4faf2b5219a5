//! Gradient-orientation region-growing line segment detector.
//!
//! Pixels are visited in decreasing gradient magnitude. Each unused seed grows
//! an 8-connected region of pixels whose gradient direction stays within
//! `tau` of the running region direction. A region becomes a segment when its
//! principal axis is long enough and it fills its bounding rectangle densely;
//! sparse regions are regrown once with half the tolerance.
//!
//! Parameter mapping: `tau` is the angle tolerance; the magnitude threshold is
//! `rho * max(1, median gradient magnitude)`; `epsilon` is carried but unused
//! (there is no a-contrario validation step).

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::pose::Vec2;

use super::{GrayImage, Segment2D};

/// Minimum fraction of the fitted rectangle covered by region pixels.
const MIN_DENSITY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub rho: f64,
    /// Angle tolerance, degrees.
    pub tau: f64,
    pub epsilon: f64,
    /// Pixels.
    pub min_length: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            rho: 1.83,
            tau: 22.5,
            epsilon: 1.0,
            min_length: 5.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 90.0) {
            return Err(invalid(format!("tau {} not in (0, 90)", self.tau)));
        }
        if !(self.min_length >= 1.0) {
            return Err(invalid("min_length must be >= 1"));
        }
        if !(self.rho > 0.0) {
            return Err(invalid("rho must be positive"));
        }
        Ok(())
    }
}

/// Anything that turns an image into line segments.
pub trait SegmentDetector {
    fn detect(&self, image: &GrayImage) -> Vec<Segment2D>;
}

/// Reference detector; see the module docs.
#[derive(Debug, Clone, Default)]
pub struct RegionGrowingDetector {
    config: DetectorConfig,
}

impl RegionGrowingDetector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

/// Detects segments with the reference detector.
pub fn detect_segments(image: &GrayImage, config: &DetectorConfig) -> Result<Vec<Segment2D>> {
    Ok(RegionGrowingDetector::new(*config)?.detect(image))
}

struct Gradient {
    w: usize,
    h: usize,
    angle: Vec<f64>,
    mag: Vec<f64>,
}

/// 2×2 gradient, sampled at pixel corners `(x + 0.5, y + 0.5)`.
fn gradient(img: &GrayImage) -> Gradient {
    let (w, h) = (img.width().saturating_sub(1), img.height().saturating_sub(1));
    let mut angle = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let a = img.get(x, y) as f64;
            let b = img.get(x + 1, y) as f64;
            let c = img.get(x, y + 1) as f64;
            let d = img.get(x + 1, y + 1) as f64;
            let gx = 0.5 * (b + d - a - c);
            let gy = 0.5 * (c + d - a - b);
            angle[y * w + x] = gy.atan2(gx);
            mag[y * w + x] = gx.hypot(gy);
        }
    }
    Gradient { w, h, angle, mag }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    }
    if d < -PI {
        d += 2.0 * PI;
    }
    d.abs()
}

impl SegmentDetector for RegionGrowingDetector {
    fn detect(&self, image: &GrayImage) -> Vec<Segment2D> {
        let g = gradient(image);
        if g.w == 0 || g.h == 0 {
            return Vec::new();
        }
        let mut sorted = g.mag.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let threshold = self.config.rho * median.max(1.0);

        let mut order: Vec<usize> = (0..g.mag.len()).filter(|&i| g.mag[i] > threshold).collect();
        order.sort_by(|&a, &b| g.mag[b].total_cmp(&g.mag[a]).then(a.cmp(&b)));

        let tau = self.config.tau.to_radians();
        let mut used = vec![false; g.mag.len()];
        let mut out = Vec::new();
        for &seed in &order {
            if used[seed] {
                continue;
            }
            let region = grow(&g, &used, seed, threshold, tau);
            let fitted = fit(&g, &region).and_then(|f| {
                if f.density >= MIN_DENSITY {
                    Some((f, region.clone()))
                } else {
                    let narrow = grow(&g, &used, seed, threshold, 0.5 * tau);
                    fit(&g, &narrow)
                        .filter(|f| f.density >= MIN_DENSITY)
                        .map(|f| (f, narrow))
                }
            });
            match fitted {
                Some((f, members)) => {
                    for &i in &members {
                        used[i] = true;
                    }
                    if f.segment.length() >= self.config.min_length {
                        out.push(f.segment);
                    }
                }
                None => used[seed] = true,
            }
        }
        out
    }
}

fn grow(g: &Gradient, used: &[bool], seed: usize, threshold: f64, tau: f64) -> Vec<usize> {
    let mut region = vec![seed];
    let mut in_region = std::collections::HashSet::new();
    in_region.insert(seed);
    let (mut sx, mut sy) = (g.angle[seed].cos(), g.angle[seed].sin());
    let mut region_angle = g.angle[seed];
    let mut queue = VecDeque::from([seed]);
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % g.w) as i64, (i / g.w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= g.w as i64 || ny >= g.h as i64 {
                    continue;
                }
                let j = ny as usize * g.w + nx as usize;
                if used[j] || g.mag[j] <= threshold || in_region.contains(&j) {
                    continue;
                }
                if angle_diff(g.angle[j], region_angle) <= tau {
                    in_region.insert(j);
                    region.push(j);
                    queue.push_back(j);
                    sx += g.angle[j].cos();
                    sy += g.angle[j].sin();
                    region_angle = sy.atan2(sx);
                }
            }
        }
    }
    region
}

struct Fit {
    segment: Segment2D,
    density: f64,
}

/// Magnitude-weighted principal-axis fit of a region.
fn fit(g: &Gradient, region: &[usize]) -> Option<Fit> {
    if region.len() < 2 {
        return None;
    }
    let pos = |i: usize| Vec2::new((i % g.w) as f64 + 0.5, (i / g.w) as f64 + 0.5);
    let wsum: f64 = region.iter().map(|&i| g.mag[i]).sum();
    let c = region.iter().fold(Vec2::zeros(), |acc, &i| acc + pos(i) * g.mag[i]) / wsum;
    let (mut ixx, mut iyy, mut ixy) = (0.0, 0.0, 0.0);
    for &i in region {
        let d = pos(i) - c;
        ixx += g.mag[i] * d.x * d.x;
        iyy += g.mag[i] * d.y * d.y;
        ixy += g.mag[i] * d.x * d.y;
    }
    // Major axis of the 2x2 inertia matrix.
    let theta = 0.5 * (2.0 * ixy).atan2(ixx - iyy);
    let dir = Vec2::new(theta.cos(), theta.sin());
    let normal = Vec2::new(-dir.y, dir.x);
    let (mut lo, mut hi, mut wlo, mut whi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &i in region {
        let d = pos(i) - c;
        let t = d.dot(&dir);
        let s = d.dot(&normal);
        lo = lo.min(t);
        hi = hi.max(t);
        wlo = wlo.min(s);
        whi = whi.max(s);
    }
    // Extent-based rectangle, width floored at one pixel.
    let area = (hi - lo).max(1.0) * (whi - wlo).max(1.0);
    Some(Fit {
        segment: Segment2D::new(c + dir * lo, c + dir * hi),
        density: region.len() as f64 / area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Anti-aliased polygon fill (4×4 supersampling), pixel centers at
    /// integer coordinates.
    fn polygon_image(w: usize, h: usize, poly: &[(f64, f64)], fg: u8, bg: u8) -> GrayImage {
        let inside = |px: f64, py: f64| {
            let mut c = false;
            let n = poly.len();
            for i in 0..n {
                let (xi, yi) = poly[i];
                let (xj, yj) = poly[(i + n - 1) % n];
                if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                    c = !c;
                }
            }
            c
        };
        GrayImage::from_fn(w, h, |x, y| {
            let mut hits = 0;
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 - 0.375 + 0.25 * sx as f64;
                    let py = y as f64 - 0.375 + 0.25 * sy as f64;
                    if inside(px, py) {
                        hits += 1;
                    }
                }
            }
            let f = hits as f64 / 16.0;
            (bg as f64 + (fg as f64 - bg as f64) * f).round() as u8
        })
        .unwrap()
    }

    #[test]
    fn constant_image_has_no_segments() {
        let img = GrayImage::from_fn(64, 48, |_, _| 120).unwrap();
        assert!(detect_segments(&img, &DetectorConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn vertical_step_edge() {
        // Step between columns 59 and 60 over the full 100-row height.
        let img = GrayImage::from_fn(120, 100, |x, _| if x < 60 { 50 } else { 200 }).unwrap();
        let segs = detect_segments(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(segs.len(), 1, "{segs:?}");
        let s = segs[0];
        assert!((s.orientation - PI / 2.0).abs() <= 0.05);
        let (top, bottom) = if s.end_a.y < s.end_b.y {
            (s.end_a, s.end_b)
        } else {
            (s.end_b, s.end_a)
        };
        assert!((top - Vec2::new(59.5, 0.0)).norm() <= 2.0, "{top}");
        assert!((bottom - Vec2::new(59.5, 99.0)).norm() <= 2.0, "{bottom}");
    }

    fn scene() -> GrayImage {
        // A tilted quadrilateral and a triangle on a mid-gray background.
        let mut img = polygon_image(
            160,
            140,
            &[(20.0, 30.0), (90.0, 18.0), (100.0, 70.0), (30.0, 85.0)],
            210,
            60,
        );
        let tri = polygon_image(160, 140, &[(110.0, 100.0), (150.0, 125.0), (105.0, 130.0)], 20, 60);
        for y in 0..140 {
            for x in 0..160 {
                if tri.get(x, y) != 60 {
                    img.set(x, y, tri.get(x, y));
                }
            }
        }
        img
    }

    fn orientation_dist(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(PI);
        d.min(PI - d)
    }

    #[test]
    fn rotation_equivariance() {
        let cfg = DetectorConfig {
            min_length: 10.0,
            ..DetectorConfig::default()
        };
        let img = scene();
        let a = detect_segments(&img, &cfg).unwrap();
        let b = detect_segments(&img.rotate90(), &cfg).unwrap();
        assert!(a.len() >= 7, "{}", a.len());
        assert_eq!(a.len(), b.len());
        let mut oa: Vec<f64> = a.iter().map(|s| (s.orientation + PI / 2.0) % PI).collect();
        let mut ob: Vec<f64> = b.iter().map(|s| s.orientation).collect();
        oa.sort_by(f64::total_cmp);
        ob.sort_by(f64::total_cmp);
        // Greedy matching of orientations.
        for o in &oa {
            let (k, d) = ob
                .iter()
                .enumerate()
                .map(|(k, p)| (k, orientation_dist(*o, *p)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(d <= 0.05, "{o} unmatched ({d})");
            ob.remove(k);
        }
    }

    #[test]
    fn intensity_offset_invariance() {
        let cfg = DetectorConfig::default();
        let img = scene();
        let shifted = GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y) + 30).unwrap();
        assert_eq!(
            detect_segments(&img, &cfg).unwrap(),
            detect_segments(&shifted, &cfg).unwrap()
        );
    }

    #[test]
    fn output_is_deterministic_and_well_formed() {
        let cfg = DetectorConfig::default();
        let img = scene();
        let a = detect_segments(&img, &cfg).unwrap();
        assert_eq!(a, detect_segments(&img, &cfg).unwrap());
        for s in &a {
            assert!(s.length() >= cfg.min_length);
            let expect = crate::pose::fold_orientation(s.end_b - s.end_a);
            assert!((s.orientation - expect).abs() < 1e-6);
            assert!((0.0..PI).contains(&s.orientation));
        }
    }

    #[test]
    fn config_validation() {
        let bad = DetectorConfig {
            tau: 95.0,
            ..DetectorConfig::default()
        };
        assert!(RegionGrowingDetector::new(bad).is_err());
        let bad = DetectorConfig {
            min_length: 0.5,
            ..DetectorConfig::default()
        };
        assert!(RegionGrowingDetector::new(bad).is_err());
    }

    #[test]
    fn pyramid_level_keeps_long_edges() {
        let img = scene();
        let small = img.pyr_down();
        let segs = detect_segments(&small, &DetectorConfig::default()).unwrap();
        assert!(segs.len() >= 4);
    }
}
