//! Building surfaces, detection-plane estimation and ray projection of
//! localized detections onto that plane.

mod detection;
mod gbxml;

pub use detection::{read_detections_csv, write_detections_csv, Detection};
pub use gbxml::{parse_surfaces, write_surfaces};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::pose::Vec3;

/// Vertices may deviate from the fitted plane by at most this much, metres.
pub const PLANARITY_TOLERANCE: f64 = 1e-6;

/// Rays with `|n̂·f̂|` at or below this are treated as parallel to the plane.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceType {
    Ceiling,
    Floor,
    Wall,
    Other,
}

impl SurfaceType {
    /// Maps a gbXML `surfaceType`. Only `Ceiling` counts as a ceiling; roofs
    /// are kept as `Other`.
    pub fn from_gbxml(s: &str) -> Self {
        if s == "Ceiling" {
            SurfaceType::Ceiling
        } else if s.contains("Floor") || s.contains("Slab") {
            SurfaceType::Floor
        } else if s.contains("Wall") {
            SurfaceType::Wall
        } else {
            SurfaceType::Other
        }
    }

    pub fn as_gbxml(self) -> &'static str {
        match self {
            SurfaceType::Ceiling => "Ceiling",
            SurfaceType::Floor => "InteriorFloor",
            SurfaceType::Wall => "InteriorWall",
            SurfaceType::Other => "Shade",
        }
    }
}

/// A planar building surface. `plane_normal · p = plane_offset` holds for
/// every polygon vertex within [`PLANARITY_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct BimSurface {
    pub id: String,
    pub surface_type: SurfaceType,
    pub polygon: Vec<Vec3>,
    pub plane_normal: Vec3,
    pub plane_offset: f64,
}

impl BimSurface {
    /// Fits the plane with Newell's method; the normal follows the polygon's
    /// winding by the right-hand rule.
    pub fn new(id: String, surface_type: SurfaceType, polygon: Vec<Vec3>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(invalid(format!("polygon has {} points", polygon.len())));
        }
        let mut n = Vec3::zeros();
        for (i, a) in polygon.iter().enumerate() {
            let b = &polygon[(i + 1) % polygon.len()];
            n.x += (a.y - b.y) * (a.z + b.z);
            n.y += (a.z - b.z) * (a.x + b.x);
            n.z += (a.x - b.x) * (a.y + b.y);
        }
        let norm = n.norm();
        if !(norm > 1e-12) {
            return Err(invalid("degenerate polygon"));
        }
        let normal = n / norm;
        let centroid = polygon.iter().sum::<Vec3>() / polygon.len() as f64;
        let offset = normal.dot(&centroid);
        if let Some(p) = polygon
            .iter()
            .find(|p| (normal.dot(p) - offset).abs() > PLANARITY_TOLERANCE)
        {
            return Err(invalid(format!(
                "non-planar polygon: vertex {:?} is {:.3e} m off the plane",
                p.as_slice(),
                (normal.dot(p) - offset).abs()
            )));
        }
        Ok(Self {
            id,
            surface_type,
            polygon,
            plane_normal: normal,
            plane_offset: offset,
        })
    }

    /// Signed distance of `p` from the plane along the normal.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.plane_normal.dot(p) - self.plane_offset
    }

    /// Whether `p`, dropped along the plane's dominant normal axis, falls
    /// inside the polygon's footprint (even-odd rule; boundary counts as
    /// inside up to rounding).
    pub fn footprint_contains(&self, p: &Vec3) -> bool {
        let axis = self.plane_normal.iamax();
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let (px, py) = (p[u], p[v]);
        let mut inside = false;
        let n = self.polygon.len();
        for i in 0..n {
            let (a, b) = (&self.polygon[i], &self.polygon[(i + n - 1) % n]);
            let (ax, ay, bx, by) = (a[u], a[v], b[u], b[v]);
            if (ay > py) != (by > py) && px < (bx - ax) * (py - ay) / (by - ay) + ax {
                inside = !inside;
            }
        }
        inside
    }
}

fn mean_abs_distance(surface: &BimSurface, detections: &[Detection]) -> f64 {
    detections
        .iter()
        .map(|d| surface.signed_distance(&d.position).abs())
        .sum::<f64>()
        / detections.len() as f64
}

/// The ceiling closest to the detections by mean absolute point-plane
/// distance, among ceilings whose footprint contains the detections'
/// centroid; when none does, among all ceilings. Ties keep the first.
pub fn closest_ceiling<'a>(
    surfaces: &'a [BimSurface],
    detections: &[Detection],
) -> Result<&'a BimSurface> {
    if detections.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let ceilings: Vec<&BimSurface> = surfaces
        .iter()
        .filter(|s| s.surface_type == SurfaceType::Ceiling)
        .collect();
    if ceilings.is_empty() {
        return Err(Error::NotFound("no ceiling surfaces".into()));
    }
    let centroid = detections.iter().map(|d| d.position).sum::<Vec3>() / detections.len() as f64;
    let covering: Vec<&BimSurface> = ceilings
        .iter()
        .copied()
        .filter(|s| s.footprint_contains(&centroid))
        .collect();
    let pool = if covering.is_empty() { &ceilings } else { &covering };
    let mut best = pool[0];
    let mut best_d = mean_abs_distance(best, detections);
    for s in &pool[1..] {
        let d = mean_abs_distance(s, detections);
        if d < best_d {
            best = s;
            best_d = d;
        }
    }
    Ok(best)
}

/// Least-squares plane offset for a fixed unit normal: the mean of `n̂·pᵢ`.
pub fn estimate_offset(normal: &Vec3, positions: &[Vec3]) -> Result<f64> {
    if positions.is_empty() {
        return Err(invalid("offset of an empty point set"));
    }
    Ok(positions.iter().map(|p| normal.dot(p)).sum::<f64>() / positions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsacParams {
    /// Inlier threshold, metres.
    pub max_distance: f64,
    pub sample_size: usize,
    pub iterations: usize,
}

impl Default for MsacParams {
    fn default() -> Self {
        Self {
            max_distance: 0.30,
            sample_size: 2,
            iterations: 200,
        }
    }
}

/// Offset of a plane with known normal, with the inliers it explains.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneEstimate {
    pub normal: Vec3,
    pub offset: f64,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
}

impl PlaneEstimate {
    pub fn inliers<'a, T>(&'a self, items: &'a [T]) -> impl Iterator<Item = &'a T> + 'a {
        items
            .iter()
            .zip(&self.inlier_mask)
            .filter_map(|(d, &keep)| keep.then_some(d))
    }
}

/// MSAC over the plane offset with the normal held fixed.
///
/// Each hypothesis is the mean `n̂·p` of `sample_size` distinct positions,
/// scored by `Σ min(r², max_distance²)`; the first best hypothesis wins. Its
/// inliers are refitted with [`estimate_offset`] and the final mask is taken
/// against the refitted offset.
pub fn msac_plane(
    normal: &Vec3,
    positions: &[Vec3],
    params: &MsacParams,
    seed: u64,
) -> Result<PlaneEstimate> {
    if !(params.max_distance > 0.0) || params.sample_size == 0 || params.iterations == 0 {
        return Err(invalid("MSAC parameters must be positive"));
    }
    if positions.len() < params.sample_size {
        return Err(Error::InsufficientData {
            needed: params.sample_size,
            got: positions.len(),
        });
    }
    let heights: Vec<f64> = positions.iter().map(|p| normal.dot(p)).collect();
    let t2 = params.max_distance * params.max_distance;
    let score = |offset: f64| {
        heights
            .iter()
            .map(|h| ((h - offset) * (h - offset)).min(t2))
            .sum::<f64>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..params.iterations {
        let idx = sample(&mut rng, heights.len(), params.sample_size);
        let offset = idx.iter().map(|i| heights[i]).sum::<f64>() / params.sample_size as f64;
        let s = score(offset);
        if s < best.0 {
            best = (s, offset);
        }
    }
    let inliers: Vec<Vec3> = positions
        .iter()
        .zip(&heights)
        .filter(|(_, h)| (*h - best.1).abs() <= params.max_distance)
        .map(|(p, _)| *p)
        .collect();
    // A sample straddling distant clusters can leave its mean with no
    // inliers; the refit is skipped then. Otherwise the refitted mean lies
    // within the inliers' span of at most 2T, so the mask stays non-empty.
    let offset = if inliers.is_empty() {
        best.1
    } else {
        estimate_offset(normal, &inliers)?
    };
    let inlier_mask: Vec<bool> = heights
        .iter()
        .map(|h| (h - offset).abs() <= params.max_distance)
        .collect();
    let inlier_count = inlier_mask.iter().filter(|&&b| b).count();
    Ok(PlaneEstimate {
        normal: *normal,
        offset,
        inlier_mask,
        inlier_count,
    })
}

/// Intersects the camera ray through a detection with `n̂·p = offset`.
pub fn project_detection(detection: &Detection, normal: &Vec3, offset: f64) -> Result<Vec3> {
    let pc = detection.camera_position;
    let f = (detection.position - pc).normalize();
    let dot = normal.dot(&f);
    if dot.abs() <= PARALLEL_TOLERANCE {
        return Err(Error::ParallelRay { dot: dot.abs() });
    }
    let t = (normal.dot(&pc) - offset) / dot;
    Ok(pc - f * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(p: Vec3) -> Detection {
        Detection::new(p, Vec3::new(0.0, 0.0, 0.0), 1, 1.0, true, 0).unwrap()
    }

    fn rect(id: &str, x0: f64, y0: f64, x1: f64, y1: f64, z: f64) -> BimSurface {
        BimSurface::new(
            id.into(),
            SurfaceType::Ceiling,
            vec![
                Vec3::new(x0, y0, z),
                Vec3::new(x1, y0, z),
                Vec3::new(x1, y1, z),
                Vec3::new(x0, y1, z),
            ],
        )
        .unwrap()
    }

    #[test]
    fn newell_plane() {
        let s = rect("a", 0.0, 0.0, 4.0, 3.0, 3.0);
        assert!((s.plane_normal - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!((s.plane_offset - 3.0).abs() < 1e-15);
        let skew = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(0.0, 1.0, 0.1)];
        assert!(BimSurface::new("b".into(), SurfaceType::Wall, skew).is_err());
        let line = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(BimSurface::new("c".into(), SurfaceType::Wall, line).is_err());
    }

    #[test]
    fn surface_type_mapping() {
        assert_eq!(SurfaceType::from_gbxml("Ceiling"), SurfaceType::Ceiling);
        assert_eq!(SurfaceType::from_gbxml("SlabOnGrade"), SurfaceType::Floor);
        assert_eq!(SurfaceType::from_gbxml("ExteriorWall"), SurfaceType::Wall);
        assert_eq!(SurfaceType::from_gbxml("Roof"), SurfaceType::Other);
        for t in [SurfaceType::Ceiling, SurfaceType::Floor, SurfaceType::Wall, SurfaceType::Other] {
            assert_eq!(SurfaceType::from_gbxml(t.as_gbxml()), t);
        }
    }

    #[test]
    fn footprint() {
        let s = rect("a", 0.0, 0.0, 4.0, 3.0, 3.0);
        assert!(s.footprint_contains(&Vec3::new(1.0, 1.0, 0.0)));
        assert!(!s.footprint_contains(&Vec3::new(5.0, 1.0, 3.0)));
        assert!(!s.footprint_contains(&Vec3::new(1.0, -0.1, 3.0)));
    }

    #[test]
    fn closest_ceiling_examples() {
        let low = rect("low", 0.0, 0.0, 4.0, 4.0, 3.0);
        let high = rect("high", 0.0, 0.0, 4.0, 4.0, 6.0);
        let dets = vec![det(Vec3::new(1.0, 1.0, 2.5)), det(Vec3::new(2.0, 2.0, 2.5))];
        assert_eq!(closest_ceiling(&[low.clone()], &dets).unwrap().id, "low");
        assert_eq!(closest_ceiling(&[high.clone(), low.clone()], &dets).unwrap().id, "low");

        // The lower ceiling is nearer but does not cover the detections.
        let far_room = rect("far", 10.0, 0.0, 14.0, 4.0, 2.6);
        assert_eq!(closest_ceiling(&[far_room.clone(), high.clone()], &dets).unwrap().id, "high");
        // Nothing covers them: nearest plane overall.
        let off = vec![det(Vec3::new(20.0, 20.0, 2.5))];
        assert_eq!(closest_ceiling(&[high, far_room], &off).unwrap().id, "far");

        let wall = BimSurface { surface_type: SurfaceType::Wall, ..low };
        assert!(matches!(closest_ceiling(&[wall], &dets), Err(Error::NotFound(_))));
        assert!(closest_ceiling(&[rect("x", 0.0, 0.0, 1.0, 1.0, 3.0)], &[]).is_err());
    }

    #[test]
    fn offset_examples() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let pts = [Vec3::new(0.0, 0.0, 3.0), Vec3::new(1.0, 0.0, 3.1), Vec3::new(0.0, 5.0, 2.9)];
        assert!((estimate_offset(&n, &pts).unwrap() - 3.0).abs() < 1e-15);
        let p = Vec3::new(0.3, -2.0, 7.25);
        assert_eq!(estimate_offset(&n, &[p]).unwrap(), n.dot(&p));
        assert!(estimate_offset(&n, &[]).is_err());
    }

    #[test]
    fn msac_examples() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let on: Vec<Vec3> = (0..8).map(|i| Vec3::new(i as f64, 0.5 * i as f64, 3.0)).collect();
        let e = msac_plane(&n, &on, &MsacParams::default(), 1).unwrap();
        assert_eq!(e.inlier_count, 8);
        assert!((e.offset - 3.0).abs() < 1e-15);

        let mut pts: Vec<Vec3> = (0..10)
            .map(|i| Vec3::new(i as f64, 0.0, 3.0 + 0.01 * ((i % 3) as f64 - 1.0)))
            .collect();
        pts.push(Vec3::new(0.0, 1.0, 4.0));
        let e = msac_plane(&n, &pts, &MsacParams::default(), 7).unwrap();
        assert!(!e.inlier_mask[10]);
        assert_eq!(e.inlier_count, 10);
        assert!((e.offset - 3.0).abs() < 0.02);
        assert_eq!(e, msac_plane(&n, &pts, &MsacParams::default(), 7).unwrap());

        assert!(matches!(
            msac_plane(&n, &pts[..1], &MsacParams::default(), 0),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn projection_examples() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let p = project_detection(&det(Vec3::new(0.0, 0.0, 2.0)), &n, 3.0).unwrap();
        assert!((p - Vec3::new(0.0, 0.0, 3.0)).norm() < 1e-15);
        let on = Vec3::new(1.0, 2.0, 3.0);
        assert!((project_detection(&det(on), &n, 3.0).unwrap() - on).norm() < 1e-9);
        let sideways = det(Vec3::new(1.0, 0.0, 0.0));
        assert!(matches!(project_detection(&sideways, &n, 3.0), Err(Error::ParallelRay { .. })));
    }

    proptest! {
        #[test]
        fn msac_inliers_ignore_in_plane_motion(
            hs in proptest::collection::vec(-0.5f64..0.5, 3..30),
            shift in (-10.0f64..10.0, -10.0f64..10.0),
            seed in 0u64..1000,
        ) {
            let n = Vec3::new(0.0, 0.0, 1.0);
            let pts: Vec<Vec3> = hs.iter().enumerate().map(|(i, h)| Vec3::new(i as f64, 0.0, 3.0 + h)).collect();
            let moved: Vec<Vec3> = pts.iter().map(|p| p + Vec3::new(shift.0, shift.1, 0.0)).collect();
            let a = msac_plane(&n, &pts, &MsacParams::default(), seed).unwrap();
            let b = msac_plane(&n, &moved, &MsacParams::default(), seed).unwrap();
            prop_assert_eq!(a.inlier_mask, b.inlier_mask);
            prop_assert!((a.offset - b.offset).abs() < 1e-12);
        }

        #[test]
        fn msac_inliers_are_within_threshold(
            hs in proptest::collection::vec(-2.0f64..2.0, 2..40),
            seed in 0u64..1000,
        ) {
            let n = Vec3::new(0.0, 0.0, 1.0);
            let pts: Vec<Vec3> = hs.iter().map(|h| Vec3::new(0.0, 0.0, *h)).collect();
            let e = msac_plane(&n, &pts, &MsacParams::default(), seed).unwrap();
            prop_assert_eq!(e.inlier_count, e.inlier_mask.iter().filter(|&&b| b).count());
            for (p, keep) in pts.iter().zip(&e.inlier_mask) {
                prop_assert_eq!(*keep, (n.dot(p) - e.offset).abs() <= 0.30);
            }
        }

        #[test]
        fn embedded_lamps_filter_nothing(
            hs in proptest::collection::vec(-0.15f64..0.15, 2..40),
            seed in 0u64..1000,
        ) {
            // Every hypothesis is a mean of points within half the threshold
            // of the ceiling, so it keeps every point.
            let n = Vec3::new(0.0, 0.0, 1.0);
            let pts: Vec<Vec3> = hs.iter().enumerate().map(|(i, h)| Vec3::new(i as f64, 1.0, 3.0 + h)).collect();
            let e = msac_plane(&n, &pts, &MsacParams::default(), seed).unwrap();
            prop_assert_eq!(e.inlier_count, pts.len());
            prop_assert!((e.offset - estimate_offset(&n, &pts).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn projection_lies_on_plane_and_ray(
            c in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
            d in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
            n in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            offset in -5.0f64..5.0,
        ) {
            let n = Vec3::new(n.0, n.1, n.2);
            prop_assume!(n.norm() > 0.1);
            let n = n.normalize();
            let (c, d) = (Vec3::new(c.0, c.1, c.2), Vec3::new(d.0, d.1, d.2));
            prop_assume!((d - c).norm() > 1e-3);
            let f = (d - c).normalize();
            prop_assume!(n.dot(&f).abs() > 1e-2);
            let det = Detection::new(d, c, 1, 0.5, true, 0).unwrap();
            let p = project_detection(&det, &n, offset).unwrap();
            prop_assert!((n.dot(&p) - offset).abs() < 1e-9);
            prop_assert!((p - c).cross(&f).norm() < 1e-9);
        }
    }
}
