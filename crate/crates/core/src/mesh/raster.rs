use crate::pose::{CameraIntrinsics, Pose, Vec2, Vec3};

use super::TriMesh;

/// Triangles with a vertex closer than this (meters) are not rasterized.
const NEAR_PLANE: f64 = 1e-3;

/// Per-pixel view-space depth in meters; uncovered pixels hold `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Depth at integer pixel `(x, y)`; `+∞` outside the buffer.
    pub fn get(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return f64::INFINITY;
        }
        self.depth[y as usize * self.width + x as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.depth
    }

    /// Rasterizes `mesh` under `pose` into this buffer, keeping the nearest
    /// depth per pixel.
    pub fn draw_mesh(&mut self, mesh: &TriMesh, pose: &Pose, cam: &CameraIntrinsics) {
        let verts: Vec<Vec3> = mesh
            .vertices()
            .iter()
            .map(|v| pose.transform_point(v))
            .collect();
        for f in mesh.faces() {
            let p = [verts[f[0]], verts[f[1]], verts[f[2]]];
            if p.iter().any(|v| v.z <= NEAR_PLANE) {
                continue;
            }
            let s = p.map(|v| cam.project_camera_point(&v));
            self.fill_triangle(&s, &p.map(|v| 1.0 / v.z));
        }
    }

    fn fill_triangle(&mut self, s: &[Vec2; 3], inv_z: &[f64; 3]) {
        let area = edge_fn(&s[0], &s[1], &s[2]);
        if area.abs() < 1e-12 || !area.is_finite() {
            return;
        }
        let min_x = s.iter().map(|v| v.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_x = s
            .iter()
            .map(|v| v.x)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(self.width as f64 - 1.0);
        let min_y = s.iter().map(|v| v.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let max_y = s
            .iter()
            .map(|v| v.y)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(self.height as f64 - 1.0);
        if min_x > max_x || min_y > max_y {
            return;
        }
        for y in min_y as usize..=max_y as usize {
            for x in min_x as usize..=max_x as usize {
                let q = Vec2::new(x as f64, y as f64);
                let w0 = edge_fn(&s[1], &s[2], &q) / area;
                let w1 = edge_fn(&s[2], &s[0], &q) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // 1/z is affine in screen space.
                let z = 1.0 / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                let cell = &mut self.depth[y * self.width + x];
                if z < *cell {
                    *cell = z;
                }
            }
        }
    }
}

fn edge_fn(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Software depth rendering of `mesh` under `pose`.
///
/// Zero-area projected triangles and triangles crossing the near plane are
/// skipped.
pub fn rasterize_depth(mesh: &TriMesh, pose: &Pose, cam: &CameraIntrinsics) -> DepthBuffer {
    let mut buf = DepthBuffer::new(cam.width, cam.height);
    buf.draw_mesh(mesh, pose, cam);
    buf
}
