use crate::error::{invalid, Result};
use crate::pose::{CameraIntrinsics, Pose, Vec3};

use super::{DepthBuffer, Edge3D, MeshEdge, TriMesh};

/// `cos(40°)`: an edge is sharp when its interior dihedral angle is below 140°.
pub const DEFAULT_SHARP_THRESHOLD: f64 = 0.766_044_443_118_978;

/// Options for [`clip_visible`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipOptions {
    /// Maximum projected spacing between occlusion samples, pixels.
    pub sample_step: f64,
    /// Depth bias as a fraction of the sample depth.
    pub depth_bias: f64,
    /// A sample is tested against the farthest buffer depth within this
    /// pixel radius, so that samples on an edge are not hidden by the
    /// rasterized footprint of its own steep adjacent faces.
    pub neighborhood: i64,
}

impl Default for ClipOptions {
    fn default() -> Self {
        Self {
            sample_step: 2.0,
            depth_bias: 1e-3,
            neighborhood: 1,
        }
    }
}

impl ClipOptions {
    pub fn with_step(sample_step: f64) -> Self {
        Self {
            sample_step,
            ..Self::default()
        }
    }
}

/// Interior-angle sharpness test. Boundary edges (one face) are never sharp.
pub fn is_sharp(mesh: &TriMesh, edge: &MeshEdge, threshold: f64) -> bool {
    if edge.faces.len() != 2 {
        return false;
    }
    let (fa, fb) = (edge.faces[0], edge.faces[1]);
    let na = mesh.face_normals()[fa];
    let nb = mesh.face_normals()[fb];
    let p = mesh.vertices()[edge.vertices[0]];
    let third = mesh.faces()[fb]
        .iter()
        .copied()
        .find(|v| !edge.vertices.contains(v))
        .expect("triangle has a vertex off the edge");
    let vb = mesh.vertices()[third] - p;
    na.dot(&nb) < threshold && na.dot(&vb) < 0.0
}

fn front_facing(mesh: &TriMesh, face: usize, pose: &Pose) -> bool {
    let n = pose.transform_vector(&mesh.face_normals()[face]);
    let p = pose.transform_point(&mesh.vertices()[mesh.faces()[face][0]]);
    n.dot(&p) < 0.0
}

/// Edges that are sharp or lie on the outline for `pose`.
///
/// An outline edge has exactly one front-facing adjacent face; a boundary
/// edge is therefore an outline edge whenever its single face is
/// front-facing.
pub fn extract_prominent_edges(mesh: &TriMesh, pose: &Pose, sharp_threshold: f64) -> Vec<Edge3D> {
    let facing: Vec<bool> = (0..mesh.faces().len())
        .map(|f| front_facing(mesh, f, pose))
        .collect();
    mesh.edges()
        .iter()
        .filter(|e| {
            let front = e.faces.iter().filter(|&&f| facing[f]).count();
            is_sharp(mesh, e, sharp_threshold) || front == 1
        })
        .map(|e| Edge3D {
            point_a: mesh.vertices()[e.vertices[0]],
            point_b: mesh.vertices()[e.vertices[1]],
            adjacent_faces: e.faces.clone(),
        })
        .collect()
}

/// Splits every edge into equal pieces no longer than
/// `fraction * (longest input edge)`.
pub fn subdivide(edges: &[Edge3D], fraction: f64) -> Result<Vec<Edge3D>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("subdivision fraction {fraction} not in (0, 1]")));
    }
    let longest = edges.iter().map(Edge3D::length).fold(0.0, f64::max);
    Ok(subdivide_max_length(edges, fraction * longest))
}

/// Splits every edge into `ceil(len / max_length)` equal pieces.
pub fn subdivide_max_length(edges: &[Edge3D], max_length: f64) -> Vec<Edge3D> {
    let mut out = Vec::with_capacity(edges.len());
    for e in edges {
        let len = e.length();
        let pieces = if max_length > 0.0 {
            ((len / max_length) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        } else {
            1
        };
        for k in 0..pieces {
            let t0 = k as f64 / pieces as f64;
            let t1 = (k + 1) as f64 / pieces as f64;
            out.push(Edge3D {
                point_a: if k == 0 { e.point_a } else { e.lerp(t0) },
                point_b: if k + 1 == pieces { e.point_b } else { e.lerp(t1) },
                adjacent_faces: e.adjacent_faces.clone(),
            });
        }
    }
    out
}

fn sample_visible(
    p_cam: &Vec3,
    depth: &DepthBuffer,
    cam: &CameraIntrinsics,
    opts: &ClipOptions,
) -> bool {
    if p_cam.z <= crate::pose::MIN_DEPTH {
        return false;
    }
    let uv = cam.project_camera_point(p_cam);
    let (x, y) = (uv.x.round() as i64, uv.y.round() as i64);
    let r = opts.neighborhood;
    let mut buffer = f64::NEG_INFINITY;
    for dy in -r..=r {
        for dx in -r..=r {
            buffer = buffer.max(depth.get(x + dx, y + dy));
        }
    }
    p_cam.z <= buffer + opts.depth_bias * p_cam.z
}

/// Keeps the visible parts of `edges`.
///
/// Each edge is sampled so that consecutive samples are at most
/// `opts.sample_step` pixels apart once projected; maximal runs of visible
/// samples become sub-edges. Fully occluded edges yield nothing.
pub fn clip_visible(
    edges: &[Edge3D],
    depth: &DepthBuffer,
    pose: &Pose,
    cam: &CameraIntrinsics,
    opts: &ClipOptions,
) -> Vec<Edge3D> {
    let mut out = Vec::new();
    for e in edges {
        let ca = pose.transform_point(&e.point_a);
        let cb = pose.transform_point(&e.point_b);
        let intervals = if ca.z > 0.0 && cb.z > 0.0 {
            let len2d = (cam.project_camera_point(&ca) - cam.project_camera_point(&cb)).norm();
            // Uniform 3D steps project non-uniformly; the depth ratio bounds
            // the stretch.
            let stretch = ca.z.max(cb.z) / ca.z.min(cb.z);
            (len2d * stretch / opts.sample_step).ceil().max(1.0)
        } else {
            64.0
        } as usize;

        let mut run_start: Option<usize> = None;
        let mut last_visible = 0;
        for i in 0..=intervals {
            let t = i as f64 / intervals as f64;
            let pc = ca + (cb - ca) * t;
            if sample_visible(&pc, depth, cam, opts) {
                if run_start.is_none() {
                    run_start = Some(i);
                }
                last_visible = i;
            } else if let Some(s) = run_start.take() {
                push_run(&mut out, e, s, last_visible, intervals);
            }
        }
        if let Some(s) = run_start {
            push_run(&mut out, e, s, last_visible, intervals);
        }
    }
    out
}

fn push_run(out: &mut Vec<Edge3D>, e: &Edge3D, first: usize, last: usize, intervals: usize) {
    if last <= first {
        return;
    }
    let at = |i: usize| {
        if i == 0 {
            e.point_a
        } else if i == intervals {
            e.point_b
        } else {
            e.lerp(i as f64 / intervals as f64)
        }
    };
    out.push(Edge3D {
        point_a: at(first),
        point_b: at(last),
        adjacent_faces: e.adjacent_faces.clone(),
    });
}
