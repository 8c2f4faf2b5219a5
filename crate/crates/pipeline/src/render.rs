//! Synthetic line-segment frames: projected visible lamp edges with
//! endpoint and orientation noise, dropout and clutter.

use lampdet_core::edges::Segment2D;
use lampdet_core::mesh::TriMesh;
use lampdet_core::pose::{project_edge, project_point, so3_exp, CameraIntrinsics, Pose, Vec2, Vec3};
use lampdet_core::refine::{visible_edges, RefineOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::config::NoiseConfig;
use crate::error::Result;
use crate::scene::Scene;

/// A lamp fully inside the image.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleLamp {
    pub lamp: usize,
    /// Lamp frame to camera frame.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Camera frame to world.
    pub camera: Pose,
    pub segments: Vec<Segment2D>,
    /// Leading entries of `segments` that came from lamps; the rest is clutter.
    pub lamp_segments: usize,
    pub visible: Vec<VisibleLamp>,
}

/// Per-frame random stream. Even streams render, odd streams drive the
/// pipeline's own sampling of the same frame.
pub(crate) fn frame_rng(seed: u64, frame: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * frame as u64 + purpose);
    rng
}

fn render_options() -> RefineOptions {
    RefineOptions {
        min_projected_length: 1.0,
        ..RefineOptions::default()
    }
}

/// Noise-free image segments of the visible edges of `mesh` at `pose`.
pub fn projected_edges(mesh: &TriMesh, pose: &Pose, cam: &CameraIntrinsics) -> Vec<Segment2D> {
    visible_edges(mesh, pose, cam, &render_options())
        .iter()
        .filter_map(|e| project_edge(pose, cam, &e.point_a, &e.point_b).ok())
        .map(|e| Segment2D::new(e.a, e.b))
        .collect()
}

fn inside_image(mesh: &TriMesh, pose: &Pose, cam: &CameraIntrinsics) -> bool {
    mesh.vertices().iter().all(|v| {
        project_point(pose, cam, v).is_ok_and(|p| {
            p.x >= 0.0 && p.y >= 0.0 && p.x <= (cam.width - 1) as f64 && p.y <= (cam.height - 1) as f64
        })
    })
}

pub fn render_synthetic_frame(scene: &Scene, noise: &NoiseConfig, seed: u64, frame_index: usize) -> Result<Frame> {
    let camera = scene.trajectory[frame_index].clone();
    let world_to_cam = camera.inverse();
    let cam = &scene.camera;
    let mut rng = frame_rng(seed, frame_index, 0);
    let endpoint = Normal::new(0.0, noise.endpoint_sigma_px).expect("validated sigma");
    let orient = Normal::new(0.0, noise.orientation_sigma_rad).expect("validated sigma");

    let mut visible = Vec::new();
    let mut segments = Vec::new();
    for (k, lamp) in scene.lamps.iter().enumerate() {
        let mesh = &scene.meshes[&lamp.model_id];
        let pose = world_to_cam.compose(&lamp.pose);
        if !inside_image(mesh, &pose, cam) {
            continue;
        }
        for s in projected_edges(mesh, &pose, cam) {
            if rng.gen_bool(noise.dropout) {
                continue;
            }
            let jitter = |rng: &mut ChaCha8Rng| Vec2::new(endpoint.sample(rng), endpoint.sample(rng));
            let a = s.end_a + jitter(&mut rng);
            let b = s.end_b + jitter(&mut rng);
            let (sin, cos) = orient.sample(&mut rng).sin_cos();
            let mid = (a + b) / 2.0;
            let rot = |p: Vec2| {
                let d = p - mid;
                mid + Vec2::new(cos * d.x - sin * d.y, sin * d.x + cos * d.y)
            };
            segments.push(Segment2D::new(rot(a), rot(b)));
        }
        visible.push(VisibleLamp { lamp: k, pose });
    }
    let lamp_segments = segments.len();
    let (w, h) = (cam.width as f64 - 1.0, cam.height as f64 - 1.0);
    for _ in 0..noise.clutter_segments {
        let a = Vec2::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
        let (len, theta) = (rng.gen_range(10.0..60.0), rng.gen_range(0.0..std::f64::consts::PI));
        let b = a + Vec2::new(len * theta.cos(), len * theta.sin());
        segments.push(Segment2D::new(a, Vec2::new(b.x.clamp(0.0, w), b.y.clamp(0.0, h))));
    }
    Ok(Frame {
        index: frame_index,
        camera,
        segments,
        lamp_segments,
        visible,
    })
}

/// Ground-truth pose rotated by up to `max_rotation` rad about a random axis
/// and shifted by up to `max_translation` in a random direction.
pub fn perturb_pose(gt: &Pose, max_rotation: f64, max_translation: f64, rng: &mut impl Rng) -> Pose {
    let axis = Vec3::from(UnitSphere.sample(rng));
    let angle = rng.gen_range(0.0..=max_rotation);
    let dir = Vec3::from(UnitSphere.sample(rng));
    let dist = rng.gen_range(0.0..=max_translation);
    Pose::new(so3_exp(&(axis * angle)) * gt.rotation(), gt.translation() + dir * dist)
        .expect("rotation product stays orthonormal")
}
