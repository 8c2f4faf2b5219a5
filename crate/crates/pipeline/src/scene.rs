//! Synthetic rooms: a lamp grid under a flat ceiling and a camera path below.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use lampdet_core::bim::{write_surfaces, BimSurface, SurfaceType};
use lampdet_core::cluster::Reference;
use lampdet_core::mesh::{box_mesh, prism_mesh, TriMesh};
use lampdet_core::pose::{CameraIntrinsics, Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{PipelineError, Result};

/// The five lamp models: four rectangular panels and one round fixture.
pub fn lamp_mesh(model_id: u32) -> Result<TriMesh> {
    Ok(match model_id {
        1 => box_mesh(1.2, 0.3, 0.08),
        2 => box_mesh(0.6, 0.6, 0.06),
        3 => box_mesh(1.2, 0.6, 0.1),
        4 => box_mesh(1.5, 0.2, 0.05),
        5 => prism_mesh(32, 0.3, 0.06)?,
        other => return Err(PipelineError::Config(format!("unknown lamp model {other}"))),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lamp {
    pub model_id: u32,
    /// Lamp frame to world.
    pub pose: Pose,
    pub state: bool,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub lamps: Vec<Lamp>,
    /// Candidate models, keyed by id.
    pub meshes: BTreeMap<u32, TriMesh>,
    pub surfaces: Vec<BimSurface>,
    pub references: Vec<Reference>,
    /// Camera frame to world, one per frame. Cameras look along world +z.
    pub trajectory: Vec<Pose>,
    pub camera: CameraIntrinsics,
}

/// Lamp centers of an `nx × ny` grid, each in the middle of its cell,
/// row-major with x varying fastest.
pub fn grid_positions(room: [f64; 2], grid: [usize; 2], z: f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(grid[0] * grid[1]);
    for j in 0..grid[1] {
        for i in 0..grid[0] {
            out.push(Vec3::new(
                (i as f64 + 0.5) * room[0] / grid[0] as f64,
                (j as f64 + 0.5) * room[1] / grid[1] as f64,
                z,
            ));
        }
    }
    out
}

/// `frames` points evenly spaced by arc length along the polyline.
pub fn sample_path(waypoints: &[[f64; 2]], frames: usize) -> Vec<[f64; 2]> {
    if waypoints.is_empty() || frames == 0 {
        return Vec::new();
    }
    let seg_len: Vec<f64> = waypoints
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = seg_len.iter().sum();
    (0..frames)
        .map(|k| {
            let mut s = if frames == 1 { 0.0 } else { total * k as f64 / (frames - 1) as f64 };
            for (w, len) in waypoints.windows(2).zip(&seg_len) {
                if s <= *len && *len > 0.0 {
                    let t = s / len;
                    return [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
                }
                s -= len;
            }
            *waypoints.last().expect("non-empty")
        })
        .collect()
}

fn room_surfaces(room: [f64; 2], height: f64) -> Result<Vec<BimSurface>> {
    let [x, y] = room;
    let corners = [[0.0, 0.0], [x, 0.0], [x, y], [0.0, y]];
    let at = |z: f64, order: &[usize]| order.iter().map(|&i| Vec3::new(corners[i][0], corners[i][1], z)).collect();
    let mut out = vec![
        // Wound to face down into the room.
        BimSurface::new("ceiling-0".into(), SurfaceType::Ceiling, at(height, &[0, 3, 2, 1]))?,
        BimSurface::new("floor-0".into(), SurfaceType::Floor, at(0.0, &[0, 1, 2, 3]))?,
    ];
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let poly = vec![
            Vec3::new(a[0], a[1], 0.0),
            Vec3::new(b[0], b[1], 0.0),
            Vec3::new(b[0], b[1], height),
            Vec3::new(a[0], a[1], height),
        ];
        out.push(BimSurface::new(format!("wall-{i}"), SurfaceType::Wall, poly)?);
    }
    Ok(out)
}

/// Builds the scene. Lamp states are drawn from a ChaCha8 stream seeded by
/// `config.seed`, so equal configs give equal scenes.
pub fn gen_scene(config: &Config) -> Result<Scene> {
    config.validate()?;
    let s = &config.scene;
    let mut meshes = BTreeMap::new();
    for &m in &s.models {
        meshes.insert(m, lamp_mesh(m)?);
    }
    let z = s.ceiling_height - s.hanging_offset;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lamps = Vec::new();
    for (k, center) in grid_positions(s.room, s.grid, z).into_iter().enumerate() {
        let model_id = s.models[k % s.models.len()];
        let (hx, hy) = meshes[&model_id]
            .vertices()
            .iter()
            .fold((0.0f64, 0.0f64), |(hx, hy), v| (hx.max(v.x.abs()), hy.max(v.y.abs())));
        if center.x - hx < 0.0 || center.x + hx > s.room[0] || center.y - hy < 0.0 || center.y + hy > s.room[1] {
            return Err(PipelineError::Config(format!(
                "lamp {k} (model {model_id}) at ({:.2}, {:.2}) extends outside the room",
                center.x, center.y
            )));
        }
        lamps.push(Lamp {
            model_id,
            pose: Pose::from_translation(center),
            state: rng.gen_bool(s.on_probability),
        });
    }
    let references = lamps
        .iter()
        .map(|l| Reference {
            position: *l.pose.translation(),
            model_id: l.model_id,
            state: l.state,
        })
        .collect();
    let trajectory = sample_path(&s.waypoints, s.frames)
        .into_iter()
        .map(|[x, y]| Pose::from_translation(Vec3::new(x, y, s.camera_height)))
        .collect();
    let c = &config.camera;
    let camera = CameraIntrinsics::new(c.focal, c.focal, c.width as f64 / 2.0, c.height as f64 / 2.0, c.width, c.height)?;
    Ok(Scene {
        lamps,
        meshes,
        surfaces: room_surfaces(s.room, s.ceiling_height)?,
        references,
        trajectory,
        camera,
    })
}

pub(crate) fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| PipelineError::io(format!("cannot create {}", path.display()), e))?;
    Ok(std::io::BufWriter::new(f))
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::io(format!("cannot write {}", path.display()), e)
}

/// Writes `building.xml`, `references.csv`, `trajectory.csv` and one
/// `model_<id>.txt` mesh per candidate model into `dir`.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(format!("cannot create {}", dir.display()), e))?;
    write_surfaces(create(&dir.join("building.xml"))?, &scene.surfaces)?;

    let path = dir.join("references.csv");
    let mut w = create(&path)?;
    let mut text = String::from("lamp,model_id,state,x,y,z\n");
    for (k, r) in scene.references.iter().enumerate() {
        let p = r.position;
        text += &format!("{k},{},{},{},{},{}\n", r.model_id, if r.state { "on" } else { "off" }, p.x, p.y, p.z);
    }
    w.write_all(text.as_bytes()).map_err(io_err(&path))?;

    let path = dir.join("trajectory.csv");
    let mut w = create(&path)?;
    let mut text = String::from("frame,x,y,z\n");
    for (k, pose) in scene.trajectory.iter().enumerate() {
        let t = pose.translation();
        text += &format!("{k},{},{},{}\n", t.x, t.y, t.z);
    }
    w.write_all(text.as_bytes()).map_err(io_err(&path))?;

    for (id, mesh) in &scene.meshes {
        let path = dir.join(format!("model_{id}.txt"));
        mesh.write_text(create(&path)?)?;
    }
    Ok(())
}
