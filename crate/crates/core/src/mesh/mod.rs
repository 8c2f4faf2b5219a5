//! Triangle meshes, prominent-edge extraction and occlusion handling.
//!
//! The visible-edge pipeline for a candidate pose is
//! [`extract_prominent_edges`] → [`subdivide`] → [`rasterize_depth`] +
//! [`clip_visible`].

mod raster;
mod visibility;

use std::collections::BTreeMap;
use std::io::BufRead;

pub use raster::{rasterize_depth, DepthBuffer};
pub use visibility::{
    clip_visible, extract_prominent_edges, is_sharp, subdivide, subdivide_max_length,
    ClipOptions, DEFAULT_SHARP_THRESHOLD,
};

use crate::error::{invalid, Error, Result};
use crate::pose::Vec3;

/// Undirected mesh edge with its adjacent faces.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshEdge {
    pub vertices: [usize; 2],
    /// One (boundary) or two (interior) face indices.
    pub faces: Vec<usize>,
}

/// Triangle mesh with per-face normals and edge adjacency.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<Vec3>,
    edges: Vec<MeshEdge>,
}

impl TriMesh {
    /// Builds a mesh, computing normals from the counter-clockwise winding and
    /// the edge adjacency. Rejects out-of-range indices, degenerate faces and
    /// edges shared by more than two faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut face_normals = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(invalid(format!("face {fi} has an out-of-range index")));
            }
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            let len = n.norm();
            if !(len > 1e-15) {
                return Err(invalid(format!("face {fi} is degenerate")));
            }
            face_normals.push(n / len);
        }

        let mut adjacency: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                adjacency.entry(key).or_default().push(fi);
            }
        }
        let mut edges = Vec::with_capacity(adjacency.len());
        for ((a, b), fs) in adjacency {
            if fs.len() > 2 {
                return Err(invalid(format!(
                    "non-manifold edge ({a},{b}) has {} faces",
                    fs.len()
                )));
            }
            edges.push(MeshEdge {
                vertices: [a, b],
                faces: fs,
            });
        }

        Ok(Self {
            vertices,
            faces,
            face_normals,
            edges,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            face_normals: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.face_normals
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Length of the longest mesh edge.
    pub fn longest_edge(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (self.vertices[e.vertices[1]] - self.vertices[e.vertices[0]]).norm())
            .fold(0.0, f64::max)
    }

    /// Returns a copy with every vertex multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            faces: self.faces.clone(),
            face_normals: self.face_normals.clone(),
            edges: self.edges.clone(),
        }
    }

    /// Reads the plain-text mesh format: a header line `<n_vertices>
    /// <n_faces>`, then one `x y z` line per vertex (meters) and one `i j k`
    /// line per face (zero-based). Blank lines and `#` comments are skipped.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim().to_string();
            if !body.is_empty() {
                lines.push((i + 1, body));
            }
        }
        let mut it = lines.into_iter();
        let (hline, header) = it.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let counts: Vec<usize> = parse_fields(hline, &header)?;
        if counts.len() != 2 {
            return Err(Error::Parse {
                line: hline,
                message: "header must be '<n_vertices> <n_faces>'".into(),
            });
        }
        let mut vertices = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let (ln, body) = it.next().ok_or(Error::Parse {
                line: hline,
                message: "unexpected end of file in vertex list".into(),
            })?;
            let v: Vec<f64> = parse_fields(ln, &body)?;
            if v.len() != 3 {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("vertex needs 3 coordinates, got {}", v.len()),
                });
            }
            vertices.push(Vec3::new(v[0], v[1], v[2]));
        }
        let mut faces = Vec::with_capacity(counts[1]);
        for _ in 0..counts[1] {
            let (ln, body) = it.next().ok_or(Error::Parse {
                line: hline,
                message: "unexpected end of file in face list".into(),
            })?;
            let f: Vec<usize> = parse_fields(ln, &body)?;
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("only triangular faces are supported, got {}", f.len()),
                });
            }
            faces.push([f[0], f[1], f[2]]);
        }
        if let Some((ln, _)) = it.next() {
            return Err(Error::Parse {
                line: ln,
                message: "trailing data after face list".into(),
            });
        }
        Self::new(vertices, faces)
    }

    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.vertices.len(), self.faces.len())?;
        for v in &self.vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        for f in &self.faces {
            writeln!(w, "{} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }
}

fn parse_fields<T: std::str::FromStr>(line: usize, body: &str) -> Result<Vec<T>> {
    body.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse '{tok}'"),
            })
        })
        .collect()
}

/// A 3D model edge (meters, model frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge3D {
    pub point_a: Vec3,
    pub point_b: Vec3,
    pub adjacent_faces: Vec<usize>,
}

impl Edge3D {
    pub fn new(point_a: Vec3, point_b: Vec3) -> Self {
        Self {
            point_a,
            point_b,
            adjacent_faces: Vec::new(),
        }
    }

    pub fn length(&self) -> f64 {
        (self.point_b - self.point_a).norm()
    }

    pub fn lerp(&self, t: f64) -> Vec3 {
        self.point_a + (self.point_b - self.point_a) * t
    }
}

/// Axis-aligned box centered at the origin, outward CCW winding.
pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriMesh {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let v = vec![
        Vec3::new(-hx, -hy, -hz),
        Vec3::new(hx, -hy, -hz),
        Vec3::new(hx, hy, -hz),
        Vec3::new(-hx, hy, -hz),
        Vec3::new(-hx, -hy, hz),
        Vec3::new(hx, -hy, hz),
        Vec3::new(hx, hy, hz),
        Vec3::new(-hx, hy, hz),
    ];
    let f = vec![
        [0, 2, 1],
        [0, 3, 2], // -z
        [4, 5, 6],
        [4, 6, 7], // +z
        [0, 1, 5],
        [0, 5, 4], // -y
        [2, 3, 7],
        [2, 7, 6], // +y
        [1, 2, 6],
        [1, 6, 5], // +x
        [3, 0, 4],
        [3, 4, 7], // -x
    ];
    TriMesh::new(v, f).expect("box mesh is valid")
}

/// Closed prism over a regular `sides`-gon of circumradius `radius`, with the
/// axis along z from `-height/2` to `height/2`.
pub fn prism_mesh(sides: usize, radius: f64, height: f64) -> Result<TriMesh> {
    if sides < 3 {
        return Err(invalid("prism needs at least 3 sides"));
    }
    let hz = height / 2.0;
    let mut v = Vec::with_capacity(2 * sides + 2);
    for z in [-hz, hz] {
        for k in 0..sides {
            let a = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            v.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_c = v.len();
    v.push(Vec3::new(0.0, 0.0, -hz));
    let top_c = v.len();
    v.push(Vec3::new(0.0, 0.0, hz));
    let mut f = Vec::with_capacity(4 * sides);
    for k in 0..sides {
        let k1 = (k + 1) % sides;
        f.push([bottom_c, k1, k]);
        f.push([top_c, sides + k, sides + k1]);
        f.push([k, k1, sides + k1]);
        f.push([k, sides + k1, sides + k]);
    }
    TriMesh::new(v, f)
}
