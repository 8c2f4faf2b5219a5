//! Rigid-body poses, their 6-vector Lie-algebra coordinates, and pinhole
//! projection.
//!
//! A [`Pose`] maps model coordinates into camera coordinates
//! (`x_cam = R * x_model + t`). The camera looks along +z with image x to the
//! right and image y down. A [`Twist`] stores `(translation, rotation)` where
//! `rotation` is an axis-angle vector and `translation` is the se(3)
//! translational component (`t = V(ω) * translation`).

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{invalid, Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation magnitude the Taylor expansions are used.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Minimum depth (meters) for a point to count as in front of the camera.
pub const MIN_DEPTH: f64 = 1e-9;

const ORTHO_TOL: f64 = 1e-9;

/// se(3) coordinates, ordered `(translation, rotation)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub translation: Vec3,
    pub rotation: Vec3,
}

impl Twist {
    pub fn new(translation: Vec3, rotation: Vec3) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a twist from a 6-vector laid out as `[t; ω]`.
    pub fn from_slice(v: &[f64; 6]) -> Self {
        Self {
            translation: Vec3::new(v[0], v[1], v[2]),
            rotation: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.translation, -self.rotation)
    }
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Checked constructor: `rotation` must be orthonormal with determinant +1
    /// (within 1e-9).
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if !(err <= ORTHO_TOL) {
            return Err(invalid(format!("rotation not orthonormal (error {err:e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(invalid(format!("rotation determinant {det} != 1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite translation"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Pure translation.
    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation `exp(axis_angle)` followed by `translation`.
    pub fn from_axis_angle(axis_angle: Vec3, translation: Vec3) -> Self {
        Self {
            rotation: so3_exp(&axis_angle),
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = orthonormalize(&(self.rotation * other.rotation));
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle (radians) of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        rotation_angle(&rel)
    }
}

/// Pinhole camera parameters (pixels). Images are assumed rectified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_x: f64,
    pub focal_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        focal_x: f64,
        focal_y: f64,
        principal_x: f64,
        principal_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(focal_x > 0.0 && focal_y > 0.0) {
            return Err(invalid("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if !(0.0..=width as f64).contains(&principal_x)
            || !(0.0..=height as f64).contains(&principal_y)
        {
            return Err(invalid("principal point outside the image"));
        }
        Ok(Self {
            focal_x,
            focal_y,
            principal_x,
            principal_y,
            width,
            height,
        })
    }

    /// Projects a camera-frame point. Caller guarantees positive depth.
    pub fn project_camera_point(&self, p: &Vec3) -> Vec2 {
        Vec2::new(
            self.focal_x * p.x / p.z + self.principal_x,
            self.focal_y * p.y / p.z + self.principal_y,
        )
    }

    /// Unit ray direction (camera frame) through pixel `uv`.
    pub fn back_project(&self, uv: &Vec2) -> Vec3 {
        Vec3::new(
            (uv.x - self.principal_x) / self.focal_x,
            (uv.y - self.principal_y) / self.focal_y,
            1.0,
        )
        .normalize()
    }
}

/// A projected image-space edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge2D {
    pub a: Vec2,
    pub b: Vec2,
    /// Radians in `[0, π)`.
    pub orientation: f64,
}

impl Edge2D {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self {
            a,
            b,
            orientation: fold_orientation(b - a),
        }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn center(&self) -> Vec2 {
        0.5 * (self.a + self.b)
    }
}

/// Orientation of a direction vector folded into `[0, π)`.
pub fn fold_orientation(d: Vec2) -> f64 {
    let mut t = d.y.atan2(d.x);
    if t < 0.0 {
        t += PI;
    }
    if t >= PI {
        t -= PI;
    }
    t
}

/// Skew-symmetric (hat) matrix of `w`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula.
pub fn so3_exp(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, one_minus_cos_over_sq(theta))
    };
    Mat3::identity() + k * a + k * k * b
}

fn rotation_angle(r: &Mat3) -> f64 {
    let s = 0.5 * vee(&(r - r.transpose())).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

fn orthonormalize(r: &Mat3) -> Mat3 {
    // One Newton step of the polar decomposition keeps drift out of long
    // composition chains.
    let rinv_t = r.try_inverse().map(|m| m.transpose()).unwrap_or(*r);
    (r + rinv_t) * 0.5
}

/// Below this angle the cancelling coefficients switch to their series.
const SERIES_ANGLE: f64 = 1e-2;

/// `(1 - cos θ) / θ²`, written without cancellation.
fn one_minus_cos_over_sq(theta: f64) -> f64 {
    let h = (0.5 * theta).sin() / theta;
    2.0 * h * h
}

/// Left Jacobian `V(ω)` of SO(3).
fn left_jacobian(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let b = if theta < SMALL_ANGLE {
        0.5 - theta2 / 24.0
    } else {
        one_minus_cos_over_sq(theta)
    };
    let c = if theta < SERIES_ANGLE {
        1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0
    } else {
        (theta - theta.sin()) / (theta2 * theta)
    };
    Mat3::identity() + k * b + k * k * c
}

fn left_jacobian_inverse(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let c = if theta < SERIES_ANGLE {
        1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / theta2
    };
    Mat3::identity() - k * 0.5 + k * k * c
}

/// Exponential map se(3) → SE(3).
pub fn exp_map(twist: &Twist) -> Result<Pose> {
    if !twist.is_finite() {
        return Err(invalid("non-finite twist"));
    }
    Ok(Pose {
        rotation: so3_exp(&twist.rotation),
        translation: left_jacobian(&twist.rotation) * twist.translation,
    })
}

/// Logarithmic map SE(3) → se(3).
///
/// Fails with [`Error::AmbiguousRotation`] when the rotation angle is within
/// 1e-6 of π, where the axis sign is not unique.
pub fn log_map(pose: &Pose) -> Result<Twist> {
    let r = &pose.rotation;
    let axis_sin = vee(&(r - r.transpose())) * 0.5;
    let s = axis_sin.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if theta >= PI - 1e-6 {
        return Err(Error::AmbiguousRotation { angle: theta });
    }
    let w = if theta < SMALL_ANGLE {
        // sin θ ≈ θ: the vee part already is the rotation vector to first order.
        axis_sin * (1.0 + theta * theta / 6.0)
    } else {
        axis_sin * (theta / s)
    };
    Ok(Twist {
        translation: left_jacobian_inverse(&w) * pose.translation,
        rotation: w,
    })
}

/// Pinhole projection of a model point under `pose`.
pub fn project_point(pose: &Pose, cam: &CameraIntrinsics, point: &Vec3) -> Result<Vec2> {
    let pc = pose.transform_point(point);
    if pc.z <= MIN_DEPTH {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    Ok(cam.project_camera_point(&pc))
}

/// Projects both endpoints of a model edge.
pub fn project_edge(
    pose: &Pose,
    cam: &CameraIntrinsics,
    point_a: &Vec3,
    point_b: &Vec3,
) -> Result<Edge2D> {
    let a = project_point(pose, cam, point_a)?;
    let b = project_point(pose, cam, point_b)?;
    Ok(Edge2D::new(a, b))
}
