//! Pose refinement by damped Gauss-Newton over the directional chamfer cost
//! `E = ½ Σ D(edge)²`, with three ways of evaluating `D`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector6};

use crate::edges::Segment2D;
use crate::error::{invalid, Error, Result};
use crate::mesh::{
    clip_visible, extract_prominent_edges, rasterize_depth, subdivide_max_length, ClipOptions,
    Edge3D, TriMesh, DEFAULT_SHARP_THRESHOLD,
};
use crate::pose::{exp_map, project_edge, CameraIntrinsics, Pose, Twist};
use crate::tensor::{
    build_dt3, build_idt3, edge_distance_direct, edge_distance_idt3, edge_distance_sampled,
    smooth_dt3, Dt3Tensor, Idt3Tensor, DEFAULT_LAMBDA_THETA, DEFAULT_ORIENTATIONS,
    DEFAULT_SMOOTHING_SIGMA, MIN_EDGE_LENGTH,
};

/// How per-edge distances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RefineMethod {
    /// A few point samples per edge on the distance tensor.
    D2co,
    /// Every pixel step along the edge on the distance tensor.
    D2coE,
    /// Constant-time span integrals on the integral tensor.
    D2coIt,
}

impl RefineMethod {
    pub const ALL: [RefineMethod; 3] = [RefineMethod::D2co, RefineMethod::D2coE, RefineMethod::D2coIt];

    pub fn as_str(self) -> &'static str {
        match self {
            RefineMethod::D2co => "d2co",
            RefineMethod::D2coE => "d2co-e",
            RefineMethod::D2coIt => "d2co-it",
        }
    }
}

impl fmt::Display for RefineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RefineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "d2co" => Ok(RefineMethod::D2co),
            "d2co-e" => Ok(RefineMethod::D2coE),
            "d2co-it" => Ok(RefineMethod::D2coIt),
            other => Err(invalid(format!("unknown refine method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Stop when `‖Jᵀr‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the step norm falls below this (twist units).
    pub step_tolerance: f64,
    /// Stop after an accepted step whose relative cost decrease is below this.
    pub function_tolerance: f64,
    /// Central-difference step, twist units.
    pub finite_difference_step: f64,
    pub damping_init: f64,
    /// Model edges are split into pieces no longer than this fraction of the
    /// longest mesh edge.
    pub subdivision_fraction: f64,
    /// Point samples per edge for [`RefineMethod::D2co`].
    pub point_samples: usize,
    /// Visible edges are recomputed once the pose has rotated this far
    /// (radians) since the last extraction.
    pub reextract_angle: f64,
    /// Consecutive rejected steps before giving up.
    pub max_rejections: usize,
    pub sharp_threshold: f64,
    pub clip: ClipOptions,
    /// Visible edges projecting shorter than this many pixels at extraction
    /// time are dropped; their orientation is too noisy to match.
    pub min_projected_length: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            function_tolerance: 1e-6,
            finite_difference_step: 1e-4,
            damping_init: 1e-3,
            subdivision_fraction: 1.0,
            point_samples: 3,
            reextract_angle: 0.05,
            max_rejections: 5,
            sharp_threshold: DEFAULT_SHARP_THRESHOLD,
            clip: ClipOptions::default(),
            min_projected_length: 10.0,
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("function_tolerance", self.function_tolerance),
            ("finite_difference_step", self.finite_difference_step),
            ("damping_init", self.damping_init),
            ("reextract_angle", self.reextract_angle),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(self.min_projected_length >= 0.0) {
            return Err(invalid("min_projected_length must be non-negative"));
        }
        if !(self.subdivision_fraction > 0.0 && self.subdivision_fraction <= 1.0) {
            return Err(invalid("subdivision_fraction must be in (0, 1]"));
        }
        if self.max_iterations == 0 || self.point_samples == 0 || self.max_rejections == 0 {
            return Err(invalid("iteration, sample and rejection counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub pose: Pose,
    /// `½ Σ r²` over the final visible-edge set.
    pub cost: f64,
    /// Cost of the initial pose over its own visible-edge set.
    pub initial_cost: f64,
    /// Iterations performed, counting rejected steps.
    pub iterations: usize,
    pub converged: bool,
    /// Edges whose evaluation left the image raster at the final pose.
    pub truncated_edges: usize,
    /// Number of residuals at the final pose.
    pub residual_count: usize,
    /// `(before, after)` cost of every accepted step, both measured on the
    /// edge set that was current for that step.
    pub cost_trace: Vec<(f64, f64)>,
}

impl RefineResult {
    /// Root-mean-square per-edge distance, pixels.
    pub fn rms_distance(&self) -> f64 {
        if self.residual_count == 0 {
            return f64::INFINITY;
        }
        (2.0 * self.cost / self.residual_count as f64).sqrt()
    }
}

/// `exp(-cost / sigma)`; 1 at zero cost and strictly decreasing.
pub fn score(cost: f64, sigma: f64) -> f64 {
    (-cost.max(0.0) / sigma).exp()
}

pub const DEFAULT_SCORE_SIGMA: f64 = 2.0;

/// Tensor construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorParams {
    pub n_orient: usize,
    pub lambda_theta: f64,
    /// Orientation smoothing in bins; `0` disables smoothing.
    pub smoothing_sigma: f64,
}

impl Default for TensorParams {
    fn default() -> Self {
        Self {
            n_orient: DEFAULT_ORIENTATIONS,
            lambda_theta: DEFAULT_LAMBDA_THETA,
            smoothing_sigma: DEFAULT_SMOOTHING_SIGMA,
        }
    }
}

/// Distance tensor and its integral form for one image.
#[derive(Debug, Clone)]
pub struct TensorSet {
    pub dt3: Dt3Tensor,
    pub idt3: Idt3Tensor,
}

impl TensorSet {
    pub fn from_dt3(dt3: Dt3Tensor) -> Self {
        let idt3 = build_idt3(&dt3);
        Self { dt3, idt3 }
    }

    pub fn from_segments(
        segments: &[Segment2D],
        width: usize,
        height: usize,
        params: &TensorParams,
    ) -> Result<Self> {
        let mut dt3 = build_dt3(segments, width, height, params.n_orient, params.lambda_theta)?;
        if params.smoothing_sigma > 0.0 {
            dt3 = smooth_dt3(&dt3, params.smoothing_sigma)?;
        }
        Ok(Self::from_dt3(dt3))
    }
}

/// Visible model edges for `pose`: prominent edges, split per the
/// subdivision fraction of the longest mesh edge, then clipped against the
/// rendered depth.
pub fn visible_edges(
    mesh: &TriMesh,
    pose: &Pose,
    cam: &CameraIntrinsics,
    options: &RefineOptions,
) -> Vec<Edge3D> {
    let prominent = extract_prominent_edges(mesh, pose, options.sharp_threshold);
    let pieces = subdivide_max_length(&prominent, options.subdivision_fraction * mesh.longest_edge());
    let depth = rasterize_depth(mesh, pose, cam);
    let mut visible = clip_visible(&pieces, &depth, pose, cam, &options.clip);
    visible.retain(|e| {
        project_edge(pose, cam, &e.point_a, &e.point_b)
            .is_ok_and(|p| p.length() >= options.min_projected_length)
    });
    visible
}

/// Per-edge residuals at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// One entry per input edge; skipped edges contribute
    /// [`skipped_residual`].
    pub values: Vec<f64>,
    /// Edges with an endpoint behind the camera or a degenerate projection.
    pub skipped: usize,
    /// Edges whose evaluation left the raster.
    pub truncated: usize,
}

impl Residuals {
    pub fn cost(&self) -> f64 {
        0.5 * self.values.iter().map(|r| r * r).sum::<f64>()
    }
}

/// Residual of an edge that cannot be projected: the image diagonal in
/// pixels, no less than any in-image distance, so leaving the view is never
/// cheaper than staying in it.
pub fn skipped_residual(cam: &CameraIntrinsics) -> f64 {
    (cam.width as f64).hypot(cam.height as f64)
}

/// Mean tensor distance of every projected edge.
///
/// Integral-tensor reads that leave the raster fall back to the
/// border-clamped per-pixel evaluation so that edges sliding off the image
/// do not look artificially cheap.
pub fn residuals(
    pose: &Pose,
    edges: &[Edge3D],
    cam: &CameraIntrinsics,
    tensors: &TensorSet,
    method: RefineMethod,
    point_samples: usize,
) -> Residuals {
    let skip = skipped_residual(cam);
    let mut out = Residuals {
        values: Vec::with_capacity(edges.len()),
        skipped: 0,
        truncated: 0,
    };
    for e in edges {
        let Ok(e2) = project_edge(pose, cam, &e.point_a, &e.point_b) else {
            out.values.push(skip);
            out.skipped += 1;
            continue;
        };
        if !(e2.length() > MIN_EDGE_LENGTH) {
            out.values.push(skip);
            out.skipped += 1;
            continue;
        }
        let reading = match method {
            RefineMethod::D2co => edge_distance_sampled(&tensors.dt3, e2.a, e2.b, point_samples),
            RefineMethod::D2coE => edge_distance_direct(&tensors.dt3, e2.a, e2.b),
            RefineMethod::D2coIt => match edge_distance_idt3(&tensors.idt3, e2.a, e2.b) {
                Ok(r) if r.truncated => edge_distance_direct(&tensors.dt3, e2.a, e2.b),
                other => other,
            },
        }
        .expect("edge length checked above");
        if reading.truncated {
            out.truncated += 1;
        }
        out.values.push(reading.value);
    }
    out
}

/// Central-difference Jacobian of the residuals with respect to a twist
/// right-composed onto `pose`. Row-major `n × 6`.
pub fn numeric_jacobian(
    pose: &Pose,
    edges: &[Edge3D],
    cam: &CameraIntrinsics,
    tensors: &TensorSet,
    method: RefineMethod,
    point_samples: usize,
    step: f64,
) -> Result<Vec<[f64; 6]>> {
    let mut jac = vec![[0.0; 6]; edges.len()];
    for k in 0..6 {
        let mut d = [0.0; 6];
        d[k] = step;
        let plus = pose.compose(&exp_map(&Twist::from_slice(&d))?);
        d[k] = -step;
        let minus = pose.compose(&exp_map(&Twist::from_slice(&d))?);
        let rp = residuals(&plus, edges, cam, tensors, method, point_samples);
        let rm = residuals(&minus, edges, cam, tensors, method, point_samples);
        for (i, row) in jac.iter_mut().enumerate() {
            row[k] = (rp.values[i] - rm.values[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

fn normal_equations(jac: &[[f64; 6]], r: &[f64]) -> (Matrix6<f64>, Vector6<f64>) {
    let mut a = Matrix6::<f64>::zeros();
    let mut g = Vector6::<f64>::zeros();
    for (row, r) in jac.iter().zip(r) {
        let j = Vector6::from_row_slice(row);
        a += j * j.transpose();
        g += j * *r;
    }
    (a, g)
}

/// Refines `init` so that the projected visible edges of `mesh` fall on low
/// tensor values.
///
/// Each iteration solves `(JᵀJ + μI) δ = -Jᵀr` and tries `pose ∘ exp(δ)`.
/// `μ` starts at `damping_init · max diag(JᵀJ)`. Improving steps are
/// accepted and relax `μ` by the gain ratio; others are rejected and
/// stiffen it geometrically. The visible-edge set is held fixed between
/// extractions so the residual vector keeps its length.
pub fn refine(
    init: &Pose,
    mesh: &TriMesh,
    cam: &CameraIntrinsics,
    tensors: &TensorSet,
    method: RefineMethod,
    options: &RefineOptions,
) -> Result<RefineResult> {
    options.validate()?;
    let eval = |pose: &Pose, edges: &[Edge3D]| {
        residuals(pose, edges, cam, tensors, method, options.point_samples)
    };

    let mut pose = init.clone();
    let mut edges = visible_edges(mesh, &pose, cam, options);
    if edges.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut extracted_at = pose.clone();
    let mut res = eval(&pose, &edges);
    let initial_cost = res.cost();
    let mut cost = initial_cost;
    // Set from the first normal matrix.
    let mut mu = f64::NAN;
    let mut nu = 2.0;
    let mut rejections = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut normal: Option<(Matrix6<f64>, Vector6<f64>)> = None;
    let mut cost_trace = Vec::new();

    while iterations < options.max_iterations {
        iterations += 1;
        let (a, g) = match normal {
            Some(n) => n,
            None => {
                let jac = numeric_jacobian(
                    &pose,
                    &edges,
                    cam,
                    tensors,
                    method,
                    options.point_samples,
                    options.finite_difference_step,
                )?;
                let n = normal_equations(&jac, &res.values);
                normal = Some(n);
                n
            }
        };
        if g.amax() < options.gradient_tolerance {
            converged = true;
            break;
        }
        if mu.is_nan() {
            mu = options.damping_init * a.diagonal().amax().max(f64::MIN_POSITIVE);
        }
        let mut damped = a;
        for i in 0..6 {
            damped[(i, i)] += mu;
        }
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            rejections += 1;
            if rejections >= options.max_rejections {
                break;
            }
            continue;
        };
        let delta = chol.solve(&(-g));
        if delta.norm() < options.step_tolerance {
            converged = true;
            break;
        }
        let candidate = pose.compose(&exp_map(&Twist::from_slice(&delta.into()))?);
        let cand_res = eval(&candidate, &edges);
        let cand_cost = cand_res.cost();
        let change = (cost - cand_cost).abs() / cost.max(f64::MIN_POSITIVE);
        // Decrease predicted by the damped quadratic model.
        let predicted = 0.5 * delta.dot(&(mu * delta - g));
        if cand_cost < cost {
            let rho = (cost - cand_cost) / predicted.max(f64::MIN_POSITIVE);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            rejections = 0;
            cost_trace.push((cost, cand_cost));
            pose = candidate;
            res = cand_res;
            cost = cand_cost;
            normal = None;
            if extracted_at.rotation_angle_to(&pose) > options.reextract_angle {
                edges = visible_edges(mesh, &pose, cam, options);
                if edges.is_empty() {
                    return Err(Error::InsufficientData { needed: 1, got: 0 });
                }
                extracted_at = pose.clone();
                res = eval(&pose, &edges);
                cost = res.cost();
                continue;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            rejections += 1;
        }
        // A step that barely changes the cost, accepted or not, means the
        // local model has nothing left to offer.
        if change < options.function_tolerance {
            converged = true;
            break;
        }
        if rejections >= options.max_rejections {
            break;
        }
    }

    // The edge set may have changed since the start; never return a pose
    // that is worse than the initial one under the final set.
    let init_res = eval(init, &edges);
    if init_res.cost() < cost {
        pose = init.clone();
        res = init_res;
        cost = res.cost();
    }
    Ok(RefineResult {
        pose,
        cost,
        initial_cost,
        iterations,
        converged,
        truncated_edges: res.truncated,
        residual_count: res.values.len(),
        cost_trace,
    })
}
