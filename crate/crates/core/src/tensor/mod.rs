//! Directional distance-transform tensors and edge distance evaluation.

mod direct;
mod dt3;
mod idt3;

use std::f64::consts::PI;

pub use direct::{edge_distance_direct, edge_distance_sampled};
pub use dt3::{
    apply_orientation_penalty, build_distance_slices, build_dt3, smooth_dt3, Dt3Tensor,
    DEFAULT_LAMBDA_THETA, DEFAULT_ORIENTATIONS, DEFAULT_SMOOTHING_SIGMA,
};
pub use idt3::{
    build_idt3, edge_distance_idt3, precompute_orientation, Idt3Tensor, IntegralSlice,
    OrientationPrecomp, Reading, MIN_EDGE_LENGTH,
};

/// Nearest orientation bin, with period π.
pub fn quantize_orientation(theta: f64, n_orient: usize) -> usize {
    let z = (theta * n_orient as f64 / PI).round() as i64;
    z.rem_euclid(n_orient as i64) as usize
}

/// Angle of `bin`, radians.
pub fn bin_angle(bin: usize, n_orient: usize) -> f64 {
    bin as f64 * PI / n_orient as f64
}

/// Upper bound on the integrated distance error from snapping an edge of
/// `length_px` to its nearest bin by rotation about its midpoint:
/// `(D²/4)·sin(Δθ/4)` with `Δθ = π/n_orient`.
pub fn error_bound(length_px: f64, n_orient: usize) -> f64 {
    let delta = PI / n_orient as f64;
    0.25 * length_px * length_px * (0.25 * delta).sin()
}

/// Bound for the same edge split into `n_segments` equal pieces.
pub fn error_bound_n(length_px: f64, n_orient: usize, n_segments: usize) -> f64 {
    error_bound(length_px, n_orient) / n_segments as f64
}

/// Integrated point displacement `∫|p'(s) - p(s)| ds` when the segment
/// `a → b` is rotated by `phi` about the point at fraction `pivot` of its
/// length. Equals `(a_len² + b_len²)·sin(φ/2)`.
pub fn rotation_displacement(length: f64, pivot: f64, phi: f64) -> f64 {
    let a = pivot * length;
    let b = length - a;
    (a * a + b * b) * (0.5 * phi).abs().sin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_orientation(0.0, 60), 0);
        assert_eq!(quantize_orientation(PI, 60), 0);
        assert_eq!(quantize_orientation(PI / 60.0 + 1e-9, 60), 1);
        assert_eq!(quantize_orientation(-PI / 60.0, 60), 59);
        assert!((bin_angle(30, 60) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(error_bound(0.0, 60), 0.0);
        let direct = 25.0 * (PI / 240.0).sin();
        assert!((error_bound(10.0, 60) - direct).abs() < 1e-15);
        assert!((error_bound(10.0, 60) - 0.32724).abs() < 1e-5);
        for d in [1.0, 7.5, 30.0] {
            assert_eq!(error_bound_n(d, 60, 2), error_bound(d, 60) / 2.0);
        }
    }

    /// Numerical integral of the chord length `2·s·sin(φ/2)` over both arms.
    #[test]
    fn displacement_matches_numeric_integral_and_is_least_at_midpoint() {
        let (len, phi) = (24.0, PI / 120.0);
        for pivot in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let n = 20000;
            let mut acc = 0.0;
            for i in 0..n {
                let s = (i as f64 + 0.5) / n as f64 * len;
                let r = (s - pivot * len).abs();
                acc += 2.0 * r * (0.5 * phi).sin() * len / n as f64;
            }
            assert!((rotation_displacement(len, pivot, phi) - acc).abs() < 1e-6);
        }
        let mid = rotation_displacement(len, 0.5, phi);
        for pivot in [0.0, 0.1, 0.3, 0.49, 0.51, 0.8, 1.0] {
            assert!(mid <= rotation_displacement(len, pivot, phi));
        }
    }
}
