use crate::error::{invalid, Result};
use crate::pose::{fold_orientation, Vec2};

use super::dt3::Dt3Tensor;
use super::idt3::{Reading, MIN_EDGE_LENGTH};

/// Mean tensor distance along `end_a → end_b`, sampled at the midpoints of
/// `ceil(length)` equal steps (spacing ≤ 1 px). Each sample is bilinear in
/// space and linear in angle at the edge's exact orientation.
pub fn edge_distance_direct(dt3: &Dt3Tensor, end_a: Vec2, end_b: Vec2) -> Result<Reading> {
    let d = (end_b - end_a).norm();
    if !(d > MIN_EDGE_LENGTH) {
        return Err(invalid(format!("edge length {d} too short")));
    }
    // One read per pixel of length, capped for edges far longer than the
    // raster so runaway poses stay cheap to evaluate. In-raster edges are
    // never affected: their length is below the cap.
    let cap = 4 * (dt3.width() + dt3.height());
    let n = (d.ceil() as usize).min(cap);
    Ok(mean_along(dt3, end_a, end_b, (0..n).map(|i| (i as f64 + 0.5) / n as f64)))
}

/// Mean of `samples` reads spread evenly from endpoint to endpoint
/// (`samples = 3`: both endpoints and the midpoint). A single sample reads
/// the midpoint.
pub fn edge_distance_sampled(
    dt3: &Dt3Tensor,
    end_a: Vec2,
    end_b: Vec2,
    samples: usize,
) -> Result<Reading> {
    if !((end_b - end_a).norm() > MIN_EDGE_LENGTH) {
        return Err(invalid("edge too short"));
    }
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if samples == 1 {
        return Ok(mean_along(dt3, end_a, end_b, [0.5].into_iter()));
    }
    let last = (samples - 1) as f64;
    Ok(mean_along(dt3, end_a, end_b, (0..samples).map(|i| i as f64 / last)))
}

fn mean_along(
    dt3: &Dt3Tensor,
    end_a: Vec2,
    end_b: Vec2,
    ts: impl ExactSizeIterator<Item = f64>,
) -> Reading {
    let delta = end_b - end_a;
    let theta = fold_orientation(delta);
    let n = ts.len();
    let mut sum = 0.0;
    let mut truncated = false;
    for t in ts {
        let p = end_a + delta * t;
        let (v, tr) = dt3.sample(p.x, p.y, theta);
        sum += v;
        truncated |= tr;
    }
    Reading {
        value: sum / n as f64,
        truncated,
    }
}
