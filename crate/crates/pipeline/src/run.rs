//! Frame-parallel detection, plane estimation, clustering and reporting.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use lampdet_core::bim::{closest_ceiling, msac_plane, project_detection, write_detections_csv, Detection, MsacParams, PlaneEstimate};
use lampdet_core::cluster::{
    cluster, compute_stats, write_clusters_csv, write_confusion_csv, write_lamp_fragment, write_svg, Cluster, ClusterStats,
};
use lampdet_core::refine::{refine, score, RefineMethod, RefineOptions, TensorParams, TensorSet};
use lampdet_core::Error;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{PipelineError, Result};
use crate::render::{frame_rng, perturb_pose, render_synthetic_frame, Frame};
use crate::scene::{create, gen_scene, io_err, Scene};

/// Refinement settings compared in one pass over the frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub method: RefineMethod,
    pub step: f64,
}

/// Detections of one frame under one variant.
#[derive(Debug, Clone, Default)]
pub struct FrameResult {
    pub detections: Vec<Detection>,
    /// Wall time of every refine call, milliseconds.
    pub refine_ms: Vec<f64>,
}

fn refine_options(config: &Config, step: f64) -> RefineOptions {
    RefineOptions {
        max_iterations: config.pipeline.max_iterations,
        subdivision_fraction: step,
        min_projected_length: config.pipeline.min_edge_px,
        ..RefineOptions::default()
    }
}

/// Refines every candidate model at every visible lamp, keeping the best
/// scoring model per lamp. Initializations, depth noise and state flips are
/// drawn before any refinement so all variants see the same draws.
pub fn detect_frame(scene: &Scene, config: &Config, frame: &Frame, variants: &[Variant]) -> Result<Vec<FrameResult>> {
    let p = &config.pipeline;
    let params = TensorParams {
        n_orient: p.n_orient,
        lambda_theta: p.lambda_theta,
        smoothing_sigma: p.smoothing_sigma,
    };
    let tensors = match TensorSet::from_segments(&frame.segments, scene.camera.width, scene.camera.height, &params) {
        Ok(t) => t,
        Err(Error::NoSegments) => {
            log::info!("frame {}: no segments", frame.index);
            return Ok(vec![FrameResult::default(); variants.len()]);
        }
        Err(e) => return Err(e.into()),
    };
    let mut rng = frame_rng(config.seed, frame.index, 1);
    let depth = Normal::new(0.0, config.noise.depth_sigma).expect("validated sigma");
    let draws: Vec<_> = frame
        .visible
        .iter()
        .map(|v| {
            let init = perturb_pose(&v.pose, p.init_rotation_deg.to_radians(), p.init_translation, &mut rng);
            let flip = rng.gen_bool(config.noise.state_flip);
            (init, depth.sample(&mut rng), flip)
        })
        .collect();

    let cam_pos = *frame.camera.translation();
    let mut out = Vec::with_capacity(variants.len());
    for variant in variants {
        let options = refine_options(config, variant.step);
        let mut result = FrameResult::default();
        for (v, (init, depth_err, flip)) in frame.visible.iter().zip(&draws) {
            let mut best: Option<(f64, u32, lampdet_core::pose::Pose)> = None;
            for (&model, mesh) in &scene.meshes {
                let t0 = Instant::now();
                let r = refine(init, mesh, &scene.camera, &tensors, variant.method, &options);
                result.refine_ms.push(t0.elapsed().as_secs_f64() * 1e3);
                let r = match r {
                    Ok(r) => r,
                    Err(Error::InsufficientData { .. }) => continue,
                    Err(e) => return Err(e.into()),
                };
                let s = score(r.rms_distance(), p.score_sigma);
                // Strict comparison keeps the lowest model id on ties.
                if best.as_ref().map_or(true, |b| s > b.0) {
                    best = Some((s, model, r.pose));
                }
            }
            let Some((s, model, pose)) = best else { continue };
            if s < p.min_score || s <= 0.0 {
                continue;
            }
            let world = frame.camera.compose(&pose);
            let ray = (world.translation() - cam_pos).normalize();
            let position = world.translation() + ray * *depth_err;
            let state = scene.lamps[v.lamp].state != *flip;
            result.detections.push(Detection::new(position, cam_pos, model, s, state, frame.index)?);
        }
        out.push(result);
    }
    Ok(out)
}

/// Worker count: `PIPELINE_THREADS` if set, else the config, else rayon's.
pub fn thread_count(config: &Config) -> Result<usize> {
    match std::env::var("PIPELINE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| PipelineError::Config(format!("PIPELINE_THREADS='{v}' is not a count"))),
        Err(_) => Ok(config.pipeline.threads),
    }
}

/// Renders and processes every frame on a worker pool; results come back in
/// frame order, one `Vec<FrameResult>` per variant.
pub fn process_frames(scene: &Scene, config: &Config, variants: &[Variant]) -> Result<Vec<Vec<FrameResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(config)?)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start workers: {e}")))?;
    let per_frame: Vec<Vec<FrameResult>> = pool.install(|| {
        (0..scene.trajectory.len())
            .into_par_iter()
            .map(|i| {
                let frame = render_synthetic_frame(scene, &config.noise, config.seed, i)?;
                detect_frame(scene, config, &frame, variants)
            })
            .collect::<Result<_>>()
    })?;
    let mut by_variant = vec![Vec::with_capacity(per_frame.len()); variants.len()];
    for frame in per_frame {
        for (k, r) in frame.into_iter().enumerate() {
            by_variant[k].push(r);
        }
    }
    Ok(by_variant)
}

/// Final detections and the clustering built on them.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub raw_detections: usize,
    pub detections: Vec<Detection>,
    /// Ceiling and fitted plane, when plane estimation ran.
    pub plane: Option<(String, PlaneEstimate)>,
    pub clusters: Vec<Cluster>,
    pub stats: ClusterStats,
}

/// With plane estimation, the normal comes from the closest BIM ceiling,
/// the offset from MSAC over the detections; MSAC outliers are dropped and
/// inliers are moved along their viewing rays onto the plane.
pub fn postprocess(scene: &Scene, config: &Config, detections: Vec<Detection>, plane_estimation: bool) -> Result<Outcome> {
    let raw_detections = detections.len();
    let mut plane = None;
    let mut kept = detections;
    let params = MsacParams {
        max_distance: config.pipeline.msac_threshold,
        iterations: config.pipeline.msac_iterations,
        ..MsacParams::default()
    };
    if plane_estimation && kept.len() >= params.sample_size {
        let ceiling = closest_ceiling(&scene.surfaces, &kept)?;
        let positions: Vec<_> = kept.iter().map(|d| d.position).collect();
        let est = msac_plane(&ceiling.plane_normal, &positions, &params, config.seed)?;
        let mut projected = Vec::with_capacity(est.inlier_count);
        for d in est.inliers(&kept) {
            match project_detection(d, &est.normal, est.offset) {
                Ok(p) => projected.push(Detection { position: p, ..d.clone() }),
                Err(Error::ParallelRay { dot }) => log::warn!("frame {}: ray parallel to plane ({dot})", d.frame_index),
                Err(e) => return Err(e.into()),
            }
        }
        kept = projected;
        plane = Some((ceiling.id.clone(), est));
    } else if plane_estimation {
        log::warn!("plane estimation skipped: {} detections", kept.len());
    }
    let mut clusters = cluster(&kept, config.pipeline.cluster_radius)?;
    let stats = compute_stats(&clusters, &kept, &scene.references);
    for (c, link) in clusters.iter_mut().zip(&stats.links) {
        c.reference_id = *link;
    }
    Ok(Outcome {
        raw_detections,
        detections: kept,
        plane,
        clusters,
        stats,
    })
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub frames: usize,
    pub outcome: Outcome,
    pub mean_refine_ms: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Runs the configured variant end to end without writing anything.
pub fn execute(config: &Config) -> Result<RunReport> {
    let scene = gen_scene(config)?;
    let variant = Variant {
        method: config.method()?,
        step: config.pipeline.step,
    };
    let results = process_frames(&scene, config, &[variant])?.remove(0);
    let mean_refine_ms = mean(results.iter().flat_map(|r| r.refine_ms.iter().copied()));
    let detections = results.into_iter().flat_map(|r| r.detections).collect();
    let outcome = postprocess(&scene, config, detections, config.pipeline.plane_estimation)?;
    Ok(RunReport {
        frames: scene.trajectory.len(),
        outcome,
        mean_refine_ms,
    })
}

/// Writes `detections.csv`, `clusters.csv`, `confusion.csv`, `plot.svg`,
/// `updated_bim.xml` and `summary.csv`. All are byte-identical across
/// repeated runs of the same config; timings are left out.
pub fn write_report(report: &RunReport, scene: &Scene, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| PipelineError::io(format!("cannot create {}", out.display()), e))?;
    let o = &report.outcome;
    write_detections_csv(create(&out.join("detections.csv"))?, &o.detections)?;
    write_clusters_csv(create(&out.join("clusters.csv"))?, &o.clusters, &o.stats, &scene.references)?;
    write_confusion_csv(create(&out.join("confusion.csv"))?, &o.stats.confusion)?;
    write_svg(create(&out.join("plot.svg"))?, &o.detections, &o.clusters, &scene.references)?;
    write_lamp_fragment(
        create(&out.join("updated_bim.xml"))?,
        &o.clusters,
        o.plane.as_ref().map(|(id, _)| id.as_str()),
    )?;

    let path = out.join("summary.csv");
    let mut w = create(&path)?;
    w.write_all(summary_table(report).as_bytes()).map_err(io_err(&path))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn summary_table(report: &RunReport) -> String {
    let o = &report.outcome;
    let (c, l) = (&o.stats.counts, &o.stats.localization);
    let rows = [
        ("frames", report.frames.to_string()),
        ("raw_detections", o.raw_detections.to_string()),
        ("detections", o.detections.len().to_string()),
        ("clusters", c.clusters.to_string()),
        ("references", c.references.to_string()),
        ("linked_clusters", c.linked_clusters.to_string()),
        ("cluster_identification", opt(c.cluster_identification())),
        ("detection_identification_error", opt(c.detection_identification_error())),
        ("correct_states", c.correct_states.to_string()),
        ("mean_dist_to_center_cm", format!("{:.6}", l.mean_dist_to_center)),
        ("var_dist_to_center_cm2", format!("{:.6}", l.var_dist_to_center)),
        ("mean_dist_to_reference_cm", opt(l.mean_dist_to_reference)),
        ("plane_ceiling", o.plane.as_ref().map_or_else(String::new, |(id, _)| id.clone())),
        ("plane_offset", opt(o.plane.as_ref().map(|(_, e)| e.offset))),
    ];
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        s += &format!("{k},{v}\n");
    }
    s
}

/// `execute` followed by `write_report` into `out`.
pub fn run_pipeline(config: &Config, out: &Path) -> Result<RunReport> {
    let report = execute(config)?;
    write_report(&report, &gen_scene(config)?, out)?;
    Ok(report)
}

pub const BENCH_STEPS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: RefineMethod,
    pub step: f64,
    pub plane_estimation: bool,
    pub mean_refine_ms: f64,
    pub refine_calls: usize,
    pub detections: usize,
    pub clusters: usize,
    pub cluster_identification: Option<f64>,
    pub detection_identification_error: Option<f64>,
    pub mean_dist_to_center_cm: f64,
    pub var_dist_to_center_cm2: f64,
    pub mean_dist_to_reference_cm: Option<f64>,
}

/// Every method at every step, with and without plane estimation. Each
/// frame's tensors are built once and shared by all variants.
pub fn run_benchmark(config: &Config) -> Result<Vec<BenchmarkRow>> {
    let scene = gen_scene(config)?;
    let variants: Vec<Variant> = RefineMethod::ALL
        .iter()
        .flat_map(|&method| BENCH_STEPS.iter().map(move |&step| Variant { method, step }))
        .collect();
    let results = process_frames(&scene, config, &variants)?;
    let mut rows = Vec::with_capacity(2 * variants.len());
    for (v, frames) in variants.iter().zip(results) {
        let times: Vec<f64> = frames.iter().flat_map(|r| r.refine_ms.iter().copied()).collect();
        let detections: Vec<Detection> = frames.into_iter().flat_map(|r| r.detections).collect();
        for plane in [false, true] {
            let o = postprocess(&scene, config, detections.clone(), plane)?;
            let (c, l) = (&o.stats.counts, &o.stats.localization);
            rows.push(BenchmarkRow {
                method: v.method,
                step: v.step,
                plane_estimation: plane,
                // Kept positive for frames without refine calls.
                mean_refine_ms: mean(times.iter().copied()).unwrap_or(f64::MIN_POSITIVE).max(f64::MIN_POSITIVE),
                refine_calls: times.len(),
                detections: o.detections.len(),
                clusters: c.clusters,
                cluster_identification: c.cluster_identification(),
                detection_identification_error: c.detection_identification_error(),
                mean_dist_to_center_cm: l.mean_dist_to_center,
                var_dist_to_center_cm2: l.var_dist_to_center,
                mean_dist_to_reference_cm: l.mean_dist_to_reference,
            });
        }
    }
    Ok(rows)
}

pub fn benchmark_table(rows: &[BenchmarkRow]) -> String {
    let mut s = String::from(
        "method,step,plane_estimation,mean_refine_ms,refine_calls,detections,clusters,\
         cluster_identification_pct,detection_identification_error_pct,\
         mean_dist_to_center_cm,var_dist_to_center_cm2,mean_dist_to_reference_cm\n",
    );
    let pct = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{:.3}", 100.0 * v));
    for r in rows {
        s += &format!(
            "{},{},{},{:.4},{},{},{},{},{},{:.4},{:.4},{}\n",
            r.method,
            r.step,
            if r.plane_estimation { "on" } else { "off" },
            r.mean_refine_ms,
            r.refine_calls,
            r.detections,
            r.clusters,
            pct(r.cluster_identification),
            pct(r.detection_identification_error),
            r.mean_dist_to_center_cm,
            r.var_dist_to_center_cm2,
            r.mean_dist_to_reference_cm.map_or_else(String::new, |v| format!("{v:.4}")),
        );
    }
    s
}

/// `run_benchmark` and its table written to `out/bench.csv`.
pub fn write_benchmark(config: &Config, out: &Path) -> Result<Vec<BenchmarkRow>> {
    let rows = run_benchmark(config)?;
    fs::create_dir_all(out).map_err(|e| PipelineError::io(format!("cannot create {}", out.display()), e))?;
    let path = out.join("bench.csv");
    create(&path)?
        .write_all(benchmark_table(&rows).as_bytes())
        .map_err(io_err(&path))?;
    Ok(rows)
}
