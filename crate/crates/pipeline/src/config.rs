//! Run configuration, read from TOML with every field defaulted.

use std::path::Path;

use lampdet_core::refine::RefineMethod;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub pipeline: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Floor extent along x and y, metres; the room spans `[0, x] × [0, y]`.
    pub room: [f64; 2],
    pub ceiling_height: f64,
    /// Lamp centers sit this far below the ceiling; 0 means embedded.
    pub hanging_offset: f64,
    /// Assigned cyclically to the grid in row-major order.
    pub models: Vec<u32>,
    /// Lamps along x and y, evenly spaced in cells.
    pub grid: [usize; 2],
    pub on_probability: f64,
    /// Camera path in the floor plane, flown at `camera_height`.
    pub waypoints: Vec<[f64; 2]>,
    pub camera_height: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub endpoint_sigma_px: f64,
    pub orientation_sigma_rad: f64,
    pub clutter_segments: usize,
    /// Probability of dropping each lamp segment; clutter is never dropped.
    pub dropout: f64,
    /// Gaussian error of detection positions along the viewing ray, metres.
    pub depth_sigma: f64,
    /// Probability of observing a lamp in the wrong on/off state.
    pub state_flip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: String,
    /// Subdivision fraction of the longest model edge.
    pub step: f64,
    pub plane_estimation: bool,
    /// Initialization error bounds around the ground-truth pose.
    pub init_rotation_deg: f64,
    pub init_translation: f64,
    pub max_iterations: usize,
    /// Model edges projecting shorter than this are left out of refinement.
    pub min_edge_px: f64,
    pub score_sigma: f64,
    /// Candidates scoring below this are discarded.
    pub min_score: f64,
    pub cluster_radius: f64,
    pub msac_threshold: f64,
    pub msac_iterations: usize,
    pub n_orient: usize,
    pub lambda_theta: f64,
    pub smoothing_sigma: f64,
    /// Worker threads; 0 lets the pool decide. `PIPELINE_THREADS` overrides.
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            noise: NoiseConfig::default(),
            pipeline: RunConfig::default(),
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room: [8.0, 6.0],
            ceiling_height: 3.0,
            hanging_offset: 0.0,
            models: vec![1, 2, 3, 4, 5],
            grid: [4, 2],
            on_probability: 0.7,
            waypoints: vec![[0.5, 1.5], [7.5, 1.5], [7.5, 4.5], [0.5, 4.5]],
            camera_height: 0.8,
            frames: 40,
        }
    }
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 480,
            height: 270,
            focal: 400.0,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            endpoint_sigma_px: 0.5,
            orientation_sigma_rad: 0.005,
            clutter_segments: 8,
            dropout: 0.05,
            depth_sigma: 0.0,
            state_flip: 0.05,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: "d2co-it".into(),
            step: 1.0,
            plane_estimation: true,
            init_rotation_deg: 3.0,
            init_translation: 0.05,
            max_iterations: 100,
            min_edge_px: 5.0,
            score_sigma: 2.0,
            min_score: 0.05,
            cluster_radius: 0.5,
            msac_threshold: 0.3,
            msac_iterations: 200,
            n_orient: 60,
            lambda_theta: 100.0,
            smoothing_sigma: 1.0,
            threads: 0,
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(what.into()))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn method(&self) -> Result<RefineMethod> {
        self.pipeline
            .method
            .parse()
            .map_err(|_| PipelineError::Config(format!("unknown method '{}'", self.pipeline.method)))
    }

    pub fn validate(&self) -> Result<()> {
        let (s, c, n, p) = (&self.scene, &self.camera, &self.noise, &self.pipeline);
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        check(pos(s.room[0]) && pos(s.room[1]), "scene.room must be positive")?;
        check(pos(s.ceiling_height), "scene.ceiling_height must be positive")?;
        check(nonneg(s.hanging_offset), "scene.hanging_offset must be >= 0")?;
        check(s.hanging_offset < s.ceiling_height, "scene.hanging_offset must be below the ceiling")?;
        check(!s.models.is_empty(), "scene.models is empty")?;
        check(s.models.iter().all(|m| (1..=5).contains(m)), "scene.models ids must be in 1..=5")?;
        check(prob(s.on_probability), "scene.on_probability must be in [0, 1]")?;
        check(
            s.camera_height.is_finite() && s.camera_height < s.ceiling_height - s.hanging_offset,
            "scene.camera_height must be below the lamps",
        )?;
        check(
            s.waypoints.iter().flatten().all(|v| v.is_finite()),
            "scene.waypoints must be finite",
        )?;
        check(c.width > 0 && c.height > 0 && pos(c.focal), "camera dimensions must be positive")?;
        check(nonneg(n.endpoint_sigma_px), "noise.endpoint_sigma_px must be >= 0")?;
        check(nonneg(n.orientation_sigma_rad), "noise.orientation_sigma_rad must be >= 0")?;
        check(nonneg(n.depth_sigma), "noise.depth_sigma must be >= 0")?;
        check(prob(n.dropout), "noise.dropout must be in [0, 1]")?;
        check(prob(n.state_flip), "noise.state_flip must be in [0, 1]")?;
        self.method()?;
        check(p.step > 0.0 && p.step <= 1.0, "pipeline.step must be in (0, 1]")?;
        check(nonneg(p.init_rotation_deg) && nonneg(p.init_translation), "pipeline init bounds must be >= 0")?;
        check(p.max_iterations > 0, "pipeline.max_iterations must be positive")?;
        check(nonneg(p.min_edge_px), "pipeline.min_edge_px must be >= 0")?;
        check(pos(p.score_sigma), "pipeline.score_sigma must be positive")?;
        check(prob(p.min_score), "pipeline.min_score must be in [0, 1]")?;
        check(pos(p.cluster_radius), "pipeline.cluster_radius must be positive")?;
        check(pos(p.msac_threshold) && p.msac_iterations > 0, "pipeline MSAC parameters must be positive")?;
        check(p.n_orient >= 2, "pipeline.n_orient must be at least 2")?;
        check(nonneg(p.lambda_theta) && nonneg(p.smoothing_sigma), "pipeline tensor parameters must be >= 0")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_partial_files_fill_in() {
        Config::default().validate().unwrap();
        let cfg = Config::parse("seed = 9\n[scene]\nhanging_offset = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scene.hanging_offset, 0.5);
        assert_eq!(cfg.camera, CameraConfig::default());
    }

    #[test]
    fn invalid_files_are_config_errors() {
        for text in [
            "[scene]\nroom = [0.0, 3.0]\n",
            "[noise]\ndropout = 1.5\n",
            "[pipeline]\nmethod = \"sift\"\n",
            "[pipeline]\nstep = 0.0\n",
            "[scene]\nbogus = 1\n",
            "seed = \"x\"",
        ] {
            let err = Config::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
        assert_eq!(Config::load(Path::new("/nonexistent/cfg.toml")).unwrap_err().exit_code(), 2);
    }
}
