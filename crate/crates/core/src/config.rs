//! Pipeline configuration.
//!
//! Length thresholds (`gamma_stat`, `gamma_p`, `min_displacement`,
//! `static_residual_cap`, `traj_cap`) are fractions of the scene scale, taken
//! as the camera-to-point distance of the chunk pair being processed. Monocular
//! gauges have arbitrary scale, so absolute world units would not transfer
//! between chunks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Maximum chunk length `L` in frames.
    pub chunk_length: usize,
    /// Frames shared by consecutive chunks.
    pub overlap: usize,
    /// Confidence threshold on the per-pixel mean over the overlap.
    pub gamma_c: f64,
    /// Rigidity threshold, relative to the median camera-to-point distance of each chunk.
    pub gamma_stat: f64,
    /// Endpoint gating radius relative to scene scale. `None` selects the adaptive radius.
    pub gamma_p: Option<f64>,
    /// Adaptive gating radius as a multiple of the mean per-frame dynamic displacement.
    pub gamma_p_factor: f64,
    pub lambda_traj: f64,
    pub lambda_vel: f64,
    pub lambda_dir: f64,
    /// Pairs whose normalized trajectory discrepancy exceeds this are discarded.
    pub traj_cap: f64,
    /// Pairs whose direction term exceeds this are discarded.
    pub dir_cap: f64,
    /// Matches costing more than this are left unmatched.
    pub cost_max: f64,
    /// Camera-center term weight in the refinement.
    pub lambda_cam: f64,
    /// Smoothness weight of the boundary reconstruction.
    pub lambda_sm: f64,
    /// Half-width of the boundary window in frames.
    pub boundary_window: usize,
    /// Minimum first-to-last displacement of a dynamic tracklet, relative to scene scale.
    pub min_displacement: f64,
    /// Subsampling stride for dynamic seed pixels, along rows and columns.
    pub seed_stride: usize,
    pub min_static_anchors: usize,
    pub min_dynamic_matches: usize,
    /// Static registration is trusted only when its weighted residual RMS,
    /// relative to scene scale, stays below this.
    pub static_residual_cap: f64,
    /// Re-estimate scale during the dynamic refinement instead of keeping the prior.
    pub refine_scale: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunk_length: 16,
            overlap: 4,
            gamma_c: 0.5,
            gamma_stat: 0.01,
            gamma_p: None,
            gamma_p_factor: 3.0,
            lambda_traj: 1.0,
            lambda_vel: 0.5,
            lambda_dir: 0.5,
            traj_cap: 0.05,
            dir_cap: 0.5,
            cost_max: 1.0,
            lambda_cam: 1.0,
            lambda_sm: 1.0,
            boundary_window: 4,
            min_displacement: 0.01,
            seed_stride: 2,
            min_static_anchors: 50,
            min_dynamic_matches: 8,
            static_residual_cap: 0.05,
            refine_scale: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.overlap < 2 || self.overlap >= self.chunk_length {
            return fail(format!(
                "need 2 <= overlap < chunk_length, got overlap {} and chunk_length {}",
                self.overlap, self.chunk_length
            ));
        }
        let positive = [
            ("gamma_c", self.gamma_c),
            ("gamma_stat", self.gamma_stat),
            ("gamma_p_factor", self.gamma_p_factor),
            ("traj_cap", self.traj_cap),
            ("dir_cap", self.dir_cap),
            ("cost_max", self.cost_max),
            ("min_displacement", self.min_displacement),
            ("static_residual_cap", self.static_residual_cap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(p) = self.gamma_p {
            if !(p.is_finite() && p > 0.0) {
                return fail(format!("gamma_p must be positive, got {p}"));
            }
        }
        let weights = [
            ("lambda_traj", self.lambda_traj),
            ("lambda_vel", self.lambda_vel),
            ("lambda_dir", self.lambda_dir),
            ("lambda_cam", self.lambda_cam),
            ("lambda_sm", self.lambda_sm),
        ];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.lambda_traj + self.lambda_vel + self.lambda_dir <= 0.0 {
            return fail("association cost weights sum to zero".into());
        }
        if self.seed_stride == 0 || self.boundary_window == 0 {
            return fail("seed_stride and boundary_window must be at least 1".into());
        }
        Ok(())
    }

    /// Parses a TOML document. Missing fields take their defaults; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
