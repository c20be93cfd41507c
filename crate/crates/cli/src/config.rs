//! Project configuration, read from TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::path::Path;

use focalsweep::etl::EtlModel;
use focalsweep::optics::EyeModel;
use focalsweep::pipeline::PlanSettings;
use focalsweep::render::{Exposure, RenderOptions};
use focalsweep::schedule::ScheduleOptions;
use focalsweep::units::{diopters_to_mm_inv, ARCMIN};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EyeConfig {
    pub pupil_diameter_mm: f64,
    pub lens_retina_distance_mm: f64,
    pub accommodation_d: f64,
    /// Acceptable blur as a visual angle.
    pub acuity_arcmin: f64,
}

impl Default for EyeConfig {
    fn default() -> Self {
        let eye = EyeModel::default();
        Self {
            pupil_diameter_mm: eye.pupil_diameter,
            lens_retina_distance_mm: eye.lens_retina_distance,
            accommodation_d: EyeModel::DEFAULT_ACCOMMODATION * 1e3,
            acuity_arcmin: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectorConfig {
    pub width: usize,
    pub height: usize,
    pub frame_ms: f64,
    pub trigger_delay_ms: f64,
    /// Gamma applied when writing 8-bit masks.
    pub gamma: f64,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 768,
            frame_ms: 1.0,
            trigger_delay_ms: 0.46,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub integrate_within_frame: bool,
    pub substeps: usize,
    pub exposure: Exposure,
}

impl Default for RenderConfig {
    fn default() -> Self {
        let o = RenderOptions::default();
        Self {
            integrate_within_frame: o.integrate_within_frame,
            substeps: o.substeps,
            exposure: o.exposure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub eye: EyeConfig,
    pub vertex_distance_mm: f64,
    pub alpha_d: f64,
    pub sweep_frequency_hz: f64,
    /// Allowed lens power error at mid-frame.
    pub tolerance_d: f64,
    pub max_frames_per_target: Option<usize>,
    pub feather: bool,
    pub projector: ProjectorConfig,
    pub etl: EtlModel,
    pub render: RenderConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            eye: EyeConfig::default(),
            vertex_distance_mm: 15.0,
            alpha_d: 0.2,
            sweep_frequency_hz: 60.0,
            tolerance_d: 0.05,
            max_frames_per_target: None,
            feather: true,
            projector: ProjectorConfig::default(),
            etl: EtlModel::default(),
            render: RenderConfig::default(),
        }
    }
}

impl ProjectConfig {
    /// Reads and validates a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|source| CliError::Config {
            path: path.into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The default configuration when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eye.pupil_diameter_mm", self.eye.pupil_diameter_mm),
            ("eye.lens_retina_distance_mm", self.eye.lens_retina_distance_mm),
            ("eye.accommodation_d", self.eye.accommodation_d),
            ("eye.acuity_arcmin", self.eye.acuity_arcmin),
            ("vertex_distance_mm", self.vertex_distance_mm),
            ("sweep_frequency_hz", self.sweep_frequency_hz),
            ("projector.frame_ms", self.projector.frame_ms),
            ("projector.gamma", self.projector.gamma),
            ("etl.volts_full_scale", self.etl.volts_full_scale),
            ("etl.power_full_scale", self.etl.power_full_scale),
            ("etl.time_constant", self.etl.time_constant),
            ("etl.nominal_sample_period", self.etl.nominal_sample_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("alpha_d", self.alpha_d),
            ("tolerance_d", self.tolerance_d),
            ("projector.trigger_delay_ms", self.projector.trigger_delay_ms),
            ("etl.distortion", self.etl.distortion),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.projector.width == 0 || self.projector.height == 0 {
            return Err(CliError::InvalidConfig("projector raster must be at least 1×1".into()));
        }
        if self.render.substeps == 0 {
            return Err(CliError::InvalidConfig("render.substeps must be at least 1".into()));
        }
        if self.max_frames_per_target == Some(0) {
            return Err(CliError::InvalidConfig("max_frames_per_target must be at least 1".into()));
        }
        Ok(())
    }

    pub fn eye_model(&self) -> EyeModel {
        let e = &self.eye;
        let mut eye = EyeModel::relaxed_at_infinity(
            e.pupil_diameter_mm,
            e.lens_retina_distance_mm,
            diopters_to_mm_inv(e.accommodation_d),
        );
        eye.acceptable_coc = e.lens_retina_distance_mm * (e.acuity_arcmin * ARCMIN).tan();
        eye
    }

    pub fn schedule_options(&self) -> ScheduleOptions {
        ScheduleOptions {
            frame_period: self.projector.frame_ms * 1e-3,
            trigger_delay: self.projector.trigger_delay_ms * 1e-3,
            tolerance: diopters_to_mm_inv(self.tolerance_d),
            max_frames_per_target: self.max_frames_per_target,
        }
    }

    pub fn plan_settings(&self) -> PlanSettings {
        PlanSettings {
            alpha: diopters_to_mm_inv(self.alpha_d),
            schedule: self.schedule_options(),
            feather: self.feather,
            projector_gamma: self.projector.gamma,
        }
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            integrate_within_frame: self.render.integrate_within_frame,
            substeps: self.render.substeps,
            exposure: self.render.exposure,
        }
    }
}
