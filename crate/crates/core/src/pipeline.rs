//! Scene → sweep plan → illumination schedule → projector masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize_mask, Image};
use crate::optics::{EyeModel, OpticalStack};
use crate::render::{psf_diameter_px, MaskSet};
use crate::scene::Scene;
use crate::schedule::{build_focus_blur_schedule, plan_sweep, IlluminationSchedule, ScheduleOptions, SweepPlan};
use crate::seam::{binary_pair, scaling_factor, BlendPair, Feather, Label};
use crate::wavedb::WaveformDb;

/// Feather margin per pixel of blur-slot PSF diameter.
///
/// A linear ramp of slope `g` blurred by a disc of radius `r` deviates from
/// itself by `2gr/(3π)` at its ends. Twenty diameters of margin on each side
/// keep that well under one 8-bit step, leaving room for mask quantisation
/// and the lens power drifting within a frame.
pub const FEATHER_MARGIN_PER_PSF_PX: f64 = 20.0;

pub const FOCUS_MASK_ID: &str = "focus";
pub const BLUR_MASK_ID: &str = "blur";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanSettings {
    pub alpha: f64,
    pub schedule: ScheduleOptions,
    pub feather: bool,
    /// Projector gamma used when quantising masks.
    pub projector_gamma: f64,
}

impl Default for PlanSettings {
    fn default() -> Self {
        Self {
            alpha: crate::schedule::DEFAULT_ALPHA,
            schedule: ScheduleOptions::default(),
            feather: true,
            projector_gamma: 1.0,
        }
    }
}

/// Per-blur-layer feathering parameters, recorded for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatherRecord {
    pub layer: String,
    pub scale: f64,
    pub psf_px: f64,
    pub margin_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePlan {
    pub plan: SweepPlan,
    pub schedule: IlluminationSchedule,
    /// Unquantised weights.
    pub pair: BlendPair,
    /// 8-bit projector masks keyed by mask id.
    pub masks: MaskSet,
    pub feathering: Vec<FeatherRecord>,
}

/// Margin used to feather a blur region whose slot PSF is `psf_px` wide.
pub fn feather_margin(psf_px: f64) -> f64 {
    FEATHER_MARGIN_PER_PSF_PX * psf_px + 1.0
}

/// Feathered focus/blur weights for a scene whose blur slot sits at `p_high`.
///
/// Each blur layer is feathered against the scene's focus mask with its own
/// scale; the focus weight is the minimum over layers and the blur weights
/// are combined by maximum.
pub fn scene_blend(
    scene: &Scene,
    eye: &EyeModel,
    d_ee: f64,
    p_high: f64,
    feather: bool,
) -> Result<(BlendPair, Vec<FeatherRecord>)> {
    let focus = scene.projector_mask(Label::Focus);
    let blur = scene.projector_mask(Label::Blur);
    let mut pair = binary_pair(&focus, &blur);
    if !feather {
        return Ok((pair, Vec::new()));
    }
    let mut records = Vec::new();
    let mut blur_acc = Image::new(scene.width, scene.height);
    let mut focus_acc = Image::filled(scene.width, scene.height, 1.0);
    let mut any = false;
    for layer in scene.layers.iter().filter(|l| l.has_label(Label::Blur)) {
        let mut layer_blur = Image::new(scene.width, scene.height);
        for r in layer.regions.iter().filter(|r| r.label == Label::Blur) {
            for (o, v) in layer_blur.data.iter_mut().zip(&r.mask.data) {
                *o = o.max(*v);
            }
        }
        let s = scaling_factor(layer.distance, d_ee, p_high)?;
        // PSF with the eye on the layer itself: the ETL alone sets the blur.
        let eye_power = eye.clamp_power(1.0 / (layer.distance + d_ee) + 1.0 / eye.lens_retina_distance);
        let stack = OpticalStack::unchecked(*eye, d_ee, p_high, eye_power);
        let psf = psf_diameter_px(&stack, layer.distance, scene.pixels_per_radian)?;
        let margin = feather_margin(psf);
        let p = Feather::new(&focus, &layer_blur, s, scene.optical_center, margin)?.pair();
        for i in 0..focus_acc.data.len() {
            focus_acc.data[i] = focus_acc.data[i].min(p.focus.data[i]);
            blur_acc.data[i] = blur_acc.data[i].max(p.blur.data[i]);
        }
        any = true;
        records.push(FeatherRecord {
            layer: layer.name.clone(),
            scale: s,
            psf_px: psf,
            margin_px: margin,
        });
    }
    if any {
        pair = BlendPair {
            focus: focus_acc,
            blur: blur_acc,
        };
    }
    Ok((pair, records))
}

/// Full planning pipeline for one scene.
pub fn plan_scene(
    scene: &Scene,
    eye: &EyeModel,
    d_ee: f64,
    db: &WaveformDb,
    settings: &PlanSettings,
) -> Result<ScenePlan> {
    scene.validate()?;
    let close = scene.too_close_for_blur();
    if !close.is_empty() {
        return Err(Error::Domain(format!(
            "layers {close:?} are closer than the projector can serve"
        )));
    }
    let plan = plan_sweep(&scene.blur_distances(), eye, d_ee, settings.alpha, db)?;
    let schedule = build_focus_blur_schedule(
        &plan,
        &[FOCUS_MASK_ID.to_string()],
        &[BLUR_MASK_ID.to_string()],
        &settings.schedule,
    )?;
    let (pair, feathering) = scene_blend(scene, eye, d_ee, plan.p_high, settings.feather)?;
    let masks = MaskSet::from([
        (FOCUS_MASK_ID.to_string(), quantize_mask(&pair.focus, settings.projector_gamma)),
        (BLUR_MASK_ID.to_string(), quantize_mask(&pair.blur, settings.projector_gamma)),
    ]);
    Ok(ScenePlan {
        plan,
        schedule,
        pair,
        masks,
        feathering,
    })
}
