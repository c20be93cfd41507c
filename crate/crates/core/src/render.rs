//! Perceived-image simulation.
//!
//! Each scheduled frame lights every layer through its projector mask. The
//! lit layer is magnified about the optical centre by the lens scaling at the
//! frame's power and blurred by a uniform disc whose angular diameter is the
//! retinal blur circle over the lens-to-retina distance. Frames add up
//! linearly; layers do not occlude each other.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etl::OutputWaveform;
use crate::image::Image;
use crate::optics::{blur_circle_diameter, EyeModel, OpticalStack};
use crate::psf::DiscKernel;
use crate::scene::Scene;
use crate::schedule::IlluminationSchedule;
use crate::seam::scaling_factor;
use crate::units::mm_inv_to_diopters;

/// Projector masks keyed by mask id.
pub type MaskSet = BTreeMap<String, Image>;

/// Sub-samples per frame when integrating the sweep within a frame.
pub const DEFAULT_SUBSTEPS: usize = 8;

/// Eye state while looking at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeState {
    pub layer: usize,
    /// Eye lens power (mm⁻¹).
    pub eye_power: f64,
    /// Whether the conjugate power fell outside the accommodation range.
    pub clamped: bool,
}

/// Eye power that focuses the gazed layer through an unpowered lens.
pub fn accommodate(scene: &Scene, layer: usize, eye: &EyeModel, d_ee: f64) -> Result<GazeState> {
    let l = scene
        .layers
        .get(layer)
        .ok_or_else(|| Error::Invalid(format!("no layer {layer} in scene")))?;
    let wanted = 1.0 / (l.distance + d_ee) + 1.0 / eye.lens_retina_distance;
    let eye_power = eye.clamp_power(wanted);
    Ok(GazeState {
        layer,
        eye_power,
        clamped: eye_power != wanted,
    })
}

/// Disc PSF diameter in perceived pixels.
pub fn psf_diameter_px(stack: &OpticalStack, d_oe: f64, pixels_per_radian: f64) -> Result<f64> {
    Ok(blur_circle_diameter(stack, d_oe)? / stack.eye.lens_retina_distance * pixels_per_radian)
}

/// Normalisation of a frame's contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    /// Weight = frame duration / sweep period.
    #[default]
    Period,
    /// Weight = frame duration / total time given to the frame's target power,
    /// so each target contributes unit exposure.
    PerTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Average the lens power over the frame instead of using the nominal one.
    pub integrate_within_frame: bool,
    pub substeps: usize,
    pub exposure: Exposure,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            integrate_within_frame: true,
            substeps: DEFAULT_SUBSTEPS,
            exposure: Exposure::Period,
        }
    }
}

/// Observer geometry for a render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewer {
    pub eye: EyeModel,
    /// Lens-to-eye distance (mm).
    pub vertex_distance: f64,
    pub gaze: GazeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: String,
    /// Mean over sub-samples.
    pub blur_diameter_mm: f64,
    pub scale: f64,
    pub psf_px: f64,
    /// Light delivered to the layer in this frame (sum of weighted texels).
    pub lit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot_id: usize,
    pub mask_id: String,
    pub target_diopters: f64,
    /// Lens powers used (D), one per sub-sample.
    pub powers_diopters: Vec<f64>,
    pub weight: f64,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: Image,
    pub gaze: GazeState,
    pub provenance: Vec<SlotRecord>,
}

impl RenderedView {
    /// Light-weighted mean PSF diameter of a layer, `None` if it was never lit.
    pub fn effective_psf_px(&self, layer: &str) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for r in self.provenance.iter().flat_map(|s| &s.layers).filter(|r| r.layer == layer) {
            num += r.lit * r.psf_px;
            den += r.lit;
        }
        (den > 0.0).then(|| num / den)
    }
}

struct Sample {
    power: f64,
    scale: f64,
    blur_mm: f64,
    psf_px: f64,
}

/// Renders the perceived image for one gaze state.
pub fn render(
    scene: &Scene,
    schedule: &IlluminationSchedule,
    masks: &MaskSet,
    waveform: &OutputWaveform,
    viewer: &Viewer,
    opts: &RenderOptions,
) -> Result<RenderedView> {
    scene.validate()?;
    for s in &schedule.slots {
        let m = masks
            .get(&s.mask_id)
            .ok_or_else(|| Error::UnresolvedMask(s.mask_id.clone()))?;
        if m.width != scene.width || m.height != scene.height {
            return Err(Error::Invalid(format!(
                "mask {} is {}x{}, scene is {}x{}",
                s.mask_id, m.width, m.height, scene.width, scene.height
            )));
        }
    }
    let k = if opts.integrate_within_frame {
        opts.substeps.max(1)
    } else {
        1
    };
    let per_target = schedule.time_per_target();
    let coverage: Vec<Image> = scene.layers.iter().map(|l| l.texture.mul(&l.coverage())).collect();

    let mut image = Image::filled(scene.width, scene.height, scene.ambient);
    let mut provenance = Vec::with_capacity(schedule.slots.len());
    for slot in &schedule.slots {
        let mask = &masks[&slot.mask_id];
        let weight = match opts.exposure {
            Exposure::Period => slot.duration_s() / schedule.period_s(),
            Exposure::PerTarget => {
                let total = per_target
                    .iter()
                    .find(|(d, _)| *d == slot.target_diopters.0)
                    .map_or(slot.duration_s(), |(_, t)| *t);
                slot.duration_s() / total
            }
        };
        let powers: Vec<f64> = if opts.integrate_within_frame {
            let t0 = slot.start_us as f64 * 1e-6;
            let dt = slot.duration_s() / k as f64;
            (0..k).map(|j| waveform.power_at(t0 + (j as f64 + 0.5) * dt)).collect()
        } else {
            vec![slot.target_power()]
        };
        let per_layer: Vec<(Image, LayerRecord)> = scene
            .layers
            .par_iter()
            .zip(&coverage)
            .map(|(layer, lit_tex)| {
                let samples = powers
                    .iter()
                    .map(|&p| {
                        let stack = OpticalStack::unchecked(viewer.eye, viewer.vertex_distance, p, viewer.gaze.eye_power);
                        let blur_mm = blur_circle_diameter(&stack, layer.distance)?;
                        Ok(Sample {
                            power: p,
                            scale: scaling_factor(layer.distance, viewer.vertex_distance, p)?,
                            blur_mm,
                            psf_px: blur_mm / viewer.eye.lens_retina_distance * scene.pixels_per_radian,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let lit_img = lit_tex.mul(mask);
                let lit = lit_img.sum() * weight;
                let mut acc = Image::new(scene.width, scene.height);
                if lit != 0.0 {
                    let mut done: Vec<(f64, Image)> = Vec::new();
                    for smp in &samples {
                        if let Some((_, img)) = done.iter().find(|(p, _)| *p == smp.power) {
                            acc.add_scaled(img, weight / k as f64);
                            continue;
                        }
                        let kernel = DiscKernel::new(smp.psf_px)?;
                        let img = kernel.convolve(&lit_img.magnify(smp.scale, scene.optical_center))?;
                        acc.add_scaled(&img, weight / k as f64);
                        done.push((smp.power, img));
                    }
                }
                let n = samples.len() as f64;
                let record = LayerRecord {
                    layer: layer.name.clone(),
                    blur_diameter_mm: samples.iter().map(|s| s.blur_mm).sum::<f64>() / n,
                    scale: samples.iter().map(|s| s.scale).sum::<f64>() / n,
                    psf_px: samples.iter().map(|s| s.psf_px).sum::<f64>() / n,
                    lit,
                };
                Ok((acc, record))
            })
            .collect::<Result<_>>()?;
        let mut layers = Vec::with_capacity(per_layer.len());
        for (img, rec) in per_layer {
            image.add_scaled(&img, 1.0);
            layers.push(rec);
        }
        provenance.push(SlotRecord {
            slot_id: slot.slot_id,
            mask_id: slot.mask_id.clone(),
            target_diopters: slot.target_diopters.0,
            powers_diopters: powers.iter().map(|&p| mm_inv_to_diopters(p)).collect(),
            weight,
            layers,
        });
    }
    Ok(RenderedView {
        image,
        gaze: viewer.gaze,
        provenance,
    })
}
