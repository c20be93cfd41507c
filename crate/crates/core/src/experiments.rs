//! Simulated versions of the bench experiments: the four-object spatial
//! defocusing scene, the dot-grid blur measurement, and the seam conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etl::{InputWave, OutputWaveform};
use crate::image::{quantize_mask, Image};
use crate::measure::{mean_radius, measure_dot_grid, ExpectedGrid};
use crate::optics::{EyeModel, OpticalStack};
use crate::pipeline::{scene_blend, BLUR_MASK_ID, FOCUS_MASK_ID};
use crate::render::{accommodate, psf_diameter_px, render, Exposure, MaskSet, RenderOptions, RenderedView, Viewer};
use crate::scene::{Layer, LayerSpec, Region, RegionSpec, Scene, SceneFile, ShapeSpec, TextureSpec, SCENE_VERSION};
use crate::schedule::{
    build_focus_blur_schedule, build_schedule, IlluminationSchedule, ScheduleOptions, SweepPlan, TargetMasks,
};
use crate::seam::{seam_region, Label};
use crate::units::{diopters_to_mm_inv, mm_inv_to_diopters};
use crate::wavedb::WaveformDb;

/// Four textured boards A–D at 250, 500, 500 and 1300 mm. Condition 1 blurs
/// B only; condition 2 keeps B sharp and blurs the rest.
pub fn four_object_scene(condition: u8) -> Result<SceneFile> {
    let blurred: &[&str] = match condition {
        1 => &["B"],
        2 => &["A", "C", "D"],
        _ => return Err(Error::Invalid(format!("four-object condition must be 1 or 2, got {condition}"))),
    };
    let boards = [
        ("A", 250.0, 20, 6),
        ("B", 500.0, 170, 8),
        ("C", 500.0, 330, 10),
        ("D", 1300.0, 490, 12),
    ];
    let layers = boards
        .iter()
        .map(|&(name, distance, x0, period)| LayerSpec {
            name: name.into(),
            distance_mm: distance,
            texture: TextureSpec::Checker {
                period,
                low: 0.15,
                high: 0.85,
            },
            regions: vec![RegionSpec {
                label: if blurred.contains(&name) { Label::Blur } else { Label::Focus },
                shape: ShapeSpec::Rect {
                    x0,
                    y0: 140,
                    x1: x0 + 130,
                    y1: 340,
                },
            }],
        })
        .collect();
    Ok(SceneFile {
        version: SCENE_VERSION,
        gaze: Some("B".into()),
        width: 640,
        height: 480,
        optical_center: None,
        pixels_per_radian: 800.0,
        ambient: 0.0,
        layers,
    })
}

/// Dot-grid blur measurement: five plane distances by eleven lens powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotGridProtocol {
    pub distances_mm: Vec<f64>,
    pub powers_d: Vec<f64>,
    pub size_px: usize,
    pub pixels_per_radian: f64,
    pub dots_per_side: usize,
    pub spacing_px: f64,
}

impl Default for DotGridProtocol {
    fn default() -> Self {
        Self {
            distances_mm: vec![500.0, 600.0, 700.0, 800.0, 900.0],
            powers_d: (0..=10).map(|i| i as f64 * 0.5).collect(),
            size_px: 288,
            pixels_per_radian: 1000.0,
            dots_per_side: 5,
            spacing_px: 48.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotGridRow {
    pub distance_mm: f64,
    pub power_d: f64,
    /// Fixed lens power.
    pub normal_radius_px: f64,
    /// Swept lens, dots lit for one frame at the target power.
    pub proposed_radius_px: f64,
    /// Half the closed-form PSF diameter.
    pub model_radius_px: f64,
}

impl DotGridProtocol {
    pub fn scene(&self, distance: f64) -> Scene {
        let n = self.size_px;
        let c = ((n as f64 - 1.0) / 2.0, (n as f64 - 1.0) / 2.0);
        let half = (self.dots_per_side as f64 - 1.0) / 2.0;
        let mut tex = Image::new(n, n);
        for gy in 0..self.dots_per_side {
            for gx in 0..self.dots_per_side {
                let x = (c.0 + (gx as f64 - half) * self.spacing_px).round() as usize;
                let y = (c.1 + (gy as f64 - half) * self.spacing_px).round() as usize;
                tex.set(x, y, 1.0);
            }
        }
        Scene {
            width: n,
            height: n,
            optical_center: c,
            pixels_per_radian: self.pixels_per_radian,
            ambient: 0.0,
            layers: vec![Layer {
                name: "dots".into(),
                distance,
                texture: tex,
                regions: vec![Region {
                    label: Label::Focus,
                    mask: Image::filled(n, n, 1.0),
                }],
            }],
        }
    }

    fn max_power(&self) -> f64 {
        diopters_to_mm_inv(self.powers_d.iter().copied().fold(0.0, f64::max))
    }

    /// Runs both conditions over the full grid.
    pub fn run(&self, eye: &EyeModel, d_ee: f64, db: &WaveformDb, integrate: bool) -> Result<Vec<DotGridRow>> {
        let sweep = db.select_wave(0.0, self.max_power())?;
        let opts = RenderOptions {
            integrate_within_frame: integrate,
            ..RenderOptions::default()
        };
        let sched_opts = ScheduleOptions {
            max_frames_per_target: Some(1),
            ..ScheduleOptions::default()
        };
        let masks = MaskSet::from([("dots".to_string(), Image::filled(self.size_px, self.size_px, 1.0))]);
        let target = |p: f64| {
            [TargetMasks {
                target_power: p,
                mask_ids: vec!["dots".to_string()],
            }]
        };
        let mut rows = Vec::new();
        for &d in &self.distances_mm {
            let scene = self.scene(d);
            let viewer = Viewer {
                eye: *eye,
                vertex_distance: d_ee,
                gaze: accommodate(&scene, 0, eye, d_ee)?,
            };
            let expected = ExpectedGrid {
                count: self.dots_per_side,
                center: scene.optical_center,
            };
            for &pd in &self.powers_d {
                let p = diopters_to_mm_inv(pd);
                // Normal: the lens holds `p` for the whole period.
                let flat_v = p / db.model.power_full_scale * db.model.volts_full_scale;
                let flat_wave = InputWave::new(flat_v, flat_v, db.frequency)?;
                let flat = OutputWaveform::constant(p, sweep.output.len(), sweep.output.sample_period);
                let normal_sched = build_schedule(&flat_wave, &flat, &target(p), &sched_opts)?;
                let normal = render(&scene, &normal_sched, &masks, &flat, &viewer, &opts)?;
                let proposed_sched = build_schedule(&sweep.wave, &sweep.output, &target(p), &sched_opts)?;
                let proposed = render(&scene, &proposed_sched, &masks, &sweep.output, &viewer, &opts)?;
                let stack = OpticalStack::unchecked(*eye, d_ee, p, viewer.gaze.eye_power);
                rows.push(DotGridRow {
                    distance_mm: d,
                    power_d: pd,
                    normal_radius_px: mean_radius(&measure_dot_grid(&normal.image, &expected)?),
                    proposed_radius_px: mean_radius(&measure_dot_grid(&proposed.image, &expected)?),
                    model_radius_px: psf_diameter_px(&stack, d, self.pixels_per_radian)? / 2.0,
                });
            }
        }
        Ok(rows)
    }
}

/// Texture used in a seam condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeamTexture {
    /// Rows of dark bars on white, like printed text.
    Document,
    /// Smooth shaded pattern.
    Picture,
}

/// Which side of the boundary the blurred area lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeamGeometry {
    /// Blurred area outside a sharp central disc: the magnified blur
    /// withdraws from the disc edge.
    Gap,
    /// Blurred central disc: its magnified copy spills onto the sharp area.
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeamCondition {
    pub texture: SeamTexture,
    pub geometry: SeamGeometry,
    pub power_d: f64,
}

/// The eight textured seam conditions.
pub fn seam_conditions() -> Vec<SeamCondition> {
    let mut out = Vec::new();
    for texture in [SeamTexture::Document, SeamTexture::Picture] {
        for geometry in [SeamGeometry::Gap, SeamGeometry::Overlap] {
            for power_d in [1.0, 2.0] {
                out.push(SeamCondition {
                    texture,
                    geometry,
                    power_d,
                });
            }
        }
    }
    out
}

/// Raster and geometry of the seam plane.
pub const SEAM_WIDTH: usize = 512;
pub const SEAM_HEIGHT: usize = 384;
pub const SEAM_DISTANCE: f64 = 500.0;
pub const SEAM_PIXELS_PER_RADIAN: f64 = 500.0;
pub const SEAM_DISC_RADIUS: f64 = 100.0;
/// Deviation from flat is evaluated within this radius of the optical centre.
pub const SEAM_EVAL_RADIUS: f64 = 185.0;

fn seam_texture(t: Option<SeamTexture>) -> Image {
    match t {
        None => Image::filled(SEAM_WIDTH, SEAM_HEIGHT, 1.0),
        Some(SeamTexture::Document) => Image::from_fn(SEAM_WIDTH, SEAM_HEIGHT, |x, y| {
            let line = y % 16;
            let word = (x / 7 + y / 16 * 3) % 9;
            if (4..10).contains(&line) && word < 6 && x % 7 < 5 {
                0.1
            } else {
                0.95
            }
        }),
        Some(SeamTexture::Picture) => Image::from_fn(SEAM_WIDTH, SEAM_HEIGHT, |x, y| {
            let (u, v) = (x as f64 / 37.0, y as f64 / 29.0);
            0.5 + 0.2 * u.sin() * v.cos() + 0.15 * ((u + v) * 0.7).sin()
        }),
    }
}

/// Single plane at 500 mm split into a central disc and its surround.
pub fn seam_scene(geometry: SeamGeometry, texture: Option<SeamTexture>) -> Scene {
    let c = ((SEAM_WIDTH as f64 - 1.0) / 2.0, (SEAM_HEIGHT as f64 - 1.0) / 2.0);
    let disc = Image::from_fn(SEAM_WIDTH, SEAM_HEIGHT, |x, y| {
        if (x as f64 - c.0).hypot(y as f64 - c.1) <= SEAM_DISC_RADIUS {
            1.0
        } else {
            0.0
        }
    });
    let rest = disc.map(|v| 1.0 - v);
    let (inner, outer) = match geometry {
        SeamGeometry::Gap => (Label::Focus, Label::Blur),
        SeamGeometry::Overlap => (Label::Blur, Label::Focus),
    };
    Scene {
        width: SEAM_WIDTH,
        height: SEAM_HEIGHT,
        optical_center: c,
        pixels_per_radian: SEAM_PIXELS_PER_RADIAN,
        ambient: 0.0,
        layers: vec![Layer {
            name: "plane".into(),
            distance: SEAM_DISTANCE,
            texture: seam_texture(texture),
            regions: vec![
                Region {
                    label: inner,
                    mask: disc,
                },
                Region {
                    label: outer,
                    mask: rest,
                },
            ],
        }],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub geometry: SeamGeometry,
    pub power_d: f64,
    pub feathered: bool,
    /// Largest shortfall below flat.
    pub max_dark: f64,
    /// Largest excess above flat.
    pub max_bright: f64,
    pub gap_px: usize,
    pub overlap_px: usize,
}

impl SeamReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_dark.max(self.max_bright)
    }
}

/// Everything needed to render one seam condition.
pub struct SeamSetup {
    pub scene: Scene,
    pub schedule: IlluminationSchedule,
    pub masks: MaskSet,
    pub waveform: OutputWaveform,
    pub viewer: Viewer,
}

pub fn seam_setup(
    geometry: SeamGeometry,
    texture: Option<SeamTexture>,
    power_d: f64,
    feathered: bool,
    eye: &EyeModel,
    d_ee: f64,
    db: &WaveformDb,
) -> Result<SeamSetup> {
    let scene = seam_scene(geometry, texture);
    let plan = SweepPlan::for_power(diopters_to_mm_inv(power_d), 0.0, db)?;
    let schedule = build_focus_blur_schedule(
        &plan,
        &[FOCUS_MASK_ID.to_string()],
        &[BLUR_MASK_ID.to_string()],
        &ScheduleOptions::default(),
    )?;
    let (pair, _) = scene_blend(&scene, eye, d_ee, plan.p_high, feathered)?;
    let masks = MaskSet::from([
        (FOCUS_MASK_ID.to_string(), quantize_mask(&pair.focus, 1.0)),
        (BLUR_MASK_ID.to_string(), quantize_mask(&pair.blur, 1.0)),
    ]);
    let viewer = Viewer {
        eye: *eye,
        vertex_distance: d_ee,
        gaze: accommodate(&scene, 0, eye, d_ee)?,
    };
    Ok(SeamSetup {
        scene,
        schedule,
        masks,
        waveform: plan.output,
        viewer,
    })
}

impl SeamSetup {
    pub fn render(&self) -> Result<RenderedView> {
        let opts = RenderOptions {
            exposure: Exposure::PerTarget,
            ..RenderOptions::default()
        };
        render(&self.scene, &self.schedule, &self.masks, &self.waveform, &self.viewer, &opts)
    }
}

/// Renders a white plane for one seam geometry and measures how far the
/// perceived radiance strays from flat.
pub fn run_seam(
    geometry: SeamGeometry,
    power_d: f64,
    feathered: bool,
    eye: &EyeModel,
    d_ee: f64,
    db: &WaveformDb,
) -> Result<SeamReport> {
    let setup = seam_setup(geometry, None, power_d, feathered, eye, d_ee, db)?;
    let view = setup.render()?;
    let c = setup.scene.optical_center;
    let (mut max_dark, mut max_bright) = (0.0f64, 0.0f64);
    for y in 0..SEAM_HEIGHT {
        for x in 0..SEAM_WIDTH {
            if (x as f64 - c.0).hypot(y as f64 - c.1) > SEAM_EVAL_RADIUS {
                continue;
            }
            let v = view.image.get(x, y);
            max_dark = max_dark.max(1.0 - v);
            max_bright = max_bright.max(v - 1.0);
        }
    }
    let blur = setup.scene.projector_mask(Label::Blur);
    let p_high = setup
        .schedule
        .slots
        .iter()
        .map(|s| s.target_power())
        .fold(0.0, f64::max);
    let s = crate::seam::scaling_factor(SEAM_DISTANCE, d_ee, p_high)?;
    let region = seam_region(&blur, s, c);
    Ok(SeamReport {
        geometry,
        power_d: mm_inv_to_diopters(p_high),
        feathered,
        max_dark,
        max_bright,
        gap_px: region.gap_count(),
        overlap_px: region.overlap_count(),
    })
}
