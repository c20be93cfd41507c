//! The command implementations. Each takes a configuration and explicit
//! paths and is a pure function of them: repeated runs write identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use focalsweep::blur_range::{dof_borders, far_border};
use focalsweep::etl::{synth_etl_response, InputWave, VoltageGrid};
use focalsweep::experiments::{
    four_object_scene, run_seam, seam_conditions, seam_setup, DotGridProtocol, DotGridRow, SeamGeometry,
    SeamTexture,
};
use focalsweep::image::save_png_srgb;
use focalsweep::pipeline::{plan_scene, FeatherRecord, BLUR_MASK_ID, FOCUS_MASK_ID};
use focalsweep::render::{accommodate, render, GazeState, MaskSet, RenderOptions, SlotRecord, Viewer};
use focalsweep::scene::{Scene, SceneFile};
use focalsweep::seam::Label;
use focalsweep::schedule::IlluminationSchedule;
use focalsweep::seam::RegionMask;
use focalsweep::units::{diopters_to_mm_inv, mm_inv_to_diopters};
use focalsweep::wavedb::{build_db, WaveformDb};
use serde::{Deserialize, Serialize};

use crate::config::ProjectConfig;
use crate::error::{CliError, Result};
use crate::plot::{line_plot, Axes, Series};

pub const SCHEDULE_FILE: &str = "schedule.json";
pub const PLAN_FILE: &str = "plan.json";
pub const MASK_DIR: &str = "masks";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })?;
    write_text(path, &(text + "\n"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One row of the blur-range table. Unbounded limits are written as
/// `unbounded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurRangeRow {
    pub power_d: f64,
    pub near_border_mm: String,
    pub far_border_mm: String,
}

fn limit_text(v: Option<f64>) -> String {
    v.map_or_else(|| "unbounded".to_string(), |d| format!("{d}"))
}

/// Near and far blur borders for lens powers `0, step, …, max` (diopters).
/// Writes `blur_range.csv` and `blur_range.svg` into `out_dir`.
pub fn cmd_blur_range(cfg: &ProjectConfig, max_d: f64, step_d: f64, out_dir: &Path) -> Result<Vec<BlurRangeRow>> {
    if !(step_d > 0.0 && max_d >= 0.0 && max_d.is_finite()) {
        return Err(CliError::InvalidInput(format!(
            "power grid needs step > 0 and max >= 0, got step {step_d}, max {max_d}"
        )));
    }
    let eye = cfg.eye_model();
    let d_ee = cfg.vertex_distance_mm;
    let n = (max_d / step_d + 1e-9).floor() as usize;
    let mut rows = Vec::with_capacity(n + 1);
    let (mut near_pts, mut far_pts) = (Vec::new(), Vec::new());
    for i in 0..=n {
        let power_d = i as f64 * step_d;
        let p = diopters_to_mm_inv(power_d);
        let near = dof_borders(&eye, d_ee, p, eye.near_power)?.near.finite();
        let far = far_border(&eye, d_ee, p);
        near_pts.push(near.map(|d| (power_d, d)));
        far_pts.push(far.map(|d| (power_d, d)));
        rows.push(BlurRangeRow {
            power_d,
            near_border_mm: limit_text(near),
            far_border_mm: limit_text(far),
        });
    }
    create_dir(out_dir)?;
    write_csv(&out_dir.join("blur_range.csv"), &rows)?;
    let svg = line_plot(
        &Axes {
            x_label: "ETL power (D)",
            y_label: "distance from ETL (mm)",
            x_range: (0.0, max_d.max(step_d)),
            y_range: (0.0, 3000.0),
        },
        &[
            Series {
                label: "far border",
                color: "#c0392b",
                points: far_pts,
            },
            Series {
                label: "near border",
                color: "#2471a3",
                points: near_pts,
            },
        ],
    );
    write_text(&out_dir.join("blur_range.svg"), &svg)?;
    Ok(rows)
}

/// Builds the waveform database for the configured lens model.
pub fn build_database(cfg: &ProjectConfig) -> Result<WaveformDb> {
    Ok(build_db(VoltageGrid::STANDARD, cfg.sweep_frequency_hz, &cfg.etl)?)
}

pub fn cmd_db(cfg: &ProjectConfig, out: &Path) -> Result<WaveformDb> {
    let db = build_database(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    db.save(out)?;
    Ok(db)
}

/// Loads a stored database, checking that it was built for this
/// configuration, or builds one when `path` is `None`.
pub fn load_database(cfg: &ProjectConfig, path: Option<&Path>) -> Result<WaveformDb> {
    let Some(path) = path else {
        return build_database(cfg);
    };
    let db = WaveformDb::load(path)?;
    if db.frequency != cfg.sweep_frequency_hz || db.model != cfg.etl {
        return Err(CliError::InvalidInput(format!(
            "{}: database was built for a different lens model or sweep frequency",
            path.display()
        )));
    }
    Ok(db)
}

/// Loads a scene file and checks it against the projector raster.
pub fn load_scene_file(cfg: &ProjectConfig, path: &Path) -> Result<(SceneFile, Scene)> {
    let file = SceneFile::load(path)?;
    if (file.width, file.height) != (cfg.projector.width, cfg.projector.height) {
        return Err(CliError::InvalidInput(format!(
            "{}: scene raster {}×{} differs from projector raster {}×{}",
            path.display(),
            file.width,
            file.height,
            cfg.projector.width,
            cfg.projector.height
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let scene = file.build(base)?;
    Ok((file, scene))
}

/// Summary written to `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub version: u32,
    pub p_s_diopters: f64,
    pub alpha_diopters: f64,
    pub p_high_diopters: f64,
    pub wave: InputWave,
    pub output_min_diopters: f64,
    pub output_max_diopters: f64,
    pub slots: usize,
    pub frames_per_target: Vec<(f64, usize)>,
    pub feathering: Vec<FeatherRecord>,
    /// Mask files relative to the plan directory, keyed by mask id.
    pub masks: BTreeMap<String, String>,
}

fn mask_file(id: &str) -> String {
    format!("{MASK_DIR}/{id}.png")
}

/// Plans a scene: sweep, schedule and feathered masks. Writes
/// `schedule.json`, `plan.json` and `masks/<id>.png` (with JSON sidecars)
/// into `out_dir`.
pub fn cmd_plan(cfg: &ProjectConfig, scene_path: &Path, db: &WaveformDb, out_dir: &Path) -> Result<PlanReport> {
    let (_, scene) = load_scene_file(cfg, scene_path)?;
    let plan = plan_scene(&scene, &cfg.eye_model(), cfg.vertex_distance_mm, db, &cfg.plan_settings())?;
    create_dir(&out_dir.join(MASK_DIR))?;
    plan.schedule.save(&out_dir.join(SCHEDULE_FILE))?;
    let mut masks = BTreeMap::new();
    for (id, weights, label) in [
        (FOCUS_MASK_ID, &plan.pair.focus, Label::Focus),
        (BLUR_MASK_ID, &plan.pair.blur, Label::Blur),
    ] {
        let rel = mask_file(id);
        RegionMask {
            weights: weights.clone(),
            label,
            optical_center: scene.optical_center,
        }
        .save(&out_dir.join(&rel), cfg.projector.gamma)?;
        masks.insert(id.to_string(), rel);
    }
    let frame_us = plan.schedule.frame_us;
    let report = PlanReport {
        version: 1,
        p_s_diopters: mm_inv_to_diopters(plan.plan.p_s),
        alpha_diopters: mm_inv_to_diopters(plan.plan.alpha),
        p_high_diopters: mm_inv_to_diopters(plan.plan.p_high),
        wave: plan.plan.wave,
        output_min_diopters: mm_inv_to_diopters(plan.plan.output.min()),
        output_max_diopters: mm_inv_to_diopters(plan.plan.output.max()),
        slots: plan.schedule.slots.len(),
        frames_per_target: plan
            .schedule
            .time_per_target()
            .into_iter()
            .map(|(d, t)| (d, (t * 1e6 / frame_us as f64).round() as usize))
            .collect(),
        feathering: plan.feathering,
        masks,
    };
    write_json(&out_dir.join(PLAN_FILE), &report)?;
    Ok(report)
}

/// Reads the schedule and masks written by [`cmd_plan`].
pub fn load_plan(plan_dir: &Path) -> Result<(IlluminationSchedule, MaskSet)> {
    let schedule = IlluminationSchedule::load(&plan_dir.join(SCHEDULE_FILE))?;
    let mut masks = MaskSet::new();
    for s in &schedule.slots {
        if !masks.contains_key(&s.mask_id) {
            let m = RegionMask::load(&plan_dir.join(mask_file(&s.mask_id)))?;
            masks.insert(s.mask_id.clone(), m.weights);
        }
    }
    Ok((schedule, masks))
}

/// Sidecar written next to a rendered PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub gaze_layer: String,
    pub gaze: GazeState,
    pub options: RenderOptions,
    /// Linear radiance mapped to white in the PNG.
    pub white: f64,
    /// Light-weighted PSF diameter per layer (px).
    pub effective_psf_px: BTreeMap<String, f64>,
    pub slots: Vec<SlotRecord>,
}

fn gaze_layer(file: &SceneFile, scene: &Scene, gaze: Option<&str>) -> Result<usize> {
    if let Some(name) = gaze.or(file.gaze.as_deref()) {
        return scene
            .layer_index(name)
            .ok_or_else(|| CliError::InvalidInput(format!("no layer named `{name}`")));
    }
    Ok(scene.layers.iter().position(|l| l.has_label(Label::Focus)).unwrap_or(0))
}

/// Simulates the view of a planned scene while gazing at one layer. Writes
/// the PNG to `out` and a provenance sidecar next to it.
pub fn cmd_render(
    cfg: &ProjectConfig,
    scene_path: &Path,
    plan_dir: &Path,
    gaze: Option<&str>,
    out: &Path,
) -> Result<RenderReport> {
    let (file, scene) = load_scene_file(cfg, scene_path)?;
    let (schedule, masks) = load_plan(plan_dir)?;
    let layer = gaze_layer(&file, &scene, gaze)?;
    let eye = cfg.eye_model();
    let viewer = Viewer {
        eye,
        vertex_distance: cfg.vertex_distance_mm,
        gaze: accommodate(&scene, layer, &eye, cfg.vertex_distance_mm)?,
    };
    let waveform = synth_etl_response(&schedule.wave, &cfg.etl);
    let opts = cfg.render_options();
    let view = render(&scene, &schedule, &masks, &waveform, &viewer, &opts)?;
    let white = match view.image.max_value() {
        m if m > 0.0 => m,
        _ => 1.0,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_png_srgb(&view.image, white, out)?;
    let effective_psf_px = scene
        .layers
        .iter()
        .filter_map(|l| view.effective_psf_px(&l.name).map(|p| (l.name.clone(), p)))
        .collect();
    let report = RenderReport {
        gaze_layer: scene.layers[layer].name.clone(),
        gaze: view.gaze,
        options: opts,
        white,
        effective_psf_px,
        slots: view.provenance,
    };
    write_json(&out.with_extension("json"), &report)?;
    Ok(report)
}

/// Runs the dot-grid protocol and writes one CSV row per distance and power.
pub fn cmd_dotgrid(
    cfg: &ProjectConfig,
    protocol: &DotGridProtocol,
    integrate: bool,
    db: &WaveformDb,
    out: &Path,
) -> Result<Vec<DotGridRow>> {
    let rows = protocol.run(&cfg.eye_model(), cfg.vertex_distance_mm, db, integrate)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_csv(out, &rows)?;
    Ok(rows)
}

fn texture_name(t: SeamTexture) -> &'static str {
    match t {
        SeamTexture::Document => "document",
        SeamTexture::Picture => "picture",
    }
}

fn geometry_name(g: SeamGeometry) -> &'static str {
    match g {
        SeamGeometry::Gap => "gap",
        SeamGeometry::Overlap => "overlap",
    }
}

/// Renders the eight textured seam conditions with binary and feathered
/// masks, and measures seam strength on a white plane. Writes PNGs and
/// `seam.csv` into `out_dir`.
pub fn cmd_seam_demo(cfg: &ProjectConfig, db: &WaveformDb, out_dir: &Path) -> Result<Vec<SeamRow>> {
    let eye = cfg.eye_model();
    let d_ee = cfg.vertex_distance_mm;
    create_dir(out_dir)?;
    for c in seam_conditions() {
        for feathered in [false, true] {
            let setup = seam_setup(c.geometry, Some(c.texture), c.power_d, feathered, &eye, d_ee, db)?;
            let view = setup.render()?;
            let name = format!(
                "{}_{}_{}d_{}.png",
                texture_name(c.texture),
                geometry_name(c.geometry),
                c.power_d,
                if feathered { "feathered" } else { "binary" }
            );
            save_png_srgb(&view.image, 1.0, &out_dir.join(name))?;
        }
    }
    let mut rows = Vec::new();
    for geometry in [SeamGeometry::Gap, SeamGeometry::Overlap] {
        for power_d in [1.0, 2.0] {
            for feathered in [false, true] {
                let r = run_seam(geometry, power_d, feathered, &eye, d_ee, db)?;
                rows.push(SeamRow {
                    geometry: geometry_name(geometry).into(),
                    power_d: r.power_d,
                    feathered,
                    max_dark_255: r.max_dark * 255.0,
                    max_bright_255: r.max_bright * 255.0,
                    gap_px: r.gap_px,
                    overlap_px: r.overlap_px,
                });
            }
        }
    }
    write_csv(&out_dir.join("seam.csv"), &rows)?;
    Ok(rows)
}

/// White-plane seam measurement in 8-bit steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamRow {
    pub geometry: String,
    pub power_d: f64,
    pub feathered: bool,
    pub max_dark_255: f64,
    pub max_bright_255: f64,
    pub gap_px: usize,
    pub overlap_px: usize,
}

/// Files written by [`cmd_fixtures`], relative to its output directory.
pub const FIXTURE_CONFIG: &str = "config.toml";
pub const FIXTURE_FOUR_OBJECT: [&str; 2] = ["four_object_1.json", "four_object_2.json"];
pub const FIXTURE_DOTGRID: &str = "dotgrid.json";

/// Configuration matching the bundled fixtures: defaults with the projector
/// raster of the four-object scene.
pub fn fixture_config() -> ProjectConfig {
    let mut cfg = ProjectConfig::default();
    cfg.projector.width = 640;
    cfg.projector.height = 480;
    cfg
}

/// Writes the bundled fixtures: a configuration, the two four-object
/// scenes and the dot-grid protocol.
pub fn cmd_fixtures(out_dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let mut written = Vec::new();
    let cfg_path = out_dir.join(FIXTURE_CONFIG);
    write_text(&cfg_path, &fixture_config().to_toml())?;
    written.push(cfg_path);
    for (condition, name) in [1u8, 2].into_iter().zip(FIXTURE_FOUR_OBJECT) {
        let path = out_dir.join(name);
        four_object_scene(condition)?.save(&path)?;
        written.push(path);
    }
    let path = out_dir.join(FIXTURE_DOTGRID);
    write_json(&path, &DotGridProtocol::default())?;
    written.push(path);
    Ok(written)
}

/// Reads a dot-grid protocol written by [`cmd_fixtures`].
pub fn load_protocol(path: &Path) -> Result<DotGridProtocol> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })
}
