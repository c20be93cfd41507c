//! Layered scenes: textured planes at known distances, each split into
//! focus and blur projector regions. All rasters share the view grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blur_range::MIN_PLANNING_DISTANCE;
use crate::error::{Error, Result};
use crate::image::{load_mask_png, load_png, Image};
use crate::seam::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: Label,
    pub mask: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    /// Distance from the tunable lens (mm).
    pub distance: f64,
    /// Linear reflectance on the view grid.
    pub texture: Image,
    pub regions: Vec<Region>,
}

impl Layer {
    /// Union of the layer's regions.
    pub fn coverage(&self) -> Image {
        let mut out = Image::new(self.texture.width, self.texture.height);
        for r in &self.regions {
            for (o, v) in out.data.iter_mut().zip(&r.mask.data) {
                *o = o.max(*v);
            }
        }
        out
    }

    pub fn has_label(&self, label: Label) -> bool {
        self.regions.iter().any(|r| r.label == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    /// Optical centre of the lens in view pixels.
    pub optical_center: (f64, f64),
    /// View pixels per radian of visual angle.
    pub pixels_per_radian: f64,
    /// Radiance floor added to every rendered pixel.
    pub ambient: f64,
    pub layers: Vec<Layer>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("scene raster is empty".into()));
        }
        if !(self.pixels_per_radian.is_finite() && self.pixels_per_radian > 0.0) {
            return Err(Error::Invalid("pixels_per_radian must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Invalid("scene has no layers".into()));
        }
        for l in &self.layers {
            if !(l.distance.is_finite() && l.distance > 0.0) {
                return Err(Error::Invalid(format!("layer {}: distance must be positive", l.name)));
            }
            let sized = |img: &Image| img.width == self.width && img.height == self.height;
            if !sized(&l.texture) || !l.regions.iter().all(|r| sized(&r.mask)) {
                return Err(Error::Invalid(format!(
                    "layer {}: rasters must be {}x{}",
                    l.name, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Distinct distances of layers carrying a blur region, ascending.
    pub fn blur_distances(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .layers
            .iter()
            .filter(|l| l.has_label(Label::Blur))
            .map(|l| l.distance)
            .collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    /// Layers closer than the planning limit that carry a blur region.
    pub fn too_close_for_blur(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| l.has_label(Label::Blur) && l.distance < MIN_PLANNING_DISTANCE)
            .map(|l| l.name.as_str())
            .collect()
    }

    /// Projector mask for one label: the union over all layers.
    pub fn projector_mask(&self, label: Label) -> Image {
        let mut out = Image::new(self.width, self.height);
        for r in self.layers.iter().flat_map(|l| &l.regions).filter(|r| r.label == label) {
            for (o, v) in out.data.iter_mut().zip(&r.mask.data) {
                *o = o.max(*v);
            }
        }
        out
    }
}

/// Texture description in a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureSpec {
    Constant {
        value: f64,
    },
    Checker {
        period: usize,
        low: f64,
        high: f64,
    },
    /// Square grid of `count × count` discs centred on the optical centre.
    DotGrid {
        count: usize,
        spacing: f64,
        radius: f64,
        value: f64,
    },
    Png {
        path: PathBuf,
    },
}

/// Region shape in a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Full,
    /// Half-open pixel box `[x0, x1) × [y0, y1)`.
    Rect {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    },
    Disc {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Annulus {
        cx: f64,
        cy: f64,
        r0: f64,
        r1: f64,
    },
    Png {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub label: Label,
    pub shape: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub distance_mm: f64,
    pub texture: TextureSpec,
    pub regions: Vec<RegionSpec>,
}

/// On-disk scene description; relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default = "scene_version")]
    pub version: u32,
    pub width: usize,
    pub height: usize,
    /// Defaults to the raster centre.
    #[serde(default)]
    pub optical_center: Option<[f64; 2]>,
    pub pixels_per_radian: f64,
    #[serde(default)]
    pub ambient: f64,
    pub layers: Vec<LayerSpec>,
    /// Layer the viewer looks at when no gaze is given explicitly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze: Option<String>,
}

/// Current scene file format version.
pub const SCENE_VERSION: u32 = 1;

fn scene_version() -> u32 {
    SCENE_VERSION
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.version != SCENE_VERSION {
            return Err(Error::Invalid(format!(
                "{}: scene version {} is not supported (expected {SCENE_VERSION})",
                path.display(),
                file.version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn center(&self) -> (f64, f64) {
        match self.optical_center {
            Some([x, y]) => (x, y),
            None => ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0),
        }
    }

    /// Rasterises every layer. `base` resolves relative PNG paths.
    pub fn build(&self, base: &Path) -> Result<Scene> {
        let (w, h) = (self.width, self.height);
        let center = self.center();
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    name: l.name.clone(),
                    distance: l.distance_mm,
                    texture: texture(&l.texture, w, h, center, base)?,
                    regions: l
                        .regions
                        .iter()
                        .map(|r| {
                            Ok(Region {
                                label: r.label,
                                mask: shape(&r.shape, w, h, base)?,
                            })
                        })
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let scene = Scene {
            width: w,
            height: h,
            optical_center: center,
            pixels_per_radian: self.pixels_per_radian,
            ambient: self.ambient,
            layers,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Loads and rasterises a scene file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let base = path.parent().unwrap_or(Path::new("."));
    SceneFile::load(path)?.build(base)
}

fn texture(spec: &TextureSpec, w: usize, h: usize, c: (f64, f64), base: &Path) -> Result<Image> {
    Ok(match spec {
        TextureSpec::Constant { value } => Image::filled(w, h, *value),
        TextureSpec::Checker { period, low, high } => {
            let p = (*period).max(1);
            Image::from_fn(w, h, |x, y| if (x / p + y / p) % 2 == 0 { *high } else { *low })
        }
        TextureSpec::DotGrid {
            count,
            spacing,
            radius,
            value,
        } => {
            let half = (*count as f64 - 1.0) / 2.0;
            Image::from_fn(w, h, |x, y| {
                let gx = ((x as f64 - c.0) / spacing + half).round();
                let gy = ((y as f64 - c.1) / spacing + half).round();
                if gx < 0.0 || gy < 0.0 || gx > 2.0 * half || gy > 2.0 * half {
                    return 0.0;
                }
                let dx = x as f64 - (c.0 + (gx - half) * spacing);
                let dy = y as f64 - (c.1 + (gy - half) * spacing);
                if dx.hypot(dy) <= *radius {
                    *value
                } else {
                    0.0
                }
            })
        }
        TextureSpec::Png { path } => {
            let img = load_png(&base.join(path))?;
            check_size(&img, w, h, path)?;
            img
        }
    })
}

fn shape(spec: &ShapeSpec, w: usize, h: usize, base: &Path) -> Result<Image> {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(match spec {
        ShapeSpec::Full => Image::filled(w, h, 1.0),
        ShapeSpec::Rect { x0, y0, x1, y1 } => {
            Image::from_fn(w, h, |x, y| ind(x >= *x0 && x < *x1 && y >= *y0 && y < *y1))
        }
        ShapeSpec::Disc { cx, cy, r } => Image::from_fn(w, h, |x, y| ind((x as f64 - cx).hypot(y as f64 - cy) <= *r)),
        ShapeSpec::Annulus { cx, cy, r0, r1 } => Image::from_fn(w, h, |x, y| {
            let r = (x as f64 - cx).hypot(y as f64 - cy);
            ind(r >= *r0 && r <= *r1)
        }),
        ShapeSpec::Png { path } => {
            let img = load_mask_png(&base.join(path), 1.0)?;
            check_size(&img, w, h, path)?;
            img
        }
    })
}

fn check_size(img: &Image, w: usize, h: usize, path: &Path) -> Result<()> {
    if img.width != w || img.height != h {
        return Err(Error::Invalid(format!(
            "{}: expected {w}x{h}, found {}x{}",
            path.display(),
            img.width,
            img.height
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_plane_file() -> SceneFile {
        SceneFile {
            version: SCENE_VERSION,
            gaze: None,
            width: 40,
            height: 30,
            optical_center: None,
            pixels_per_radian: 500.0,
            ambient: 0.0,
            layers: vec![
                LayerSpec {
                    name: "near".into(),
                    distance_mm: 250.0,
                    texture: TextureSpec::Constant { value: 0.8 },
                    regions: vec![RegionSpec {
                        label: Label::Focus,
                        shape: ShapeSpec::Rect {
                            x0: 0,
                            y0: 0,
                            x1: 20,
                            y1: 30,
                        },
                    }],
                },
                LayerSpec {
                    name: "far".into(),
                    distance_mm: 900.0,
                    texture: TextureSpec::Checker {
                        period: 4,
                        low: 0.1,
                        high: 0.9,
                    },
                    regions: vec![RegionSpec {
                        label: Label::Blur,
                        shape: ShapeSpec::Rect {
                            x0: 20,
                            y0: 0,
                            x1: 40,
                            y1: 30,
                        },
                    }],
                },
            ],
        }
    }

    #[test]
    fn json_round_trip_and_build() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let file = two_plane_file();
        file.save(&path).unwrap();
        assert_eq!(SceneFile::load(&path).unwrap(), file);
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.optical_center, (19.5, 14.5));
        assert_eq!(scene.blur_distances(), vec![900.0]);
        let focus = scene.projector_mask(Label::Focus);
        let blur = scene.projector_mask(Label::Blur);
        assert_eq!(focus.sum() + blur.sum(), 1200.0);
        assert_eq!(focus.get(5, 5), 1.0);
        assert_eq!(blur.get(25, 5), 1.0);
    }

    #[test]
    fn dot_grid_has_the_requested_dots() {
        let spec = TextureSpec::DotGrid {
            count: 3,
            spacing: 10.0,
            radius: 0.0,
            value: 1.0,
        };
        let img = texture(&spec, 41, 41, (20.0, 20.0), Path::new(".")).unwrap();
        assert_eq!(img.sum(), 9.0);
        assert_eq!(img.get(10, 30), 1.0);
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let mut scene = two_plane_file().build(Path::new(".")).unwrap();
        scene.layers[0].texture = Image::new(3, 3);
        assert!(scene.validate().is_err());
    }
}
