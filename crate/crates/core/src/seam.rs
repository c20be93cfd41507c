//! Magnification by the tunable lens and the seams it opens between focus
//! and blur regions.
//!
//! A lens power `P` magnifies the view of an object at `d` mm by
//! `s = (d + d_Ee) / (d + d_Ee − d·d_Ee·P)` about the optical centre. Light
//! projected during blur slots is therefore seen scaled by `s` relative to
//! light projected during focus slots, which leaves dark gaps and bright
//! overlaps along region boundaries. [`feather`] replaces the hard boundary
//! with a pair of linear ramps whose sum is one after the blur weight is
//! magnified.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_mask_png, save_mask_png, Image};

/// Image distance of the lens for an object at `d_oe`, negative for a virtual
/// image. Errors when the image is at infinity.
pub fn image_distance(d_oe: f64, p_etl: f64) -> Result<f64> {
    let den = d_oe * p_etl - 1.0;
    if den.abs() < 1e-12 {
        return Err(Error::Singular(format!(
            "object at {d_oe} mm sits on the focal plane of a {p_etl} mm⁻¹ lens; its image is at infinity"
        )));
    }
    Ok(d_oe / den)
}

fn scaling_denominator(d_oe: f64, d_ee: f64, p_etl: f64) -> Result<f64> {
    if !(d_oe > 0.0 && d_ee >= 0.0 && p_etl.is_finite()) {
        return Err(Error::Domain(format!(
            "need d_oE > 0, d_Ee >= 0 and finite power, got {d_oe}, {d_ee}, {p_etl}"
        )));
    }
    let den = d_oe + d_ee - d_oe * d_ee * p_etl;
    if den.abs() < 1e-12 {
        return Err(Error::Singular(format!(
            "no finite magnification for d_oE = {d_oe}, d_Ee = {d_ee}, P = {p_etl}"
        )));
    }
    Ok(den)
}

/// Magnification of the view of an object at `d_oe` through a lens of power
/// `p_etl` placed `d_ee` mm in front of the eye.
pub fn scaling_factor(d_oe: f64, d_ee: f64, p_etl: f64) -> Result<f64> {
    Ok((d_oe + d_ee) / scaling_denominator(d_oe, d_ee, p_etl)?)
}

/// Visual angle (rad) subtended at the eye by an object half-height `x1`.
pub fn visual_angle(x1: f64, d_oe: f64, d_ee: f64, p_etl: f64) -> Result<f64> {
    Ok((x1 / scaling_denominator(d_oe, d_ee, p_etl)?).atan())
}

/// Role of a projector region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Focus,
    Blur,
}

/// A projector weight image with its role and the optical centre it scales about.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub weights: Image,
    pub label: Label,
    /// Optical centre in pixel coordinates.
    pub optical_center: (f64, f64),
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskSidecar {
    label: Label,
    optical_center: [f64; 2],
    width: usize,
    height: usize,
    gamma: f64,
}

/// Sidecar path stored next to a mask PNG.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

impl RegionMask {
    /// Writes the 8-bit PNG and a JSON sidecar carrying label and centre.
    pub fn save(&self, png: &Path, gamma: f64) -> Result<()> {
        save_mask_png(&self.weights, gamma, png)?;
        let side = MaskSidecar {
            label: self.label,
            optical_center: [self.optical_center.0, self.optical_center.1],
            width: self.weights.width,
            height: self.weights.height,
            gamma,
        };
        let path = sidecar_path(png);
        let text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(png: &Path) -> Result<Self> {
        let path = sidecar_path(png);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let side: MaskSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let weights = load_mask_png(png, side.gamma)?;
        if weights.width != side.width || weights.height != side.height {
            return Err(Error::Invalid(format!(
                "{}: sidecar says {}x{}, image is {}x{}",
                png.display(),
                side.width,
                side.height,
                weights.width,
                weights.height
            )));
        }
        Ok(Self {
            weights,
            label: side.label,
            optical_center: (side.optical_center[0], side.optical_center[1]),
        })
    }
}

/// Pixels that lose or gain blur-slot light when the blur region is magnified.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamRegion {
    pub width: usize,
    pub height: usize,
    /// In the blur region but vacated by its magnified copy: no light.
    pub gap: Vec<bool>,
    /// Outside the blur region but covered by its magnified copy: double light.
    pub overlap: Vec<bool>,
}

impl SeamRegion {
    pub fn gap_count(&self) -> usize {
        self.gap.iter().filter(|&&b| b).count()
    }

    pub fn overlap_count(&self) -> usize {
        self.overlap.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.gap_count() == 0 && self.overlap_count() == 0
    }
}

fn inside(img: &Image, x: f64, y: f64) -> bool {
    img.nearest(x, y) >= 0.5
}

/// Classifies the seam opened by magnifying `blur` by `s` about `center`.
/// Masks are thresholded at one half.
pub fn seam_region(blur: &Image, s: f64, center: (f64, f64)) -> SeamRegion {
    let (cx, cy) = center;
    let n = blur.width * blur.height;
    let mut gap = vec![false; n];
    let mut overlap = vec![false; n];
    for y in 0..blur.height {
        for x in 0..blur.width {
            let here = blur.get(x, y) >= 0.5;
            let scaled = inside(blur, cx + (x as f64 - cx) / s, cy + (y as f64 - cy) / s);
            let i = y * blur.width + x;
            gap[i] = here && !scaled;
            overlap[i] = !here && scaled;
        }
    }
    SeamRegion {
        width: blur.width,
        height: blur.height,
        gap,
        overlap,
    }
}

/// Focus-slot and blur-slot weights for one projector frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendPair {
    pub focus: Image,
    pub blur: Image,
}

/// Unfeathered pair: the thresholded masks, with blur taking precedence.
pub fn binary_pair(focus: &Image, blur: &Image) -> BlendPair {
    let b = blur.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    let f = Image::from_fn(focus.width, focus.height, |x, y| {
        if b.get(x, y) == 0.0 && focus.get(x, y) >= 0.5 {
            1.0
        } else {
            0.0
        }
    });
    BlendPair { focus: f, blur: b }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    None,
    Focus,
    Blur,
}

/// Evaluates feathered weights at continuous positions.
///
/// Along every ray from the optical centre, a boundary at radius `ρ_b`
/// between a focus and a blur region becomes the band
/// `[min(1, s)·ρ_b − m, max(1, s)·ρ_b + m]`, over which the focus weight
/// falls linearly from one (focus side) to zero (blur side). The blur weight
/// at `q` is one minus the focus weight at the magnified position, so the
/// perceived sum is one across the band.
pub struct Feather<'a> {
    focus: &'a Image,
    blur: &'a Image,
    scale: f64,
    center: (f64, f64),
    margin: f64,
    /// Summed-area table of boundary pixels, `(w+1)·(h+1)`.
    boundary_sat: Vec<u32>,
}

impl<'a> Feather<'a> {
    pub fn new(focus: &'a Image, blur: &'a Image, scale: f64, center: (f64, f64), margin: f64) -> Result<Self> {
        if !focus.same_size(blur) {
            return Err(Error::Invalid("focus and blur masks differ in size".into()));
        }
        if !(scale.is_finite() && scale > 0.0 && margin.is_finite() && margin >= 0.0) {
            return Err(Error::Domain(format!(
                "feathering needs scale > 0 and margin >= 0, got {scale}, {margin}"
            )));
        }
        let mut f = Self {
            focus,
            blur,
            scale,
            center,
            margin,
            boundary_sat: Vec::new(),
        };
        f.boundary_sat = f.boundary_table();
        Ok(f)
    }

    /// Region membership from the bilinear 0.5 iso-contour, so boundary
    /// radii vary continuously with direction.
    fn state(&self, x: f64, y: f64) -> State {
        if self.blur.bilinear(x, y) >= 0.5 {
            State::Blur
        } else if self.focus.bilinear(x, y) >= 0.5 {
            State::Focus
        } else {
            State::None
        }
    }

    fn boundary_table(&self) -> Vec<u32> {
        let (w, h) = (self.blur.width, self.blur.height);
        let st = |x: isize, y: isize| self.state(x as f64, y as f64);
        let mut sat = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                let (xi, yi) = (x as isize, y as isize);
                let s0 = st(xi, yi);
                let mut edge = false;
                if s0 != State::None {
                    'n: for dy in -1..=1 {
                        for dx in -1..=1 {
                            let s1 = st(xi + dx, yi + dy);
                            if s1 != State::None && s1 != s0 {
                                edge = true;
                                break 'n;
                            }
                        }
                    }
                }
                row += edge as u32;
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        sat
    }

    fn boundary_near(&self, x: f64, y: f64, r: f64) -> bool {
        let (w, h) = (self.blur.width as isize, self.blur.height as isize);
        let x0 = ((x - r).floor() as isize).clamp(0, w);
        let x1 = ((x + r).ceil() as isize + 1).clamp(0, w);
        let y0 = ((y - r).floor() as isize).clamp(0, h);
        let y1 = ((y + r).ceil() as isize + 1).clamp(0, h);
        if x1 <= x0 || y1 <= y0 {
            return false;
        }
        let ww = (w + 1) as usize;
        let at = |xx: isize, yy: isize| self.boundary_sat[yy as usize * ww + xx as usize] as i64;
        at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0) > 0
    }

    /// Focus weight inside a seam band, `None` outside every band. Without
    /// magnification there is no seam and no band.
    fn band_weight(&self, x: f64, y: f64) -> Option<f64> {
        if self.scale == 1.0 {
            return None;
        }
        let (cx, cy) = self.center;
        let (dx, dy) = (x - cx, y - cy);
        let rho = dx.hypot(dy);
        if rho < 1e-9 {
            return None;
        }
        let (ux, uy) = (dx / rho, dy / rho);
        let (lo_s, hi_s) = (self.scale.min(1.0), self.scale.max(1.0));
        let m = self.margin;
        let t_lo = ((rho - m) / hi_s).max(0.0);
        let t_hi = (rho + m) / lo_s;
        let reach = (rho - t_lo).max(t_hi - rho) + 2.0;
        if !self.boundary_near(x, y, reach) {
            return None;
        }
        let state_at = |t: f64| self.state(cx + t * ux, cy + t * uy);
        const STEP: f64 = 0.25;
        let steps = ((t_hi - t_lo) / STEP).ceil().max(1.0) as usize;
        let mut best: Option<(f64, f64)> = None; // (distance to band centre, weight)
        let mut t_prev = t_lo;
        let mut s_prev = state_at(t_prev);
        for k in 1..=steps {
            let t = (t_lo + k as f64 * STEP).min(t_hi);
            let s_cur = state_at(t);
            if s_cur != s_prev {
                if s_prev != State::None && s_cur != State::None {
                    let (mut a, mut b) = (t_prev, t);
                    for _ in 0..48 {
                        let mid = 0.5 * (a + b);
                        if state_at(mid) == s_prev {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    let rho_b = 0.5 * (a + b);
                    let start = lo_s * rho_b - m;
                    let end = hi_s * rho_b + m;
                    if rho >= start && rho <= end && end > start {
                        let frac = (rho - start) / (end - start);
                        let w = if s_prev == State::Focus { 1.0 - frac } else { frac };
                        let dist = (rho - 0.5 * (start + end)).abs();
                        if best.is_none_or(|(d, _)| dist < d) {
                            best = Some((dist, w));
                        }
                    }
                }
                s_prev = s_cur;
            }
            t_prev = t;
        }
        best.map(|(_, w)| w)
    }

    /// Focus-slot weight at `(x, y)`.
    pub fn focus_weight(&self, x: f64, y: f64) -> f64 {
        self.band_weight(x, y)
            .unwrap_or(if self.state(x, y) == State::Focus { 1.0 } else { 0.0 })
    }

    /// Blur-slot weight at `(x, y)`.
    pub fn blur_weight(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center;
        let (px, py) = (cx + self.scale * (x - cx), cy + self.scale * (y - cy));
        match self.band_weight(px, py) {
            Some(w) => 1.0 - w,
            None => {
                if self.state(x, y) == State::Blur {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Rasterises both weights at pixel centres.
    pub fn pair(&self) -> BlendPair {
        use rayon::prelude::*;
        let (w, h) = (self.focus.width, self.focus.height);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let f = (0..w).map(|x| self.focus_weight(x as f64, y as f64)).collect();
                let b = (0..w).map(|x| self.blur_weight(x as f64, y as f64)).collect();
                (f, b)
            })
            .collect();
        let mut focus = Image::new(w, h);
        let mut blur = Image::new(w, h);
        for (y, (f, b)) in rows.into_iter().enumerate() {
            focus.data[y * w..(y + 1) * w].copy_from_slice(&f);
            blur.data[y * w..(y + 1) * w].copy_from_slice(&b);
        }
        BlendPair { focus, blur }
    }
}

/// Feathered focus/blur weights for blur light magnified by `scale`.
pub fn feather(focus: &Image, blur: &Image, scale: f64, center: (f64, f64), margin: f64) -> Result<BlendPair> {
    Ok(Feather::new(focus, blur, scale, center, margin)?.pair())
}
