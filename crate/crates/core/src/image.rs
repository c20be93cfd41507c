//! Single-channel linear-light raster and PNG helpers.
//!
//! PNGs are read and written as 8-bit sRGB (colour inputs are reduced to
//! luminance after linearisation) or as 16-bit linear grayscale. Projector
//! masks are written as 8-bit grayscale with an optional projector gamma.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major samples.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with zero outside the raster.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.get(x as usize, y as usize)
        }
    }

    /// Nearest-pixel lookup at continuous coordinates (pixel centres are integers).
    pub fn nearest(&self, x: f64, y: f64) -> f64 {
        self.get_or_zero(x.round() as isize, y.round() as isize)
    }

    /// Bilinear interpolation at continuous coordinates, zero outside.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_or_zero(xi, yi);
        let b = self.get_or_zero(xi + 1, yi);
        let c = self.get_or_zero(xi, yi + 1);
        let d = self.get_or_zero(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn add_scaled(&mut self, other: &Image, k: f64) {
        debug_assert!(self.same_size(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn mul(&self, other: &Image) -> Image {
        debug_assert!(self.same_size(other));
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Bounding box `(x0, y0, x1, y1)` (exclusive ends) of non-zero samples.
    pub fn nonzero_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            let Some(first) = row.iter().position(|&v| v != 0.0) else {
                continue;
            };
            let last = row.iter().rposition(|&v| v != 0.0).unwrap_or(first);
            b = Some(match b {
                None => (first, y, last + 1, y + 1),
                Some((x0, y0, x1, _)) => (x0.min(first), y0, x1.max(last + 1), y + 1),
            });
        }
        b
    }

    /// Magnifies about `center` by `s` with bilinear resampling.
    pub fn magnify(&self, s: f64, center: (f64, f64)) -> Image {
        if s == 1.0 {
            return self.clone();
        }
        let (cx, cy) = center;
        let mut out = Image::new(self.width, self.height);
        // Output support: the image of the source's non-zero box.
        let Some((x0, y0, x1, y1)) = self.nonzero_bounds() else {
            return out;
        };
        let fwd = |v: f64, c: f64| c + s * (v - c);
        let lo_x = (fwd(x0 as f64 - 1.0, cx).min(fwd(x1 as f64, cx)).floor().max(0.0)) as usize;
        let hi_x = (fwd(x0 as f64 - 1.0, cx).max(fwd(x1 as f64, cx)).ceil() as usize + 1).min(self.width);
        let lo_y = (fwd(y0 as f64 - 1.0, cy).min(fwd(y1 as f64, cy)).floor().max(0.0)) as usize;
        let hi_y = (fwd(y0 as f64 - 1.0, cy).max(fwd(y1 as f64, cy)).ceil() as usize + 1).min(self.height);
        for y in lo_y..hi_y {
            let sy = cy + (y as f64 - cy) / s;
            for x in lo_x..hi_x {
                let sx = cx + (x as f64 - cx) / s;
                out.set(x, y, self.bilinear(sx, sy));
            }
        }
        out
    }
}

/// sRGB decode of an 8-bit value.
pub fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB encode of a linear value clamped to `[0, 1]`.
pub fn linear_to_srgb(v: f64) -> u8 {
    let c = v.clamp(0.0, 1.0);
    let e = if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    (e * 255.0).round() as u8
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an 8-bit sRGB PNG (gray or colour) into linear luminance.
pub fn load_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| {
            0.2126 * srgb_to_linear(p[0]) + 0.7152 * srgb_to_linear(p[1]) + 0.0722 * srgb_to_linear(p[2])
        })
        .collect();
    Ok(Image {
        width: w as usize,
        height: h as usize,
        data,
    })
}

/// Writes `img / white` as 8-bit sRGB grayscale.
pub fn save_png_srgb(img: &Image, white: f64, path: &Path) -> Result<()> {
    let buf: GrayImage = ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        Luma([linear_to_srgb(img.get(x as usize, y as usize) / white)])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Writes `img / white` as 16-bit linear grayscale.
pub fn save_png_linear16(img: &Image, white: f64, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        let v = (img.get(x as usize, y as usize) / white).clamp(0.0, 1.0);
        Luma([(v * 65535.0).round() as u16])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Quantises a weight in `[0, 1]` to a projector code value.
pub fn quantize_weight(w: f64, gamma: f64) -> u8 {
    (w.clamp(0.0, 1.0).powf(1.0 / gamma) * 255.0).round() as u8
}

pub fn dequantize_weight(v: u8, gamma: f64) -> f64 {
    (v as f64 / 255.0).powf(gamma)
}

/// Rounds every weight to its 8-bit projector value and back.
pub fn quantize_mask(mask: &Image, gamma: f64) -> Image {
    mask.map(|w| dequantize_weight(quantize_weight(w, gamma), gamma))
}

pub fn save_mask_png(mask: &Image, gamma: f64, path: &Path) -> Result<()> {
    let buf: GrayImage = ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([quantize_weight(mask.get(x as usize, y as usize), gamma)])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn load_mask_png(path: &Path, gamma: f64) -> Result<Image> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Image {
        width: w as usize,
        height: h as usize,
        data: img.pixels().map(|p| dequantize_weight(p[0], gamma)).collect(),
    })
}
