//! Uniform-disc point spread functions and their convolution with a raster.

use crate::error::{Error, Result};
use crate::image::Image;

/// Sub-samples per pixel axis used to rasterise the disc.
pub const SUPERSAMPLE: usize = 4;

/// Horizontal run of equal-weight taps: `dx0..=dx1` at row offset `dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    dy: isize,
    dx0: isize,
    dx1: isize,
    weight: f64,
}

/// Normalised disc kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscKernel {
    /// Disc diameter (pixels).
    pub diameter: f64,
    /// Half-size; taps lie in `[-half, half]²`.
    pub half: usize,
    /// Dense taps, row-major over the `(2·half+1)²` square.
    pub taps: Vec<f64>,
    runs: Vec<Run>,
}

impl DiscKernel {
    /// Disc of the given diameter, area-weighted at 4× supersampling and
    /// normalised to unit sum. Diameters that cover no sub-sample collapse to
    /// the identity.
    pub fn new(diameter: f64) -> Result<Self> {
        if !(diameter.is_finite() && diameter >= 0.0) {
            return Err(Error::Domain(format!("PSF diameter must be finite and >= 0, got {diameter}")));
        }
        let r = 0.5 * diameter;
        let half = (r + 0.5).ceil() as usize;
        let side = 2 * half + 1;
        let r2 = r * r;
        let mut taps = vec![0.0; side * side];
        let mut total = 0.0;
        let ss = SUPERSAMPLE as f64;
        for j in 0..side {
            for i in 0..side {
                let (px, py) = (i as f64 - half as f64, j as f64 - half as f64);
                let mut hits = 0usize;
                for sj in 0..SUPERSAMPLE {
                    for si in 0..SUPERSAMPLE {
                        let x = px + (si as f64 + 0.5) / ss - 0.5;
                        let y = py + (sj as f64 + 0.5) / ss - 0.5;
                        if x * x + y * y <= r2 {
                            hits += 1;
                        }
                    }
                }
                taps[j * side + i] = hits as f64;
                total += hits as f64;
            }
        }
        if total == 0.0 {
            return Ok(Self::identity());
        }
        for t in &mut taps {
            *t /= total;
        }
        let runs = build_runs(&taps, half);
        Ok(Self {
            diameter,
            half,
            taps,
            runs,
        })
    }

    pub fn identity() -> Self {
        Self {
            diameter: 0.0,
            half: 0,
            taps: vec![1.0],
            runs: vec![Run {
                dy: 0,
                dx0: 0,
                dx1: 0,
                weight: 1.0,
            }],
        }
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_identity(&self) -> bool {
        self.half == 0
    }

    pub fn tap(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half as isize;
        if dx.abs() > h || dy.abs() > h {
            return 0.0;
        }
        self.taps[((dy + h) as usize) * self.side() + (dx + h) as usize]
    }

    /// Convolves `img` with zero padding. Errors when the kernel is wider
    /// than the image.
    pub fn convolve(&self, img: &Image) -> Result<Image> {
        if self.is_identity() {
            return Ok(img.clone());
        }
        let side = self.side();
        if side > img.width || side > img.height {
            return Err(Error::KernelTooLarge {
                kernel_px: side,
                width: img.width,
                height: img.height,
            });
        }
        let nonzero = img.data.iter().filter(|&&v| v != 0.0).count();
        let nnz_taps = self.taps.iter().filter(|&&t| t != 0.0).count();
        Ok(if nonzero * nnz_taps < img.data.len() * (self.runs.len() + 1) {
            self.scatter(img)
        } else {
            self.gather(img)
        })
    }

    fn scatter(&self, img: &Image) -> Image {
        let mut out = Image::new(img.width, img.height);
        let h = self.half as isize;
        let (w, ht) = (img.width as isize, img.height as isize);
        for y in 0..ht {
            for x in 0..w {
                let v = img.get(x as usize, y as usize);
                if v == 0.0 {
                    continue;
                }
                for dy in -h..=h {
                    let oy = y + dy;
                    if oy < 0 || oy >= ht {
                        continue;
                    }
                    for dx in -h..=h {
                        let ox = x + dx;
                        if ox < 0 || ox >= w {
                            continue;
                        }
                        let t = self.tap(dx, dy);
                        if t != 0.0 {
                            let i = oy as usize * img.width + ox as usize;
                            out.data[i] += v * t;
                        }
                    }
                }
            }
        }
        out
    }

    fn gather(&self, img: &Image) -> Image {
        let (w, ht) = (img.width, img.height);
        // Per-row prefix sums: prefix[y][x] = Σ_{i<x} img(i, y).
        let mut prefix = vec![0.0; (w + 1) * ht];
        for y in 0..ht {
            let base = y * (w + 1);
            for x in 0..w {
                prefix[base + x + 1] = prefix[base + x] + img.get(x, y);
            }
        }
        let mut out = Image::new(w, ht);
        let (wi, hi) = (w as isize, ht as isize);
        // Only outputs within `half` of a non-zero input can be non-zero.
        let Some((bx0, by0, bx1, by1)) = img.nonzero_bounds() else {
            return out;
        };
        let hf = self.half as isize;
        let (ox0, ox1) = ((bx0 as isize - hf).max(0), (bx1 as isize + hf).min(wi));
        let (oy0, oy1) = ((by0 as isize - hf).max(0), (by1 as isize + hf).min(hi));
        for y in oy0..oy1 {
            for x in ox0..ox1 {
                let mut acc = 0.0;
                for run in &self.runs {
                    let sy = y - run.dy;
                    if sy < 0 || sy >= hi {
                        continue;
                    }
                    let a = (x - run.dx1).clamp(0, wi);
                    let b = (x - run.dx0 + 1).clamp(0, wi);
                    if b > a {
                        let base = sy as usize * (w + 1);
                        acc += run.weight * (prefix[base + b as usize] - prefix[base + a as usize]);
                    }
                }
                out.set(x as usize, y as usize, acc);
            }
        }
        out
    }
}

fn build_runs(taps: &[f64], half: usize) -> Vec<Run> {
    let side = 2 * half + 1;
    let mut runs = Vec::new();
    for j in 0..side {
        let row = &taps[j * side..(j + 1) * side];
        let mut i = 0;
        while i < side {
            let w = row[i];
            let mut k = i;
            while k + 1 < side && row[k + 1] == w {
                k += 1;
            }
            if w != 0.0 {
                runs.push(Run {
                    dy: j as isize - half as isize,
                    dx0: i as isize - half as isize,
                    dx1: k as isize - half as isize,
                    weight: w,
                });
            }
            i = k + 1;
        }
    }
    runs
}
