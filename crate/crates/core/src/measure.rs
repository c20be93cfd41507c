//! Blur-circle measurement on rendered dot grids: global Otsu threshold,
//! connected components, the 3×3 components nearest the grid centre, and an
//! algebraic least-squares circle fit to each component's outline.

use image::{GrayImage, Luma};
use imageproc::contrast::otsu_level;
use imageproc::region_labelling::{connected_components, Connectivity};

use crate::error::{Error, Result};
use crate::image::Image;

/// What the measurement expects to find.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedGrid {
    /// Dots per side.
    pub count: usize,
    /// Grid centre in pixels.
    pub center: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: (f64, f64),
    pub radius: f64,
}

/// Algebraic (Kåsa) circle fit: minimises `Σ (x² + y² + Dx + Ey + F)²`.
pub fn fit_circle(points: &[(f64, f64)]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::Detection(format!("circle fit needs 3 points, got {}", points.len())));
    }
    // Centre the data for conditioning.
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut bx, mut by, mut b1) = (0.0, 0.0, 0.0);
    for &(px, py) in points {
        let (x, y) = (px - mx, py - my);
        let z = -(x * x + y * y);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sx += x;
        sy += y;
        bx += x * z;
        by += y * z;
        b1 += z;
    }
    let a = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
    let b = [bx, by, b1];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&a);
    if det.abs() < 1e-12 {
        return Err(Error::Detection("degenerate outline (collinear points)".into()));
    }
    let solve = |col: usize| {
        let mut m = a;
        for (r, row) in m.iter_mut().enumerate() {
            row[col] = b[r];
        }
        det3(&m) / det
    };
    let (d, e, f) = (solve(0), solve(1), solve(2));
    let r2 = (d * d + e * e) / 4.0 - f;
    if !(r2 > 0.0) {
        return Err(Error::Detection("circle fit produced no real radius".into()));
    }
    Ok(CircleFit {
        center: (mx - d / 2.0, my - e / 2.0),
        radius: r2.sqrt(),
    })
}

/// Otsu threshold of `img`, returned in image units.
pub fn otsu_threshold(img: &Image) -> f64 {
    let max = img.max_value();
    if max <= 0.0 {
        return 0.0;
    }
    let level = otsu_level(&to_gray(img, max));
    (level as f64 + 0.5) / 255.0 * max
}

fn to_gray(img: &Image, max: f64) -> GrayImage {
    GrayImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        Luma([((img.get(x as usize, y as usize) / max).clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

/// Binarises, labels and fits the 3×3 components nearest the grid centre.
/// Errors when the number of components differs from `count²`.
pub fn measure_dot_grid(img: &Image, expected: &ExpectedGrid) -> Result<Vec<CircleFit>> {
    let max = img.max_value();
    if max <= 0.0 {
        return Err(Error::Detection("image is black".into()));
    }
    let gray = to_gray(img, max);
    let level = otsu_level(&gray);
    let binary = GrayImage::from_fn(gray.width(), gray.height(), |x, y| {
        Luma([if gray.get_pixel(x, y)[0] > level { 255 } else { 0 }])
    });
    let labels = connected_components(&binary, Connectivity::Eight, Luma([0u8]));
    let n_labels = labels.pixels().map(|p| p[0]).max().unwrap_or(0) as usize;
    let want = expected.count * expected.count;
    if n_labels != want {
        return Err(Error::Detection(format!("found {n_labels} blobs, expected {want}")));
    }
    let (w, h) = (img.width as i64, img.height as i64);
    let label_at = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0
        } else {
            labels.get_pixel(x as u32, y as u32)[0]
        }
    };
    let mut outlines: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_labels];
    let mut centroids = vec![(0.0, 0.0, 0usize); n_labels];
    for y in 0..h {
        for x in 0..w {
            let l = label_at(x, y);
            if l == 0 {
                continue;
            }
            let i = l as usize - 1;
            let c = &mut centroids[i];
            c.0 += x as f64;
            c.1 += y as f64;
            c.2 += 1;
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if label_at(x + dx, y + dy) != l {
                    outlines[i].push((x as f64 + 0.5 * dx as f64, y as f64 + 0.5 * dy as f64));
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n_labels).collect();
    let dist = |i: usize| {
        let (sx, sy, n) = centroids[i];
        (sx / n as f64 - expected.center.0).hypot(sy / n as f64 - expected.center.1)
    };
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let pick = 9.min(n_labels);
    let mut chosen: Vec<usize> = order[..pick].to_vec();
    // Report in raster order for stable output.
    chosen.sort_by(|&a, &b| {
        let (ay, ax) = (centroids[a].1 / centroids[a].2 as f64, centroids[a].0 / centroids[a].2 as f64);
        let (by, bx) = (centroids[b].1 / centroids[b].2 as f64, centroids[b].0 / centroids[b].2 as f64);
        ay.round().total_cmp(&by.round()).then(ax.total_cmp(&bx))
    });
    chosen.into_iter().map(|i| fit_circle(&outlines[i])).collect()
}

/// Mean radius of the fitted circles.
pub fn mean_radius(fits: &[CircleFit]) -> f64 {
    fits.iter().map(|f| f.radius).sum::<f64>() / fits.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discs(size: usize, count: usize, spacing: f64, r: f64) -> Image {
        let c = (size as f64 - 1.0) / 2.0;
        let half = (count as f64 - 1.0) / 2.0;
        Image::from_fn(size, size, |x, y| {
            for gy in 0..count {
                for gx in 0..count {
                    let cx = c + (gx as f64 - half) * spacing;
                    let cy = c + (gy as f64 - half) * spacing;
                    if (x as f64 - cx).hypot(y as f64 - cy) <= r {
                        return 1.0;
                    }
                }
            }
            0.0
        })
    }

    #[test]
    fn exact_circle_points() {
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.5;
                (3.0 + 7.0 * t.cos(), -2.0 + 7.0 * t.sin())
            })
            .collect();
        let fit = fit_circle(&pts).unwrap();
        assert!((fit.radius - 7.0).abs() < 1e-9);
        assert!((fit.center.0 - 3.0).abs() < 1e-9 && (fit.center.1 + 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_pixels_have_half_pixel_radius() {
        let img = discs(101, 5, 20.0, 0.0);
        let fits = measure_dot_grid(
            &img,
            &ExpectedGrid {
                count: 5,
                center: (50.0, 50.0),
            },
        )
        .unwrap();
        assert_eq!(fits.len(), 9);
        for f in &fits {
            assert!((f.radius - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn disc_radius_is_recovered() {
        for r in [2.0, 4.5, 9.0] {
            let img = discs(201, 5, 40.0, r);
            let fits = measure_dot_grid(
                &img,
                &ExpectedGrid {
                    count: 5,
                    center: (100.0, 100.0),
                },
            )
            .unwrap();
            assert!((mean_radius(&fits) - r).abs() < 0.6, "r = {r}: {}", mean_radius(&fits));
        }
    }

    #[test]
    fn count_mismatch_is_reported() {
        let img = discs(101, 3, 20.0, 1.0);
        let res = measure_dot_grid(
            &img,
            &ExpectedGrid {
                count: 5,
                center: (50.0, 50.0),
            },
        );
        assert!(matches!(res, Err(Error::Detection(_))));
    }
}
