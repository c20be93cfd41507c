use std::sync::OnceLock;

use focalsweep::etl::{EtlModel, VoltageGrid};
use focalsweep::experiments::DotGridProtocol;
use focalsweep::image::{quantize_mask, Image};
use focalsweep::optics::EyeModel;
use focalsweep::seam::{binary_pair, seam_region, Feather};
use focalsweep::wavedb::{build_db, WaveformDb};
use proptest::prelude::*;

const W: usize = 160;
const H: usize = 120;
const C: (f64, f64) = (79.5, 59.5);

fn db() -> &'static WaveformDb {
    static DB: OnceLock<WaveformDb> = OnceLock::new();
    DB.get_or_init(|| build_db(VoltageGrid::STANDARD, 60.0, &EtlModel::default()).unwrap())
}

/// Blur disc (or its complement) partitioning the raster with focus.
fn partition(r: f64, off: (f64, f64), blur_inside: bool) -> (Image, Image) {
    let inside = Image::from_fn(W, H, |x, y| {
        if (x as f64 - C.0 - off.0).hypot(y as f64 - C.1 - off.1) <= r {
            1.0
        } else {
            0.0
        }
    });
    let outside = inside.map(|v| 1.0 - v);
    if blur_inside {
        (outside, inside)
    } else {
        (inside, outside)
    }
}

#[test]
fn unit_scale_keeps_binary_masks() {
    let (focus, blur) = partition(30.0, (3.0, -2.0), true);
    let pair = Feather::new(&focus, &blur, 1.0, C, 8.0).unwrap().pair();
    assert_eq!(pair, binary_pair(&focus, &blur));
}

#[test]
fn seam_area_vanishes_continuously() {
    let (_, blur) = partition(40.0, (0.0, 0.0), true);
    let mut prev = usize::MAX;
    for k in (0..=6).rev() {
        let s = 1.0 + 0.01 * k as f64;
        let n = seam_region(&blur, s, C).overlap_count();
        assert!(n <= prev);
        prev = n;
    }
    assert_eq!(prev, 0);
}

#[test]
fn focus_weight_falls_monotonically_across_the_band() {
    let (focus, blur) = partition(35.0, (0.0, 0.0), false);
    let f = Feather::new(&focus, &blur, 1.04, C, 6.0).unwrap();
    for k in 0..16 {
        let th = k as f64 * std::f64::consts::PI / 8.0;
        let mut prev = f64::INFINITY;
        for i in 0..=240 {
            let rho = 15.0 + 0.125 * i as f64;
            let w = f.focus_weight(C.0 + rho * th.cos(), C.1 + rho * th.sin());
            assert!(w <= prev + 1e-12, "θ={th} ρ={rho}");
            prev = w;
        }
        assert_eq!(prev, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn feathered_pairs_are_complementary_as_seen(
        r in 20.0f64..45.0,
        ox in -8.0f64..8.0,
        oy in -8.0f64..8.0,
        s in 1.001f64..1.05,
        margin in 1.0f64..10.0,
        blur_inside: bool,
    ) {
        let (focus, blur) = partition(r, (ox, oy), blur_inside);
        let f = Feather::new(&focus, &blur, s, C, margin).unwrap();
        let pair = f.pair();
        for v in pair.focus.data.iter().chain(&pair.blur.data) {
            prop_assert!((0.0..=1.0).contains(v));
        }
        let qf = quantize_mask(&pair.focus, 1.0);
        let qb = quantize_mask(&pair.blur, 1.0);
        for y in 0..H {
            for x in 0..W {
                let (px, py) = (x as f64, y as f64);
                // Blur-slot light reaching q left the projector at c + (q − c)/s.
                let (sx, sy) = (C.0 + (px - C.0) / s, C.1 + (py - C.1) / s);
                let exact = f.focus_weight(px, py) + f.blur_weight(sx, sy);
                prop_assert!((exact - 1.0).abs() < 1e-9, "({x}, {y}): {exact}");
                // Each 8-bit mask is within half a step of its weight, so the
                // quantised pair sums to one within one step.
                let i = y * W + x;
                prop_assert!((qf.data[i] - pair.focus.data[i]).abs() <= 0.5 / 255.0 + 1e-12);
                prop_assert!((qb.data[i] - pair.blur.data[i]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}

#[test]
fn dot_radius_tracks_model_and_grows_with_power() {
    let p = DotGridProtocol {
        distances_mm: vec![600.0],
        ..DotGridProtocol::default()
    };
    let rows = p.run(&EyeModel::default(), 15.0, db(), true).unwrap();
    let mae = rows.iter().map(|r| (r.proposed_radius_px - r.model_radius_px).abs()).sum::<f64>() / rows.len() as f64;
    assert!(mae <= 1.5, "mean abs error {mae}");
    for w in rows.windows(2) {
        assert!(w[1].normal_radius_px >= w[0].normal_radius_px, "{w:?}");
        assert!(w[1].proposed_radius_px >= w[0].proposed_radius_px, "{w:?}");
    }
}
