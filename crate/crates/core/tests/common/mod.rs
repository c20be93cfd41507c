//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the closed forms under test; each helper works from
//! first principles (ray tracing, bisection, exhaustive scans).

#![allow(dead_code)]

use focalsweep::wavedb::{DbEntry, WaveformDb};

/// Plain parameter bundle so the oracles do not depend on library types.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub pupil: f64,
    pub d_er: f64,
    pub d_ee: f64,
    pub p_etl: f64,
    pub p_eye: f64,
}

/// Traces `n` rays from an on-axis object point at `d`, filling the pupil,
/// through both thin lenses with `u' = u − P·x`, and returns the spread of
/// retinal heights.
pub fn ray_traced_spot(p: &Params, d: f64, n: usize) -> f64 {
    // Height at the eye lens is linear in the launch angle; find the angle
    // that lands on the pupil edge by tracing a unit ray.
    let to_eye = |u0: f64| {
        let x_etl = u0 * d;
        let u_etl = u0 - p.p_etl * x_etl;
        x_etl + u_etl * p.d_ee
    };
    let u_edge = 0.5 * p.pupil / to_eye(1.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let u0 = u_edge * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
        let x_etl = u0 * d;
        let u1 = u0 - p.p_etl * x_etl;
        let x_eye = x_etl + u1 * p.d_ee;
        let u2 = u1 - p.p_eye * x_eye;
        let x_ret = x_eye + u2 * p.d_er;
        lo = lo.min(x_ret);
        hi = hi.max(x_ret);
    }
    hi - lo
}

/// Signed defocus written out directly from the blur-circle formula.
pub fn defocus(p: &Params, d: f64) -> f64 {
    1.0 - p.d_er * p.p_eye + p.d_er * (1.0 - d * p.p_etl) / (d + p.d_ee - d * p.d_ee * p.p_etl)
}

/// Distance where the signed defocus equals `target`, by bisection over
/// `(0, 1e12]` mm. Defocus is strictly decreasing in distance when the lens
/// cannot image the pupil onto the object, so the root is unique.
pub fn defocus_root(p: &Params, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (1e-9, 1e12);
    let g = |d: f64| defocus(p, d) - target;
    if g(lo) < 0.0 || g(hi) > 0.0 {
        return None;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Some(mid);
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Magnification from the virtual-image construction: image distance, image
/// height, then the ratio of visual angles with and without the lens.
pub fn scaling_chain(d: f64, d_ee: f64, p_etl: f64) -> f64 {
    let x1 = 1.0;
    // Thin-lens image distance; negative on the object side.
    let d_ei = 1.0 / (p_etl - 1.0 / d);
    let virtual_distance = -d_ei;
    let x1_image = x1 * virtual_distance / d;
    let angle_with = (x1_image / (virtual_distance + d_ee)).atan();
    let angle_without = (x1 / (d + d_ee)).atan();
    angle_with.tan() / angle_without.tan()
}

/// Exhaustive scan for the preferred covering entry, recomputing each
/// entry's output range from its samples.
pub fn scan_select(db: &WaveformDb, low: f64, high: f64) -> Option<&DbEntry> {
    let mut best: Option<(&DbEntry, f64)> = None;
    for e in &db.entries {
        let min = e.output.samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = e.output.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min <= low && max >= high) {
            continue;
        }
        let width = max - min;
        let better = match best {
            None => true,
            Some((b, bw)) => {
                let (amp, bamp) = (e.wave.v_max - e.wave.v_min, b.wave.v_max - b.wave.v_min);
                if width != bw {
                    width < bw
                } else if amp != bamp {
                    amp < bamp
                } else if e.wave.v_min != b.wave.v_min {
                    e.wave.v_min < b.wave.v_min
                } else {
                    e.wave.v_max < b.wave.v_max
                }
            }
        };
        if better {
            best = Some((e, width));
        }
    }
    best.map(|(e, _)| e)
}

/// Waveform power at `t` seconds by linear interpolation between samples,
/// wrapping at the period.
pub fn interpolated_power(samples: &[f64], sample_period: f64, t: f64) -> f64 {
    let n = samples.len();
    let x = (t / sample_period).rem_euclid(n as f64);
    let i = x.floor() as usize % n;
    let f = x - x.floor();
    samples[i] * (1.0 - f) + samples[(i + 1) % n] * f
}

/// Every way `schedule` breaks the slot rules: whole frames, no overlap
/// within the period, mid-frame power within `tol_d` diopters of target,
/// and a trigger lead of exactly `lead_us`.
pub fn schedule_violations(
    schedule: &focalsweep::schedule::IlluminationSchedule,
    samples: &[f64],
    sample_period: f64,
    tol_d: f64,
    lead_us: i64,
) -> Vec<String> {
    let mut out = Vec::new();
    let period_us = (1e6 / schedule.sweep_frequency_hz).round() as i64;
    let mut spans = Vec::new();
    for s in &schedule.slots {
        let len = s.end_us - s.start_us;
        if len <= 0 || len % schedule.frame_us != 0 {
            out.push(format!("slot {}: {len} µs is not whole frames", s.slot_id));
        }
        if s.start_us - s.trigger_us != lead_us {
            out.push(format!("slot {}: trigger lead {} µs", s.slot_id, s.start_us - s.trigger_us));
        }
        let mid = 0.5 * (s.start_us + s.end_us) as f64 * 1e-6;
        let got = interpolated_power(samples, sample_period, mid) * 1e3;
        if (got - s.target_diopters.0).abs() > tol_d {
            out.push(format!("slot {}: {got} D at mid-frame, target {} D", s.slot_id, s.target_diopters.0));
        }
        // Unroll onto [0, 2·period) so wrapped slots compare correctly.
        let a = s.start_us.rem_euclid(period_us);
        spans.push((a, a + len, s.slot_id));
        spans.push((a + period_us, a + period_us + len, s.slot_id));
    }
    spans.sort();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            out.push(format!("slots {} and {} overlap", w[0].2, w[1].2));
        }
    }
    out
}
