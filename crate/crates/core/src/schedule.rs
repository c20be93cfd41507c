//! Focal-sweep planning and projector illumination scheduling.
//!
//! A plan sweeps the lens from 0 to `P_E^s + α`, where `P_E^s` is the largest
//! of the per-object minimum blurring powers. Objects meant to look sharp are
//! lit while the lens power is near 0 and objects meant to look blurred while
//! it is near the top of the sweep. Each illumination slot is one projector
//! frame; the trigger is issued one projector latency ahead of the frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blur_range::min_blur_power;
use crate::error::{Error, Result};
use crate::etl::{InputWave, OutputWaveform};
use crate::optics::EyeModel;
use crate::units::{diopters_to_mm_inv, mm_inv_to_diopters};
use crate::wavedb::WaveformDb;

/// Default sweep offset α (mm⁻¹), 0.2 D.
pub const DEFAULT_ALPHA: f64 = 0.0002;
/// Default power tolerance for illumination windows (mm⁻¹), 0.05 D.
pub const DEFAULT_TOLERANCE: f64 = 0.00005;
/// Projector frame duration (s).
pub const PROJECTOR_FRAME: f64 = 0.001;
/// Trigger-to-projection latency of the projector (s).
pub const TRIGGER_DELAY: f64 = 0.00046;

/// The chosen sweep and the drive wave that realises it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    /// Bottom of the sweep (mm⁻¹), always 0.
    pub p_low: f64,
    /// Top of the sweep, `p_s + alpha` (mm⁻¹).
    pub p_high: f64,
    pub alpha: f64,
    /// Largest per-object minimum blurring power (mm⁻¹).
    pub p_s: f64,
    pub wave: InputWave,
    pub output: OutputWaveform,
}

impl SweepPlan {
    /// A plan for an explicit `[0, p_s + alpha]` range.
    pub fn for_power(p_s: f64, alpha: f64, db: &WaveformDb) -> Result<Self> {
        let p_high = p_s + alpha;
        let entry = db.select_wave(0.0, p_high)?;
        Ok(Self {
            p_low: 0.0,
            p_high,
            alpha,
            p_s,
            wave: entry.wave,
            output: entry.output.clone(),
        })
    }
}

/// Plans the sweep for a set of objects that must look blurred.
pub fn plan_sweep(
    blur_distances: &[f64],
    eye: &EyeModel,
    d_ee: f64,
    alpha: f64,
    db: &WaveformDb,
) -> Result<SweepPlan> {
    if blur_distances.is_empty() {
        return Err(Error::NothingToBlur);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be non-negative, got {alpha}")));
    }
    let mut p_s = 0.0f64;
    for &d in blur_distances {
        p_s = p_s.max(min_blur_power(eye, d_ee, d)?);
    }
    SweepPlan::for_power(p_s, alpha, db)
}

/// A time interval within one sweep period (s). `end` may exceed the period
/// when the interval wraps past phase 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Maximal runs of samples whose power is within `tol` of `target`, treating
/// the waveform as periodic.
pub fn phase_windows(wf: &OutputWaveform, target: f64, tol: f64) -> Vec<TimeWindow> {
    let n = wf.len();
    let inside: Vec<bool> = wf.samples.iter().map(|p| (p - target).abs() <= tol).collect();
    if n == 0 || !inside.iter().any(|&b| b) {
        return Vec::new();
    }
    if inside.iter().all(|&b| b) {
        return vec![TimeWindow {
            start: 0.0,
            end: wf.period(),
        }];
    }
    // Start just after an outside sample and stop on it, so every run closes.
    let first_out = inside.iter().position(|&b| !b).unwrap_or(0);
    let mut windows = Vec::new();
    let mut run_start: Option<usize> = None;
    for k in 1..=n {
        let i = first_out + k;
        let idx = i % n;
        match (inside[idx], run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                windows.push(TimeWindow {
                    start: wf.time(s % n),
                    end: wf.time(s % n) + (i - 1 - s) as f64 * wf.sample_period,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    windows.sort_by(|a, b| a.start.total_cmp(&b.start));
    windows
}

/// Timing parameters for schedule construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    /// Projector frame duration (s).
    pub frame_period: f64,
    /// Projector trigger latency (s).
    pub trigger_delay: f64,
    /// Allowed power error at mid-frame (mm⁻¹).
    pub tolerance: f64,
    /// Upper bound on frames per target power per period.
    pub max_frames_per_target: Option<usize>,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            frame_period: PROJECTOR_FRAME,
            trigger_delay: TRIGGER_DELAY,
            tolerance: DEFAULT_TOLERANCE,
            max_frames_per_target: None,
        }
    }
}

/// Masks to project while the lens is at `target_power`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMasks {
    /// mm⁻¹
    pub target_power: f64,
    pub mask_ids: Vec<String>,
}

/// One projector frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub slot_id: usize,
    /// Nominal lens power during the frame, in diopters.
    pub target_diopters: OrderedDiopters,
    /// Photon window start, µs from the start of the sweep period.
    pub start_us: i64,
    pub end_us: i64,
    /// When the trigger must be issued, µs (may be negative: previous period).
    pub trigger_us: i64,
    pub mask_id: String,
}

/// Diopter value stored verbatim so JSON round trips are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedDiopters(pub f64);

impl Eq for OrderedDiopters {}

impl Slot {
    /// Target power in mm⁻¹.
    pub fn target_power(&self) -> f64 {
        diopters_to_mm_inv(self.target_diopters.0)
    }

    pub fn duration_s(&self) -> f64 {
        (self.end_us - self.start_us) as f64 * 1e-6
    }

    pub fn mid_time_s(&self) -> f64 {
        0.5 * (self.start_us + self.end_us) as f64 * 1e-6
    }
}

/// A per-period projector schedule synchronised to the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationSchedule {
    pub version: u32,
    pub sweep_frequency_hz: f64,
    pub frame_us: i64,
    pub trigger_delay_us: i64,
    pub wave: InputWave,
    pub slots: Vec<Slot>,
}

fn to_us(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

impl IlluminationSchedule {
    pub fn period_s(&self) -> f64 {
        1.0 / self.sweep_frequency_hz
    }

    /// Summed slot duration per distinct target power, in slot order.
    pub fn time_per_target(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for s in &self.slots {
            match out.iter_mut().find(|(d, _)| *d == s.target_diopters.0) {
                Some((_, t)) => *t += s.duration_s(),
                None => out.push((s.target_diopters.0, s.duration_s())),
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("schedule: {e}")))?;
        s.check()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Structural invariants: whole frames, exact trigger lead, no overlap.
    pub fn check(&self) -> Result<()> {
        let period_us = 1e6 / self.sweep_frequency_hz;
        for s in &self.slots {
            if s.end_us - s.start_us != self.frame_us {
                return Err(Error::Invalid(format!("slot {} is not one frame long", s.slot_id)));
            }
            if s.start_us - s.trigger_us != self.trigger_delay_us {
                return Err(Error::Invalid(format!("slot {} has a wrong trigger lead", s.slot_id)));
            }
        }
        for (i, a) in self.slots.iter().enumerate() {
            for b in &self.slots[i + 1..] {
                if cyclic_overlap(a.start_us as f64, b.start_us as f64, self.frame_us as f64, period_us) {
                    return Err(Error::Invalid(format!("slots {} and {} overlap", a.slot_id, b.slot_id)));
                }
            }
        }
        Ok(())
    }
}

/// Whether two frames of length `len` starting at `a` and `b` overlap on a
/// circle of circumference `period`.
fn cyclic_overlap(a: f64, b: f64, len: f64, period: f64) -> bool {
    let d = (a - b).rem_euclid(period);
    d < len || period - d < len
}

struct Candidate {
    start_us: i64,
    error: f64,
}

fn candidates(wf: &OutputWaveform, target: f64, opts: &ScheduleOptions) -> Vec<Candidate> {
    let frame = opts.frame_period;
    let period = wf.period();
    let frame_us = to_us(frame);
    let mut starts = Vec::new();
    for w in phase_windows(wf, target, opts.tolerance) {
        let len = w.duration();
        if len >= frame {
            let n = (len / frame).floor() as usize;
            let offset = w.start + 0.5 * (len - n as f64 * frame);
            starts.extend((0..n).map(|k| offset + k as f64 * frame));
        } else {
            // Centre one frame on the best-matching sample of a short window.
            let i0 = (w.start / wf.sample_period).round() as usize;
            let i1 = (w.end / wf.sample_period).round() as usize;
            let best = (i0..=i1)
                .min_by(|&a, &b| {
                    let ea = (wf.samples[a % wf.len()] - target).abs();
                    let eb = (wf.samples[b % wf.len()] - target).abs();
                    ea.total_cmp(&eb)
                })
                .unwrap_or(i0);
            starts.push(wf.time(best) - 0.5 * frame);
        }
    }
    starts
        .into_iter()
        .filter_map(|s| {
            let start_us = to_us(s.rem_euclid(period));
            let mid = (start_us as f64 + 0.5 * frame_us as f64) * 1e-6;
            let error = (wf.power_at(mid) - target).abs();
            (error <= opts.tolerance).then_some(Candidate { start_us, error })
        })
        .collect()
}

/// Builds a schedule that gives every target the same number of frames per
/// period, as many as fit without overlap (up to `max_frames_per_target`).
pub fn build_schedule(
    wave: &InputWave,
    wf: &OutputWaveform,
    targets: &[TargetMasks],
    opts: &ScheduleOptions,
) -> Result<IlluminationSchedule> {
    if !(opts.tolerance >= 0.0 && opts.frame_period > 0.0) {
        return Err(Error::Domain("tolerance and frame period must be positive".into()));
    }
    let frame_us = to_us(opts.frame_period);
    let period_us = wf.period() * 1e6;
    let mut accepted: Vec<(usize, Candidate)> = Vec::new();
    let mut per_target = vec![0usize; targets.len()];
    let active: Vec<usize> = (0..targets.len())
        .filter(|&i| !targets[i].mask_ids.is_empty())
        .collect();
    for &ti in &active {
        let mut cands = candidates(wf, targets[ti].target_power, opts);
        cands.sort_by(|a, b| a.error.total_cmp(&b.error).then(a.start_us.cmp(&b.start_us)));
        for c in cands {
            let clash = accepted.iter().any(|(_, o)| {
                cyclic_overlap(c.start_us as f64, o.start_us as f64, frame_us as f64, period_us)
            });
            if !clash {
                per_target[ti] += 1;
                accepted.push((ti, c));
            }
        }
        if per_target[ti] == 0 {
            return Err(Error::WindowTooNarrow {
                target_diopters: mm_inv_to_diopters(targets[ti].target_power),
                tol_diopters: mm_inv_to_diopters(opts.tolerance),
            });
        }
    }
    let mut count = active.iter().map(|&i| per_target[i]).min().unwrap_or(0);
    if let Some(cap) = opts.max_frames_per_target {
        count = count.min(cap);
    }

    // Keep the `count` best frames of each target, then order by time.
    let mut kept: Vec<(usize, i64)> = Vec::new();
    for &ti in &active {
        kept.extend(
            accepted
                .iter()
                .filter(|(t, _)| *t == ti)
                .take(count)
                .map(|(t, c)| (*t, c.start_us)),
        );
    }
    kept.sort_by_key(|&(t, s)| (s, t));

    let delay_us = to_us(opts.trigger_delay);
    let mut next_mask = vec![0usize; targets.len()];
    let slots = kept
        .into_iter()
        .enumerate()
        .map(|(slot_id, (ti, start_us))| {
            let ids = &targets[ti].mask_ids;
            let mask_id = ids[next_mask[ti] % ids.len()].clone();
            next_mask[ti] += 1;
            Slot {
                slot_id,
                target_diopters: OrderedDiopters(mm_inv_to_diopters(targets[ti].target_power)),
                start_us,
                end_us: start_us + frame_us,
                trigger_us: start_us - delay_us,
                mask_id,
            }
        })
        .collect();
    let schedule = IlluminationSchedule {
        version: 1,
        sweep_frequency_hz: wave.frequency,
        frame_us,
        trigger_delay_us: delay_us,
        wave: *wave,
        slots,
    };
    schedule.check()?;
    Ok(schedule)
}

/// Focus masks at power 0, blur masks at the top of the sweep.
pub fn build_focus_blur_schedule(
    plan: &SweepPlan,
    focus_masks: &[String],
    blur_masks: &[String],
    opts: &ScheduleOptions,
) -> Result<IlluminationSchedule> {
    let targets = [
        TargetMasks {
            target_power: plan.p_low,
            mask_ids: focus_masks.to_vec(),
        },
        TargetMasks {
            target_power: plan.p_high,
            mask_ids: blur_masks.to_vec(),
        },
    ];
    build_schedule(&plan.wave, &plan.output, &targets, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etl::{synth_etl_response, EtlModel};

    fn sweep(v_min: f64, v_max: f64) -> (InputWave, OutputWaveform) {
        let wave = InputWave::new(v_min, v_max, 60.0).unwrap();
        let wf = synth_etl_response(&wave, &EtlModel::default());
        (wave, wf)
    }

    #[test]
    fn flat_wave_window_spans_period() {
        let wf = OutputWaveform::constant(0.0, 1667, 1.0 / 60.0 / 1667.0);
        let w = phase_windows(&wf, 0.0, 1e-5);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].start, 0.0);
        assert!((w[0].end - wf.period()).abs() < 1e-15);
    }

    #[test]
    fn transversal_crossing_gives_two_windows() {
        let (_, wf) = sweep(-0.02, 0.04);
        let target = 0.5 * (wf.min() + wf.max());
        let w = phase_windows(&wf, target, 0.00005);
        let sign_changes = (0..wf.len())
            .filter(|&i| {
                let a = wf.samples[i] - target;
                let b = wf.samples[(i + 1) % wf.len()] - target;
                a.signum() != b.signum()
            })
            .count();
        assert_eq!(sign_changes, 2);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn zero_tolerance_matches_exact_samples_only() {
        let (_, wf) = sweep(-0.02, 0.04);
        assert!(phase_windows(&wf, 0.0012345, 0.0).is_empty());
        let exact = wf.samples[100];
        let w = phase_windows(&wf, exact, 0.0);
        assert!(!w.is_empty());
        for w in &w {
            assert_eq!(wf.power_at(w.start), exact);
        }
    }

    #[test]
    fn wrapping_window_is_merged() {
        // The run around the phase-0 sample continues from the end of the period.
        let (_, wf) = sweep(-0.02, 0.04);
        let w = phase_windows(&wf, wf.samples[0], 0.00005);
        assert!(w.iter().any(|w| w.start > 0.5 * wf.period()));
        assert!(w.iter().any(|w| w.end > wf.period()));
    }

    #[test]
    fn flat_wave_every_frame_is_a_focus_slot() {
        let (wave, wf) = sweep(0.0, 0.0);
        let targets = [TargetMasks {
            target_power: 0.0,
            mask_ids: vec!["focus".into()],
        }];
        let s = build_schedule(&wave, &wf, &targets, &ScheduleOptions::default()).unwrap();
        assert_eq!(s.slots.len(), 16);
        assert!(s.slots.iter().all(|s| s.mask_id == "focus"));
    }

    #[test]
    fn schedule_invariants_on_a_sweep() {
        let (wave, wf) = sweep(-0.02, 0.05);
        let lo = wf.min() + 0.00001;
        let hi = wf.max() - 0.00001;
        let targets = [
            TargetMasks {
                target_power: lo,
                mask_ids: vec!["f".into()],
            },
            TargetMasks {
                target_power: hi,
                mask_ids: vec!["b".into()],
            },
        ];
        let opts = ScheduleOptions::default();
        let s = build_schedule(&wave, &wf, &targets, &opts).unwrap();
        assert!(!s.slots.is_empty());
        let nf = s.slots.iter().filter(|s| s.mask_id == "f").count();
        let nb = s.slots.iter().filter(|s| s.mask_id == "b").count();
        assert_eq!(nf, nb);
        for slot in &s.slots {
            assert_eq!(slot.end_us - slot.start_us, 1000);
            assert_eq!(slot.start_us - slot.trigger_us, 460);
            let p = wf.power_at(slot.mid_time_s());
            assert!((p - slot.target_power()).abs() <= opts.tolerance + 1e-12);
        }
        s.check().unwrap();
    }

    #[test]
    fn unreachable_target_is_too_narrow() {
        let (wave, wf) = sweep(-0.02, 0.05);
        let targets = [TargetMasks {
            target_power: wf.max() + 0.001,
            mask_ids: vec!["b".into()],
        }];
        let err = build_schedule(&wave, &wf, &targets, &ScheduleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::WindowTooNarrow { .. }));
    }

    #[test]
    fn json_round_trip() {
        let (wave, wf) = sweep(-0.02, 0.05);
        let targets = [TargetMasks {
            target_power: wf.max() - 0.00002,
            mask_ids: vec!["b".into()],
        }];
        let s = build_schedule(&wave, &wf, &targets, &ScheduleOptions::default()).unwrap();
        let text = s.to_json();
        let back = IlluminationSchedule::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn corrupted_schedule_is_rejected() {
        let (wave, wf) = sweep(0.0, 0.0);
        let targets = [TargetMasks {
            target_power: 0.0,
            mask_ids: vec!["focus".into()],
        }];
        let mut s = build_schedule(&wave, &wf, &targets, &ScheduleOptions::default()).unwrap();
        s.slots[1].start_us = s.slots[0].start_us + 10;
        s.slots[1].end_us = s.slots[1].start_us + 1000;
        s.slots[1].trigger_us = s.slots[1].start_us - 460;
        assert!(IlluminationSchedule::from_json(&s.to_json()).is_err());
    }
}
