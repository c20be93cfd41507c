//! Drive waveforms and a synthetic response model of the tunable lens.
//!
//! The lens is driven by a sinusoid between `v_min` and `v_max`. The static
//! voltage-to-power map is linear (±0.07 V ↔ ±10 D); the lens follows it
//! through a first-order lag and a bounded quadratic distortion, so stored
//! periods are periodic but not clean sinusoids. The stored format is the same
//! whether samples come from this model or from a measured device.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of drive voltages, `start + i·step` for `i < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl VoltageGrid {
    /// 71 voltages from −0.07 V to 0.07 V in 2 mV steps.
    pub const STANDARD: VoltageGrid = VoltageGrid {
        start: -0.07,
        step: 0.002,
        count: 71,
    };

    /// The `i`-th voltage. Grids whose start is a whole number of steps are
    /// evaluated as `(k + i)·step` so that zero is hit exactly.
    pub fn value(&self, i: usize) -> f64 {
        let k = self.start / self.step;
        if (k - k.round()).abs() < 1e-9 {
            (k.round() + i as f64) * self.step
        } else {
            self.start + i as f64 * self.step
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.value(i))
    }
}

impl Default for VoltageGrid {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Sinusoidal drive between two voltages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputWave {
    pub v_min: f64,
    pub v_max: f64,
    /// Sweep frequency (Hz).
    pub frequency: f64,
}

impl InputWave {
    pub const MAX_VOLTAGE: f64 = 0.07;

    pub fn new(v_min: f64, v_max: f64, frequency: f64) -> Result<Self> {
        let lim = Self::MAX_VOLTAGE + 1e-12;
        if !(v_min <= v_max && v_min >= -lim && v_max <= lim) {
            return Err(Error::Domain(format!(
                "drive voltages must satisfy -0.07 <= v_min <= v_max <= 0.07, got [{v_min}, {v_max}]"
            )));
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::Domain(format!("frequency must be positive, got {frequency}")));
        }
        Ok(Self {
            v_min,
            v_max,
            frequency,
        })
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Drive voltage at time `t`; the minimum is at `t = 0`.
    pub fn voltage_at(&self, t: f64) -> f64 {
        let mid = 0.5 * (self.v_min + self.v_max);
        let amp = 0.5 * (self.v_max - self.v_min);
        mid - amp * (TAU * self.frequency * t).cos()
    }
}

/// Parameters of the synthetic lens response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtlModel {
    /// Voltage that maps to `power_full_scale`.
    pub volts_full_scale: f64,
    /// Static power at full-scale voltage (mm⁻¹).
    pub power_full_scale: f64,
    /// First-order lag time constant (s).
    pub time_constant: f64,
    /// Quadratic distortion, as a fraction of the static amplitude.
    pub distortion: f64,
    /// Requested sample spacing (s); the stored spacing divides the period evenly.
    pub nominal_sample_period: f64,
    /// Periods simulated before the stored one.
    pub settle_periods: u32,
}

impl Default for EtlModel {
    fn default() -> Self {
        Self {
            volts_full_scale: 0.07,
            power_full_scale: 0.01,
            time_constant: 1.5e-3,
            distortion: 0.1,
            nominal_sample_period: 1e-5,
            settle_periods: 4,
        }
    }
}

impl EtlModel {
    /// Static voltage → power map (mm⁻¹).
    pub fn static_power(&self, v: f64) -> f64 {
        v / self.volts_full_scale * self.power_full_scale
    }

    /// Samples per stored period for a given sweep frequency.
    pub fn samples_per_period(&self, frequency: f64) -> usize {
        ((1.0 / frequency) / self.nominal_sample_period).round().max(1.0) as usize
    }

    /// Gain of the lag at angular frequency `omega`.
    pub fn lag_gain(&self, omega: f64) -> f64 {
        1.0 / (1.0 + (omega * self.time_constant).powi(2)).sqrt()
    }
}

/// One period of lens power, uniformly sampled from phase 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWaveform {
    /// Power samples (mm⁻¹); sample `i` is at time `i·sample_period`.
    pub samples: Vec<f64>,
    /// Sample spacing (s).
    pub sample_period: f64,
}

impl OutputWaveform {
    pub fn constant(power: f64, samples: usize, sample_period: f64) -> Self {
        Self {
            samples: vec![power; samples],
            sample_period,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.samples.len() as f64 * self.sample_period
    }

    pub fn phase(&self, i: usize) -> f64 {
        i as f64 / self.samples.len() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.sample_period
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Width of the output range (mm⁻¹).
    pub fn range_width(&self) -> f64 {
        self.max() - self.min()
    }

    /// Power at time `t` (s), periodic, linearly interpolated between samples.
    pub fn power_at(&self, t: f64) -> f64 {
        let n = self.samples.len();
        let pos = (t / self.sample_period).rem_euclid(n as f64);
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        let a = self.samples[i];
        let b = self.samples[(i + 1) % n];
        a + (b - a) * frac
    }
}

/// Steady-state lens response to one input wave.
pub fn synth_etl_response(wave: &InputWave, model: &EtlModel) -> OutputWaveform {
    let period = wave.period();
    let n = model.samples_per_period(wave.frequency);
    let h = period / n as f64;
    let mean = model.static_power(0.5 * (wave.v_min + wave.v_max));
    let amp = model.static_power(0.5 * (wave.v_max - wave.v_min)).abs();
    let drive = |i: usize| model.static_power(wave.voltage_at(i as f64 * h));

    let lagged: Vec<f64> = if model.time_constant <= 0.0 {
        (0..n).map(drive).collect()
    } else {
        // Exact first-order-hold discretisation of dy/dt = (u - y)/τ.
        let a = (-h / model.time_constant).exp();
        let ramp = model.time_constant / h * (1.0 - a);
        let mut y = drive(0);
        let mut u_prev = y;
        let settle = model.settle_periods as usize * n;
        let mut out = Vec::with_capacity(n);
        for step in 1..=settle + n {
            let u = drive(step % n);
            y = a * y + u - a * u_prev - ramp * (u - u_prev);
            u_prev = u;
            if step > settle {
                out.push(y);
            }
        }
        // `out[k]` is the state at step settle+k+1; rotate so index 0 is phase 0.
        out.rotate_right(1);
        out
    };

    let samples = if amp > 0.0 && model.distortion != 0.0 {
        lagged
            .into_iter()
            .map(|y| y + model.distortion * (y - mean).powi(2) / amp)
            .collect()
    } else {
        lagged
    };
    OutputWaveform {
        samples,
        sample_period: h,
    }
}
