//! Synthetic round-1 power traces.
//!
//! Each trace covers `num_sbox` consecutive clock cycles of
//! `samples_per_clock` samples, framed by `margin / 2` samples of pre- and
//! post-amble. Clock `i` processes `X_i = S(P_i ^ K_i)`; its leak samples add
//! `a * L(X_i)` with a triangular profile of `leak_spread` samples peaking
//! at one, on top of a data-independent periodic baseline. Gaussian noise is
//! added to every sample.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::aes::{hamming_weight, intermediate, monomial, ByteMask};
use crate::trace::{Block, TraceSet, WindowSpec, NUM_SBOX};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LeakageKind {
    HammingWeight,
    Msb,
    /// `L(X) = sum_U alpha_U X^U` over the given masks.
    Anf(BTreeMap<ByteMask, f64>),
}

impl LeakageKind {
    pub fn eval(&self, x: u8) -> f64 {
        match self {
            LeakageKind::HammingWeight => hamming_weight(x) as f64,
            LeakageKind::Msb => (x >> 7) as f64,
            LeakageKind::Anf(coeffs) => coeffs
                .iter()
                .map(|(u, a)| a * monomial(x, *u) as f64)
                .sum(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineShape {
    Flat,
    Sine,
    Sawtooth,
}

/// Data-independent waveform repeated once per clock cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baseline {
    pub shape: BaselineShape,
    pub amplitude: f64,
}

impl Baseline {
    pub fn flat() -> Self {
        Baseline {
            shape: BaselineShape::Flat,
            amplitude: 0.0,
        }
    }

    /// Value at `phase` samples into a clock of `period` samples.
    pub fn value(&self, phase: usize, period: usize) -> f64 {
        let x = phase as f64 / period as f64;
        match self.shape {
            BaselineShape::Flat => self.amplitude,
            BaselineShape::Sine => self.amplitude * (2.0 * PI * x).sin(),
            BaselineShape::Sawtooth => self.amplitude * (2.0 * x - 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub num_traces: usize,
    pub samples_per_clock: usize,
    pub num_sbox: usize,
    pub leakage: LeakageKind,
    pub leak_amplitude: f64,
    pub noise_sigma: f64,
    pub baseline: Baseline,
    pub leak_spread: usize,
    /// First leak sample within the clock; `None` centres the profile.
    pub leak_offset: Option<usize>,
    /// Per-clock random shift of the leak samples, in samples.
    pub jitter_halfwidth: usize,
    /// Total pre- plus post-amble samples.
    pub margin: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_traces: 1000,
            samples_per_clock: 125,
            num_sbox: NUM_SBOX,
            leakage: LeakageKind::HammingWeight,
            leak_amplitude: 1.0,
            noise_sigma: 1.0,
            baseline: Baseline {
                shape: BaselineShape::Sine,
                amplitude: 1.0,
            },
            leak_spread: 5,
            leak_offset: None,
            jitter_halfwidth: 0,
            margin: 200,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_traces == 0 {
            return bad("num_traces must be at least 1".into());
        }
        if self.num_sbox != NUM_SBOX {
            return bad(format!("num_sbox must be {NUM_SBOX}, got {}", self.num_sbox));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !self.leak_amplitude.is_finite() {
            return bad("leak amplitude must be finite".into());
        }
        if !self.baseline.amplitude.is_finite() {
            return bad("baseline amplitude must be finite".into());
        }
        if self.leak_spread == 0 {
            return bad("leak_spread must be at least 1".into());
        }
        if self.samples_per_clock < self.leak_spread {
            return bad(format!(
                "samples_per_clock {} is smaller than leak_spread {}",
                self.samples_per_clock, self.leak_spread
            ));
        }
        if self.leak_start() + self.leak_spread > self.samples_per_clock {
            return bad("leak profile does not fit inside the clock cycle".into());
        }
        if self.jitter_halfwidth > self.margin / 2 {
            return bad(format!(
                "jitter half-width {} exceeds the pre-amble of {} samples",
                self.jitter_halfwidth,
                self.margin / 2
            ));
        }
        if self.num_traces > u32::MAX as usize {
            return bad("too many traces".into());
        }
        Ok(())
    }

    pub fn samples_per_trace(&self) -> usize {
        self.num_sbox * self.samples_per_clock + self.margin
    }

    /// First sample of clock `i`.
    pub fn clock_start(&self, i: usize) -> usize {
        self.margin / 2 + i * self.samples_per_clock
    }

    pub fn leak_start(&self) -> usize {
        self.leak_offset
            .unwrap_or((self.samples_per_clock - self.leak_spread.min(self.samples_per_clock)) / 2)
    }

    /// Sample index of the profile peak in clock `i` (no jitter).
    pub fn peak_sample(&self, i: usize) -> usize {
        self.clock_start(i) + self.leak_start() + (self.leak_spread - 1) / 2
    }

    /// Triangular leak profile with peak weight 1.
    pub fn leak_profile(&self) -> Vec<f64> {
        let l = self.leak_spread;
        let top = l.div_ceil(2) as f64;
        (0..l).map(|k| (k + 1).min(l - k) as f64 / top).collect()
    }

    /// Windows of `length` samples over the 16 clocks.
    pub fn window_spec(&self, length: usize, jitter_halfwidth: usize) -> Result<WindowSpec> {
        WindowSpec::for_clocks(self.clock_start(0), self.samples_per_clock, length, jitter_halfwidth)
    }
}

fn simulate_trace(cfg: &SimConfig, key: &Block, profile: &[f64], j: usize, row: &mut [f32]) -> Block {
    let mut pt_rng = seed::rng(cfg.seed, "sim.plaintext", j as u64);
    let plaintext: Block = std::array::from_fn(|_| pt_rng.random());
    let mut noise_rng = seed::rng(cfg.seed, "sim.noise", j as u64);
    let mut jitter_rng = seed::rng(cfg.seed, "sim.jitter", j as u64);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let spc = cfg.samples_per_clock;
    let pre = cfg.margin / 2;

    let mut clean: Vec<f64> = (0..row.len())
        .map(|t| {
            let phase = (t + spc - pre % spc) % spc;
            cfg.baseline.value(phase, spc)
        })
        .collect();
    let h = cfg.jitter_halfwidth as i64;
    for (i, k) in key.iter().enumerate().take(cfg.num_sbox) {
        let x = intermediate(plaintext[i], *k);
        let leak = cfg.leak_amplitude * cfg.leakage.eval(x);
        let shift = if h > 0 { jitter_rng.random_range(-h..=h) } else { 0 };
        let start = (cfg.clock_start(i) + cfg.leak_start()) as i64 + shift;
        for (d, w) in profile.iter().enumerate() {
            clean[(start + d as i64) as usize] += leak * w;
        }
    }
    for (out, c) in row.iter_mut().zip(clean) {
        let n = if cfg.noise_sigma > 0.0 {
            noise.sample(&mut noise_rng)
        } else {
            0.0
        };
        *out = (c + n) as f32;
    }
    plaintext
}

/// Generates `cfg.num_traces` traces under `key`. Trace `j` draws from its
/// own streams derived from `(cfg.seed, j)`, so the output does not depend on
/// the thread pool.
pub fn simulate(cfg: &SimConfig, key: &Block) -> Result<TraceSet> {
    cfg.validate()?;
    let n = cfg.samples_per_trace();
    let profile = cfg.leak_profile();
    let mut samples = Array2::<f32>::zeros((cfg.num_traces, n));
    let plaintexts: Vec<Block> = samples
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n.max(1))
        .enumerate()
        .map(|(j, row)| simulate_trace(cfg, key, &profile, j, row))
        .collect();
    TraceSet::new(samples, plaintexts, Some(*key))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnrClasses {
    /// One class per intermediate value.
    Value,
    /// One class per Hamming weight of the intermediate.
    HammingWeight,
}

/// First-order SNR of S-box `byte_index`: per sample, the count-weighted
/// variance of class means over the count-weighted mean intra-class
/// variance, maximised over the (aligned) window. Returns `+inf` when there
/// is signal but no noise.
pub fn snr(
    ts: &TraceSet,
    key: Option<&Block>,
    byte_index: usize,
    spec: &WindowSpec,
    classes: SnrClasses,
) -> Result<f64> {
    let key = key
        .or(ts.known_key())
        .ok_or_else(|| Error::Argument("SNR needs the key (argument or stored in the set)".into()))?;
    if byte_index >= NUM_SBOX {
        return Err(Error::Argument(format!("byte index {byte_index} above 15")));
    }
    let aligned = WindowSpec {
        jitter_halfwidth: 0,
        ..spec.clone()
    };
    aligned.validate(ts.samples_per_trace())?;
    let l = aligned.length;
    let start = aligned.positions[byte_index];
    let k = match classes {
        SnrClasses::Value => 256,
        SnrClasses::HammingWeight => 9,
    };
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0f64; k * l];
    let mut sumsq = vec![0.0f64; k * l];
    for j in 0..ts.num_traces() {
        let x = intermediate(ts.plaintexts()[j][byte_index], key[byte_index]);
        let c = match classes {
            SnrClasses::Value => x as usize,
            SnrClasses::HammingWeight => hamming_weight(x) as usize,
        };
        count[c] += 1;
        let row = ts.trace(j);
        for t in 0..l {
            let v = row[start + t] as f64;
            sum[c * l + t] += v;
            sumsq[c * l + t] += v * v;
        }
    }
    let total: usize = count.iter().sum();
    if total == 0 {
        return Err(Error::Argument("SNR of an empty trace set".into()));
    }
    let mut best = 0.0f64;
    for t in 0..l {
        let mut grand = 0.0;
        for c in 0..k {
            grand += sum[c * l + t];
        }
        grand /= total as f64;
        let (mut between, mut within) = (0.0, 0.0);
        for c in 0..k {
            if count[c] == 0 {
                continue;
            }
            let n = count[c] as f64;
            let mean = sum[c * l + t] / n;
            between += n * (mean - grand).powi(2);
            within += (sumsq[c * l + t] - n * mean * mean).max(0.0);
        }
        between /= total as f64;
        within /= total as f64;
        let second_moment: f64 =
            (0..k).map(|c| sumsq[c * l + t]).sum::<f64>() / total as f64;
        let ratio = if within > 1e-12 * second_moment.max(f64::MIN_POSITIVE) {
            between / within
        } else if between > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        best = best.max(ratio);
    }
    Ok(best)
}
