//! Pulse shapes, pulse-train synthesis, seeded noise and band-limited resampling.
//!
//! Time is measured in the same unit as the sampling interval `ts`. A pulse
//! occupies the half-open interval `[0, tp)` relative to its onset, so a pulse
//! of duration `tp` sampled at `ts` has exactly `ceil(tp / ts)` samples.

use std::cell::RefCell;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Relative tolerance used when comparing sampling intervals.
const TS_MATCH_TOL: f64 = 1e-9;

/// Step of the central difference used for tabulated pulses, as a fraction of `ts`.
const TABULATED_FD_STEP: f64 = 1.0 / 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PulseKind {
    /// Truncated Gaussian with `sigma = tp / 6`, centred at `tp / 2`.
    Gaussian { tp: f64 },
    /// Samples given explicitly; evaluated off-grid by linear interpolation.
    Tabulated,
}

/// A sampled pulse together with its time derivative at the sample instants.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseShape {
    samples: Vec<f64>,
    deriv_samples: Vec<f64>,
    tp: f64,
    ts: f64,
    kind: PulseKind,
    gain: f64,
}

fn sample_count(tp: f64, ts: f64) -> usize {
    // Guard against `tp / ts` landing a hair above an integer.
    ((tp / ts) - 1e-9).ceil().max(1.0) as usize
}

impl PulseShape {
    /// Truncated Gaussian pulse of duration `tp` sampled every `ts`.
    pub fn gaussian(tp: f64, ts: f64) -> Result<Self> {
        if !(tp > 0.0) || !tp.is_finite() {
            return invalid(format!("pulse duration must be positive, got {tp}"));
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return invalid(format!("sampling interval must be positive, got {ts}"));
        }
        if tp / ts < 2.0 {
            return invalid(format!(
                "pulse must span at least two samples (tp/ts = {})",
                tp / ts
            ));
        }
        let mut pulse = PulseShape {
            samples: Vec::new(),
            deriv_samples: Vec::new(),
            tp,
            ts,
            kind: PulseKind::Gaussian { tp },
            gain: 1.0,
        };
        let np = sample_count(tp, ts);
        pulse.samples = (0..np).map(|n| pulse.value_at(n as f64 * ts)).collect();
        pulse.deriv_samples = (0..np).map(|n| pulse.deriv_at(n as f64 * ts)).collect();
        Ok(pulse)
    }

    /// Pulse given by its samples at `n * ts`; the duration is `samples.len() * ts`.
    pub fn tabulated(samples: Vec<f64>, ts: f64) -> Result<Self> {
        if !(ts > 0.0) || !ts.is_finite() {
            return invalid(format!("sampling interval must be positive, got {ts}"));
        }
        if samples.is_empty() {
            return invalid("tabulated pulse needs at least one sample");
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return invalid("tabulated pulse samples must be finite");
        }
        let tp = samples.len() as f64 * ts;
        let mut pulse = PulseShape {
            samples,
            deriv_samples: Vec::new(),
            tp,
            ts,
            kind: PulseKind::Tabulated,
            gain: 1.0,
        };
        pulse.deriv_samples = (0..pulse.samples.len())
            .map(|n| pulse.deriv_at(n as f64 * ts))
            .collect();
        Ok(pulse)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn deriv_samples(&self) -> &[f64] {
        &self.deriv_samples
    }

    /// Number of samples `Np`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.tp
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn kind(&self) -> PulseKind {
        self.kind
    }

    /// Largest absolute value of the continuous pulse.
    pub fn peak(&self) -> f64 {
        match self.kind {
            PulseKind::Gaussian { .. } => self.gain.abs(),
            PulseKind::Tabulated => self.samples.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Pulse value at time `t` after the onset.
    pub fn value_at(&self, t: f64) -> f64 {
        match self.kind {
            PulseKind::Gaussian { tp } => {
                if t < 0.0 || t >= tp {
                    return 0.0;
                }
                let sigma = tp / 6.0;
                let d = t - tp / 2.0;
                self.gain * (-d * d / (2.0 * sigma * sigma)).exp()
            }
            PulseKind::Tabulated => {
                let u = t / self.ts;
                let last = (self.samples.len() - 1) as f64;
                if u < 0.0 || u > last {
                    return 0.0;
                }
                let i = u.floor() as usize;
                if i + 1 >= self.samples.len() {
                    return self.samples[self.samples.len() - 1];
                }
                let frac = u - i as f64;
                self.samples[i] + frac * (self.samples[i + 1] - self.samples[i])
            }
        }
    }

    /// Time derivative of the pulse at `t` after the onset.
    pub fn deriv_at(&self, t: f64) -> f64 {
        match self.kind {
            PulseKind::Gaussian { tp } => {
                if t < 0.0 || t >= tp {
                    return 0.0;
                }
                let sigma = tp / 6.0;
                let d = t - tp / 2.0;
                -(d / (sigma * sigma)) * self.gain * (-d * d / (2.0 * sigma * sigma)).exp()
            }
            PulseKind::Tabulated => {
                let h = self.ts * TABULATED_FD_STEP;
                (self.value_at(t + h) - self.value_at(t - h)) / (2.0 * h)
            }
        }
    }

    /// The same pulse with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PulseShape {
        PulseShape {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            deriv_samples: self.deriv_samples.iter().map(|v| v * factor).collect(),
            tp: self.tp,
            ts: self.ts,
            kind: self.kind,
            gain: self.gain * factor,
        }
    }

    /// The same continuous pulse sampled `factor` times more densely.
    pub fn upsampled(&self, factor: usize) -> Result<PulseShape> {
        if factor == 0 {
            return invalid("upsampling factor must be at least 1");
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let fine_ts = self.ts / factor as f64;
        match self.kind {
            PulseKind::Gaussian { tp } => Ok(PulseShape::gaussian(tp, fine_ts)?.scaled(self.gain)),
            PulseKind::Tabulated => {
                let np = self.samples.len() * factor;
                let samples = (0..np).map(|m| self.value_at(m as f64 * fine_ts)).collect();
                PulseShape::tabulated(samples, fine_ts)
            }
        }
    }
}

/// Make the truncated Gaussian pulse used throughout the experiments.
pub fn make_gaussian_pulse(tp: f64, ts: f64) -> Result<PulseShape> {
    PulseShape::gaussian(tp, ts)
}

/// Period, first-pulse delay and amplitude of a pulse train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainParams {
    pub period: f64,
    pub tau0: f64,
    pub amplitude: f64,
}

impl PulseTrainParams {
    pub fn new(period: f64, tau0: f64, amplitude: f64) -> Self {
        PulseTrainParams {
            period,
            tau0,
            amplitude,
        }
    }

    pub fn validate(&self, pulse_duration: f64) -> Result<()> {
        if !(self.period > 0.0) || !self.period.is_finite() {
            return invalid(format!("period must be positive, got {}", self.period));
        }
        if !(self.tau0 >= 0.0 && self.tau0 < self.period) {
            return invalid(format!(
                "delay must satisfy 0 <= tau0 < T (tau0 = {}, T = {})",
                self.tau0, self.period
            ));
        }
        if pulse_duration > self.period {
            return invalid(format!(
                "pulse duration {} exceeds period {}",
                pulse_duration, self.period
            ));
        }
        if !self.amplitude.is_finite() {
            return invalid("amplitude must be finite");
        }
        Ok(())
    }

    /// Period and delay rounded to the nearest multiple of `ts`.
    pub fn snapped(&self, ts: f64) -> Self {
        let period = (self.period / ts).round() * ts;
        let mut tau0 = (self.tau0 / ts).round() * ts;
        if tau0 >= period {
            tau0 -= period;
        }
        PulseTrainParams {
            period,
            tau0,
            amplitude: self.amplitude,
        }
    }
}

/// A noisy observation of a pulse train.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub x: Vec<f64>,
    pub ts: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub truth: Option<PulseTrainParams>,
}

impl Measurement {
    /// Wrap a noise-free or externally produced signal.
    pub fn from_samples(x: Vec<f64>, ts: f64) -> Result<Self> {
        if x.len() < 2 {
            return invalid("a measurement needs at least two samples");
        }
        if !(ts > 0.0) {
            return invalid(format!("sampling interval must be positive, got {ts}"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("measurement samples must be finite");
        }
        Ok(Measurement {
            x,
            ts,
            sigma2: 0.0,
            seed: 0,
            truth: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn with_truth(mut self, truth: PulseTrainParams) -> Self {
        self.truth = Some(truth);
        self
    }
}

/// Sample `n` values of the pulse train `sum_k A s(t - k T - tau0)` at `t = n ts`.
///
/// Pulses clipped by either window edge are included partially.
pub fn synthesize(
    params: &PulseTrainParams,
    pulse: &PulseShape,
    n: usize,
    ts: f64,
) -> Result<Vec<f64>> {
    if (pulse.ts() - ts).abs() > TS_MATCH_TOL * ts {
        return invalid(format!(
            "pulse sampled at {} but synthesis requested at {}",
            pulse.ts(),
            ts
        ));
    }
    params.validate(pulse.duration())?;
    let mut out = vec![0.0; n];
    if n == 0 || params.amplitude == 0.0 {
        return Ok(out);
    }
    let t_end = (n - 1) as f64 * ts;
    let (k_lo, k_hi) = overlapping_pulses(params, pulse.duration(), t_end);
    for k in k_lo..=k_hi {
        let onset = k as f64 * params.period + params.tau0;
        let first = (onset / ts).ceil().max(0.0) as usize;
        let last = (((onset + pulse.duration()) / ts).floor()).min((n - 1) as f64);
        if last < 0.0 {
            continue;
        }
        for (i, slot) in out.iter_mut().enumerate().take(last as usize + 1).skip(first) {
            *slot += params.amplitude * pulse.value_at(i as f64 * ts - onset);
        }
    }
    Ok(out)
}

/// Inclusive range of pulse indices `k` whose support `[kT + tau0, kT + tau0 + tp)`
/// intersects `[0, t_end]`.
pub(crate) fn overlapping_pulses(params: &PulseTrainParams, tp: f64, t_end: f64) -> (i64, i64) {
    let k_lo = (-(tp + params.tau0) / params.period).floor() as i64;
    let k_hi = ((t_end - params.tau0) / params.period).floor() as i64;
    (k_lo, k_hi)
}

/// Add i.i.d. zero-mean Gaussian noise of variance `sigma2`, reproducibly from `seed`.
pub fn add_noise(clean: &[f64], ts: f64, sigma2: f64, seed: u64) -> Result<Measurement> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return invalid(format!("noise variance must be non-negative, got {sigma2}"));
    }
    let mut x = clean.to_vec();
    if sigma2 > 0.0 {
        let sd = sigma2.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in x.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut rng);
            *v += sd * w;
        }
    }
    let mut m = Measurement::from_samples(x, ts)?;
    m.sigma2 = sigma2;
    m.seed = seed;
    Ok(m)
}

/// How a signal-to-noise ratio in dB maps to a noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SnrDefinition {
    /// `(A * peak)^2 / sigma2`.
    #[default]
    PeakAmplitude,
    /// Average power of the periodic signal over one period, `A^2 * Ts * sum(s^2) / T`, over `sigma2`.
    MeanPower,
}

impl SnrDefinition {
    pub fn describe(&self) -> &'static str {
        match self {
            SnrDefinition::PeakAmplitude => {
                "peak-amplitude: sigma2 = (A*max|s|)^2 / 10^(snr_db/10)"
            }
            SnrDefinition::MeanPower => {
                "mean-power: sigma2 = A^2*Ts*sum(s[n]^2)/T / 10^(snr_db/10)"
            }
        }
    }

    pub fn sigma2(&self, pulse: &PulseShape, amplitude: f64, period: f64, snr_db: f64) -> f64 {
        match self {
            SnrDefinition::PeakAmplitude => sigma2_for_snr(pulse, amplitude, snr_db),
            SnrDefinition::MeanPower => {
                sigma2_for_snr_mean_power(pulse, amplitude, period, snr_db)
            }
        }
    }
}

impl std::fmt::Display for SnrDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnrDefinition::PeakAmplitude => f.write_str("peak-amplitude"),
            SnrDefinition::MeanPower => f.write_str("mean-power"),
        }
    }
}

impl std::str::FromStr for SnrDefinition {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak-amplitude" | "peak" => Ok(SnrDefinition::PeakAmplitude),
            "mean-power" | "power" => Ok(SnrDefinition::MeanPower),
            other => invalid(format!("unknown SNR definition '{other}'")),
        }
    }
}

/// Noise variance for a peak-amplitude SNR: `(A * peak)^2 / 10^(snr_db / 10)`.
pub fn sigma2_for_snr(pulse: &PulseShape, amplitude: f64, snr_db: f64) -> f64 {
    let peak = amplitude * pulse.peak();
    peak * peak / 10f64.powf(snr_db / 10.0)
}

/// Noise variance for an SNR defined by the mean power of the periodic signal.
pub fn sigma2_for_snr_mean_power(
    pulse: &PulseShape,
    amplitude: f64,
    period: f64,
    snr_db: f64,
) -> f64 {
    let energy: f64 = pulse.samples().iter().map(|v| v * v).sum();
    let power = amplitude * amplitude * energy * pulse.ts() / period;
    power / 10f64.powf(snr_db / 10.0)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Band-limited interpolation by `factor` via zero-padding in the frequency domain.
///
/// The output has `x.len() * factor` samples and `out[factor * n] == x[n]` up to roundoff.
pub fn resample(x: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor < 1 {
        return invalid("resampling factor must be at least 1");
    }
    if factor == 1 || x.is_empty() {
        return Ok(x.to_vec());
    }
    let n = x.len();
    let m = n * factor;
    let (forward, inverse): (Arc<dyn rustfft::Fft<f64>>, _) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(m))
    });

    let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut spec);

    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    if n % 2 == 0 {
        padded[..half].copy_from_slice(&spec[..half]);
        // Split the Nyquist bin symmetrically so the result stays real.
        padded[half] = spec[half] * 0.5;
        padded[m - half] = spec[half] * 0.5;
        for k in half + 1..n {
            padded[m - n + k] = spec[k];
        }
    } else {
        padded[..=half].copy_from_slice(&spec[..=half]);
        for k in half + 1..n {
            padded[m - n + k] = spec[k];
        }
    }
    inverse.process(&mut padded);
    let scale = 1.0 / n as f64;
    Ok(padded.iter().map(|c| c.re * scale).collect())
}
