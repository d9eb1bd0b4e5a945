//! Period estimators.
//!
//! * PPKS: pulses with known shape and unknown amplitude. Grid search over
//!   period `P` and onset `n0` of the separable least-squares criterion,
//!   evaluated from one fast cross-correlation with the pulse template.
//! * PPUS: pulses of known length but unknown shape. The pulse samples are
//!   eliminated in closed form by folding the signal over the candidate period.
//! * MHUS-ML / MHUS-ANLS: multiharmonic baselines on a normalized-frequency grid.
//!
//! Only onsets whose whole pulse lies inside the window enter the PPKS/PPUS
//! criteria, so the normalized costs below equal the exact projection energy
//! `x' H (H'H)^-1 H' x` for the corresponding full-pulse model. Ties are broken
//! toward the smallest period, then the smallest onset.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal_model::{resample, Measurement, PulseShape};

thread_local! {
    static REAL_PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// Default penalty weight per harmonic in the order-selection criterion.
pub const DEFAULT_ORDER_PENALTY: f64 = 3.0;

/// Normal matrices with a larger condition estimate are skipped by MHUS-ML.
const ML_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ppks")]
    Ppks,
    #[serde(rename = "ppus")]
    Ppus,
    #[serde(rename = "mhus-ml")]
    MhusMl,
    #[serde(rename = "mhus-anls")]
    MhusAnls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ppks, Method::Ppus, Method::MhusMl, Method::MhusAnls];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ppks => "ppks",
            Method::Ppus => "ppus",
            Method::MhusMl => "mhus-ml",
            Method::MhusAnls => "mhus-anls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ppks" => Ok(Method::Ppks),
            "ppus" => Ok(Method::Ppus),
            "mhus-ml" | "ml" => Ok(Method::MhusMl),
            "mhus-anls" | "anls" => Ok(Method::MhusAnls),
            other => invalid(format!("unknown estimator '{other}'")),
        }
    }
}

/// Search domain of the estimators.
///
/// `p_min`/`p_max` are integer periods in samples of the signal being
/// searched. Without an explicit `psi_grid` the multiharmonic estimators
/// search the bins `b / fft_size` with `1/p_max <= b / fft_size <= 1/p_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_min: usize,
    pub p_max: usize,
    pub psi_grid: Option<Vec<f64>>,
    pub fft_size: usize,
}

impl GridSpec {
    pub fn new(p_min: usize, p_max: usize) -> Result<Self> {
        let g = GridSpec {
            p_min,
            p_max,
            psi_grid: None,
            fft_size: 1 << 21,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_fft_size(mut self, fft_size: usize) -> Self {
        self.fft_size = fft_size;
        self
    }

    pub fn with_psi_grid(mut self, psi: Vec<f64>) -> Self {
        self.psi_grid = Some(psi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_min < 2 || self.p_min > self.p_max {
            return invalid(format!(
                "period grid must satisfy 2 <= P_min <= P_max (got {}..{})",
                self.p_min, self.p_max
            ));
        }
        if let Some(psi) = &self.psi_grid {
            if psi.is_empty() || psi.iter().any(|v| !(*v > 0.0 && *v < 0.5)) {
                return invalid("psi grid values must lie in (0, 0.5)");
            }
        }
        if self.fft_size == 0 {
            return invalid("fft_size must be positive");
        }
        Ok(())
    }

    /// Period bounds multiplied by `factor`, for searching resampled data.
    pub fn scaled(&self, factor: usize) -> GridSpec {
        GridSpec {
            p_min: self.p_min * factor,
            p_max: self.p_max * factor,
            psi_grid: self.psi_grid.clone(),
            fft_size: self.fft_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub phase: f64,
}

/// Linear parameters recovered alongside the period.
#[derive(Debug, Clone, PartialEq)]
pub enum Nuisance {
    Amplitude(f64),
    PulseSamples(Vec<f64>),
    Harmonics(Vec<Harmonic>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    pub method: Method,
    /// Period on the searched (possibly resampled) grid, in samples.
    pub p_hat: usize,
    pub t_hat: f64,
    pub n0_hat: usize,
    pub cost: f64,
    pub nuisance: Nuisance,
    /// Normalized fundamental frequency for the multiharmonic estimators.
    pub psi_hat: Option<f64>,
    /// Harmonic count or pulse length the estimator was run with.
    pub order: usize,
    /// Grid points skipped because their normal matrix was near-singular.
    pub skipped: usize,
}

/// Pulse knowledge handed to the pulse-train estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseModel {
    Known(PulseShape),
    /// Pulse length in samples of the original (not resampled) signal.
    Unknown { np: usize },
}

impl PulseModel {
    pub fn method(&self) -> Method {
        match self {
            PulseModel::Known(_) => Method::Ppks,
            PulseModel::Unknown { .. } => Method::Ppus,
        }
    }

    fn pulse_len(&self) -> usize {
        match self {
            PulseModel::Known(p) => p.len(),
            PulseModel::Unknown { np } => *np,
        }
    }
}

/// Number of onsets `n0 + k p` whose pulse of length `np` fits in `n` samples.
fn full_pulses(n: usize, np: usize, p: usize, n0: usize) -> usize {
    if n0 + np > n {
        0
    } else {
        (n - np - n0) / p + 1
    }
}

fn check_pulse_grid(np: usize, n: usize, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if np == 0 {
        return invalid("pulse length must be at least one sample");
    }
    if np > grid.p_min {
        return invalid(format!(
            "pulse length {np} exceeds the smallest candidate period {}; pulses would overlap",
            grid.p_min
        ));
    }
    if np > n {
        return invalid(format!("pulse length {np} exceeds the signal length {n}"));
    }
    Ok(())
}

/// Row-wise access to a `(P, n0)` cost surface.
trait CostRows: Sync {
    fn fill_row(&self, p: usize, out: &mut Vec<f64>);
}

/// Known-shape criterion `(sum_k c[n0 + k P])^2 / (K E)` from the
/// cross-correlation `c[m] = sum_j x[m + j] s[j]`.
struct KnownShapeCost {
    corr: Vec<f64>,
    energy: f64,
    n: usize,
    np: usize,
}

impl KnownShapeCost {
    fn new(x: &[f64], pulse: &[f64]) -> Self {
        let n = x.len();
        let np = pulse.len();
        let len = (n + np).next_power_of_two();
        let (r2c, c2r) = REAL_PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(len), p.plan_fft_inverse(len))
        });

        let mut xb = vec![0.0; len];
        xb[..n].copy_from_slice(x);
        let mut sb = vec![0.0; len];
        sb[..np].copy_from_slice(pulse);
        let mut xs = r2c.make_output_vec();
        let mut ss = r2c.make_output_vec();
        r2c.process(&mut xb, &mut xs).expect("fft length");
        r2c.process(&mut sb, &mut ss).expect("fft length");
        for (a, b) in xs.iter_mut().zip(&ss) {
            *a *= b.conj();
        }
        // Real inverse ignores the imaginary parts of DC and Nyquist; they are
        // zero up to roundoff for a product of real spectra.
        xs[0].im = 0.0;
        if let Some(last) = xs.last_mut() {
            last.im = 0.0;
        }
        let mut out = c2r.make_output_vec();
        c2r.process(&mut xs, &mut out).expect("fft length");
        let scale = 1.0 / len as f64;
        let corr = out[..n - np + 1].iter().map(|v| v * scale).collect();
        KnownShapeCost {
            corr,
            energy: pulse.iter().map(|v| v * v).sum(),
            n,
            np,
        }
    }

    fn comb(&self, p: usize, n0: usize) -> (f64, usize) {
        let k = full_pulses(self.n, self.np, p, n0);
        let sum = (0..k).map(|i| self.corr[n0 + i * p]).sum();
        (sum, k)
    }
}

impl CostRows for KnownShapeCost {
    fn fill_row(&self, p: usize, out: &mut Vec<f64>) {
        out.clear();
        for n0 in 0..p {
            let (sum, k) = self.comb(p, n0);
            out.push(if k == 0 || self.energy == 0.0 {
                0.0
            } else {
                sum * sum / (k as f64 * self.energy)
            });
        }
    }
}

/// Unknown-shape criterion `sum_a (sum_k x[n0 + k P + a])^2 / K`.
struct UnknownShapeCost<'a> {
    x: &'a [f64],
    np: usize,
}

impl CostRows for UnknownShapeCost<'_> {
    fn fill_row(&self, p: usize, out: &mut Vec<f64>) {
        let (x, np, n) = (self.x, self.np, self.x.len());
        out.clear();
        out.resize(p, 0.0);
        // Stride-p suffix sums: tail[j] = x[j] + x[j + p] + ...
        let mut tail = vec![0.0; n];
        for j in (0..n).rev() {
            tail[j] = x[j] + if j + p < n { tail[j + p] } else { 0.0 };
        }
        let at = |j: usize| if j < n { tail[j] } else { 0.0 };
        let last_n0 = p.min(n.saturating_sub(np) + 1);
        let mut lo = 0;
        while lo < last_n0 {
            let k = full_pulses(n, np, p, lo);
            let mut hi = lo + 1;
            while hi < last_n0 && full_pulses(n, np, p, hi) == k {
                hi += 1;
            }
            // prefix[i] = sum of folded^2 over [lo, lo + i)
            let span = hi - lo + np - 1;
            let mut prefix = Vec::with_capacity(span + 1);
            prefix.push(0.0);
            let mut acc = 0.0;
            for j in lo..lo + span {
                let g = at(j) - at(j + k * p);
                acc += g * g;
                prefix.push(acc);
            }
            let kf = k as f64;
            for n0 in lo..hi {
                let i = n0 - lo;
                out[n0] = (prefix[i + np] - prefix[i]) / kf;
            }
            lo = hi;
        }
    }
}

/// Best `(cost, p, n0)` with deterministic tie-breaking.
fn grid_argmax(rows: &dyn CostRows, p_min: usize, p_max: usize) -> (f64, usize, usize) {
    let per_row: Vec<(f64, usize, usize)> = (p_min..=p_max)
        .into_par_iter()
        .map_init(Vec::new, |buf, p| {
            rows.fill_row(p, buf);
            let mut best = (f64::NEG_INFINITY, p, 0);
            for (n0, &c) in buf.iter().enumerate() {
                if c > best.0 {
                    best = (c, p, n0);
                }
            }
            best
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, p_min, 0);
    for cand in per_row {
        if cand.0 > best.0 {
            best = cand;
        }
    }
    best
}

/// Known-shape (PPKS) estimator on the native sample grid of `x`.
pub fn ppks(x: &Measurement, pulse: &PulseShape, grid: &GridSpec) -> Result<PeriodEstimate> {
    check_pulse_grid(pulse.len(), x.len(), grid)?;
    if (pulse.ts() - x.ts).abs() > 1e-9 * x.ts {
        return invalid(format!(
            "pulse sampled at {} but measurement at {}",
            pulse.ts(),
            x.ts
        ));
    }
    let cost = KnownShapeCost::new(&x.x, pulse.samples());
    let (best, p, n0) = grid_argmax(&cost, grid.p_min, grid.p_max);
    let (sum, k) = cost.comb(p, n0);
    let amplitude = if k == 0 || cost.energy == 0.0 {
        0.0
    } else {
        sum / (k as f64 * cost.energy)
    };
    Ok(PeriodEstimate {
        method: Method::Ppks,
        p_hat: p,
        t_hat: p as f64 * x.ts,
        n0_hat: n0,
        cost: best,
        nuisance: Nuisance::Amplitude(amplitude),
        psi_hat: None,
        order: pulse.len(),
        skipped: 0,
    })
}

/// Unknown-shape (PPUS) estimator for pulses of `np` samples.
pub fn ppus(x: &Measurement, np: usize, grid: &GridSpec) -> Result<PeriodEstimate> {
    check_pulse_grid(np, x.len(), grid)?;
    let cost = UnknownShapeCost { x: &x.x, np };
    let (best, p, n0) = grid_argmax(&cost, grid.p_min, grid.p_max);
    let pulse = recover_pulse(x, p, n0, np)?;
    Ok(PeriodEstimate {
        method: Method::Ppus,
        p_hat: p,
        t_hat: p as f64 * x.ts,
        n0_hat: n0,
        cost: best,
        nuisance: Nuisance::PulseSamples(pulse),
        psi_hat: None,
        order: np,
        skipped: 0,
    })
}

/// Least-squares pulse estimate for a given `(P, n0)`: the mean of the full
/// period-aligned segments.
pub fn recover_pulse(x: &Measurement, p: usize, n0: usize, np: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if np == 0 || p < np {
        return Err(Error::OutOfRange(format!(
            "pulse length {np} must be in 1..=P ({p})"
        )));
    }
    if n0 >= p || n0 + np > n {
        return Err(Error::OutOfRange(format!(
            "onset {n0} invalid for P = {p}, Np = {np}, N = {n}"
        )));
    }
    let k = full_pulses(n, np, p, n0);
    let mut out = vec![0.0; np];
    for i in 0..k {
        let start = n0 + i * p;
        for (o, v) in out.iter_mut().zip(&x.x[start..start + np]) {
            *o += v;
        }
    }
    let kf = k as f64;
    out.iter_mut().for_each(|v| *v /= kf);
    Ok(out)
}

/// Full `(P, n0)` criterion for inspection; `rows[i][n0]` belongs to `P = p_min + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSurface {
    pub p_min: usize,
    pub rows: Vec<Vec<f64>>,
}

impl CostSurface {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("P,n0,cost\n");
        for (i, row) in self.rows.iter().enumerate() {
            for (n0, c) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", self.p_min + i, n0, c));
            }
        }
        out
    }
}

/// Cost surface of PPKS or PPUS on the native grid of `x`.
pub fn cost_surface(x: &Measurement, model: &PulseModel, grid: &GridSpec) -> Result<CostSurface> {
    check_pulse_grid(model.pulse_len(), x.len(), grid)?;
    let fill = |rows: &dyn CostRows| {
        (grid.p_min..=grid.p_max)
            .map(|p| {
                let mut buf = Vec::new();
                rows.fill_row(p, &mut buf);
                buf
            })
            .collect()
    };
    let rows = match model {
        PulseModel::Known(pulse) => fill(&KnownShapeCost::new(&x.x, pulse.samples())),
        PulseModel::Unknown { np } => fill(&UnknownShapeCost { x: &x.x, np: *np }),
    };
    Ok(CostSurface {
        p_min: grid.p_min,
        rows,
    })
}

/// Lowest achievable mean squared error of a period estimate on a grid of
/// spacing `ts / p_r`.
pub fn quantization_floor(ts: f64, p_r: usize) -> f64 {
    let step = ts / p_r as f64;
    step * step / 12.0
}

/// Resample `x` by `p_r` and run PPKS or PPUS on the finer grid.
///
/// `grid` is given in samples of the original signal and is scaled by `p_r`;
/// the returned `p_hat` and `n0_hat` are in resampled samples and
/// `t_hat = p_hat * ts / p_r`.
pub fn estimate_with_subgrid(
    x: &Measurement,
    model: &PulseModel,
    p_r: usize,
    grid: &GridSpec,
) -> Result<PeriodEstimate> {
    if p_r < 1 {
        return invalid("resampling factor must be at least 1");
    }
    if p_r == 1 {
        return match model {
            PulseModel::Known(p) => ppks(x, p, grid),
            PulseModel::Unknown { np } => ppus(x, *np, grid),
        };
    }
    let fine = Measurement {
        x: resample(&x.x, p_r)?,
        ts: x.ts / p_r as f64,
        sigma2: x.sigma2,
        seed: x.seed,
        truth: x.truth,
    };
    let fine_grid = grid.scaled(p_r);
    match model {
        PulseModel::Known(p) => ppks(&fine, &p.upsampled(p_r)?, &fine_grid),
        PulseModel::Unknown { np } => ppus(&fine, np * p_r, &fine_grid),
    }
}

/// Zero-padded spectrum of a measurement, shared by the multiharmonic
/// estimators and order selection.
pub struct HarmonicSpectrum {
    x: Vec<f64>,
    ts: f64,
    spec: Vec<Complex64>,
    fft_size: usize,
    energy: f64,
}

impl HarmonicSpectrum {
    pub fn new(x: &Measurement, fft_size: usize) -> Result<Self> {
        if fft_size < x.len() {
            return invalid(format!(
                "fft_size {fft_size} is shorter than the signal ({})",
                x.len()
            ));
        }
        let r2c = REAL_PLANNER.with(|p| p.borrow_mut().plan_fft_forward(fft_size));
        let mut buf = vec![0.0; fft_size];
        buf[..x.len()].copy_from_slice(&x.x);
        let mut spec = r2c.make_output_vec();
        r2c.process(&mut buf, &mut spec).expect("fft length");
        Ok(HarmonicSpectrum {
            x: x.x.clone(),
            ts: x.ts,
            spec,
            fft_size,
            energy: x.x.iter().map(|v| v * v).sum(),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Transform value at bin `b` of the zero-padded DFT.
    pub fn bin(&self, b: usize) -> Complex64 {
        self.spec[b]
    }

    fn bin_range(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        let f = self.fft_size as f64;
        let bins: Vec<usize> = match &grid.psi_grid {
            Some(psi) => {
                let mut b: Vec<usize> = psi.iter().map(|v| (v * f).round() as usize).collect();
                b.sort_unstable();
                b.dedup();
                b
            }
            None => {
                let lo = (f / grid.p_max as f64).ceil() as usize;
                let hi = (f / grid.p_min as f64).floor() as usize;
                (lo..=hi).collect()
            }
        };
        if bins.is_empty() || bins[0] == 0 {
            return invalid("frequency grid is empty at this transform size");
        }
        Ok(bins)
    }

    fn check_anls_bounds(&self, bins: &[usize], kh: usize) -> Result<()> {
        let f = self.fft_size as f64;
        let lo = 2.0 / self.x.len() as f64;
        let hi = 0.9 / (2.0 * kh as f64);
        for &b in bins {
            let psi = b as f64 / f;
            if psi < lo || psi > hi {
                return invalid(format!(
                    "psi = {psi} outside [{lo}, {hi}] required by ANLS with Kh = {kh}"
                ));
            }
        }
        Ok(())
    }

    fn harmonic_power(&self, b: usize, kh: usize) -> f64 {
        (1..=kh).map(|k| self.spec[k * b].norm_sqr()).sum()
    }

    /// Harmonic-summation estimate maximizing `sum_k |X(k psi)|^2`.
    pub fn anls(&self, kh: usize, grid: &GridSpec) -> Result<PeriodEstimate> {
        grid.validate()?;
        if kh < 1 {
            return invalid("harmonic count must be at least 1");
        }
        let bins = self.bin_range(grid)?;
        self.check_anls_bounds(&bins, kh)?;
        let mut best = (f64::NEG_INFINITY, bins[0]);
        for &b in &bins {
            let c = self.harmonic_power(b, kh);
            if c > best.0 {
                best = (c, b);
            }
        }
        let (cost, b) = best;
        let psi = b as f64 / self.fft_size as f64;
        let n = self.x.len() as f64;
        let harmonics = (1..=kh)
            .map(|k| {
                let z = self.spec[k * b];
                Harmonic {
                    amplitude: 2.0 * z.norm() / n,
                    phase: z.arg() + std::f64::consts::FRAC_PI_2,
                }
            })
            .collect();
        Ok(self.multiharmonic_estimate(Method::MhusAnls, psi, cost, harmonics, kh, 0))
    }

    fn multiharmonic_estimate(
        &self,
        method: Method,
        psi: f64,
        cost: f64,
        harmonics: Vec<Harmonic>,
        kh: usize,
        skipped: usize,
    ) -> PeriodEstimate {
        let t_hat = self.ts / psi;
        PeriodEstimate {
            method,
            p_hat: (1.0 / psi).round() as usize,
            t_hat,
            n0_hat: 0,
            cost,
            nuisance: Nuisance::Harmonics(harmonics),
            psi_hat: Some(psi),
            order: kh,
            skipped,
        }
    }

    /// Exact multiharmonic least-squares estimate maximizing the projection
    /// energy onto `Kh` cosine/sine pairs.
    ///
    /// On the default bin grid `H'x` is read from the spectrum; an explicit
    /// `psi_grid` is evaluated directly at the given frequencies.
    pub fn mhus_ml(&self, kh: usize, grid: &GridSpec) -> Result<PeriodEstimate> {
        grid.validate()?;
        if kh < 1 {
            return invalid("harmonic count must be at least 1");
        }
        let candidates: Vec<(f64, Option<usize>)> = match &grid.psi_grid {
            Some(psi) => psi.iter().map(|&v| (v, None)).collect(),
            None => self
                .bin_range(grid)?
                .into_iter()
                .map(|b| (b as f64 / self.fft_size as f64, Some(b)))
                .collect(),
        };
        let psi_max = candidates.iter().fold(0.0f64, |m, c| m.max(c.0));
        if kh as f64 * psi_max >= 0.5 {
            return invalid(format!(
                "Kh * psi_max = {} must stay below 0.5",
                kh as f64 * psi_max
            ));
        }
        let mut best: Option<(f64, f64, DVector<f64>)> = None;
        let mut skipped = 0;
        for (psi, bin) in candidates {
            let proj = self.projection_rhs(psi, bin, kh);
            let gram = harmonic_gram(self.x.len(), psi, kh);
            let Some(coef) = solve_spd(&gram, &proj) else {
                skipped += 1;
                continue;
            };
            let c = proj.dot(&coef);
            if best.as_ref().map_or(true, |b| c > b.0) {
                best = Some((c, psi, coef));
            }
        }
        let (cost, psi, coef) = best.ok_or_else(|| {
            Error::InvalidArgument("every grid point had a singular normal matrix".into())
        })?;
        let harmonics = (0..kh)
            .map(|k| {
                let (a, b) = (coef[k], coef[kh + k]);
                Harmonic {
                    amplitude: a.hypot(b),
                    phase: a.atan2(b),
                }
            })
            .collect();
        Ok(self.multiharmonic_estimate(Method::MhusMl, psi, cost, harmonics, kh, skipped))
    }

    /// `H'x`: cosine correlations for harmonics `1..=kh`, then sine correlations.
    fn projection_rhs(&self, psi: f64, bin: Option<usize>, kh: usize) -> DVector<f64> {
        let mut v = DVector::zeros(2 * kh);
        match bin {
            Some(b) => {
                for k in 1..=kh {
                    let z = self.spec[k * b];
                    v[k - 1] = z.re;
                    v[kh + k - 1] = -z.im;
                }
            }
            None => {
                for k in 1..=kh {
                    let w = 2.0 * std::f64::consts::PI * k as f64 * psi;
                    let (mut c, mut s) = (0.0, 0.0);
                    for (n, x) in self.x.iter().enumerate() {
                        let (sn, cn) = (w * n as f64).sin_cos();
                        c += x * cn;
                        s += x * sn;
                    }
                    v[k - 1] = c;
                    v[kh + k - 1] = s;
                }
            }
        }
        v
    }

    /// Order maximizing the penalized likelihood
    /// `N ln(sigma2_hat(Kh)) + penalty * Kh * ln(N)` over `1..=kh_max`.
    pub fn select_model_order(
        &self,
        kh_max: usize,
        grid: &GridSpec,
        penalty: f64,
    ) -> Result<OrderSelection> {
        grid.validate()?;
        let kh_max = kh_max.max(1);
        let bins = self.bin_range(grid)?;
        let psi_max = *bins.last().unwrap() as f64 / self.fft_size as f64;
        let cap = ((0.9 / (2.0 * psi_max)).floor() as usize).max(1);
        let kh_max = kh_max.min(cap);
        let n = self.x.len() as f64;
        let floor = 1e-12 * self.energy / n + f64::MIN_POSITIVE;
        let mut cum = vec![0.0; bins.len()];
        let mut scores = Vec::with_capacity(kh_max);
        for kh in 1..=kh_max {
            let mut r = 0.0f64;
            for (acc, &b) in cum.iter_mut().zip(&bins) {
                *acc += self.spec[kh * b].norm_sqr();
                r = r.max(*acc);
            }
            let sigma2 = ((self.energy - 2.0 * r / n) / n).max(floor);
            scores.push(n * sigma2.ln() + penalty * kh as f64 * n.ln());
        }
        let mut chosen = 1;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[chosen - 1] {
                chosen = i + 1;
            }
        }
        Ok(OrderSelection { chosen, scores })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub chosen: usize,
    /// Criterion value for `Kh = 1, 2, ...`.
    pub scores: Vec<f64>,
}

/// `sum_{n<N} exp(j theta n)` as `(re, im)`.
fn geometric_sum(n: usize, theta: f64) -> (f64, f64) {
    let half = theta / 2.0;
    let den = half.sin();
    if den.abs() < 1e-12 {
        return (n as f64, 0.0);
    }
    let mag = (n as f64 * half).sin() / den;
    let ph = half * (n as f64 - 1.0);
    (mag * ph.cos(), mag * ph.sin())
}

/// `H'H` for `Kh` harmonics at `psi`, from closed-form trigonometric sums.
fn harmonic_gram(n: usize, psi: f64, kh: usize) -> DMatrix<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    // c[m], s[m] = sum_n cos/sin(2 pi m psi n) for m = 0..=2 kh
    let (c, s): (Vec<f64>, Vec<f64>) = (0..=2 * kh)
        .map(|m| geometric_sum(n, two_pi * m as f64 * psi))
        .unzip();
    let cdiff = |i: usize, k: usize| c[i.abs_diff(k)];
    let sdiff = |i: usize, k: usize| {
        if i >= k {
            s[i - k]
        } else {
            -s[k - i]
        }
    };
    let mut g = DMatrix::zeros(2 * kh, 2 * kh);
    for i in 1..=kh {
        for k in 1..=kh {
            g[(i - 1, k - 1)] = 0.5 * (cdiff(i, k) + c[i + k]);
            g[(kh + i - 1, kh + k - 1)] = 0.5 * (cdiff(i, k) - c[i + k]);
            let cs = 0.5 * (s[i + k] - sdiff(i, k));
            g[(i - 1, kh + k - 1)] = cs;
            g[(kh + k - 1, i - 1)] = cs;
        }
    }
    g
}

fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = gram.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo > 0.0) || (hi / lo).powi(2) > ML_CONDITION_LIMIT {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Multiharmonic least-squares (MHUS-ML) estimate with `kh` harmonics.
pub fn mhus_ml(x: &Measurement, kh: usize, grid: &GridSpec) -> Result<PeriodEstimate> {
    grid.validate()?;
    HarmonicSpectrum::new(x, grid.fft_size.max(x.len()))?.mhus_ml(kh, grid)
}

/// Harmonic-summation (MHUS-ANLS) estimate with `kh` harmonics.
pub fn anls(x: &Measurement, kh: usize, grid: &GridSpec) -> Result<PeriodEstimate> {
    grid.validate()?;
    HarmonicSpectrum::new(x, grid.fft_size)?.anls(kh, grid)
}

/// Harmonic count chosen by the penalized criterion with the default penalty.
pub fn select_model_order(x: &Measurement, kh_max: usize, grid: &GridSpec) -> Result<usize> {
    grid.validate()?;
    Ok(HarmonicSpectrum::new(x, grid.fft_size)?
        .select_model_order(kh_max, grid, DEFAULT_ORDER_PENALTY)?
        .chosen)
}
