//! Monte Carlo study of estimator MSE versus SNR.
//!
//! Each trial draws a period `T ~ U[t_low, t_high)` and a delay
//! `tau0 ~ U[0, T)`, synthesizes the clean train once and then, for every
//! SNR, adds independent noise and runs every configured estimator. Seeds are
//! derived from `(master_seed, trial, snr index)` so trials can run in any
//! order; the reduction walks trials by index, which keeps the output
//! bit-identical across runs.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    crlb_multiharmonic, crlb_period_known_shape, harmonic_amplitudes, pulse_count, pulse_stats,
};
use crate::error::{invalid, Result};
use crate::estimators::{ppks, ppus, GridSpec, HarmonicSpectrum, Method, DEFAULT_ORDER_PENALTY};
use crate::signal_model::{
    add_noise, make_gaussian_pulse, resample, synthesize, Measurement, PulseShape,
    PulseTrainParams, SnrDefinition,
};

/// Salt distinguishing the parameter-draw stream from the noise streams.
const DRAW_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub t_low: f64,
    pub t_high: f64,
    pub tp: f64,
    pub ts: f64,
    pub amplitude: f64,
    pub p_r: usize,
    pub snr_db_list: Vec<f64>,
    pub snr_definition: SnrDefinition,
    pub trials: usize,
    pub master_seed: u64,
    pub estimators: Vec<Method>,
    pub kh_max: usize,
    pub order_penalty: f64,
    pub fft_size: usize,
    /// Search bounds in original samples; default to the period prior.
    pub p_search_min: Option<usize>,
    pub p_search_max: Option<usize>,
    /// Round drawn `T` and `tau0` to the sample grid before synthesis.
    pub snap_to_grid: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 4096,
            t_low: 475.0,
            t_high: 525.0,
            tp: 20.0,
            ts: 1.0,
            amplitude: 1.0,
            p_r: 10,
            snr_db_list: (0..=15).map(|i| -30.0 + 2.0 * i as f64).collect(),
            snr_definition: SnrDefinition::MeanPower,
            trials: 200,
            master_seed: 20240917,
            estimators: Method::ALL.to_vec(),
            kh_max: 80,
            order_penalty: DEFAULT_ORDER_PENALTY,
            fft_size: 1 << 21,
            p_search_min: None,
            p_search_max: None,
            snap_to_grid: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("N must be at least 2");
        }
        if !(self.ts > 0.0) {
            return invalid("ts must be positive");
        }
        if !(self.t_low < self.t_high) || !(self.t_low > 0.0) {
            return invalid(format!(
                "period prior must satisfy 0 < t_low < t_high (got {}..{})",
                self.t_low, self.t_high
            ));
        }
        if !(self.tp < self.t_low) {
            return invalid("pulse duration must be shorter than t_low");
        }
        if self.trials < 1 {
            return invalid("at least one trial is required");
        }
        if self.p_r < 1 {
            return invalid("resampling factor must be at least 1");
        }
        if self.snr_db_list.is_empty() {
            return invalid("SNR list is empty");
        }
        if self.estimators.is_empty() {
            return invalid("no estimators selected");
        }
        self.grid()?;
        Ok(())
    }

    pub fn pulse(&self) -> Result<PulseShape> {
        make_gaussian_pulse(self.tp, self.ts)
    }

    /// Search grid in original samples.
    pub fn grid(&self) -> Result<GridSpec> {
        let lo = self
            .p_search_min
            .unwrap_or((self.t_low / self.ts).floor() as usize);
        let hi = self
            .p_search_max
            .unwrap_or((self.t_high / self.ts).ceil() as usize);
        Ok(GridSpec::new(lo, hi)?.with_fft_size(self.fft_size))
    }

    /// `(T, tau0)` for trial `index`.
    pub fn draw(&self, index: usize) -> PulseTrainParams {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.master_seed, index as u64, DRAW_STREAM));
        let period = rng.gen_range(self.t_low..self.t_high);
        let tau0 = rng.gen_range(0.0..period);
        let params = PulseTrainParams::new(period, tau0, self.amplitude);
        if self.snap_to_grid {
            params.snapped(self.ts)
        } else {
            params
        }
    }

    pub fn noise_seed(&self, trial: usize, snr_index: usize) -> u64 {
        stream_seed(self.master_seed, trial as u64, snr_index as u64)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for the stream `(master, a, b)`.
pub fn stream_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ a) ^ b.rotate_left(32))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseCell {
    /// Mean squared period error over trials where the estimator returned.
    pub mse: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    /// `cells[snr_index][method_index]`
    pub cells: Vec<Vec<MseCell>>,
    pub crlb_model1: Vec<f64>,
    pub crlb_mhus: Vec<f64>,
    pub snr_definition: SnrDefinition,
    pub completed_trials: usize,
}

pub const RESULTS_HEADER: &str = "snr_db,method,mse,crlb_model1,crlb_mhus,trials,failures";

impl MseCurve {
    pub fn cell(&self, snr_index: usize, method: Method) -> Option<&MseCell> {
        let m = self.methods.iter().position(|x| *x == method)?;
        self.cells.get(snr_index)?.get(m)
    }

    /// `(snr_db, mse)` for one method, in list order.
    pub fn series(&self, method: Method) -> Vec<(f64, f64)> {
        (0..self.snr_db.len())
            .filter_map(|i| self.cell(i, method).map(|c| (self.snr_db[i], c.mse)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for (i, snr) in self.snr_db.iter().enumerate() {
            for (j, m) in self.methods.iter().enumerate() {
                let c = &self.cells[i][j];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    snr, m, c.mse, self.crlb_model1[i], self.crlb_mhus[i], c.trials, c.failures
                ));
            }
        }
        out
    }
}

/// Bounds at unit noise variance for one drawn trial.
#[derive(Debug, Clone, Copy)]
struct UnitBounds {
    model1: f64,
    multiharmonic: f64,
}

fn unit_bounds(config: &ExperimentConfig, pulse: &PulseShape, params: &PulseTrainParams) -> UnitBounds {
    let stats = pulse_stats(pulse);
    let k = pulse_count(config.n, config.ts, params.period);
    let model1 = crlb_period_known_shape(
        &stats,
        k,
        params.amplitude,
        1.0,
        config.n,
        config.ts,
        params.period,
    )
    .map(|b| b.exact)
    .unwrap_or(f64::NAN);
    let amps = harmonic_amplitudes(pulse, params.amplitude, params.period);
    let multiharmonic = crlb_multiharmonic(&amps, config.n, 1.0, params.period, config.ts)
        .map(|b| b.var_t)
        .unwrap_or(f64::NAN);
    UnitBounds {
        model1,
        multiharmonic,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedBounds {
    /// Known-shape period bound (exact `K` form).
    pub model1: f64,
    /// Multiharmonic period bound with amplitudes from the pulse spectrum.
    pub multiharmonic: f64,
}

/// Period bounds averaged over the same `(T, tau0)` draws used by [`run`].
pub fn averaged_crlb(config: &ExperimentConfig, snr_db: f64) -> Result<AveragedBounds> {
    config.validate()?;
    let pulse = config.pulse()?;
    let draws: Vec<PulseTrainParams> = (0..config.trials).map(|i| config.draw(i)).collect();
    let units: Vec<UnitBounds> = draws.iter().map(|p| unit_bounds(config, &pulse, p)).collect();
    Ok(average_bounds(config, &pulse, &draws, &units, snr_db))
}

fn average_bounds(
    config: &ExperimentConfig,
    pulse: &PulseShape,
    draws: &[PulseTrainParams],
    units: &[UnitBounds],
    snr_db: f64,
) -> AveragedBounds {
    let (mut m1, mut mh) = (0.0, 0.0);
    for (p, u) in draws.iter().zip(units) {
        let sigma2 = config
            .snr_definition
            .sigma2(pulse, p.amplitude, p.period, snr_db);
        m1 += u.model1 * sigma2;
        mh += u.multiharmonic * sigma2;
    }
    let count = draws.len() as f64;
    AveragedBounds {
        model1: m1 / count,
        multiharmonic: mh / count,
    }
}

/// Squared errors of one trial, `None` where the estimator failed.
type TrialErrors = Vec<Vec<Option<f64>>>;

struct TrialRunner<'a> {
    config: &'a ExperimentConfig,
    pulse: PulseShape,
    fine_pulse: PulseShape,
    grid: GridSpec,
    fine_grid: GridSpec,
}

impl TrialRunner<'_> {
    fn run_trial(&self, index: usize) -> Result<TrialErrors> {
        let c = self.config;
        let params = c.draw(index);
        let clean = synthesize(&params, &self.pulse, c.n, c.ts)?;
        let mut out = Vec::with_capacity(c.snr_db_list.len());
        for (s, &snr) in c.snr_db_list.iter().enumerate() {
            let sigma2 = c
                .snr_definition
                .sigma2(&self.pulse, params.amplitude, params.period, snr);
            let x = add_noise(&clean, c.ts, sigma2, c.noise_seed(index, s))?.with_truth(params);
            out.push(self.estimate_all(&x, params.period));
        }
        Ok(out)
    }

    fn estimate_all(&self, x: &Measurement, period: f64) -> Vec<Option<f64>> {
        let c = self.config;
        let needs_fine = c
            .estimators
            .iter()
            .any(|m| matches!(m, Method::Ppks | Method::Ppus));
        let fine = if needs_fine {
            resample(&x.x, c.p_r).ok().map(|y| Measurement {
                x: y,
                ts: c.ts / c.p_r as f64,
                sigma2: x.sigma2,
                seed: x.seed,
                truth: x.truth,
            })
        } else {
            None
        };
        let needs_spectrum = c
            .estimators
            .iter()
            .any(|m| matches!(m, Method::MhusMl | Method::MhusAnls));
        let harmonic = if needs_spectrum {
            HarmonicSpectrum::new(x, c.fft_size).ok().and_then(|spec| {
                let order = spec
                    .select_model_order(c.kh_max, &self.grid, c.order_penalty)
                    .ok()?;
                Some((spec, order.chosen))
            })
        } else {
            None
        };
        c.estimators
            .iter()
            .map(|m| {
                let est = match m {
                    Method::Ppks => fine
                        .as_ref()
                        .and_then(|f| ppks(f, &self.fine_pulse, &self.fine_grid).ok()),
                    Method::Ppus => fine
                        .as_ref()
                        .and_then(|f| ppus(f, self.fine_pulse.len(), &self.fine_grid).ok()),
                    Method::MhusAnls => harmonic
                        .as_ref()
                        .and_then(|(s, kh)| s.anls(*kh, &self.grid).ok()),
                    Method::MhusMl => harmonic
                        .as_ref()
                        .and_then(|(s, kh)| s.mhus_ml(*kh, &self.grid).ok()),
                };
                est.map(|e| (e.t_hat - period).powi(2))
            })
            .collect()
    }
}

/// Run the full study.
pub fn run(config: &ExperimentConfig) -> Result<MseCurve> {
    run_with_cancel(config, &AtomicBool::new(false))
}

/// Like [`run`], but trials not yet started when `cancel` is raised are
/// skipped; `completed_trials` then reports how many contributed.
pub fn run_with_cancel(config: &ExperimentConfig, cancel: &AtomicBool) -> Result<MseCurve> {
    config.validate()?;
    let pulse = config.pulse()?;
    let grid = config.grid()?;
    let runner = TrialRunner {
        config,
        fine_pulse: pulse.upsampled(config.p_r)?,
        fine_grid: grid.scaled(config.p_r),
        pulse,
        grid,
    };

    let outcomes: Vec<Option<TrialErrors>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            if cancel.load(Ordering::Relaxed) {
                return Ok(None);
            }
            runner.run_trial(i).map(Some)
        })
        .collect::<Result<_>>()?;

    let n_snr = config.snr_db_list.len();
    let n_methods = config.estimators.len();
    let mut sums = vec![vec![0.0; n_methods]; n_snr];
    let mut ok = vec![vec![0usize; n_methods]; n_snr];
    let mut failed = vec![vec![0usize; n_methods]; n_snr];
    let mut draws = Vec::new();
    let mut units = Vec::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        let Some(errors) = outcome else { continue };
        let params = config.draw(i);
        units.push(unit_bounds(config, &runner.pulse, &params));
        draws.push(params);
        for (s, row) in errors.iter().enumerate() {
            for (m, e) in row.iter().enumerate() {
                match e {
                    Some(v) => {
                        sums[s][m] += v;
                        ok[s][m] += 1;
                    }
                    None => failed[s][m] += 1,
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(n_snr);
    let mut crlb_model1 = Vec::with_capacity(n_snr);
    let mut crlb_mhus = Vec::with_capacity(n_snr);
    for (s, &snr) in config.snr_db_list.iter().enumerate() {
        cells.push(
            (0..n_methods)
                .map(|m| MseCell {
                    mse: if ok[s][m] > 0 {
                        sums[s][m] / ok[s][m] as f64
                    } else {
                        f64::NAN
                    },
                    trials: ok[s][m] + failed[s][m],
                    failures: failed[s][m],
                })
                .collect(),
        );
        let avg = if draws.is_empty() {
            AveragedBounds {
                model1: f64::NAN,
                multiharmonic: f64::NAN,
            }
        } else {
            average_bounds(config, &runner.pulse, &draws, &units, snr)
        };
        crlb_model1.push(avg.model1);
        crlb_mhus.push(avg.multiharmonic);
    }

    Ok(MseCurve {
        snr_db: config.snr_db_list.clone(),
        methods: config.estimators.clone(),
        cells,
        crlb_model1,
        crlb_mhus,
        snr_definition: config.snr_definition,
        completed_trials: draws.len(),
    })
}

/// Lowest SNR from which on the MSE stays within `factor` times the averaged
/// known-shape bound at every higher SNR; `None` if the highest SNR already
/// fails or fewer than three SNR points exist.
pub fn detect_threshold(curve: &MseCurve, method: Method, factor: f64) -> Option<f64> {
    let m = curve.methods.iter().position(|x| *x == method)?;
    if curve.snr_db.len() < 3 {
        return None;
    }
    let mut order: Vec<usize> = (0..curve.snr_db.len()).collect();
    order.sort_by(|a, b| curve.snr_db[*b].total_cmp(&curve.snr_db[*a]));
    let mut threshold = None;
    for i in order {
        let mse = curve.cells[i][m].mse;
        let bound = curve.crlb_model1[i];
        if mse.is_finite() && mse <= factor * bound {
            threshold = Some(curve.snr_db[i]);
        } else {
            break;
        }
    }
    threshold
}
