//! Fisher information and Cramér-Rao bounds for periodic pulse trains.
//!
//! Two families of matrices are provided. The summation forms walk every
//! sample of the observation window and accumulate outer products of the
//! signal's parameter derivatives. The closed forms assume `K` full pulses on
//! an integer sample grid and are built from a handful of pulse statistics.
//! On integer grids with exactly `K` full pulses the two agree to roundoff,
//! which the tests use as a cross-check.
//!
//! For the unknown-shape model the closed-form matrix is singular: shifting
//! the delay can be absorbed by a compensating change of the pulse samples.
//! [`singularity_diagnostic`] exposes the null direction and
//! [`regularized_covariance`] inverts the matrix after a ridge shift.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::signal_model::{overlapping_pulses, PulseShape, PulseTrainParams};

/// Matrices whose eigenvalue ratio exceeds this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Default ridge weight relative to `trace / dim`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-8;

/// Symmetric parameter-information matrix with named rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub sigma2: f64,
}

impl FisherInfo {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn entry(&self, row: &str, col: &str) -> Option<f64> {
        Some(self.matrix[(self.index_of(row)?, self.index_of(col)?)])
    }

    /// `||A - B||_F / ||B||_F` with `self` as `A`.
    pub fn relative_frobenius_distance(&self, reference: &FisherInfo) -> f64 {
        (&self.matrix - &reference.matrix).norm() / reference.matrix.norm()
    }

    /// Largest absolute asymmetry relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Ratio of the largest to the smallest eigenvalue; infinite when the
    /// smallest is not positive.
    pub fn condition_estimate(&self) -> f64 {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Matrix as CSV with a header row and a label column.
    pub fn to_csv_grid(&self) -> String {
        let mut out = String::from("param");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (r, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for c in 0..self.dim() {
                out.push_str(&format!(",{}", self.matrix[(r, c)]));
            }
            out.push('\n');
        }
        out
    }
}

fn known_shape_labels() -> Vec<String> {
    vec!["T".into(), "tau0".into(), "A".into()]
}

fn unknown_shape_labels(np: usize) -> Vec<String> {
    let mut l = vec!["T".to_string(), "tau0".to_string()];
    l.extend((0..np).map(|a| format!("sp{a}")));
    l
}

/// Energy statistics of a sampled pulse and its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseStats {
    /// `sum s(n ts)^2`
    pub energy: f64,
    /// `sum s'(n ts)^2`
    pub deriv_energy: f64,
    /// `sum s'(n ts) s(n ts)`
    pub cross: f64,
    /// Mean squared bandwidth `deriv_energy / energy`.
    pub msb: f64,
}

pub fn pulse_stats(pulse: &PulseShape) -> PulseStats {
    let s = pulse.samples();
    let d = pulse.deriv_samples();
    let energy: f64 = s.iter().map(|v| v * v).sum();
    let deriv_energy: f64 = d.iter().map(|v| v * v).sum();
    let cross: f64 = s.iter().zip(d).map(|(a, b)| a * b).sum();
    PulseStats {
        energy,
        deriv_energy,
        cross,
        msb: deriv_energy / energy,
    }
}

/// Number of pulses in the window, `round(N ts / T)` with ties away from zero.
pub fn pulse_count(n: usize, ts: f64, period: f64) -> usize {
    (n as f64 * ts / period).round() as usize
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return invalid(format!("noise variance must be positive, got {sigma2}"));
    }
    Ok(())
}

/// Summation form of the known-shape information matrix over `[T, tau0, A]`.
pub fn fim_known_shape(
    params: &PulseTrainParams,
    pulse: &PulseShape,
    n: usize,
    ts: f64,
    sigma2: f64,
) -> Result<FisherInfo> {
    check_sigma2(sigma2)?;
    params.validate(pulse.duration())?;
    if n == 0 {
        return invalid("window must contain at least one sample");
    }
    let a = params.amplitude;
    let mut d_period = vec![0.0; n];
    let mut d_delay = vec![0.0; n];
    let mut d_amp = vec![0.0; n];
    let t_end = (n - 1) as f64 * ts;
    let (k_lo, k_hi) = overlapping_pulses(params, pulse.duration(), t_end);
    for k in k_lo..=k_hi {
        let onset = k as f64 * params.period + params.tau0;
        for i in support_indices(onset, pulse.duration(), ts, n) {
            let t = i as f64 * ts - onset;
            let ds = pulse.deriv_at(t);
            d_period[i] -= a * k as f64 * ds;
            d_delay[i] -= a * ds;
            d_amp[i] += pulse.value_at(t);
        }
    }
    let mut m = DMatrix::zeros(3, 3);
    for i in 0..n {
        let g = [d_period[i], d_delay[i], d_amp[i]];
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] += g[r] * g[c];
            }
        }
    }
    Ok(FisherInfo {
        matrix: m / sigma2,
        labels: known_shape_labels(),
        sigma2,
    })
}

fn support_indices(onset: f64, width: f64, ts: f64, n: usize) -> std::ops::Range<usize> {
    let first = (onset / ts).ceil().max(0.0);
    let last = ((onset + width) / ts).floor().min((n - 1) as f64);
    if last < first {
        return 0..0;
    }
    first as usize..last as usize + 1
}

/// Summation form of the unknown-shape information matrix over
/// `[T, tau0, sp0, ..., sp{Np-1}]`, with pulse-sample sensitivities taken from
/// a rectangular-window model of the pulse.
pub fn fim_unknown_shape(
    params: &PulseTrainParams,
    pulse: &PulseShape,
    n: usize,
    ts: f64,
    sigma2: f64,
) -> Result<FisherInfo> {
    check_sigma2(sigma2)?;
    params.validate(pulse.duration())?;
    if n == 0 {
        return invalid("window must contain at least one sample");
    }
    let np = pulse.len();
    let dim = np + 2;
    let width = pulse.duration().max(np as f64 * ts);
    let mut d_period = vec![0.0; n];
    let mut d_delay = vec![0.0; n];
    let mut rect: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let t_end = (n - 1) as f64 * ts;
    let (k_lo, k_hi) = overlapping_pulses(params, width, t_end);
    for k in k_lo..=k_hi {
        let onset = k as f64 * params.period + params.tau0;
        for i in support_indices(onset, width, ts, n) {
            let t = i as f64 * ts - onset;
            let ds = pulse.deriv_at(t);
            d_period[i] -= k as f64 * ds;
            d_delay[i] -= ds;
            let u = (t / ts).floor();
            if u >= 0.0 && (u as usize) < np {
                let a = u as usize;
                match rect[i].iter_mut().find(|(idx, _)| *idx == a) {
                    Some(entry) => entry.1 += 1.0,
                    None => rect[i].push((a, 1.0)),
                }
            }
        }
    }
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let (gt, gd) = (d_period[i], d_delay[i]);
        m[(0, 0)] += gt * gt;
        m[(0, 1)] += gt * gd;
        m[(1, 1)] += gd * gd;
        for &(a, ca) in &rect[i] {
            m[(0, 2 + a)] += gt * ca;
            m[(1, 2 + a)] += gd * ca;
            for &(b, cb) in &rect[i] {
                m[(2 + a, 2 + b)] += ca * cb;
            }
        }
    }
    m[(1, 0)] = m[(0, 1)];
    for a in 0..np {
        m[(2 + a, 0)] = m[(0, 2 + a)];
        m[(2 + a, 1)] = m[(1, 2 + a)];
    }
    Ok(FisherInfo {
        matrix: m / sigma2,
        labels: unknown_shape_labels(np),
        sigma2,
    })
}

fn k_polynomials(k: usize) -> (f64, f64, f64) {
    let k = k as f64;
    let cubic = (2.0 * k * k * k - 3.0 * k * k + k) / 6.0;
    let quadratic = (k * k - k) / 2.0;
    (cubic, quadratic, k)
}

/// Closed-form known-shape information matrix for `k` full pulses on an integer grid.
pub fn fim_known_shape_closed(
    stats: &PulseStats,
    k: usize,
    amplitude: f64,
    sigma2: f64,
) -> Result<FisherInfo> {
    if k < 1 {
        return invalid("closed-form information needs at least one pulse");
    }
    check_sigma2(sigma2)?;
    let (cubic, quad, lin) = k_polynomials(k);
    let a = amplitude;
    let (e, ed, sd) = (stats.energy, stats.deriv_energy, stats.cross);
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(3, 3, &[
        a * a * cubic * ed, a * a * quad * ed, -a * quad * sd,
        a * a * quad * ed,  a * a * lin * ed,  -a * lin * sd,
        -a * quad * sd,     -a * lin * sd,     lin * e,
    ]);
    Ok(FisherInfo {
        matrix: m / sigma2,
        labels: known_shape_labels(),
        sigma2,
    })
}

/// Closed-form unknown-shape information matrix for `k` full pulses on an integer grid.
pub fn fim_unknown_shape_closed(pulse: &PulseShape, k: usize, sigma2: f64) -> Result<FisherInfo> {
    if k < 1 {
        return invalid("closed-form information needs at least one pulse");
    }
    check_sigma2(sigma2)?;
    let np = pulse.len();
    let d = pulse.deriv_samples();
    let ed: f64 = d.iter().map(|v| v * v).sum();
    let (cubic, quad, lin) = k_polynomials(k);
    let mut m = DMatrix::zeros(np + 2, np + 2);
    m[(0, 0)] = cubic * ed;
    m[(0, 1)] = quad * ed;
    m[(1, 0)] = quad * ed;
    m[(1, 1)] = lin * ed;
    for (a, &da) in d.iter().enumerate() {
        m[(0, 2 + a)] = -quad * da;
        m[(2 + a, 0)] = -quad * da;
        m[(1, 2 + a)] = -lin * da;
        m[(2 + a, 1)] = -lin * da;
        m[(2 + a, 2 + a)] = lin;
    }
    Ok(FisherInfo {
        matrix: m / sigma2,
        labels: unknown_shape_labels(np),
        sigma2,
    })
}

/// Period variance bound for the known-shape model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodBound {
    /// `12 sigma2 / ((K^3 - K) A^2 E_d)`
    pub exact: f64,
    /// `12 T^3 sigma2 / (N^3 ts^3 A^2 E msb)`
    pub approx: f64,
}

pub fn crlb_period_known_shape(
    stats: &PulseStats,
    k: usize,
    amplitude: f64,
    sigma2: f64,
    n: usize,
    ts: f64,
    period: f64,
) -> Result<PeriodBound> {
    if k < 2 {
        return invalid(format!("period bound needs K >= 2 pulses (K < 2, got K = {k})"));
    }
    let kf = k as f64;
    let a2 = amplitude * amplitude;
    let exact = 12.0 * sigma2 / ((kf * kf * kf - kf) * a2 * stats.deriv_energy);
    let nts = n as f64 * ts;
    let approx =
        12.0 * period.powi(3) * sigma2 / (nts.powi(3) * a2 * stats.energy * stats.msb);
    Ok(PeriodBound { exact, approx })
}

/// Variance bounds for the normalized fundamental frequency and the period
/// under the multiharmonic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiharmonicBound {
    pub var_psi: f64,
    pub var_t: f64,
}

pub fn crlb_multiharmonic(
    amplitudes: &[f64],
    n: usize,
    sigma2: f64,
    period: f64,
    ts: f64,
) -> Result<MultiharmonicBound> {
    if amplitudes.is_empty() {
        return invalid("at least one harmonic amplitude is required");
    }
    if !amplitudes.iter().any(|a| *a > 0.0) {
        return invalid("at least one harmonic amplitude must be positive");
    }
    if n < 2 {
        return invalid("multiharmonic bound needs N >= 2");
    }
    let weight: f64 = amplitudes
        .iter()
        .enumerate()
        .map(|(i, a)| ((i + 1) as f64).powi(2) * a * a)
        .sum();
    let nf = n as f64;
    let pi2 = std::f64::consts::PI.powi(2);
    let core = nf * (nf * nf - 1.0) * pi2 * weight;
    Ok(MultiharmonicBound {
        var_psi: 6.0 * sigma2 / core,
        var_t: 6.0 * sigma2 * period.powi(4) / (core * ts * ts),
    })
}

/// Real sinusoid amplitudes of the Fourier series of a pulse train with the
/// given period, for harmonics `1..=floor(T / (2 ts))`.
pub fn harmonic_amplitudes(pulse: &PulseShape, amplitude: f64, period: f64) -> Vec<f64> {
    let ts = pulse.ts();
    let count = (period / (2.0 * ts)).floor() as usize;
    let s = pulse.samples();
    (1..=count)
        .map(|k| {
            let w = 2.0 * std::f64::consts::PI * k as f64 * ts / period;
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in s.iter().enumerate() {
                let ph = w * n as f64;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            2.0 * amplitude.abs() * ts * (re * re + im * im).sqrt() / period
        })
        .collect()
}

/// Default ridge weight `1e-8 * trace / dim`.
pub fn default_ridge(info: &FisherInfo) -> f64 {
    DEFAULT_RIDGE_SCALE * info.matrix.trace() / info.dim() as f64
}

/// Inverse of `M + lambda I`; `None` selects [`default_ridge`].
///
/// With `lambda == 0` the matrix must be invertible with condition estimate
/// below [`SINGULAR_CONDITION`].
pub fn regularized_covariance(info: &FisherInfo, lambda: Option<f64>) -> Result<DMatrix<f64>> {
    let lambda = lambda.unwrap_or_else(|| default_ridge(info));
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid(format!("ridge weight must be non-negative, got {lambda}"));
    }
    if lambda == 0.0 {
        let cond = info.condition_estimate();
        if !(cond <= SINGULAR_CONDITION) {
            return Err(Error::SingularMatrix(format!(
                "condition estimate {cond:e} exceeds {SINGULAR_CONDITION:e}; use a positive ridge"
            )));
        }
    }
    let dim = info.dim();
    let shifted = &info.matrix + DMatrix::identity(dim, dim) * lambda;
    if let Some(chol) = shifted.clone().cholesky() {
        return Ok(chol.inverse());
    }
    shifted
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("matrix inversion failed".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityDiagnostic {
    pub min_eig: f64,
    pub max_eig: f64,
    /// `||M u|| / (||M|| ||u||)` for `u = [0, 1, s'(0), ..., s'((Np-1) ts)]`.
    pub null_residual: f64,
}

/// Delay-versus-shape null direction of the unknown-shape information matrix.
pub fn shape_null_vector(pulse: &PulseShape) -> DVector<f64> {
    let mut u = DVector::zeros(pulse.len() + 2);
    u[1] = 1.0;
    for (a, d) in pulse.deriv_samples().iter().enumerate() {
        u[2 + a] = *d;
    }
    u
}

pub fn singularity_diagnostic(
    info: &FisherInfo,
    pulse: &PulseShape,
) -> Result<SingularityDiagnostic> {
    if info.dim() != pulse.len() + 2 {
        return invalid(format!(
            "matrix has dimension {} but the pulse implies {}",
            info.dim(),
            pulse.len() + 2
        ));
    }
    let ev = info.eigenvalues();
    let u = shape_null_vector(pulse);
    let mu = &info.matrix * &u;
    Ok(SingularityDiagnostic {
        min_eig: ev[0],
        max_eig: ev[ev.len() - 1],
        null_residual: mu.norm() / (info.matrix.norm() * u.norm()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::make_gaussian_pulse;

    fn gauss() -> PulseShape {
        make_gaussian_pulse(20.0, 1.0).unwrap()
    }

    fn brute_deriv_energy() -> f64 {
        let sigma = 20.0f64 / 6.0;
        (0..20)
            .map(|n| {
                let d = n as f64 - 10.0;
                let v = -(d / (sigma * sigma)) * (-d * d / (2.0 * sigma * sigma)).exp();
                v * v
            })
            .sum()
    }

    #[test]
    fn stats_of_gaussian() {
        let st = pulse_stats(&gauss());
        assert!((st.energy - 5.908).abs() < 1e-3);
        assert!((st.deriv_energy - brute_deriv_energy()).abs() < 1e-12);
        assert!((st.msb - st.deriv_energy / st.energy).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pulse_has_no_cross_term() {
        let p = PulseShape::tabulated(vec![0.0, 1.0, 3.0, 4.0, 3.0, 1.0, 0.0], 1.0).unwrap();
        let st = pulse_stats(&p);
        assert!(st.cross.abs() <= 1e-6 * st.deriv_energy * p.ts());
    }

    #[test]
    fn stats_scale_quadratically() {
        let p = PulseShape::tabulated(vec![0.2, 1.0, 0.7, 0.1], 0.5).unwrap();
        let (a, b) = (pulse_stats(&p), pulse_stats(&p.scaled(2.0)));
        assert!((b.energy - 4.0 * a.energy).abs() < 1e-12);
        assert!((b.deriv_energy - 4.0 * a.deriv_energy).abs() < 1e-9);
        assert!((b.cross - 4.0 * a.cross).abs() < 1e-9);
        assert!((b.msb - a.msb).abs() < 1e-9 * a.msb);
    }

    #[test]
    fn pulse_count_rounds_half_away_from_zero() {
        assert_eq!(pulse_count(4096, 1.0, 512.0), 8);
        assert_eq!(pulse_count(4096, 1.0, 475.0), 9);
        assert_eq!(pulse_count(4096, 1.0, 525.0), 8);
        assert_eq!(pulse_count(10, 1.0, 4.0), 3);
        assert_eq!(pulse_count(6, 1.0, 4.0), 2);
    }

    #[test]
    fn closed_form_period_entry_vanishes_for_single_pulse() {
        let st = pulse_stats(&gauss());
        let m = fim_known_shape_closed(&st, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.entry("T", "T").unwrap(), 0.0);
    }

    #[test]
    fn closed_form_period_entry_for_eight_pulses() {
        let st = pulse_stats(&gauss());
        let m = fim_known_shape_closed(&st, 8, 1.0, 1.0).unwrap();
        let want = 140.0 * brute_deriv_energy();
        assert!((m.entry("T", "T").unwrap() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn closed_form_cross_terms_vanish_for_symmetric_pulse() {
        let p = PulseShape::tabulated(vec![0.0, 1.0, 3.0, 4.0, 3.0, 1.0, 0.0], 1.0).unwrap();
        let m = fim_known_shape_closed(&pulse_stats(&p), 5, 1.0, 1.0).unwrap();
        assert!(m.entry("T", "A").unwrap().abs() < 1e-12);
        assert!(m.entry("tau0", "A").unwrap().abs() < 1e-12);
    }

    #[test]
    fn numeric_known_shape_amplitude_scaling() {
        let p = gauss();
        let f1 = fim_known_shape(&PulseTrainParams::new(97.3, 12.6, 1.0), &p, 600, 1.0, 1.0).unwrap();
        let f2 = fim_known_shape(&PulseTrainParams::new(97.3, 12.6, 2.0), &p, 600, 1.0, 1.0).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        for (r, c, factor) in [
            ("T", "T", 4.0),
            ("T", "tau0", 4.0),
            ("tau0", "tau0", 4.0),
            ("T", "A", 2.0),
            ("tau0", "A", 2.0),
            ("A", "A", 1.0),
        ] {
            let (a, b) = (f1.entry(r, c).unwrap(), f2.entry(r, c).unwrap());
            assert!(rel(b, factor * a) < 1e-12, "{r},{c}");
        }
    }

    #[test]
    fn numeric_known_shape_sigma_scaling() {
        let p = gauss();
        let params = PulseTrainParams::new(512.0, 64.0, 1.0);
        let f1 = fim_known_shape(&params, &p, 4096, 1.0, 1.0).unwrap();
        let f2 = fim_known_shape(&params, &p, 4096, 1.0, 2.0).unwrap();
        assert_eq!(f2.matrix, &f1.matrix / 2.0);
        assert!(fim_known_shape(&params, &p, 4096, 1.0, 0.0).is_err());
    }

    #[test]
    fn numeric_unknown_shape_block_and_sigma_scaling() {
        let p = gauss();
        let params = PulseTrainParams::new(512.0, 64.0, 1.0);
        let f1 = fim_unknown_shape(&params, &p, 4096, 1.0, 1.0).unwrap();
        let np = p.len();
        let block = f1.matrix.view((2, 2), (np, np));
        assert_eq!(block.clone_owned(), DMatrix::identity(np, np) * 8.0);
        let f2 = fim_unknown_shape(&params, &p, 4096, 1.0, 2.0).unwrap();
        assert_eq!(f2.matrix, &f1.matrix / 2.0);
        assert!(fim_unknown_shape(&params, &p, 4096, 1.0, -1.0).is_err());
    }

    #[test]
    fn closed_unknown_shape_annihilates_null_vector() {
        for p in [
            gauss(),
            PulseShape::tabulated(vec![0.3, 1.2, -0.4, 0.8, 2.0], 0.5).unwrap(),
        ] {
            for k in [2, 5, 8] {
                let m = fim_unknown_shape_closed(&p, k, 1.3).unwrap();
                let u = shape_null_vector(&p);
                let mu = &m.matrix * &u;
                assert!(mu.norm() <= 1e-10 * m.matrix.norm() * u.norm());
            }
        }
    }

    #[test]
    fn flat_pulse_closed_form_is_block_diagonal() {
        let flat = PulseShape::tabulated(vec![0.0; 6], 1.0).unwrap();
        assert!(flat.deriv_samples().iter().all(|d| *d == 0.0));
        let m = fim_unknown_shape_closed(&flat, 4, 1.0).unwrap();
        assert_eq!(m.matrix.view((0, 0), (2, 2)).amax(), 0.0);
        assert_eq!(m.matrix.view((0, 2), (2, 6)).amax(), 0.0);
        assert_eq!(m.matrix[(3, 3)], 4.0);
    }

    #[test]
    fn closed_unknown_shape_sigma_scaling() {
        let p = gauss();
        let a = fim_unknown_shape_closed(&p, 8, 1.0).unwrap();
        let b = fim_unknown_shape_closed(&p, 8, 2.0).unwrap();
        assert_eq!(b.matrix, &a.matrix / 2.0);
    }

    #[test]
    fn period_bound_scaling_and_errors() {
        let st = pulse_stats(&gauss());
        let b1 = crlb_period_known_shape(&st, 8, 1.0, 1.0, 4096, 1.0, 512.0).unwrap();
        let b2 = crlb_period_known_shape(&st, 8, 2.0, 1.0, 4096, 1.0, 512.0).unwrap();
        assert!((b2.exact - b1.exact / 4.0).abs() < 1e-15 * b1.exact);
        assert!((b2.approx - b1.approx / 4.0).abs() < 1e-15 * b1.approx);
        let want = 12.0 / (504.0 * brute_deriv_energy());
        assert!((b1.exact - want).abs() < 1e-12 * want);
        assert!((b1.exact - b1.approx).abs() < 0.05 * b1.exact);
        assert!(crlb_period_known_shape(&st, 1, 1.0, 1.0, 4096, 1.0, 4096.0).is_err());
    }

    #[test]
    fn multiharmonic_bound() {
        let (n, s2, t, ts) = (1000usize, 0.5, 40.0, 1.0);
        let b = crlb_multiharmonic(&[1.0], n, s2, t, ts).unwrap();
        let nf = n as f64;
        let want = 6.0 * s2 / (nf * (nf * nf - 1.0) * std::f64::consts::PI.powi(2));
        assert!((b.var_psi - want).abs() < 1e-15 * want);
        assert!((b.var_t / b.var_psi - t.powi(4) / (ts * ts)).abs() < 1e-9 * t.powi(4));
        let b2 = crlb_multiharmonic(&[2.0, 0.6, 0.2], n, s2, t, ts).unwrap();
        let b1 = crlb_multiharmonic(&[1.0, 0.3, 0.1], n, s2, t, ts).unwrap();
        assert!((b2.var_psi - b1.var_psi / 4.0).abs() < 1e-12 * b1.var_psi);
        assert!((b2.var_t - b1.var_t / 4.0).abs() < 1e-12 * b1.var_t);
        assert!(crlb_multiharmonic(&[], n, s2, t, ts).is_err());
        assert!(crlb_multiharmonic(&[0.0], n, s2, t, ts).is_err());
    }

    #[test]
    fn harmonic_amplitudes_of_gaussian_train() {
        let p = gauss();
        let amps = harmonic_amplitudes(&p, 1.0, 500.0);
        assert_eq!(amps.len(), 250);
        // Fundamental of a narrow pulse train: 2 * area / T.
        let area: f64 = p.samples().iter().sum();
        assert!((amps[0] - 2.0 * area / 500.0).abs() < 1e-3 * amps[0]);
        assert!(amps[60] < 0.1 * amps[0]);
    }

    #[test]
    fn regularized_inverse_without_ridge_is_plain_inverse() {
        let st = pulse_stats(&gauss());
        let m = fim_known_shape_closed(&st, 8, 1.0, 1.0).unwrap();
        let cov = regularized_covariance(&m, Some(0.0)).unwrap();
        let bound = crlb_period_known_shape(&st, 8, 1.0, 1.0, 4096, 1.0, 512.0).unwrap();
        assert!((cov[(0, 0)] - bound.exact).abs() < 1e-9 * bound.exact);
    }

    #[test]
    fn singular_matrix_needs_ridge() {
        let m = fim_unknown_shape_closed(&gauss(), 8, 1.0).unwrap();
        assert!(matches!(
            regularized_covariance(&m, Some(0.0)),
            Err(Error::SingularMatrix(_))
        ));
        assert!(regularized_covariance(&m, Some(-1.0)).is_err());
        assert!(regularized_covariance(&m, None).is_ok());
    }

    #[test]
    fn diagnostic_dimension_mismatch_is_rejected() {
        let st = pulse_stats(&gauss());
        let m = fim_known_shape_closed(&st, 8, 1.0, 1.0).unwrap();
        assert!(singularity_diagnostic(&m, &gauss()).is_err());
    }

    #[test]
    fn csv_grid_has_header_and_rows() {
        let st = pulse_stats(&gauss());
        let m = fim_known_shape_closed(&st, 3, 1.0, 1.0).unwrap();
        let csv = m.to_csv_grid();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "param,T,tau0,A");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("A,"));
    }
}
