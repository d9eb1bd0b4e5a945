mod common;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use pulse_period::estimators::{
    anls, recover_pulse, GridSpec, HarmonicSpectrum, DEFAULT_ORDER_PENALTY,
};
use pulse_period::signal_model::{
    add_noise, make_gaussian_pulse, sigma2_for_snr_mean_power, synthesize, Measurement,
    PulseTrainParams,
};

use common::{tiny_instance, unknown_shape_matrix};

fn dtft(x: &[f64], psi: f64) -> Complex64 {
    x.iter()
        .enumerate()
        .map(|(n, v)| Complex64::from_polar(*v, -2.0 * std::f64::consts::PI * psi * n as f64))
        .sum()
}

#[test]
fn recovered_pulse_is_the_dense_least_squares_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let inst = tiny_instance(&mut rng);
        let n = inst.x.len();
        let np = inst.pulse.len();
        let p = rng.gen_range(inst.p_min..=inst.p_max);
        let n0 = rng.gen_range(0..p);
        if n0 + np > n {
            continue;
        }
        let h = unknown_shape_matrix(n, np, p, n0);
        let ht = h.transpose();
        let dense = (&ht * &h)
            .try_inverse()
            .unwrap()
            * (&ht * DVector::from_column_slice(&inst.x));
        let x = Measurement::from_samples(inst.x.clone(), 1.0).unwrap();
        let fast = recover_pulse(&x, p, n0, np).unwrap();
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn recovered_pulse_variance_is_sigma2_over_k() {
    let pulse = make_gaussian_pulse(20.0, 1.0).unwrap();
    let params = PulseTrainParams::new(500.0, 30.0, 1.0);
    let clean = synthesize(&params, &pulse, 4096, 1.0).unwrap();
    let (sigma2, trials) = (0.25, 500);
    let np = pulse.len();
    let k = (4096 - np - 30) / 500 + 1;
    let mut sq = vec![0.0; np];
    for t in 0..trials {
        let x = add_noise(&clean, 1.0, sigma2, 1000 + t).unwrap();
        let s = recover_pulse(&x, 500, 30, np).unwrap();
        for (acc, (est, truth)) in sq.iter_mut().zip(s.iter().zip(pulse.samples())) {
            *acc += (est - truth).powi(2);
        }
    }
    let per_sample: f64 = sq.iter().sum::<f64>() / (np * trials as usize) as f64;
    let expected = sigma2 / k as f64;
    assert!(
        (per_sample / expected - 1.0).abs() < 0.10,
        "variance {per_sample} vs sigma2/K = {expected}"
    );
}

#[test]
fn anls_on_pulse_train_matches_direct_dtft_search() {
    let pulse = make_gaussian_pulse(20.0, 1.0).unwrap();
    let params = PulseTrainParams::new(512.0, 40.0, 1.0);
    let x = synthesize(&params, &pulse, 4096, 1.0).unwrap();
    let m = Measurement::from_samples(x.clone(), 1.0).unwrap();
    let f = 1usize << 20;
    let grid = GridSpec::new(480, 540).unwrap().with_fft_size(f);
    let est = anls(&m, 8, &grid).unwrap();
    let b_hat = (est.psi_hat.unwrap() * f as f64).round() as i64;
    let b_true = f as i64 / 512;
    assert!((b_hat - b_true).abs() <= 1, "bin {b_hat} vs {b_true}");

    // Direct evaluation over a neighbourhood of the true bin.
    let crit = |b: i64| -> f64 {
        let psi = b as f64 / f as f64;
        (1..=8).map(|k| dtft(&x, k as f64 * psi).norm_sqr()).sum()
    };
    let best = (b_true - 4..=b_true + 4)
        .max_by(|a, b| crit(*a).total_cmp(&crit(*b)))
        .unwrap();
    assert!((best - b_hat).abs() <= 1, "direct argmax {best}, ANLS {b_hat}");
    assert!((crit(b_hat) - est.cost).abs() <= 1e-8 * est.cost);
}

#[test]
fn finer_transform_never_lowers_anls_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = Measurement::from_samples(x, 1.0).unwrap();
    let mut prev = 0.0;
    for e in 14..=18 {
        let grid = GridSpec::new(60, 90).unwrap().with_fft_size(1 << e);
        let c = anls(&m, 4, &grid).unwrap().cost;
        assert!(c >= prev * (1.0 - 1e-12), "fft 2^{e}: {c} < {prev}");
        prev = c;
    }
}

#[test]
fn single_harmonic_ml_matches_anls_at_orthogonal_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 4096;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = Measurement::from_samples(x, 1.0).unwrap();
    let spec = HarmonicSpectrum::new(&m, 1 << 16).unwrap();
    // psi = b / N puts cosine and sine columns exactly orthogonal.
    for b in [21usize, 40, 77, 150, 204] {
        let psi = b as f64 / n as f64;
        let grid = GridSpec::new(10, 400)
            .unwrap()
            .with_fft_size(1 << 16)
            .with_psi_grid(vec![psi]);
        let ml = spec.mhus_ml(1, &grid).unwrap().cost;
        let an = spec.anls(1, &grid).unwrap().cost;
        let an_scaled = 2.0 * an / n as f64;
        assert!((ml - an_scaled).abs() <= 1e-6 * ml, "psi {psi}: {ml} vs {an_scaled}");
    }
}

#[test]
fn order_selection_on_noise_rarely_overfits() {
    let grid = GridSpec::new(475, 525).unwrap().with_fft_size(1 << 16);
    let zeros = vec![0.0; 4096];
    let mut ones = 0;
    for seed in 0..100 {
        let x = add_noise(&zeros, 1.0, 1.0, seed).unwrap();
        let spec = HarmonicSpectrum::new(&x, grid.fft_size).unwrap();
        let sel = spec.select_model_order(40, &grid, DEFAULT_ORDER_PENALTY).unwrap();
        if sel.chosen == 1 {
            ones += 1;
        }
    }
    assert!(ones >= 90, "Kh = 1 chosen in {ones} of 100 noise-only trials");
}

#[test]
fn order_selection_on_pulse_train_lands_in_pulse_band() {
    let pulse = make_gaussian_pulse(20.0, 1.0).unwrap();
    let params = PulseTrainParams::new(500.0, 77.0, 1.0);
    let clean = synthesize(&params, &pulse, 4096, 1.0).unwrap();
    let sigma2 = sigma2_for_snr_mean_power(&pulse, 1.0, 500.0, 0.0);
    let x = add_noise(&clean, 1.0, sigma2, 9).unwrap();
    let grid = GridSpec::new(475, 525).unwrap().with_fft_size(1 << 21);
    let spec = HarmonicSpectrum::new(&x, grid.fft_size).unwrap();
    let sel = spec.select_model_order(80, &grid, DEFAULT_ORDER_PENALTY).unwrap();
    eprintln!("chosen Kh at 0 dB: {}", sel.chosen);
    assert!(sel.chosen >= 1 && sel.chosen <= 80);
}
