use std::sync::atomic::AtomicBool;

use pulse_period::estimators::{quantization_floor, Method};
use pulse_period::montecarlo::{averaged_crlb, run, run_with_cancel, ExperimentConfig};
use pulse_period::signal_model::SnrDefinition;

fn small(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        snr_db_list: vec![-12.0, -4.0],
        estimators: vec![Method::Ppks, Method::Ppus],
        fft_size: 1 << 18,
        ..Default::default()
    }
}

#[test]
fn noiseless_on_grid_trial_hits_the_floor() {
    let cfg = ExperimentConfig {
        trials: 1,
        snr_db_list: vec![f64::INFINITY],
        estimators: vec![Method::Ppks, Method::Ppus],
        snap_to_grid: true,
        ..Default::default()
    };
    let curve = run(&cfg).unwrap();
    let floor = quantization_floor(cfg.ts, cfg.p_r);
    for m in [Method::Ppks, Method::Ppus] {
        let c = curve.cell(0, m).unwrap();
        assert_eq!((c.trials, c.failures), (1, 0));
        assert!(c.mse <= floor, "{m}: {} > {floor}", c.mse);
    }
}

#[test]
fn same_seed_gives_identical_results() {
    let cfg = small(3);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    let other = run(&ExperimentConfig {
        master_seed: cfg.master_seed + 1,
        ..cfg
    })
    .unwrap();
    assert_ne!(a.to_csv(), other.to_csv());
}

#[test]
fn results_csv_lists_only_configured_methods() {
    let curve = run(&ExperimentConfig {
        estimators: vec![Method::Ppks],
        ..small(1)
    })
    .unwrap();
    let csv = curve.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("snr_db,method,mse,crlb_model1,crlb_mhus,trials,failures")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("ppks")));
}

#[test]
fn cancelled_run_reports_no_trials() {
    let cancel = AtomicBool::new(true);
    let curve = run_with_cancel(&small(4), &cancel).unwrap();
    assert_eq!(curve.completed_trials, 0);
    assert!(curve.cells.iter().flatten().all(|c| c.trials == 0));
}

#[test]
fn averaged_bound_is_linear_in_noise_variance() {
    let cfg = small(20);
    let a = averaged_crlb(&cfg, 0.0).unwrap();
    let b = averaged_crlb(&cfg, -10.0).unwrap();
    assert!((b.model1 / a.model1 - 10.0).abs() < 1e-9);
    assert!((b.multiharmonic / a.multiharmonic - 10.0).abs() < 1e-9);
}

#[test]
fn averaged_bounds_nearly_coincide() {
    let a = averaged_crlb(&small(50), -10.0).unwrap();
    let rel = (a.model1 - a.multiharmonic).abs() / a.model1;
    assert!(rel < 0.25, "model1 {} vs multiharmonic {}", a.model1, a.multiharmonic);
}

#[test]
fn constant_pulse_count_makes_averaging_trivial() {
    // round(4096 / T) = 8 on [490, 520] and the peak definition keeps sigma2 fixed.
    let cfg = ExperimentConfig {
        t_low: 490.0,
        t_high: 520.0,
        snr_definition: SnrDefinition::PeakAmplitude,
        ..small(30)
    };
    let avg = averaged_crlb(&cfg, -6.0).unwrap();
    let single = averaged_crlb(&ExperimentConfig { trials: 1, ..cfg }, -6.0).unwrap();
    assert!((avg.model1 / single.model1 - 1.0).abs() < 1e-12);
}
