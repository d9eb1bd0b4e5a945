//! `pulse-period`: synthesize pulse trains, estimate their period, compute
//! bounds and run the Monte Carlo benchmark.
//!
//! Exit codes: 0 success, 2 bad flags or configuration, 3 I/O error,
//! 4 estimator precondition violated, 130 benchmark interrupted.

mod config;
mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};

use pulse_period::bounds::{
    crlb_multiharmonic, crlb_period_known_shape, default_ridge, fim_known_shape,
    fim_unknown_shape, fim_unknown_shape_closed, harmonic_amplitudes, pulse_count, pulse_stats,
    regularized_covariance, singularity_diagnostic,
};
use pulse_period::estimators::{
    cost_surface, estimate_with_subgrid, GridSpec, HarmonicSpectrum, Method, PulseModel,
};
use pulse_period::formats::{
    bound_report, estimate_row, sidecar_path, signal_from_csv, signal_to_csv, BoundRow,
    SignalMeta, ESTIMATE_HEADER,
};
use pulse_period::montecarlo::{detect_threshold, run_with_cancel};
use pulse_period::signal_model::{add_noise, make_gaussian_pulse, resample, synthesize, Measurement};

use config::Config;
use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("estimator precondition violated: {0}")]
    Estimator(String),
    #[error("interrupted; partial results written")]
    Interrupted,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Estimator(_) => 4,
            CliError::Interrupted => 130,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn estimator_err(e: impl std::fmt::Display) -> CliError {
    CliError::Estimator(e.to_string())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Parser)]
#[command(name = "pulse-period", version, about = "Period estimation for periodic pulse trains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic noisy pulse train as CSV plus a metadata sidecar.
    Synth(SynthArgs),
    /// Estimate the period of a signal file and print one CSV row.
    Estimate(EstimateArgs),
    /// Print Cramér-Rao bounds for the configured pulse train.
    Bound(BoundArgs),
    /// Run the Monte Carlo MSE-versus-SNR benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; the sidecar and manifest are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Signal CSV with a `.meta.json` sidecar.
    signal: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pulse length in samples for ppus (default: from the sidecar Tp).
    #[arg(long)]
    np: Option<usize>,
    /// Resampling factor for ppks/ppus (default: from the sidecar).
    #[arg(long)]
    pr: Option<usize>,
    /// Harmonic count for the multiharmonic methods (default: order selection).
    #[arg(long)]
    kh: Option<usize>,
    /// Smallest candidate period in original samples.
    #[arg(long)]
    p_min: Option<usize>,
    #[arg(long)]
    p_max: Option<usize>,
    /// Write the (P, n0) cost surface on the resampled grid as CSV.
    #[arg(long)]
    dump_cost_surface: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the pulse count K.
    #[arg(long)]
    k: Option<usize>,
    /// Also write the numeric Fisher matrices as CSV grids into this directory.
    #[arg(long)]
    fim_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimator list, e.g. `ppks,ppus`.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Method>>,
    #[arg(long)]
    pr: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Also write `mse.svg`.
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pulse-period: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg = Config::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut manifest = RunManifest::start(&cfg, cfg.seed);
    let pulse = make_gaussian_pulse(cfg.tp, cfg.ts).map_err(config_err)?;
    let params = cfg.params();
    let clean = synthesize(&params, &pulse, cfg.n, cfg.ts).map_err(config_err)?;
    let sigma2 = match (cfg.sigma2, cfg.snr_db) {
        (Some(s), _) => s,
        (None, Some(db)) => cfg.snr_definition.sigma2(&pulse, params.amplitude, params.period, db),
        (None, None) => 0.0,
    };
    let x = add_noise(&clean, cfg.ts, sigma2, cfg.seed)
        .map_err(config_err)?
        .with_truth(params);

    let meta_path = sidecar_path(&args.out);
    let manifest_path = args.out.with_extension("manifest.toml");
    let mut meta = SignalMeta::for_measurement(&x, cfg.tp, cfg.p_r, cfg.snr_db, cfg.snr_definition);
    meta.manifest = manifest_path.file_name().map(|n| n.to_string_lossy().into_owned());

    write_file(&args.out, &signal_to_csv(&x.x))?;
    write_file(&meta_path, &meta.to_json())?;
    manifest.outputs = vec![args.out.display().to_string(), meta_path.display().to_string()];
    manifest.finish(true);
    manifest.write(&manifest_path)
}

fn load_signal(path: &Path) -> Result<(Measurement, SignalMeta), CliError> {
    let text = read_file(path)?;
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        return Err(CliError::Io(format!(
            "missing metadata sidecar {}",
            meta_path.display()
        )));
    }
    let meta = SignalMeta::from_json(&read_file(&meta_path)?)
        .map_err(|e| CliError::Io(format!("{}: {e}", meta_path.display())))?;
    let samples =
        signal_from_csv(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut x = Measurement::from_samples(samples, meta.ts)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    x.sigma2 = meta.sigma2;
    x.seed = meta.seed;
    x.truth = meta.truth;
    Ok((x, meta))
}

fn search_grid(cfg: &Config, p_min: Option<usize>, p_max: Option<usize>) -> Result<GridSpec, CliError> {
    let mut exp = cfg.experiment();
    exp.p_search_min = p_min.or(exp.p_search_min);
    exp.p_search_max = p_max.or(exp.p_search_max);
    exp.grid().map_err(config_err)
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let cfg = Config::load(args.config.as_deref())?;
    let (x, meta) = load_signal(&args.signal)?;
    let grid = search_grid(&cfg, args.p_min, args.p_max)?;

    let est = match args.method {
        Method::Ppks | Method::Ppus => {
            let p_r = args.pr.unwrap_or(meta.p_r);
            let pulse = make_gaussian_pulse(meta.tp, meta.ts).map_err(config_err)?;
            let model = match args.method {
                Method::Ppks => PulseModel::Known(pulse),
                _ => PulseModel::Unknown {
                    np: args.np.unwrap_or(pulse.len()),
                },
            };
            let est = estimate_with_subgrid(&x, &model, p_r, &grid).map_err(estimator_err)?;
            if let Some(path) = &args.dump_cost_surface {
                let fine = Measurement::from_samples(
                    resample(&x.x, p_r).map_err(estimator_err)?,
                    x.ts / p_r as f64,
                )
                .map_err(estimator_err)?;
                let fine_model = match model {
                    PulseModel::Known(p) => PulseModel::Known(p.upsampled(p_r).map_err(estimator_err)?),
                    PulseModel::Unknown { np } => PulseModel::Unknown { np: np * p_r },
                };
                let surface =
                    cost_surface(&fine, &fine_model, &grid.scaled(p_r)).map_err(estimator_err)?;
                write_file(path, &surface.to_csv())?;
            }
            est
        }
        Method::MhusMl | Method::MhusAnls => {
            if args.dump_cost_surface.is_some() {
                return Err(CliError::Config(
                    "--dump-cost-surface applies to ppks and ppus only".into(),
                ));
            }
            let spec = HarmonicSpectrum::new(&x, cfg.fft_size).map_err(estimator_err)?;
            let kh = match args.kh {
                Some(kh) => kh,
                None => {
                    spec.select_model_order(cfg.kh_max, &grid, cfg.order_penalty)
                        .map_err(estimator_err)?
                        .chosen
                }
            };
            if args.method == Method::MhusMl {
                spec.mhus_ml(kh, &grid)
            } else {
                spec.anls(kh, &grid)
            }
            .map_err(estimator_err)?
        }
    };
    println!("{ESTIMATE_HEADER}");
    println!("{}", estimate_row(&est, meta.seed));
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> Result<(), CliError> {
    let cfg = Config::load(args.config.as_deref())?;
    let pulse = make_gaussian_pulse(cfg.tp, cfg.ts).map_err(config_err)?;
    let params = cfg.params();
    params.validate(pulse.duration()).map_err(config_err)?;
    let sigma2 = match (cfg.sigma2, cfg.snr_db) {
        (Some(s), _) => s,
        (None, Some(db)) => cfg.snr_definition.sigma2(&pulse, params.amplitude, params.period, db),
        (None, None) => 1.0,
    };
    if !(sigma2 > 0.0) {
        return Err(CliError::Config(format!("noise variance must be positive, got {sigma2}")));
    }
    let k = args.k.unwrap_or_else(|| pulse_count(cfg.n, cfg.ts, params.period));
    let stats = pulse_stats(&pulse);
    let mut rows = Vec::new();

    match crlb_period_known_shape(&stats, k, params.amplitude, sigma2, cfg.n, cfg.ts, params.period) {
        Ok(b) => {
            rows.push(BoundRow::new("model1-exact", "T", b.exact, k, sigma2, ""));
            rows.push(BoundRow::new("model1-approx", "T", b.approx, k, sigma2, ""));
        }
        Err(e) => {
            let note = format!("error: {e}");
            rows.push(BoundRow::new("model1-exact", "T", f64::NAN, k, sigma2, note.clone()));
            rows.push(BoundRow::new("model1-approx", "T", f64::NAN, k, sigma2, note));
        }
    }

    let amps = harmonic_amplitudes(&pulse, params.amplitude, params.period);
    match crlb_multiharmonic(&amps, cfg.n, sigma2, params.period, cfg.ts) {
        Ok(b) => {
            let note = format!("{} harmonics", amps.len());
            rows.push(BoundRow::new("multiharmonic", "psi", b.var_psi, k, sigma2, note.clone()));
            rows.push(BoundRow::new("multiharmonic", "T", b.var_t, k, sigma2, note));
        }
        Err(e) => rows.push(BoundRow::new("multiharmonic", "T", f64::NAN, k, sigma2, format!("error: {e}"))),
    }

    if k >= 1 {
        let info = fim_unknown_shape_closed(&pulse, k, sigma2).map_err(estimator_err)?;
        let lambda = default_ridge(&info);
        match regularized_covariance(&info, Some(lambda)) {
            Ok(cov) => rows.push(BoundRow::new(
                "model2-regularized",
                "T",
                cov[(0, 0)],
                k,
                sigma2,
                format!("lambda={lambda:e}"),
            )),
            Err(e) => rows.push(BoundRow::new("model2-regularized", "T", f64::NAN, k, sigma2, format!("error: {e}"))),
        }
        let d = singularity_diagnostic(&info, &pulse).map_err(estimator_err)?;
        rows.push(BoundRow::new("model2-singularity", "min_eig", d.min_eig, k, sigma2, ""));
        rows.push(BoundRow::new("model2-singularity", "max_eig", d.max_eig, k, sigma2, ""));
        rows.push(BoundRow::new(
            "model2-singularity",
            "null_residual",
            d.null_residual,
            k,
            sigma2,
            "relative residual of the shift null vector",
        ));
    }
    print!("{}", bound_report(&rows));

    if let Some(dir) = &args.fim_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let m1 = fim_known_shape(&params, &pulse, cfg.n, cfg.ts, sigma2).map_err(estimator_err)?;
        let m2 = fim_unknown_shape(&params, &pulse, cfg.n, cfg.ts, sigma2).map_err(estimator_err)?;
        write_file(&dir.join("fim_model1.csv"), &m1.to_csv_grid())?;
        write_file(&dir.join("fim_model2.csv"), &m2.to_csv_grid())?;
    }
    Ok(())
}

static CANCEL: AtomicBool = AtomicBool::new(false);

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let mut cfg = Config::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(est) = args.estimators {
        cfg.estimators = est;
    }
    if let Some(pr) = args.pr {
        cfg.p_r = pr;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    let exp = cfg.experiment();
    exp.validate().map_err(config_err)?;
    std::fs::create_dir_all(args.out.join("plot"))
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;

    let mut manifest = RunManifest::start(&cfg, cfg.master_seed);
    let _ = ctrlc::set_handler(|| CANCEL.store(true, Ordering::SeqCst));
    let curve = run_with_cancel(&exp, &CANCEL).map_err(estimator_err)?;
    let complete = curve.completed_trials == exp.trials;

    let mut outputs = Vec::new();
    let mut emit = |name: &str, text: &str| -> Result<(), CliError> {
        write_file(&args.out.join(name), text)?;
        outputs.push(name.to_string());
        Ok(())
    };
    emit("results.csv", &curve.to_csv())?;

    let mut report = String::from("method,threshold_db,factor\n");
    for m in &curve.methods {
        let t = detect_threshold(&curve, *m, cfg.threshold_factor)
            .map_or_else(|| "none".to_string(), |v| v.to_string());
        report.push_str(&format!("{m},{t},{}\n", cfg.threshold_factor));
    }
    emit("thresholds.csv", &report)?;

    let series = plot::curve_series(&curve);
    for s in &series {
        emit(&format!("plot/{}.dat", s.name), &plot::dat(s))?;
    }
    if args.svg {
        let title = format!("MSE of T versus SNR ({}, {} trials)", curve.snr_definition, curve.completed_trials);
        emit("mse.svg", &plot::svg(&series, &title))?;
    }

    manifest.outputs = outputs;
    manifest.finish(complete);
    manifest.write(&args.out.join("manifest.toml"))?;
    print!("{report}");
    if complete {
        Ok(())
    } else {
        Err(CliError::Interrupted)
    }
}
