//! Flat TOML configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pulse_period::estimators::{Method, DEFAULT_ORDER_PENALTY};
use pulse_period::montecarlo::ExperimentConfig;
use pulse_period::signal_model::{PulseTrainParams, SnrDefinition};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // signal
    pub n: usize,
    pub ts: f64,
    pub tp: f64,
    pub amplitude: f64,
    pub period: f64,
    pub tau0: f64,
    /// Omit for a noiseless signal.
    pub snr_db: Option<f64>,
    /// Explicit noise variance; takes precedence over `snr_db`.
    pub sigma2: Option<f64>,
    pub snr_definition: SnrDefinition,
    pub seed: u64,
    pub p_r: usize,

    // search
    pub t_low: f64,
    pub t_high: f64,
    pub p_search_min: Option<usize>,
    pub p_search_max: Option<usize>,
    pub kh_max: usize,
    pub order_penalty: f64,
    pub fft_size: usize,

    // benchmark
    pub snr_db_list: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub estimators: Vec<Method>,
    pub snap_to_grid: bool,
    pub threshold_factor: f64,
}

impl Default for Config {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Config {
            n: e.n,
            ts: e.ts,
            tp: e.tp,
            amplitude: e.amplitude,
            period: 500.0,
            tau0: 100.0,
            snr_db: None,
            sigma2: None,
            snr_definition: e.snr_definition,
            seed: 1,
            p_r: e.p_r,
            t_low: e.t_low,
            t_high: e.t_high,
            p_search_min: None,
            p_search_max: None,
            kh_max: e.kh_max,
            order_penalty: DEFAULT_ORDER_PENALTY,
            fft_size: e.fft_size,
            snr_db_list: e.snr_db_list,
            trials: e.trials,
            master_seed: e.master_seed,
            estimators: e.estimators,
            snap_to_grid: e.snap_to_grid,
            threshold_factor: 10.0,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> PulseTrainParams {
        PulseTrainParams::new(self.period, self.tau0, self.amplitude)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            t_low: self.t_low,
            t_high: self.t_high,
            tp: self.tp,
            ts: self.ts,
            amplitude: self.amplitude,
            p_r: self.p_r,
            snr_db_list: self.snr_db_list.clone(),
            snr_definition: self.snr_definition,
            trials: self.trials,
            master_seed: self.master_seed,
            estimators: self.estimators.clone(),
            kh_max: self.kh_max,
            order_penalty: self.order_penalty,
            fft_size: self.fft_size,
            p_search_min: self.p_search_min,
            p_search_max: self.p_search_max,
            snap_to_grid: self.snap_to_grid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("period = 480.5\nestimators = [\"ppks\", \"mhus-ml\"]\n").unwrap();
        assert_eq!(c.period, 480.5);
        assert_eq!(c.estimators, vec![Method::Ppks, Method::MhusMl]);
        assert_eq!(c.n, 4096);
        assert_eq!(c.snr_definition, SnrDefinition::MeanPower);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("perod = 500.0\n").is_err());
        assert!(toml::from_str::<Config>("snr_definition = \"loudness\"\n").is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = Config::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<Config>(&text).unwrap(), c);
    }
}
