//! File formats: signal CSV with a JSON metadata sidecar, estimate rows and
//! bound reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::PeriodEstimate;
use crate::signal_model::{Measurement, PulseTrainParams, SnrDefinition};

pub const SIGNAL_HEADER: &str = "n,x";
pub const ESTIMATE_HEADER: &str = "method,T_hat,P_hat,n0_hat,cost,Kh_or_Np,seed";
pub const BOUND_HEADER: &str = "model,param,bound,K,sigma2,notes";

/// Contents of the `.meta.json` file written next to a signal CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalMeta {
    pub ts: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub truth: Option<PulseTrainParams>,
    pub snr_definition: String,
    /// `None` for a noiseless signal.
    pub snr_db: Option<f64>,
    pub tp: f64,
    pub p_r: usize,
    pub n: usize,
    /// File name of the run manifest that produced the signal.
    pub manifest: Option<String>,
}

impl SignalMeta {
    pub fn for_measurement(x: &Measurement, tp: f64, p_r: usize, snr_db: Option<f64>, snr: SnrDefinition) -> Self {
        SignalMeta {
            ts: x.ts,
            sigma2: x.sigma2,
            seed: x.seed,
            truth: x.truth,
            snr_definition: snr.to_string(),
            snr_db,
            tp,
            p_r,
            n: x.len(),
            manifest: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metadata serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).or_else(|e| invalid(format!("bad signal metadata: {e}")))
    }
}

/// `signal.csv` -> `signal.meta.json`
pub fn sidecar_path(signal: &Path) -> PathBuf {
    signal.with_extension("meta.json")
}

pub fn signal_to_csv(x: &[f64]) -> String {
    let mut out = String::with_capacity(x.len() * 24);
    out.push_str(SIGNAL_HEADER);
    out.push('\n');
    for (i, v) in x.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

/// Parse a signal CSV. Rows must be numbered `0, 1, 2, ...`.
pub fn signal_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some(SIGNAL_HEADER) => {}
        other => return invalid(format!("expected header '{SIGNAL_HEADER}', found {other:?}")),
    }
    let mut x = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| crate::Error::InvalidArgument(format!("row {row}: expected 'n,x'")))?;
        let idx: usize = idx
            .trim()
            .parse()
            .or_else(|_| invalid(format!("row {row}: bad index '{idx}'")))?;
        if idx != x.len() {
            return invalid(format!("row {row}: index {idx} out of sequence"));
        }
        let val: f64 = val
            .trim()
            .parse()
            .or_else(|_| invalid(format!("row {row}: bad sample '{val}'")))?;
        x.push(val);
    }
    Ok(x)
}

/// Estimate as a CSV row; the `Kh_or_Np` column is the harmonic count or the
/// pulse length on the searched grid.
pub fn estimate_row(est: &PeriodEstimate, seed: u64) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        est.method,
        est.t_hat,
        est.p_hat,
        est.n0_hat,
        est.cost,
        est.order,
        seed
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub model: String,
    pub param: String,
    pub bound: f64,
    pub k: usize,
    pub sigma2: f64,
    pub notes: String,
}

impl BoundRow {
    pub fn new(model: &str, param: &str, bound: f64, k: usize, sigma2: f64, notes: impl Into<String>) -> Self {
        BoundRow {
            model: model.into(),
            param: param.into(),
            bound,
            k,
            sigma2,
            notes: notes.into(),
        }
    }
}

pub fn bound_report(rows: &[BoundRow]) -> String {
    let mut out = String::from(BOUND_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model,
            r.param,
            r.bound,
            r.k,
            r.sigma2,
            r.notes.replace(',', ";")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_csv_parses_back() {
        let x = vec![0.0, -1.5, 3.25e-7, f64::MIN_POSITIVE, 1.0 / 3.0];
        let csv = signal_to_csv(&x);
        assert!(csv.starts_with("n,x\n0,0\n1,-1.5\n"));
        assert_eq!(signal_from_csv(&csv).unwrap(), x);
    }

    #[test]
    fn signal_csv_rejects_bad_input() {
        assert!(signal_from_csv("t,x\n0,1\n").is_err());
        assert!(signal_from_csv("n,x\n1,1\n").is_err());
        assert!(signal_from_csv("n,x\n0,abc\n").is_err());
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("out/sig.csv")),
            PathBuf::from("out/sig.meta.json")
        );
    }

    #[test]
    fn notes_cannot_break_columns() {
        let r = bound_report(&[BoundRow::new("m", "T", 1.0, 8, 1.0, "a,b")]);
        assert_eq!(r.lines().nth(1).unwrap().split(',').count(), 6);
    }
}
