//! Plot-ready curves in double-logarithmic coordinates.

use std::path::PathBuf;

use afs_lab::afs::Certificate;
use afs_lab::mc::EfcPoint;
use serde::Serialize;

use crate::output::{OutputDir, Row};
use crate::CliError;

/// `(L, value, ln ln(1/value) / ln L)` for a decay functional.
#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub config_digest: String,
    pub size: u64,
    pub value: f64,
    pub ln_value: f64,
    pub diagnostic: Option<f64>,
}

impl Row for DecayRow {
    const HEADERS: &'static [&'static str] = &["config_digest", "size", "value", "ln_value", "diagnostic"];
}

/// `(k, δ_k, κ_k, δ_lower)` of an engine run.
#[derive(Debug, Clone, Serialize)]
pub struct EngineRow {
    pub config_digest: String,
    pub k: u32,
    pub delta: f64,
    pub kappa: f64,
    pub delta_lower: Option<f64>,
}

impl Row for EngineRow {
    const HEADERS: &'static [&'static str] = &["config_digest", "k", "delta", "kappa", "delta_lower"];
}

pub enum PlotData<'a> {
    Decay(&'a [EfcPoint]),
    Engine(&'a Certificate),
}

/// `ln ln(1/v) / ln L` from `ln v`; undefined unless `0 < v < 1` and `L > 1`.
pub fn double_log_diagnostic(size: u64, ln_value: f64) -> Option<f64> {
    (ln_value < 0.0 && size > 1).then(|| (-ln_value).ln() / (size as f64).ln())
}

/// Writes `name` with one row per point; an empty input gives a header-only file.
pub fn emit_plot_data(out: &mut OutputDir, name: &str, data: PlotData<'_>) -> Result<PathBuf, CliError> {
    let digest = out.digest().to_owned();
    match data {
        PlotData::Decay(points) => {
            let rows: Vec<DecayRow> = points
                .iter()
                .map(|p| DecayRow {
                    config_digest: digest.clone(),
                    size: p.size,
                    value: p.mean_efc,
                    ln_value: p.ln_mean_efc,
                    diagnostic: double_log_diagnostic(p.size, p.ln_mean_efc),
                })
                .collect();
            out.write_csv(name, &rows)
        }
        PlotData::Engine(cert) => {
            let rows: Vec<EngineRow> = cert
                .exponents
                .iter()
                .enumerate()
                .map(|(k, e)| EngineRow {
                    config_digest: digest.clone(),
                    k: k as u32,
                    delta: e.delta.mid_f64(),
                    kappa: e.kappa.mid_f64(),
                    delta_lower: e.delta_lower.as_ref().map(|d| d.mid_f64()),
                })
                .collect();
            out.write_csv(name, &rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_curve_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "d").unwrap();
        let path = emit_plot_data(&mut out, "curve.csv", PlotData::Decay(&[])).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "config_digest,size,value,ln_value,diagnostic\n");
    }

    #[test]
    fn diagnostic_range() {
        assert_eq!(double_log_diagnostic(9, 0.0), None);
        assert_eq!(double_log_diagnostic(1, -1.0), None);
        let d = double_log_diagnostic(9, -9f64.powf(0.5)).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }
}
