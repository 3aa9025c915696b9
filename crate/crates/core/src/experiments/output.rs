//! On-disk layout of a run, all under one directory and prefixed by the
//! scenario name:
//!
//! - `<kind>_record.json`: the full [`RunRecord`]
//! - `<kind>_summary.csv`: one row per sweep point
//! - `<kind>_point<k>.csv`: time series of point `k` (time-resolved kinds)
//!
//! Floats are written with 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use super::run::{PointRecord, RunRecord};
use super::ScenarioKind;
use crate::error::Result;
use crate::observables::TimeSeries;

#[derive(Debug, Clone, Default)]
pub struct OutputFiles {
    pub record: PathBuf,
    pub summary: PathBuf,
    pub series: Vec<PathBuf>,
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(series.channel_names().map(str::to_string));
    w.write_record(&header)?;
    for (i, t) in series.t.iter().enumerate() {
        let mut row = vec![format_float(*t)];
        row.extend(series.channels.iter().map(|c| format_float(c.values[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn summary_header(kind: ScenarioKind) -> &'static [&'static str] {
    match kind {
        ScenarioKind::FreeDecay => &[
            "index", "n", "gamma", "delay_time", "delay_mf", "boundary", "peak_intensity",
            "peak_intensity_per_atom", "error",
        ],
        ScenarioKind::DrivenSteady => &[
            "index", "n", "gamma", "omega", "gamma_n_over_omega", "jz_per_n", "intensity",
            "intensity_per_atom", "mf_jz_per_n", "mf_intensity_per_atom", "mf_regime", "error",
        ],
        ScenarioKind::RamanPulse => &[
            "index", "n", "gamma", "omega0", "delta", "pulse_length", "peak_intensity_per_atom",
            "peak_intensity_per_atom_se", "peak_time", "n_trajectories", "n_failed", "mean_jumps",
            "error",
        ],
    }
}

fn summary_row(kind: ScenarioKind, p: &PointRecord) -> Vec<String> {
    let q = &p.params;
    let r = p.result.as_ref();
    let err = p.error.clone().unwrap_or_default();
    let head = vec![p.index.to_string(), q.n_atoms.to_string(), format_float(q.gamma)];
    let tail: Vec<String> = match kind {
        ScenarioKind::FreeDecay => {
            let pulse = r.and_then(|r| r.pulse);
            vec![
                opt(pulse.map(|s| s.delay_time)),
                opt(r.and_then(|r| r.delay_mf)),
                pulse.map(|s| s.boundary.to_string()).unwrap_or_default(),
                opt(pulse.map(|s| s.peak_value)),
                opt(r.and_then(|r| r.peak_per_atom).map(|e| e.value)),
            ]
        }
        ScenarioKind::DrivenSteady => {
            let st = r.and_then(|r| r.steady);
            let mf = r.and_then(|r| r.steady_mf);
            vec![
                format_float(q.omega),
                format_float(q.gamma * q.n_atoms as f64 / q.omega),
                opt(st.map(|s| s.jz_per_n)),
                opt(st.map(|s| s.intensity)),
                opt(st.map(|s| s.intensity_per_atom)),
                opt(mf.map(|s| s.jz_per_n)),
                opt(mf.map(|s| s.intensity_per_atom)),
                mf.and_then(|s| s.regime)
                    .map(|g| format!("{g:?}").to_lowercase())
                    .unwrap_or_default(),
            ]
        }
        ScenarioKind::RamanPulse => {
            let peak = r.and_then(|r| r.peak_per_atom);
            let ens = r.and_then(|r| r.ensemble.as_ref());
            vec![
                format_float(q.omega0),
                format_float(q.delta),
                format_float(q.pulse_length),
                opt(peak.map(|e| e.value)),
                opt(peak.and_then(|e| e.se)),
                opt(peak.map(|e| e.time)),
                q.n_trajectories.map(|n| n.to_string()).unwrap_or_default(),
                ens.map(|e| e.failures.len().to_string()).unwrap_or_default(),
                opt(ens.map(|e| e.mean_jumps)),
            ]
        }
    };
    head.into_iter().chain(tail).chain([err]).collect()
}

/// Write record, summary and per-point series into `dir` (created if
/// needed). Output is a pure function of the record.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let kind = record.scenario.kind;
    let prefix = kind.name();
    let mut files = OutputFiles {
        record: dir.join(format!("{prefix}_record.json")),
        summary: dir.join(format!("{prefix}_summary.csv")),
        series: Vec::new(),
    };
    let mut json = serde_json::to_string_pretty(record)?;
    json.push('\n');
    fs::write(&files.record, json)?;

    let mut w = csv::Writer::from_path(&files.summary)?;
    w.write_record(summary_header(kind))?;
    for p in &record.points {
        w.write_record(summary_row(kind, p))?;
    }
    w.flush()?;

    for p in &record.points {
        if let Some(series) = p.result.as_ref().and_then(|r| r.series.as_ref()) {
            let path = dir.join(format!("{prefix}_point{:03}.csv", p.index));
            write_series(&path, series)?;
            files.series.push(path);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let x = std::f64::consts::PI;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }
}
