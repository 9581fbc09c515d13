//! CSV and JSON writers. Traces use one row per outer iteration.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::exact::RunOutput;
use crate::verify::VerificationReport;

#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    run_id: &'a str,
    t: usize,
    eta_t: f64,
    tau_t: f64,
    eps_t: f64,
    regret_inf_norm_cum: f64,
    subopt_mixture: f64,
    subopt_last: f64,
    entropy_mean: f64,
    return_empirical: Option<f64>,
    alpha: Option<f64>,
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))
}

/// Writes the per-iteration rows of `runs` to `writer`.
pub fn write_traces<W: Write>(writer: W, runs: &[&RunOutput]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for run in runs {
        let regret = run.trace.regret_norm_curve();
        for (rec, &reg) in run.trace.records.iter().zip(&regret) {
            w.serialize(TraceRow {
                run_id: &run.run_id,
                t: rec.t,
                eta_t: rec.eta,
                tau_t: rec.tau_t,
                eps_t: rec.eps,
                regret_inf_norm_cum: reg,
                subopt_mixture: rec.subopt_mixture,
                subopt_last: rec.subopt_last,
                entropy_mean: rec.entropy_mean,
                return_empirical: rec.return_empirical,
                alpha: rec.alpha,
            })?;
        }
    }
    w.flush().map_err(|e| HarnessError::Io("csv".into(), e))?;
    Ok(())
}

pub fn write_traces_file(path: &Path, runs: &[&RunOutput]) -> Result<()> {
    write_traces(create(path)?, runs)
}

pub fn write_report(dir: &Path, report: &VerificationReport) -> Result<()> {
    let json = serde_json::to_string_pretty(&report.checks)?;
    let path = dir.join("report.json");
    std::fs::write(&path, json).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(create(&dir.join("rates.csv"))?);
    for row in &report.rates {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::Io("rates.csv".into(), e))?;
    Ok(())
}
