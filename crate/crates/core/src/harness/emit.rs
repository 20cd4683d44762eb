use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::run::{Quantiles, SeedFailure, Summary};
use crate::error::Result;

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_HEADER: &str = "step,median_loss,q25_loss,q75_loss,median_hnorm,q25_hnorm,q75_hnorm";

/// Per-step CSV. Missing `hnorm` columns (methods without adaptive weights, or
/// diagnostics off) are left empty.
pub fn trace_csv(summary: &Summary) -> String {
    let mut out = String::with_capacity(64 * (summary.steps.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &summary.steps {
        let Quantiles { q25, median, q75 } = s.loss;
        write!(out, "{},{median},{q25},{q75}", s.step).unwrap();
        match s.hnorm {
            Some(h) => writeln!(out, ",{},{},{}", h.median, h.q25, h.q75).unwrap(),
            None => out.push_str(",,,\n"),
        }
    }
    out
}

#[derive(Serialize)]
struct FinalLoss<'a> {
    quantiles: Option<Quantiles>,
    per_seed: &'a [f64],
}

#[derive(Serialize)]
struct Timing {
    wall_clock_secs: f64,
    wall_clock_per_step_secs: f64,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    schema_version: &'static str,
    library_version: &'static str,
    config_hash: String,
    config: &'a RunConfig,
    label: &'a str,
    seeds_total: usize,
    seeds_ok: usize,
    failures: &'a [SeedFailure],
    final_loss: FinalLoss<'a>,
    /// Only field that varies between identical runs.
    timing: Timing,
}

/// Run-summary JSON. Everything except `timing` is a pure function of the config.
pub fn summary_json(cfg: &RunConfig, summary: &Summary) -> String {
    let steps_run = (cfg.steps * summary.seeds_total.max(1)) as f64;
    let file = SummaryFile {
        schema_version: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        config: cfg,
        label: &summary.label,
        seeds_total: summary.seeds_total,
        seeds_ok: summary.seeds_ok,
        failures: &summary.failures,
        final_loss: FinalLoss {
            quantiles: summary.final_loss(),
            per_seed: &summary.final_losses,
        },
        timing: Timing {
            wall_clock_secs: summary.wall_clock_secs,
            wall_clock_per_step_secs: summary.wall_clock_secs / steps_run,
        },
    };
    let mut s = serde_json::to_string_pretty(&file).expect("summary serializes");
    s.push('\n');
    s
}

pub fn trace_path(dir: &Path, summary: &Summary) -> PathBuf {
    dir.join(format!("trace_{}.csv", summary.label))
}

/// Write `trace_<optimizer>_<problem>.csv` and `summary.json` into `dir`.
pub fn emit(cfg: &RunConfig, summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv = trace_path(dir, summary);
    fs::write(&csv, trace_csv(summary))?;
    let json = dir.join("summary.json");
    fs::write(&json, summary_json(cfg, summary))?;
    Ok(vec![csv, json])
}
