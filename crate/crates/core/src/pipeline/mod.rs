//! Ingestion, orchestration and reporting.

pub mod analysis;
pub mod config;
pub mod record;
pub mod report;

pub use analysis::{run_analysis, ReliabilityReport, Section};
pub use config::{Analysis, RunConfig, RunConfigFile};
pub use record::{ingest_csv, PatchRecord, PatchRgb};
pub use report::{emit_report, ReportFormat};

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};

/// Reads several CSV files as one dataset, rejecting keys repeated across
/// files.
pub fn ingest_all(paths: &[PathBuf]) -> Result<Vec<PatchRecord>> {
    if paths.is_empty() {
        return Err(Error::Config("no input files given".into()));
    }
    let mut all = Vec::new();
    let mut origin: BTreeMap<(String, String, String, u32), &PathBuf> = BTreeMap::new();
    for path in paths {
        for rec in ingest_csv(path)? {
            let key = (rec.subject_id.clone(), rec.device.clone(), rec.region.clone(), rec.angle);
            if let Some(first) = origin.insert(key, path) {
                return Err(Error::Domain(format!(
                    "record ({}, {}, {}, {}) appears in both {} and {}",
                    rec.subject_id,
                    rec.device,
                    rec.region,
                    rec.angle,
                    first.display(),
                    path.display()
                )));
            }
            all.push(rec);
        }
    }
    Ok(all)
}
