//! Colour measurement and inter-device reliability toolkit for skin
//! colorimetry: sRGB/CIELAB conversion, CIEDE2000, colour-correction
//! matrices with subject-grouped cross-validation, clinical skin indices,
//! agreement statistics, a synthetic multi-device cohort generator, and a
//! reporting pipeline over patch-level CSV data.

pub mod calibration;
pub mod clinical;
pub mod colorspace;
pub mod error;
pub mod pipeline;
pub mod simulate;
pub mod stats;

pub use calibration::{ccm_apply, ccm_fit, crossval_ccm, Ccm, CvReport, PairKey, PairedSample};
pub use clinical::{clinical_indices, ita, ita_sensitivity, ClinicalIndices, ItaSensitivity};
pub use colorspace::{ciede2000, srgb_decode, srgb_encode, srgb_to_lab, LabColor, LinearRgb, SrgbColor, XyzColor};
pub use error::{Error, ErrorClass, Result};
pub use pipeline::{ingest_csv, run_analysis, PatchRecord, ReliabilityReport, RunConfig};
pub use simulate::{generate_cohort, CohortConfig, DeviceModel, SimulatorConfig, SyntheticCohort};
