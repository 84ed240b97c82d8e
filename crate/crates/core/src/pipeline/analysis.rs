//! Full analysis run over ingested patch records.
//!
//! Stages run in a fixed order: convert, pair, ΔE, CCM cross-validation and
//! correction, indices, ICC, Bland–Altman, ANOVA, sensitivity. Records are
//! visited in sorted (device, subject, region, angle) order so the report
//! does not depend on input row order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::calibration::{ccm_apply, ccm_fit, crossval_ccm, Ccm, CvReport, PairKey, PairedSample};
use crate::clinical::{erythema_index, ita, ita_is_degenerate, ita_sensitivity, melanin_index};
use crate::colorspace::{ciede2000, linear_to_lab, srgb_decode, LabColor, LinearRgb};
use crate::error::{Error, Result};
use crate::pipeline::config::{Analysis, RunConfig};
use crate::pipeline::record::PatchRecord;
use crate::stats::{
    anova_eta2, bland_altman, bonferroni, icc, mean, sample_sd, AnovaRow, BlandAltman, IccForm, IccResult,
    RatingsTable, Summary, ALPHA,
};

pub const REPORT_VERSION: u32 = 1;

/// An analysis section: computed, or skipped with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T> {
    Ok(T),
    Skipped { reason: String },
}

impl<T> Section<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Section::Ok(v) => Some(v),
            Section::Skipped { .. } => None,
        }
    }

    fn disabled() -> Self {
        Section::Skipped {
            reason: "disabled".into(),
        }
    }
}

/// Which colours a section was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Raw,
    /// Consumer devices corrected by their full-data CCM.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device: String,
    pub reference: bool,
    pub records: usize,
    pub subjects: usize,
    pub angles: Vec<u32>,
    pub mean_lab: [f64; 3],
    pub sd_lab: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCount {
    pub region: String,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub subjects: usize,
    pub devices: Vec<DeviceSummary>,
    pub regions: Vec<RegionCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    pub device: String,
    pub paired: usize,
    /// Records with no reference capture of the same (subject, region).
    pub unmatched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub reference_device: String,
    pub devices: Vec<PairCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaERow {
    pub device_a: String,
    pub device_b: String,
    pub delta_e: Summary,
    /// Fraction of pairs with ΔE00 below the threshold.
    pub acceptable_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaESection {
    pub threshold: f64,
    pub pairs: Vec<DeltaERow>,
    /// All consumer-vs-reference pairs together.
    pub pooled_vs_reference: Summary,
    pub pooled_acceptable_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmDevice {
    pub device: String,
    pub reference_device: String,
    pub crossval: CvReport,
    /// Fit on every pair; used for the corrected analyses.
    pub ccm: Ccm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmSection {
    pub devices: Vec<CcmDevice>,
    /// Means over every held-out sample of every device.
    pub pooled_before_mean: f64,
    pub pooled_after_mean: f64,
    pub pooled_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub device: String,
    pub basis: Basis,
    pub melanin_index: Summary,
    pub erythema_index: Summary,
    pub ita_degrees: Summary,
    pub ita_degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicesSection {
    pub rows: Vec<IndexRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccRow {
    pub measure: String,
    pub result: IccResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccSection {
    pub form: IccForm,
    pub basis: Basis,
    pub raters: Vec<String>,
    /// (subject, region) cells measured by every rater.
    pub targets: usize,
    /// Cells missing at least one rater, left out.
    pub dropped_targets: usize,
    pub measures: Vec<IccRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanRow {
    pub device: String,
    pub reference_device: String,
    pub channel: String,
    pub result: BlandAltman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanSection {
    pub basis: Basis,
    pub rows: Vec<BlandAltmanRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEntry {
    pub anova: AnovaRow,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFactor {
    pub factor: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaSection {
    /// Response variable: raw ΔE00 of each consumer-vs-reference pair.
    pub response: String,
    pub alpha: f64,
    pub rows: Vec<AnovaEntry>,
    pub skipped: Vec<SkippedFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySection {
    /// Mean reference-device L*a*b* (all records if there is no reference).
    pub at_lab: [f64; 3],
    pub d_ita_d_l_deg: f64,
    pub d_ita_d_b_deg: f64,
    pub d_ita_d_l_rad: f64,
    pub d_ita_d_b_rad: f64,
    /// `|∂ITA/∂b*| / |∂ITA/∂L*|`; absent when ∂ITA/∂L* is 0.
    pub b_to_l_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub report_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub pairing: Section<PairingSummary>,
    pub deltae: Section<DeltaESection>,
    pub ccm: Section<CcmSection>,
    pub indices: Section<IndicesSection>,
    pub icc: Section<IccSection>,
    pub bland_altman: Section<BlandAltmanSection>,
    pub anova: Section<AnovaSection>,
    pub sensitivity: Section<SensitivitySection>,
}

struct Observation<'a> {
    rec: &'a PatchRecord,
    lin: LinearRgb,
    lab: LabColor,
}

/// `src` is matched to `anchor`.
#[derive(Clone, Copy)]
struct Pair {
    src: usize,
    anchor: usize,
}

const LAB_CHANNELS: [&str; 3] = ["l_star", "a_star", "b_star"];

fn convert(records: &[PatchRecord]) -> Result<Vec<Observation<'_>>> {
    // Labels are ranked once so the sort compares integers, not strings.
    fn ranks<'a>(labels: impl Iterator<Item = &'a str>) -> HashMap<&'a str, usize> {
        let sorted: BTreeSet<&str> = labels.collect();
        sorted.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    }
    let device = ranks(records.iter().map(|r| r.device.as_str()));
    let subject = ranks(records.iter().map(|r| r.subject_id.as_str()));
    let region = ranks(records.iter().map(|r| r.region.as_str()));
    let mut keyed: Vec<((usize, usize, usize, u32), Observation)> = records
        .iter()
        .map(|rec| {
            let lin = srgb_decode(rec.rgb.to_srgb())?;
            let key = (
                device[rec.device.as_str()],
                subject[rec.subject_id.as_str()],
                region[rec.region.as_str()],
                rec.angle,
            );
            Ok((
                key,
                Observation {
                    rec,
                    lin,
                    lab: linear_to_lab(lin)?,
                },
            ))
        })
        .collect::<Result<_>>()?;
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, o)| o).collect())
}

fn channel_stats(labs: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut m = [0.0; 3];
    let mut s = [0.0; 3];
    for c in 0..3 {
        let v: Vec<f64> = labs.iter().map(|l| l[c]).collect();
        m[c] = mean(&v);
        s[c] = sample_sd(&v, m[c]);
    }
    (m, s)
}

fn dataset_summary(obs: &[Observation], reference: &str) -> DatasetSummary {
    let mut by_device: BTreeMap<&str, Vec<&Observation>> = BTreeMap::new();
    let mut regions: BTreeMap<&str, usize> = BTreeMap::new();
    let mut subjects = BTreeSet::new();
    for o in obs {
        by_device.entry(&o.rec.device).or_default().push(o);
        *regions.entry(&o.rec.region).or_default() += 1;
        subjects.insert(&o.rec.subject_id);
    }
    let devices = by_device
        .into_iter()
        .map(|(device, list)| {
            let labs: Vec<[f64; 3]> = list.iter().map(|o| o.lab.to_array()).collect();
            let (mean_lab, sd_lab) = channel_stats(&labs);
            DeviceSummary {
                device: device.to_string(),
                reference: device == reference,
                records: list.len(),
                subjects: list.iter().map(|o| &o.rec.subject_id).collect::<BTreeSet<_>>().len(),
                angles: list.iter().map(|o| o.rec.angle).collect::<BTreeSet<_>>().into_iter().collect(),
                mean_lab,
                sd_lab,
            }
        })
        .collect();
    DatasetSummary {
        records: obs.len(),
        subjects: subjects.len(),
        devices,
        regions: regions
            .into_iter()
            .map(|(r, n)| RegionCount {
                region: r.to_string(),
                records: n,
            })
            .collect(),
    }
}

/// Matches every `src_device` record to the `anchor_device` record of the
/// same (subject, region) with the nearest angle, ties going to the smaller
/// anchor angle. Returns the pairs and the number of unmatched records.
fn pair_devices(obs: &[Observation], src_device: &str, anchor_device: &str) -> (Vec<Pair>, usize) {
    let mut anchors: BTreeMap<(&str, &str), Vec<(u32, usize)>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        if o.rec.device == anchor_device {
            anchors
                .entry((&o.rec.subject_id, &o.rec.region))
                .or_default()
                .push((o.rec.angle, i));
        }
    }
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    for (i, o) in obs.iter().enumerate() {
        if o.rec.device != src_device {
            continue;
        }
        match anchors.get(&(o.rec.subject_id.as_str(), o.rec.region.as_str())) {
            Some(cands) => {
                let &(_, anchor) = cands
                    .iter()
                    .min_by_key(|(a, _)| (a.abs_diff(o.rec.angle), *a))
                    .expect("candidate lists are never empty");
                pairs.push(Pair { src: i, anchor });
            }
            None => unmatched += 1,
        }
    }
    (pairs, unmatched)
}

fn pair_delta_e(obs: &[Observation], pairs: &[Pair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| ciede2000(obs[p.anchor].lab, obs[p.src].lab))
        .collect()
}

fn fraction_below(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64
}

fn index_row(device: &str, basis: Basis, labs: &[LabColor]) -> Result<IndexRow> {
    let mi: Vec<f64> = labs.iter().map(|l| melanin_index(*l)).collect::<Result<_>>()?;
    let ei: Vec<f64> = labs.iter().map(|l| erythema_index(*l)).collect();
    let it: Vec<f64> = labs.iter().map(|l| ita(*l)).collect();
    Ok(IndexRow {
        device: device.to_string(),
        basis,
        melanin_index: Summary::of(&mi),
        erythema_index: Summary::of(&ei),
        ita_degrees: Summary::of(&it),
        ita_degenerate: labs.iter().filter(|l| ita_is_degenerate(**l)).count(),
    })
}

type Measure = (&'static str, fn(LabColor) -> Result<f64>);

const ICC_MEASURES: [Measure; 6] = [
    ("melanin_index", melanin_index),
    ("erythema_index", |l| Ok(erythema_index(l))),
    ("ita", |l| Ok(ita(l))),
    ("l_star", |l| Ok(l.l)),
    ("a_star", |l| Ok(l.a)),
    ("b_star", |l| Ok(l.b)),
];

pub fn run_analysis(cfg: &RunConfig, records: &[PatchRecord]) -> Result<ReliabilityReport> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to analyse".into()));
    }
    let obs = convert(records).map_err(|e| e.in_stage("convert"))?;
    let reference = cfg.reference_device.as_str();
    let dataset = dataset_summary(&obs, reference);

    let mut report = ReliabilityReport {
        report_version: REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        dataset,
        pairing: Section::disabled(),
        deltae: Section::disabled(),
        ccm: Section::disabled(),
        indices: Section::disabled(),
        icc: Section::disabled(),
        bland_altman: Section::disabled(),
        anova: Section::disabled(),
        sensitivity: Section::disabled(),
    };

    let devices: Vec<String> = report.dataset.devices.iter().map(|d| d.device.clone()).collect();
    let has_reference = devices.iter().any(|d| d == reference);
    let consumers: Vec<String> = devices.iter().filter(|d| *d != reference).cloned().collect();

    // Corrected L*a*b* per observation; consumer entries are replaced when
    // the CCM stage runs.
    let mut analysed: Vec<LabColor> = obs.iter().map(|o| o.lab).collect();
    let mut basis = Basis::Raw;

    let pairwise = cfg.analyses.iter().any(|a| a.is_pairwise());
    let mut vs_reference: BTreeMap<&str, Vec<Pair>> = BTreeMap::new();
    if pairwise {
        if !has_reference {
            return Err(Error::MissingReference(reference.to_string()).in_stage("pair"));
        }
        let mut counts = Vec::new();
        for d in &consumers {
            let (pairs, unmatched) = pair_devices(&obs, d, reference);
            counts.push(PairCount {
                device: d.clone(),
                paired: pairs.len(),
                unmatched,
            });
            vs_reference.insert(d, pairs);
        }
        if vs_reference.values().all(|p| p.is_empty()) {
            let why = if consumers.is_empty() {
                "input holds only the reference device".to_string()
            } else {
                format!("no consumer record shares a (subject, region) with `{reference}`")
            };
            return Err(Error::NoPairs(why).in_stage("pair"));
        }
        report.pairing = Section::Ok(PairingSummary {
            reference_device: reference.to_string(),
            devices: counts,
        });
    }
    let paired: Vec<(&str, &Vec<Pair>)> = vs_reference
        .iter()
        .filter(|(_, p)| !p.is_empty())
        .map(|(d, p)| (*d, p))
        .collect();

    if cfg.enabled(Analysis::DeltaE) {
        let mut rows = Vec::new();
        let mut pooled = Vec::new();
        for (d, pairs) in &paired {
            let de = pair_delta_e(&obs, pairs);
            rows.push(DeltaERow {
                device_a: reference.to_string(),
                device_b: d.to_string(),
                delta_e: Summary::of(&de),
                acceptable_fraction: fraction_below(&de, cfg.threshold),
            });
            pooled.extend(de);
        }
        for (i, a) in consumers.iter().enumerate() {
            for b in &consumers[i + 1..] {
                let (pairs, _) = pair_devices(&obs, b, a);
                if pairs.is_empty() {
                    continue;
                }
                let de = pair_delta_e(&obs, &pairs);
                rows.push(DeltaERow {
                    device_a: a.clone(),
                    device_b: b.clone(),
                    delta_e: Summary::of(&de),
                    acceptable_fraction: fraction_below(&de, cfg.threshold),
                });
            }
        }
        report.deltae = Section::Ok(DeltaESection {
            threshold: cfg.threshold,
            pairs: rows,
            pooled_vs_reference: Summary::of(&pooled),
            pooled_acceptable_fraction: fraction_below(&pooled, cfg.threshold),
        });
    }

    if cfg.enabled(Analysis::Ccm) {
        let section = (|| -> Result<CcmSection> {
            let mut out = Vec::new();
            for (d, pairs) in &paired {
                let samples: Vec<PairedSample> = pairs
                    .iter()
                    .map(|p| PairedSample {
                        src: obs[p.src].lin,
                        reference: obs[p.anchor].lin,
                        key: PairKey {
                            subject: obs[p.src].rec.subject_id.clone(),
                            region: obs[p.src].rec.region.clone(),
                            angle: obs[p.src].rec.angle,
                        },
                    })
                    .collect();
                let crossval = crossval_ccm(&samples, cfg.folds, cfg.seed)?;
                let ccm = ccm_fit(&samples)?;
                for (i, o) in obs.iter().enumerate() {
                    if o.rec.device == *d {
                        analysed[i] = linear_to_lab(ccm_apply(&ccm, o.lin))?;
                    }
                }
                out.push(CcmDevice {
                    device: d.to_string(),
                    reference_device: reference.to_string(),
                    crossval,
                    ccm,
                });
            }
            let total: usize = out.iter().map(|c| c.crossval.sample_count).sum();
            let weighted = |f: fn(&CvReport) -> f64| {
                out.iter()
                    .map(|c| f(&c.crossval) * c.crossval.sample_count as f64)
                    .sum::<f64>()
                    / total as f64
            };
            let before = weighted(|r| r.before.mean);
            let after = weighted(|r| r.after.mean);
            Ok(CcmSection {
                pooled_before_mean: before,
                pooled_after_mean: after,
                pooled_improvement_pct: (before > 0.0).then(|| 100.0 * (1.0 - after / before)),
                devices: out,
            })
        })()
        .map_err(|e| e.in_stage("ccm"))?;
        basis = Basis::Corrected;
        report.ccm = Section::Ok(section);
    }

    let device_range = |d: &str| -> Vec<usize> {
        (0..obs.len()).filter(|&i| obs[i].rec.device == d).collect()
    };

    if cfg.enabled(Analysis::Indices) {
        let section = (|| -> Result<IndicesSection> {
            let mut rows = Vec::new();
            let ordered = has_reference
                .then_some(reference)
                .into_iter()
                .chain(consumers.iter().map(String::as_str));
            for d in ordered {
                let idx = device_range(d);
                let raw: Vec<LabColor> = idx.iter().map(|&i| obs[i].lab).collect();
                rows.push(index_row(d, Basis::Raw, &raw)?);
                if basis == Basis::Corrected && d != reference {
                    let corr: Vec<LabColor> = idx.iter().map(|&i| analysed[i]).collect();
                    rows.push(index_row(d, Basis::Corrected, &corr)?);
                }
            }
            Ok(IndicesSection { rows })
        })()
        .map_err(|e| e.in_stage("indices"))?;
        report.indices = Section::Ok(section);
    }

    if cfg.enabled(Analysis::Icc) {
        let section = (|| -> Result<IccSection> {
            let mut raters = vec![reference.to_string()];
            raters.extend(paired.iter().map(|(d, _)| d.to_string()));
            // cell -> rater -> observation indices
            let mut cells: BTreeMap<(&str, &str), Vec<Vec<usize>>> = BTreeMap::new();
            for (i, o) in obs.iter().enumerate() {
                if let Some(r) = raters.iter().position(|d| *d == o.rec.device) {
                    cells
                        .entry((&o.rec.subject_id, &o.rec.region))
                        .or_insert_with(|| vec![Vec::new(); raters.len()])[r]
                        .push(i);
                }
            }
            let complete: Vec<&Vec<Vec<usize>>> =
                cells.values().filter(|c| c.iter().all(|r| !r.is_empty())).collect();
            let dropped = cells.len() - complete.len();
            let mut measures = Vec::new();
            for (name, f) in ICC_MEASURES {
                let rows: Vec<Vec<f64>> = complete
                    .iter()
                    .map(|cell| {
                        cell.iter()
                            .map(|idx| {
                                let v: Vec<f64> =
                                    idx.iter().map(|&i| f(analysed[i])).collect::<Result<_>>()?;
                                Ok(mean(&v))
                            })
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?;
                let table = RatingsTable::new(rows)?;
                measures.push(IccRow {
                    measure: name.to_string(),
                    result: icc(&table, cfg.icc_form)?,
                });
            }
            Ok(IccSection {
                form: cfg.icc_form,
                basis,
                raters,
                targets: complete.len(),
                dropped_targets: dropped,
                measures,
            })
        })()
        .map_err(|e| e.in_stage("icc"))?;
        report.icc = Section::Ok(section);
    }

    if cfg.enabled(Analysis::BlandAltman) {
        let section = (|| -> Result<BlandAltmanSection> {
            let mut rows = Vec::new();
            for (d, pairs) in &paired {
                for (c, channel) in LAB_CHANNELS.iter().enumerate() {
                    let x: Vec<f64> = pairs.iter().map(|p| analysed[p.src].to_array()[c]).collect();
                    let y: Vec<f64> = pairs.iter().map(|p| analysed[p.anchor].to_array()[c]).collect();
                    rows.push(BlandAltmanRow {
                        device: d.to_string(),
                        reference_device: reference.to_string(),
                        channel: channel.to_string(),
                        result: bland_altman(&x, &y)?,
                    });
                }
            }
            Ok(BlandAltmanSection { basis, rows })
        })()
        .map_err(|e| e.in_stage("bland_altman"))?;
        report.bland_altman = Section::Ok(section);
    }

    if cfg.enabled(Analysis::Anova) {
        let section = (|| -> Result<AnovaSection> {
            let mut values = Vec::new();
            let mut labels: [Vec<String>; 3] = Default::default();
            for (d, pairs) in &paired {
                values.extend(pair_delta_e(&obs, pairs));
                for p in pairs.iter() {
                    let rec = obs[p.src].rec;
                    labels[0].push(rec.region.clone());
                    labels[1].push(d.to_string());
                    labels[2].push(rec.angle.to_string());
                }
            }
            let mut rows = Vec::new();
            let mut skipped = Vec::new();
            for (factor, l) in ["region", "device", "angle"].into_iter().zip(&labels) {
                match anova_eta2(factor, &values, l) {
                    Ok(row) => rows.push(row),
                    Err(e @ (Error::InsufficientData(_) | Error::Undefined(_))) => {
                        skipped.push(SkippedFactor {
                            factor: factor.to_string(),
                            reason: e.to_string(),
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
            let p: Vec<f64> = rows.iter().map(|r: &AnovaRow| r.p_value).collect();
            let decisions = if p.is_empty() { Vec::new() } else { bonferroni(&p, ALPHA)? };
            Ok(AnovaSection {
                response: "raw ΔE00 versus reference".into(),
                alpha: ALPHA,
                rows: rows
                    .into_iter()
                    .zip(decisions)
                    .map(|(anova, d)| AnovaEntry {
                        anova,
                        p_adjusted: d.adjusted,
                        significant: d.significant,
                    })
                    .collect(),
                skipped,
            })
        })()
        .map_err(|e| e.in_stage("anova"))?;
        report.anova = Section::Ok(section);
    }

    if cfg.enabled(Analysis::Sensitivity) {
        let section = (|| -> Result<SensitivitySection> {
            let idx: Vec<usize> = if has_reference {
                device_range(reference)
            } else {
                (0..obs.len()).collect()
            };
            let labs: Vec<[f64; 3]> = idx.iter().map(|&i| obs[i].lab.to_array()).collect();
            let (at, _) = channel_stats(&labs);
            let s = ita_sensitivity(LabColor::from_array(at))?;
            Ok(SensitivitySection {
                at_lab: at,
                d_ita_d_l_deg: s.d_ita_d_l,
                d_ita_d_b_deg: s.d_ita_d_b,
                d_ita_d_l_rad: s.d_ita_d_l_rad(),
                d_ita_d_b_rad: s.d_ita_d_b_rad(),
                b_to_l_ratio: (s.d_ita_d_l != 0.0).then(|| (s.d_ita_d_b / s.d_ita_d_l).abs()),
            })
        })()
        .map_err(|e| e.in_stage("sensitivity"))?;
        report.sensitivity = Section::Ok(section);
    }

    Ok(report)
}

/// File name for a device's CCM: `ccm_<device>_to_<reference>.json`.
pub fn ccm_file_name(device: &CcmDevice) -> String {
    format!("ccm_{}_to_{}.json", device.device, device.reference_device)
}
