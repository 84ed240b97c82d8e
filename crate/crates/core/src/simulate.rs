//! Synthetic multi-device skin-patch cohorts.
//!
//! Ground truth lives in CIELAB. Each device renders it through a linear-RGB
//! gain matrix and bias, a per-region illumination gain, per-session white
//! balance and per-capture exposure jitter, additive Gaussian channel noise,
//! clipping, sRGB encoding and code-value quantization.
//!
//! Randomness is split per subject: subject `i` draws its truth from stream
//! `2i` and its captures from stream `2i + 1` of a ChaCha8 generator keyed by
//! the master seed, so subjects are independent of generation order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::colorspace::{lab_to_linear, srgb_encode, srgb_to_lab, LabColor, LinearRgb, SrgbColor};
use crate::error::{Error, Result};
use crate::pipeline::record::{validate_label, write_csv, PatchRecord, PatchRgb};

pub const CONFIG_VERSION: u32 = 1;

/// Blue-channel noise relative to green in the default device models.
pub const BLUE_NOISE_FACTOR: f64 = 1.8;

/// Mean L*a*b* each default device is tuned to reproduce.
pub const TARGET_DEVICE_MEANS: [(&str, [f64; 3]); 3] = [
    ("dslr", [81.35, 7.95, 17.59]),
    ("tablet", [72.73, 6.08, 10.12]),
    ("smartphone", [77.56, 5.68, 8.96]),
];

pub const DEFAULT_REGIONS: [&str; 5] = ["forehead", "left_cheek", "right_cheek", "chin", "glabella"];

/// Default configuration, as shipped in `config/simulator.toml`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/simulator.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceModel {
    pub name: String,
    /// Exactly one device in a cohort is the reference.
    #[serde(default)]
    pub reference: bool,
    /// Number of capture angles, labelled `0..angles`.
    pub angles: u32,
    /// Row-major linear-RGB rendering matrix.
    pub gain: [[f64; 3]; 3],
    pub bias: [f64; 3],
    /// Additive noise SD per channel in linear RGB.
    pub noise_sigma: [f64; 3],
    /// Output bit depth: 8, 10, 12, or 0 for no quantization.
    pub quantize_bits: u32,
    /// SD of the log exposure factor, drawn once per capture.
    #[serde(default)]
    pub exposure_jitter_sd: f64,
    /// SD of the per-channel log white-balance factor, drawn once per
    /// (subject, device) session.
    #[serde(default)]
    pub white_balance_sd: [f64; 3],
    /// Multiplicative linear-RGB gain per region; missing regions get 1.
    #[serde(default)]
    pub region_gain: BTreeMap<String, [f64; 3]>,
}

impl DeviceModel {
    /// Noise-free identity renderer without quantization.
    pub fn ideal(name: &str, angles: u32) -> Self {
        DeviceModel {
            name: name.to_string(),
            reference: false,
            angles,
            gain: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            bias: [0.0; 3],
            noise_sigma: [0.0; 3],
            quantize_bits: 0,
            exposure_jitter_sd: 0.0,
            white_balance_sd: [0.0; 3],
            region_gain: BTreeMap::new(),
        }
    }

    /// `[σ, σ, 1.8σ]`.
    pub fn noise_from_green(sigma_green: f64) -> [f64; 3] {
        [sigma_green, sigma_green, BLUE_NOISE_FACTOR * sigma_green]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Config(format!("device `{}`: {m}", self.name));
        validate_label(&self.name, "device name").map_err(Error::Config)?;
        if self.angles < 1 {
            return Err(bad("angles must be at least 1".into()));
        }
        if !matches!(self.quantize_bits, 0 | 8 | 10 | 12) {
            return Err(bad(format!(
                "quantize_bits must be 8, 10, 12 or 0, got {}",
                self.quantize_bits
            )));
        }
        if self.gain.iter().flatten().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(bad("gain and bias must be finite".into()));
        }
        let sds = self
            .noise_sigma
            .iter()
            .chain(&self.white_balance_sd)
            .chain(std::iter::once(&self.exposure_jitter_sd));
        for v in sds {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(bad(format!("noise and jitter SDs must be finite and >= 0, got {v}")));
            }
        }
        for (region, g) in &self.region_gain {
            if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(bad(format!("region gain for `{region}` must be positive")));
            }
        }
        Ok(())
    }

    fn region_factor(&self, region: &str) -> [f64; 3] {
        self.region_gain.get(region).copied().unwrap_or([1.0; 3])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    /// Mean L*a*b* offset from the subject's base colour.
    pub offset: [f64; 3],
    /// Per-subject SD of the offset.
    pub offset_sd: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub subject_count: usize,
    pub seed: u64,
    /// Population mean L*a*b*.
    pub base_lab: [f64; 3],
    /// Between-subject covariance of L*a*b*.
    pub subject_covariance: [[f64; 3]; 3],
    /// SD of the per-capture L*a*b* jitter.
    pub angle_jitter_sd: [f64; 3],
    pub regions: Vec<RegionSpec>,
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subject_count < 1 {
            return Err(Error::Config("subject_count must be at least 1".into()));
        }
        if self.regions.is_empty() {
            return Err(Error::Config("at least one region is required".into()));
        }
        let mut names = BTreeSet::new();
        for r in &self.regions {
            validate_label(&r.name, "region name").map_err(Error::Config)?;
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!("region `{}` listed twice", r.name)));
            }
            if r.offset.iter().any(|v| !v.is_finite())
                || r.offset_sd.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(Error::Config(format!(
                    "region `{}`: offsets must be finite and SDs >= 0",
                    r.name
                )));
            }
        }
        if self.base_lab.iter().any(|v| !v.is_finite())
            || self.angle_jitter_sd.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("base_lab and angle_jitter_sd must be finite, SDs >= 0".into()));
        }
        self.covariance_factor().map(|_| ())
    }

    /// A matrix `F` with `F·Fᵀ` equal to the subject covariance.
    fn covariance_factor(&self) -> Result<Matrix3<f64>> {
        let c = Matrix3::from_fn(|i, j| self.subject_covariance[i][j]);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("subject_covariance must be finite".into()));
        }
        let scale = c.abs().max().max(1.0);
        if (c - c.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::Config("subject_covariance must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(c);
        let min = eig.eigenvalues.min();
        if min < -1e-12 * scale {
            return Err(Error::Config(format!(
                "subject_covariance is not positive semidefinite (eigenvalue {min})"
            )));
        }
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        Ok(eig.eigenvectors * Matrix3::from_diagonal(&roots))
    }

    pub fn subject_ids(&self) -> Vec<String> {
        let width = self.subject_count.to_string().len().max(3);
        (1..=self.subject_count).map(|i| format!("S{i:0width$}")).collect()
    }
}

impl Default for CohortConfig {
    fn default() -> Self {
        // SDs 2.73, 1.5, 2.0; L*-b* correlation 0.56.
        let offsets = [
            [0.6, -0.8, -0.4],
            [0.2, 0.6, 0.2],
            [0.2, 0.6, 0.2],
            [-0.8, 0.4, 0.3],
            [-0.2, -0.8, -0.3],
        ];
        CohortConfig {
            subject_count: 200,
            seed: 42,
            base_lab: TARGET_DEVICE_MEANS[0].1,
            subject_covariance: [
                [7.4529, 0.0, 3.0576],
                [0.0, 2.25, 0.0],
                [3.0576, 0.0, 4.0],
            ],
            angle_jitter_sd: [0.5, 0.3, 0.3],
            regions: DEFAULT_REGIONS
                .iter()
                .zip(offsets)
                .map(|(name, offset)| RegionSpec {
                    name: name.to_string(),
                    offset,
                    offset_sd: [0.5; 3],
                })
                .collect(),
        }
    }
}

/// Cohort plus device models, the unit stored in a simulator config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub config_version: u32,
    pub cohort: CohortConfig,
    pub devices: Vec<DeviceModel>,
}

impl SimulatorConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimulatorConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config_version {} (expected {CONFIG_VERSION})",
                cfg.config_version
            )));
        }
        cfg.cohort.validate()?;
        for d in &cfg.devices {
            d.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        // Consumer illumination falls off on the chin and under the brow and
        // peaks on the cheeks.
        let region_gain: BTreeMap<String, [f64; 3]> = [
            ("chin", 0.7965),
            ("forehead", 0.982),
            ("glabella", 0.9619),
            ("left_cheek", 1.0243),
            ("right_cheek", 1.0243),
        ]
        .into_iter()
        .map(|(r, g)| (r.to_string(), [g; 3]))
        .collect();

        let dslr = DeviceModel {
            reference: true,
            noise_sigma: [0.004, 0.004, 0.0072],
            quantize_bits: 8,
            ..DeviceModel::ideal("dslr", 7)
        };
        let consumer = |name: &str, gain: [f64; 3], noise: [f64; 3], wb_blue: f64| DeviceModel {
            gain: [[gain[0], 0.0, 0.0], [0.0, gain[1], 0.0], [0.0, 0.0, gain[2]]],
            noise_sigma: noise,
            quantize_bits: 8,
            exposure_jitter_sd: 0.0331,
            white_balance_sd: [0.0, 0.0, wb_blue],
            region_gain: region_gain.clone(),
            ..DeviceModel::ideal(name, 3)
        };
        SimulatorConfig {
            config_version: CONFIG_VERSION,
            cohort: CohortConfig::default(),
            devices: vec![
                dslr,
                consumer("tablet", DEFAULT_TABLET_GAIN, [0.0146, 0.0146, 0.02628], 0.0912),
                consumer("smartphone", DEFAULT_SMARTPHONE_GAIN, [0.0138, 0.0138, 0.02484], 0.0843),
            ],
        }
    }
}

/// Diagonal gains produced by [`tune_device_gains`] on the default cohort.
pub const DEFAULT_TABLET_GAIN: [f64; 3] = [0.7454, 0.80961, 0.92922];
pub const DEFAULT_SMARTPHONE_GAIN: [f64; 3] = [0.85027, 0.95427, 1.11606];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub records: Vec<PatchRecord>,
    /// Ground truth per (subject, region).
    pub truth: BTreeMap<(String, String), LabColor>,
    pub reference_device: String,
}

impl SyntheticCohort {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, &self.records)
    }
}

fn normal3(rng: &mut impl Rng) -> [f64; 3] {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}

fn subject_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn subject_truth(
    cfg: &CohortConfig,
    factor: &Matrix3<f64>,
    rng: &mut impl Rng,
) -> Vec<LabColor> {
    let z = nalgebra::Vector3::from(normal3(rng));
    let shift = factor * z;
    let base: [f64; 3] = std::array::from_fn(|i| cfg.base_lab[i] + shift[i]);
    cfg.regions
        .iter()
        .map(|r| {
            let e = normal3(rng);
            LabColor::from_array(std::array::from_fn(|i| {
                base[i] + r.offset[i] + r.offset_sd[i] * e[i]
            }))
        })
        .collect()
}

/// Ground-truth L*a*b* for every (subject, region), keyed by subject id and
/// region name.
pub fn sample_true_skin(cfg: &CohortConfig) -> Result<BTreeMap<(String, String), LabColor>> {
    cfg.validate()?;
    let factor = cfg.covariance_factor()?;
    let mut out = BTreeMap::new();
    for (i, subject) in cfg.subject_ids().into_iter().enumerate() {
        let mut rng = subject_rng(cfg.seed, 2 * i as u64);
        for (r, lab) in cfg.regions.iter().zip(subject_truth(cfg, &factor, &mut rng)) {
            out.insert((subject.clone(), r.name.clone()), lab);
        }
    }
    Ok(out)
}

/// Per-channel white-balance multipliers for one capture session.
pub fn draw_white_balance(model: &DeviceModel, rng: &mut impl Rng) -> [f64; 3] {
    let z = normal3(rng);
    std::array::from_fn(|i| (model.white_balance_sd[i] * z[i]).exp())
}

/// Renders one capture of `truth` in `region`.
pub fn render_device(
    model: &DeviceModel,
    truth: LabColor,
    region: &str,
    white_balance: [f64; 3],
    rng: &mut impl Rng,
) -> Result<SrgbColor> {
    let lin = lab_to_linear(truth)?.to_array();
    let region_gain = model.region_factor(region);
    let exposure = (model.exposure_jitter_sd * rng.sample::<f64, _>(StandardNormal)).exp();
    let noise = normal3(rng);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let g = &model.gain[c];
        let v = g[0] * lin[0] + g[1] * lin[1] + g[2] * lin[2] + model.bias[c];
        let v = v * region_gain[c] * exposure * white_balance[c] + model.noise_sigma[c] * noise[c];
        out[c] = v.clamp(0.0, 1.0);
    }
    let encoded = srgb_encode(LinearRgb::from_array(out))?.to_array();
    if model.quantize_bits == 0 {
        return Ok(SrgbColor::new(encoded[0], encoded[1], encoded[2]));
    }
    let levels = f64::from((1u32 << model.quantize_bits) - 1);
    let q = encoded.map(|v| (v * levels).round() / levels);
    Ok(SrgbColor::new(q[0], q[1], q[2]))
}

fn to_patch_rgb(model: &DeviceModel, c: SrgbColor) -> PatchRgb {
    let v = c.to_array();
    if model.quantize_bits == 8 {
        PatchRgb::Bits8(v.map(|x| (x * 255.0).round() as u8))
    } else {
        PatchRgb::Unit(v)
    }
}

/// Renders every subject × device × region × angle capture.
///
/// Records are ordered by subject, then device (in `models` order), region
/// (in config order) and angle.
pub fn generate_cohort(cfg: &CohortConfig, models: &[DeviceModel]) -> Result<SyntheticCohort> {
    cfg.validate()?;
    if models.len() < 2 {
        return Err(Error::Config(format!(
            "a cohort needs at least 2 device models, got {}",
            models.len()
        )));
    }
    let mut names = BTreeSet::new();
    for m in models {
        m.validate()?;
        if !names.insert(m.name.as_str()) {
            return Err(Error::Config(format!("device `{}` listed twice", m.name)));
        }
    }
    let references: Vec<&DeviceModel> = models.iter().filter(|m| m.reference).collect();
    let reference_device = match references.as_slice() {
        [one] => one.name.clone(),
        [] => return Err(Error::Config("no device is flagged as reference".into())),
        _ => return Err(Error::Config("more than one device is flagged as reference".into())),
    };

    let factor = cfg.covariance_factor()?;
    let per_subject: usize = models.iter().map(|m| m.angles as usize).sum::<usize>() * cfg.regions.len();
    let mut records = Vec::with_capacity(cfg.subject_count * per_subject);
    let mut truth = BTreeMap::new();

    for (i, subject) in cfg.subject_ids().into_iter().enumerate() {
        let mut truth_rng = subject_rng(cfg.seed, 2 * i as u64);
        let regions = subject_truth(cfg, &factor, &mut truth_rng);
        let mut rng = subject_rng(cfg.seed, 2 * i as u64 + 1);
        for model in models {
            let white_balance = draw_white_balance(model, &mut rng);
            for (spec, lab) in cfg.regions.iter().zip(&regions) {
                for angle in 0..model.angles {
                    let j = normal3(&mut rng);
                    let jittered = LabColor::from_array(std::array::from_fn(|c| {
                        lab.to_array()[c] + cfg.angle_jitter_sd[c] * j[c]
                    }));
                    let rendered = render_device(model, jittered, &spec.name, white_balance, &mut rng)?;
                    records.push(PatchRecord {
                        subject_id: subject.clone(),
                        device: model.name.clone(),
                        region: spec.name.clone(),
                        angle,
                        rgb: to_patch_rgb(model, rendered),
                    });
                }
            }
        }
        for (spec, lab) in cfg.regions.iter().zip(regions) {
            truth.insert((subject.clone(), spec.name.clone()), lab);
        }
    }
    Ok(SyntheticCohort {
        records,
        truth,
        reference_device,
    })
}

/// Mean rendered L*a*b* per device.
pub fn device_mean_lab(records: &[PatchRecord]) -> Result<BTreeMap<String, LabColor>> {
    let mut sums: BTreeMap<&str, ([f64; 3], usize)> = BTreeMap::new();
    for r in records {
        let lab = srgb_to_lab(r.rgb.to_srgb())?.to_array();
        let entry = sums.entry(&r.device).or_insert(([0.0; 3], 0));
        for c in 0..3 {
            entry.0[c] += lab[c];
        }
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(d, (s, n))| (d.to_string(), LabColor::from_array(s.map(|v| v / n as f64))))
        .collect())
}

/// Rescales gain rows so each listed device's mean rendered colour matches
/// its target.
///
/// Each iteration renders the cohort and multiplies row `c` of the gain
/// matrix (and bias `c`) by `target_lin[c] / rendered_lin[c]`, where both
/// means are mapped to linear RGB. Devices without a target are untouched.
pub fn tune_device_gains(
    cfg: &CohortConfig,
    models: &[DeviceModel],
    targets: &BTreeMap<String, LabColor>,
    iterations: usize,
) -> Result<Vec<DeviceModel>> {
    let mut models = models.to_vec();
    for _ in 0..iterations {
        let cohort = generate_cohort(cfg, &models)?;
        let means = device_mean_lab(&cohort.records)?;
        for m in models.iter_mut() {
            let Some(target) = targets.get(&m.name) else { continue };
            let want = lab_to_linear(*target)?.to_array();
            let got = lab_to_linear(means[&m.name])?.to_array();
            for c in 0..3 {
                if got[c].is_nan() || got[c] <= 0.0 {
                    return Err(Error::Domain(format!(
                        "device `{}` renders a non-positive mean in channel {c}",
                        m.name
                    )));
                }
                let s = want[c] / got[c];
                for v in m.gain[c].iter_mut() {
                    *v *= s;
                }
                m.bias[c] *= s;
            }
        }
    }
    Ok(models)
}

pub fn default_targets() -> BTreeMap<String, LabColor> {
    TARGET_DEVICE_MEANS
        .iter()
        .map(|(d, v)| (d.to_string(), LabColor::from_array(*v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::ciede2000;

    fn tiny_cohort(subjects: usize) -> CohortConfig {
        CohortConfig {
            subject_count: subjects,
            ..CohortConfig::default()
        }
    }

    #[test]
    fn shipped_config_file_matches_default() {
        let parsed = SimulatorConfig::from_toml(DEFAULT_CONFIG_TOML).unwrap();
        assert_eq!(parsed, SimulatorConfig::default());
        let again = SimulatorConfig::from_toml(&parsed.to_toml().unwrap()).unwrap();
        assert_eq!(again, parsed);
    }

    #[test]
    fn default_gains_reproduce_target_means() {
        let sim = SimulatorConfig::default();
        let cohort = generate_cohort(&sim.cohort, &sim.devices).unwrap();
        let means = device_mean_lab(&cohort.records).unwrap();
        for (device, target) in TARGET_DEVICE_MEANS {
            let got = means[device].to_array();
            for c in 0..3 {
                assert!((got[c] - target[c]).abs() < 1.5, "{device}: {got:?} vs {target:?}");
            }
        }
        for device in ["tablet", "smartphone"] {
            let got = means[device].to_array();
            let target = default_targets()[device].to_array();
            for c in 0..3 {
                assert!((got[c] - target[c]).abs() < 0.05, "{device} not at its tuned mean");
            }
        }
    }

    #[test]
    fn tuning_moves_means_onto_targets() {
        let sim = SimulatorConfig::default();
        let cfg = tiny_cohort(40);
        let mut start = sim.devices.clone();
        start[1].gain = [[0.9, 0.0, 0.0], [0.0, 0.9, 0.0], [0.0, 0.0, 0.9]];
        let mut targets = default_targets();
        targets.remove("dslr");
        let tuned = tune_device_gains(&cfg, &start, &targets, 4).unwrap();
        assert_eq!(tuned[0], start[0]);
        let means = device_mean_lab(&generate_cohort(&cfg, &tuned).unwrap().records).unwrap();
        let got = means["tablet"].to_array();
        for (c, t) in targets["tablet"].to_array().into_iter().enumerate() {
            assert!((got[c] - t).abs() < 0.05);
        }
    }

    #[test]
    fn zero_covariance_gives_the_mean_exactly() {
        let mut cfg = tiny_cohort(4);
        cfg.subject_covariance = [[0.0; 3]; 3];
        for r in &mut cfg.regions {
            r.offset = [0.0; 3];
            r.offset_sd = [0.0; 3];
        }
        let truth = sample_true_skin(&cfg).unwrap();
        assert_eq!(truth.len(), 20);
        for lab in truth.values() {
            assert_eq!(lab.to_array(), cfg.base_lab);
        }
    }

    #[test]
    fn truth_is_seed_deterministic() {
        let cfg = tiny_cohort(10);
        assert_eq!(sample_true_skin(&cfg).unwrap(), sample_true_skin(&cfg).unwrap());
        let other = CohortConfig { seed: 43, ..cfg.clone() };
        assert_ne!(sample_true_skin(&cfg).unwrap(), sample_true_skin(&other).unwrap());
    }

    #[test]
    fn default_truth_mean_lightness() {
        let truth = sample_true_skin(&CohortConfig::default()).unwrap();
        let mean_l = truth.values().map(|l| l.l).sum::<f64>() / truth.len() as f64;
        assert!((mean_l - 81.35).abs() < 0.5, "mean L* {mean_l}");
    }

    #[test]
    fn rejects_bad_covariance() {
        let mut cfg = tiny_cohort(2);
        cfg.subject_covariance = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(sample_true_skin(&cfg), Err(Error::Config(_))));
        cfg.subject_covariance = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(sample_true_skin(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn identity_rendering_recovers_truth() {
        let model = DeviceModel::ideal("x", 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for lab in [[81.35, 7.95, 17.59], [60.0, 12.0, 25.0], [90.0, 2.0, 8.0]] {
            let truth = LabColor::from_array(lab);
            let out = render_device(&model, truth, "chin", [1.0; 3], &mut rng).unwrap();
            let back = srgb_to_lab(out).unwrap().to_array();
            for c in 0..3 {
                assert!((back[c] - lab[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn noiseless_rendering_is_repeatable() {
        let model = DeviceModel {
            gain: [[0.8, 0.0, 0.0], [0.0, 0.9, 0.0], [0.0, 0.0, 1.1]],
            quantize_bits: 8,
            ..DeviceModel::ideal("x", 1)
        };
        let truth = LabColor::new(75.0, 8.0, 15.0);
        let a = render_device(&model, truth, "chin", [1.0; 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = render_device(&model, truth, "chin", [1.0; 3], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantization_levels() {
        let truth = LabColor::new(70.0, 10.0, 20.0);
        for bits in [8u32, 10, 12] {
            let model = DeviceModel {
                quantize_bits: bits,
                ..DeviceModel::ideal("x", 1)
            };
            let out = render_device(&model, truth, "chin", [1.0; 3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let levels = f64::from((1u32 << bits) - 1);
            for v in out.to_array() {
                assert!(((v * levels).round() - v * levels).abs() < 1e-9);
            }
        }
        let bad = DeviceModel {
            quantize_bits: 7,
            ..DeviceModel::ideal("x", 1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn blue_noise_dominates() {
        let model = DeviceModel {
            noise_sigma: DeviceModel::noise_from_green(0.01),
            ..DeviceModel::ideal("x", 1)
        };
        let truth = LabColor::new(81.35, 7.95, 17.59);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labs: Vec<[f64; 3]> = (0..4000)
            .map(|_| {
                let c = render_device(&model, truth, "chin", [1.0; 3], &mut rng).unwrap();
                srgb_to_lab(c).unwrap().to_array()
            })
            .collect();
        let sd = |c: usize| {
            let m = labs.iter().map(|v| v[c]).sum::<f64>() / labs.len() as f64;
            (labs.iter().map(|v| (v[c] - m).powi(2)).sum::<f64>() / (labs.len() - 1) as f64).sqrt()
        };
        assert!(sd(2) > sd(0), "b* SD {} vs L* SD {}", sd(2), sd(0));
    }

    #[test]
    fn counting_and_reference_checks() {
        let cfg = CohortConfig {
            subject_count: 1,
            regions: vec![RegionSpec {
                name: "chin".into(),
                offset: [0.0; 3],
                offset_sd: [0.0; 3],
            }],
            ..CohortConfig::default()
        };
        let reference = DeviceModel {
            reference: true,
            ..DeviceModel::ideal("dslr", 1)
        };
        let other = DeviceModel::ideal("phone", 1);
        let cohort = generate_cohort(&cfg, &[reference.clone(), other.clone()]).unwrap();
        assert_eq!(cohort.records.len(), 2);
        assert_eq!(cohort.truth.len(), 1);
        assert_eq!(cohort.reference_device, "dslr");
        assert!(generate_cohort(&cfg, &[other.clone(), DeviceModel::ideal("tablet", 1)]).is_err());
        assert!(generate_cohort(&cfg, std::slice::from_ref(&reference)).is_err());
        assert!(generate_cohort(&cfg, &[reference.clone(), reference]).is_err());
    }

    #[test]
    fn record_count_matches_cross_product() {
        let sim = SimulatorConfig::default();
        let cfg = tiny_cohort(3);
        let cohort = generate_cohort(&cfg, &sim.devices).unwrap();
        assert_eq!(cohort.records.len(), 3 * 5 * (7 + 3 + 3));
        for r in &cohort.records {
            assert!(cohort.truth.contains_key(&(r.subject_id.clone(), r.region.clone())));
        }
    }

    #[test]
    fn noiseless_identity_devices_agree_exactly() {
        let cfg = tiny_cohort(5);
        let reference = DeviceModel {
            reference: true,
            ..DeviceModel::ideal("a", 2)
        };
        let cohort = generate_cohort(&cfg, &[reference, DeviceModel::ideal("b", 2)]).unwrap();
        let cfg_nojitter = CohortConfig {
            angle_jitter_sd: [0.0; 3],
            ..cfg
        };
        let reference = DeviceModel {
            reference: true,
            ..DeviceModel::ideal("a", 2)
        };
        let still = generate_cohort(&cfg_nojitter, &[reference, DeviceModel::ideal("b", 2)]).unwrap();
        let (a, b): (Vec<_>, Vec<_>) = still.records.iter().partition(|r| r.device == "a");
        for (x, y) in a.iter().zip(&b) {
            let dx = srgb_to_lab(x.rgb.to_srgb()).unwrap();
            let dy = srgb_to_lab(y.rgb.to_srgb()).unwrap();
            assert_eq!(ciede2000(dx, dy), 0.0);
        }
        assert_eq!(cohort.records.len(), 5 * 5 * 4);
    }

    #[test]
    fn cohort_is_deterministic() {
        let sim = SimulatorConfig::default();
        let cfg = tiny_cohort(6);
        assert_eq!(
            generate_cohort(&cfg, &sim.devices).unwrap(),
            generate_cohort(&cfg, &sim.devices).unwrap()
        );
    }
}
