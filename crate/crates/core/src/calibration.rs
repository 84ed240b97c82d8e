//! Affine colour-correction matrices fitted by ordinary least squares in
//! linear RGB, and subject-grouped k-fold cross-validation scored in ΔE00.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, Matrix4, Matrix4x3, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorspace::{ciede2000, linear_to_lab, LabColor, LinearRgb};
use crate::error::{Error, Result};
use crate::stats::Summary;

/// Condition number of the normal matrix above which the SVD path is used.
pub const NORMAL_EQUATION_CONDITION_LIMIT: f64 = 1e8;

/// |det(A)| below which a fitted matrix carries a near-singularity warning.
pub const DETERMINANT_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RgbSpace {
    LinearRgb,
}

/// `corrected = A · rgb + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ccm {
    /// Row-major 3×3 matrix, serialised as nine numbers.
    #[serde(with = "row_major")]
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub space: RgbSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

mod row_major {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &[[f64; 3]; 3], s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<f64> = a.iter().flatten().copied().collect();
        flat.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[[f64; 3]; 3], D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        if flat.len() != 9 {
            return Err(serde::de::Error::invalid_length(flat.len(), &"9 numbers"));
        }
        let mut a = [[0.0; 3]; 3];
        for (i, v) in flat.into_iter().enumerate() {
            a[i / 3][i % 3] = v;
        }
        Ok(a)
    }
}

impl Ccm {
    pub fn identity() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3])
    }

    pub fn new(a: [[f64; 3]; 3], b: [f64; 3]) -> Self {
        let mut ccm = Self {
            a,
            b,
            space: RgbSpace::LinearRgb,
            warning: None,
        };
        let det = ccm.determinant();
        if det.abs() < DETERMINANT_WARNING {
            ccm.warning = Some(format!("near-singular matrix: |det(A)| = {:e}", det.abs()));
        }
        ccm
    }

    pub fn determinant(&self) -> f64 {
        let a = &self.a;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    /// The affine map without clipping.
    pub fn affine(&self, c: LinearRgb) -> [f64; 3] {
        let v = c.to_array();
        let mut out = self.b;
        for (i, row) in self.a.iter().enumerate() {
            out[i] += row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// Identifies the capture a paired sample came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub subject: String,
    pub region: String,
    pub angle: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    /// Consumer-device measurement.
    pub src: LinearRgb,
    /// Reference-device measurement of the same (subject, region).
    pub reference: LinearRgb,
    pub key: PairKey,
}

/// Affine correction clipped to non-negative linear RGB.
pub fn ccm_apply(m: &Ccm, c: LinearRgb) -> LinearRgb {
    let v = m.affine(c);
    LinearRgb::new(v[0].max(0.0), v[1].max(0.0), v[2].max(0.0))
}

/// Sum of squared affine residuals, `Σ‖A·src + b − ref‖²`.
pub fn training_sse(m: &Ccm, samples: &[PairedSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let p = m.affine(s.src);
            let r = s.reference.to_array();
            (0..3).map(|i| (p[i] - r[i]).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Ordinary least-squares fit of `A`, `b` minimising [`training_sse`].
///
/// Solves the 4×4 normal equations by Cholesky when their condition number
/// is at most [`NORMAL_EQUATION_CONDITION_LIMIT`]; otherwise falls back to an
/// SVD of the augmented design, which also reports the numerical rank.
pub fn ccm_fit(samples: &[PairedSample]) -> Result<Ccm> {
    fit_refs(&samples.iter().collect::<Vec<_>>())
}

fn fit_refs(samples: &[&PairedSample]) -> Result<Ccm> {
    if samples.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "CCM fit needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    let mut normal = Matrix4::<f64>::zeros();
    let mut rhs = Matrix4x3::<f64>::zeros();
    for s in samples {
        let x = augmented(s.src);
        let y = s.reference.to_array();
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite sample for {:?}",
                s.key
            )));
        }
        for i in 0..4 {
            for j in 0..4 {
                normal[(i, j)] += x[i] * x[j];
            }
            for j in 0..3 {
                rhs[(i, j)] += x[i] * y[j];
            }
        }
    }

    let eig = SymmetricEigen::new(normal);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let well_conditioned = min > 0.0 && max / min <= NORMAL_EQUATION_CONDITION_LIMIT;

    let beta = match (well_conditioned, normal.cholesky()) {
        (true, Some(chol)) => chol.solve(&rhs),
        _ => svd_solve(samples)?,
    };

    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for out in 0..3 {
        for inp in 0..3 {
            a[out][inp] = beta[(inp, out)];
        }
        b[out] = beta[(3, out)];
    }
    let ccm = Ccm::new(a, b);
    if !ccm.is_finite() {
        return Err(Error::SingularFit {
            rank: 0,
            expected: 4,
        });
    }
    Ok(ccm)
}

fn augmented(c: LinearRgb) -> [f64; 4] {
    [c.r, c.g, c.b, 1.0]
}

fn svd_solve(samples: &[&PairedSample]) -> Result<Matrix4x3<f64>> {
    let n = samples.len();
    let design = DMatrix::from_fn(n, 4, |i, j| augmented(samples[i].src)[j]);
    let target = DMatrix::from_fn(n, 3, |i, j| samples[i].reference.to_array()[j]);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * n.max(4) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 4 {
        return Err(Error::SingularFit { rank, expected: 4 });
    }
    let beta = svd
        .solve(&target, tol)
        .map_err(|e| Error::Domain(format!("SVD solve failed: {e}")))?;
    Ok(Matrix4x3::from_fn(|i, j| beta[(i, j)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub train_count: usize,
    pub test_count: usize,
    /// ΔE00 of corrected training samples.
    pub train_after: Summary,
    pub test_before: Summary,
    pub test_after: Summary,
    pub ccm: Ccm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_count: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub folds: Vec<FoldReport>,
    /// Pooled over every held-out sample (each sample is tested exactly once).
    pub before: Summary,
    pub after: Summary,
    /// `100 · (1 − after.mean / before.mean)`; absent when `before.mean` is 0.
    pub improvement_pct: Option<f64>,
}

/// Assigns subjects to `k` folds after a seeded shuffle. Subject `i` of the
/// shuffled order lands in fold `i % k`.
pub fn subject_folds(subjects: &BTreeSet<String>, k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Domain(format!("fold count must be at least 2, got {k}")));
    }
    if k > subjects.len() {
        return Err(Error::InfeasibleSplit(format!(
            "{k} folds requested but only {} distinct subjects",
            subjects.len()
        )));
    }
    let mut order: Vec<String> = subjects.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, s) in order.into_iter().enumerate() {
        folds[i % k].push(s);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

/// Subject-grouped k-fold cross-validation of [`ccm_fit`].
///
/// Every record of a subject stays in one fold. ΔE00 is measured in CIELAB
/// after converting both the corrected source and the reference through
/// linear RGB → XYZ → L*a*b*.
pub fn crossval_ccm(samples: &[PairedSample], k: usize, seed: u64) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::Domain(format!("fold count must be at least 2, got {k}")));
    }
    if samples.len() < 2 * k {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {k} folds (need at least {})",
            samples.len(),
            2 * k
        )));
    }
    let subjects: BTreeSet<String> = samples.iter().map(|s| s.key.subject.clone()).collect();
    let folds = subject_folds(&subjects, k, seed)?;

    let ref_lab: Vec<LabColor> = samples
        .iter()
        .map(|s| linear_to_lab(s.reference))
        .collect::<Result<_>>()?;
    let before: Vec<f64> = samples
        .iter()
        .zip(&ref_lab)
        .map(|(s, r)| Ok(ciede2000(linear_to_lab(s.src)?, *r)))
        .collect::<Result<_>>()?;

    let mut after = vec![f64::NAN; samples.len()];
    let mut reports = Vec::with_capacity(k);
    for (fold, test_subjects) in folds.iter().enumerate() {
        let in_test: BTreeSet<&str> = test_subjects.iter().map(String::as_str).collect();
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
            (0..samples.len()).partition(|&i| in_test.contains(samples[i].key.subject.as_str()));
        let train: Vec<&PairedSample> = train_idx.iter().map(|&i| &samples[i]).collect();
        let ccm = fit_refs(&train)?;

        let corrected_de = |i: usize| -> Result<f64> {
            let lab = linear_to_lab(ccm_apply(&ccm, samples[i].src))?;
            Ok(ciede2000(lab, ref_lab[i]))
        };
        let train_after: Vec<f64> = train_idx.iter().map(|&i| corrected_de(i)).collect::<Result<_>>()?;
        let mut test_before = Vec::with_capacity(test_idx.len());
        let mut test_after = Vec::with_capacity(test_idx.len());
        for &i in &test_idx {
            let d = corrected_de(i)?;
            after[i] = d;
            test_after.push(d);
            test_before.push(before[i]);
        }
        reports.push(FoldReport {
            fold,
            test_subjects: test_subjects.clone(),
            train_count: train_idx.len(),
            test_count: test_idx.len(),
            train_after: Summary::of(&train_after),
            test_before: Summary::of(&test_before),
            test_after: Summary::of(&test_after),
            ccm,
        });
    }

    let before_summary = Summary::of(&before);
    let after_summary = Summary::of(&after);
    let improvement_pct = if before_summary.mean > 0.0 {
        Some(100.0 * (1.0 - after_summary.mean / before_summary.mean))
    } else {
        None
    };
    Ok(CvReport {
        fold_count: k,
        seed,
        sample_count: samples.len(),
        folds: reports,
        before: before_summary,
        after: after_summary,
        improvement_pct,
    })
}
