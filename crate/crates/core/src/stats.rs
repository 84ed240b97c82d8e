//! Reliability statistics: ICC(3,1) and its absolute-agreement sibling,
//! Bland–Altman limits of agreement, one-way ANOVA with η², and Bonferroni
//! adjustment.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Two-sided significance level used for confidence intervals.
pub const ALPHA: f64 = 0.05;

/// z-multiplier for 95% limits of agreement.
pub const LOA_Z: f64 = 1.96;

/// Descriptive statistics of a sample. `sd` uses the n − 1 denominator and
/// quantiles interpolate linearly between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub p95: f64,
}

impl Summary {
    /// An empty slice summarises to all zeros.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: 0.0, sd: 0.0, median: 0.0, p95: 0.0 };
        }
        let mean = mean(values);
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Self {
            n,
            mean,
            sd: sample_sd(values, mean),
            median: quantile_sorted(&sorted, 0.5),
            p95: quantile_sorted(&sorted, 0.95),
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn f_dist(df1: f64, df2: f64) -> Result<FisherSnedecor> {
    FisherSnedecor::new(df1, df2)
        .map_err(|e| Error::InsufficientData(format!("F({df1}, {df2}) distribution: {e}")))
}

// ---------------------------------------------------------------------------
// ICC

/// Targets × raters table with no missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsTable {
    rows: Vec<Vec<f64>>,
}

impl RatingsTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 3 {
            return Err(Error::InsufficientData(format!("ICC needs at least 3 targets, got {n}")));
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(Error::InsufficientData(format!("ICC needs at least 2 raters, got {k}")));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::Domain(format!(
                    "ratings row {i} has {} cells, expected {k}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("ratings row {i} has a non-finite cell")));
            }
        }
        Ok(Self { rows })
    }

    pub fn targets(&self) -> usize {
        self.rows.len()
    }

    pub fn raters(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Two-way ANOVA decomposition of a ratings table without replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSquares {
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
    pub df_rows: f64,
    pub df_cols: f64,
    pub df_error: f64,
}

impl MeanSquares {
    pub fn of(t: &RatingsTable) -> Self {
        let n = t.targets();
        let k = t.raters();
        let total: f64 = t.rows.iter().flatten().sum();
        let grand = total / (n * k) as f64;
        let row_means: Vec<f64> = t.rows.iter().map(|r| mean(r)).collect();
        let col_means: Vec<f64> = (0..k)
            .map(|j| t.rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let ss_rows = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
        let ss_cols = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
        let mut ss_error = 0.0;
        for (r, rm) in t.rows.iter().zip(&row_means) {
            for (v, cm) in r.iter().zip(&col_means) {
                ss_error += (v - rm - cm + grand).powi(2);
            }
        }
        let df_rows = (n - 1) as f64;
        let df_cols = (k - 1) as f64;
        let df_error = df_rows * df_cols;
        Self {
            ms_rows: ss_rows / df_rows,
            ms_cols: ss_cols / df_cols,
            ms_error: ss_error / df_error,
            df_rows,
            df_cols,
            df_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IccForm {
    /// ICC(3,1): two-way mixed, single rater, consistency.
    Consistency,
    /// ICC(A,1): two-way mixed, single rater, absolute agreement.
    AbsoluteAgreement,
}

impl IccForm {
    pub fn label(self) -> &'static str {
        match self {
            IccForm::Consistency => "ICC(3,1) consistency",
            IccForm::AbsoluteAgreement => "ICC(A,1) absolute agreement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IccLabel {
    Poor,
    Moderate,
    Good,
    Excellent,
}

impl IccLabel {
    /// < 0.50 poor, 0.50–0.75 moderate, 0.75–0.90 good, > 0.90 excellent.
    pub fn of(icc: f64) -> Self {
        if icc < 0.50 {
            IccLabel::Poor
        } else if icc < 0.75 {
            IccLabel::Moderate
        } else if icc <= 0.90 {
            IccLabel::Good
        } else {
            IccLabel::Excellent
        }
    }
}

impl fmt::Display for IccLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IccLabel::Poor => "Poor",
            IccLabel::Moderate => "Moderate",
            IccLabel::Good => "Good",
            IccLabel::Excellent => "Excellent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub form: IccForm,
    pub icc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub interpretation: IccLabel,
    pub targets: usize,
    pub raters: usize,
}

pub fn icc_3_1(t: &RatingsTable) -> Result<IccResult> {
    icc(t, IccForm::Consistency)
}

/// Single-rater ICC with a 95% F-based confidence interval.
///
/// Consistency: `(MSR − MSE) / (MSR + (k−1)·MSE)`. Absolute agreement adds
/// `k·(MSC − MSE)/n` to the denominator and uses the Satterthwaite interval.
pub fn icc(t: &RatingsTable, form: IccForm) -> Result<IccResult> {
    let ms = MeanSquares::of(t);
    let n = t.targets() as f64;
    let k = t.raters() as f64;
    if ms.ms_rows == 0.0 && ms.ms_error == 0.0 {
        return Err(Error::Undefined(
            "ICC undefined: no between-target and no residual variance".into(),
        ));
    }
    let (value, lo, hi) = match form {
        IccForm::Consistency => {
            let value = (ms.ms_rows - ms.ms_error) / (ms.ms_rows + (k - 1.0) * ms.ms_error);
            if ms.ms_error == 0.0 {
                (value, value, value)
            } else {
                let f0 = ms.ms_rows / ms.ms_error;
                let q = 1.0 - ALPHA / 2.0;
                let f_lower = f0 / f_dist(ms.df_rows, ms.df_error)?.inverse_cdf(q);
                let f_upper = f0 * f_dist(ms.df_error, ms.df_rows)?.inverse_cdf(q);
                (
                    value,
                    (f_lower - 1.0) / (f_lower + k - 1.0),
                    (f_upper - 1.0) / (f_upper + k - 1.0),
                )
            }
        }
        IccForm::AbsoluteAgreement => {
            let (msr, msc, mse) = (ms.ms_rows, ms.ms_cols, ms.ms_error);
            let denom = msr + (k - 1.0) * mse + k * (msc - mse) / n;
            if denom == 0.0 {
                return Err(Error::Undefined("ICC(A,1) denominator is zero".into()));
            }
            let value = (msr - mse) / denom;
            if mse == 0.0 {
                (value, value, value)
            } else {
                let fc = msc / mse;
                let spread = n * (1.0 + (k - 1.0) * value) - k * value;
                let v = (k - 1.0) * (n - 1.0) * (k * value * fc + spread).powi(2)
                    / ((n - 1.0) * k * k * value * value * fc * fc + spread * spread);
                let q = 1.0 - ALPHA / 2.0;
                let f_upper = f_dist(n - 1.0, v)?.inverse_cdf(q);
                let f_lower = f_dist(v, n - 1.0)?.inverse_cdf(q);
                let common = k * msc + (k * n - k - n) * mse;
                let lo = n * (msr - f_upper * mse) / (f_upper * common + n * msr);
                let hi = n * (f_lower * msr - mse) / (common + n * f_lower * msr);
                (value, lo, hi)
            }
        }
    };
    Ok(IccResult {
        form,
        icc: value,
        ci_low: lo,
        ci_high: hi,
        interpretation: IccLabel::of(value),
        targets: t.targets(),
        raters: t.raters(),
    })
}

// ---------------------------------------------------------------------------
// Bland–Altman

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub n: usize,
    /// Mean of `x − y`.
    pub bias: f64,
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Per-pair `x − y`, in input order.
    pub differences: Vec<f64>,
    /// Per-pair `(x + y) / 2`, in input order.
    pub means: Vec<f64>,
}

pub fn bland_altman(x: &[f64], y: &[f64]) -> Result<BlandAltman> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "Bland-Altman inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "Bland-Altman needs at least 2 pairs, got {}",
            x.len()
        )));
    }
    let differences: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let means: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a + b) / 2.0).collect();
    let bias = mean(&differences);
    let sd = sample_sd(&differences, bias);
    Ok(BlandAltman {
        n: x.len(),
        bias,
        sd,
        loa_low: bias - LOA_Z * sd,
        loa_high: bias + LOA_Z * sd,
        differences,
        means,
    })
}

// ---------------------------------------------------------------------------
// ANOVA

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSize {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectSize {
    /// η² < 0.01 negligible, < 0.06 small, < 0.14 medium, otherwise large.
    pub fn of(eta_squared: f64) -> Self {
        if eta_squared < 0.01 {
            EffectSize::Negligible
        } else if eta_squared < 0.06 {
            EffectSize::Small
        } else if eta_squared < 0.14 {
            EffectSize::Medium
        } else {
            EffectSize::Large
        }
    }
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectSize::Negligible => "Negligible",
            EffectSize::Small => "Small",
            EffectSize::Medium => "Medium",
            EffectSize::Large => "Large",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub factor: String,
    pub groups: usize,
    pub n: usize,
    pub df_between: f64,
    pub df_within: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    /// `None` when the within-group variance is exactly zero.
    pub f_statistic: Option<f64>,
    pub p_value: f64,
    pub eta_squared: f64,
    pub effect_size: EffectSize,
}

/// One-way ANOVA of `values` grouped by `labels`.
pub fn anova_eta2<S: AsRef<str>>(factor: &str, values: &[f64], labels: &[S]) -> Result<AnovaRow> {
    if values.len() != labels.len() {
        return Err(Error::Domain(format!(
            "ANOVA: {} values but {} labels",
            values.len(),
            labels.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("ANOVA: non-finite observation".into()));
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (v, l) in values.iter().zip(labels) {
        groups.entry(l.as_ref()).or_default().push(*v);
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ANOVA on `{factor}` needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((name, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "ANOVA on `{factor}`: group `{name}` has {} observation(s)",
            g.len()
        )));
    }
    let n = values.len();
    let grand = mean(values);
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups.values() {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    if ss_between == 0.0 && ss_within == 0.0 {
        return Err(Error::Undefined(format!(
            "ANOVA on `{factor}`: all observations are identical"
        )));
    }
    let df_between = (groups.len() - 1) as f64;
    let df_within = (n - groups.len()) as f64;
    let eta_squared = ss_between / (ss_between + ss_within);
    let (f_statistic, p_value) = if ss_within == 0.0 {
        (None, 0.0)
    } else {
        let f = (ss_between / df_between) / (ss_within / df_within);
        (Some(f), f_dist(df_between, df_within)?.sf(f))
    };
    Ok(AnovaRow {
        factor: factor.to_string(),
        groups: groups.len(),
        n,
        df_between,
        df_within,
        ss_between,
        ss_within,
        f_statistic,
        p_value,
        eta_squared,
        effect_size: EffectSize::of(eta_squared),
    })
}

// ---------------------------------------------------------------------------
// Bonferroni

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonferroniDecision {
    pub p_value: f64,
    pub adjusted: f64,
    /// `p < alpha / m`; equality is not significant.
    pub significant: bool,
}

pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<BonferroniDecision>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = p_values.len() as f64;
    p_values
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
            }
            Ok(BonferroniDecision {
                p_value: p,
                adjusted: (m * p).min(1.0),
                significant: p < alpha / m,
            })
        })
        .collect()
}
