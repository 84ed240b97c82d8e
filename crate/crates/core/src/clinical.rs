//! Skin-colour indices computed from CIELAB: Melanin Index, Erythema Index,
//! Individual Typology Angle, and first-order ITA error propagation.

use serde::{Deserialize, Serialize};

use crate::colorspace::LabColor;
use crate::error::{Error, Result};

/// ITA values with |b*| below this are flagged as degenerate.
pub const ITA_DEGENERATE_B: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalIndices {
    pub melanin_index: f64,
    pub erythema_index: f64,
    pub ita_degrees: f64,
    /// Set when |b*| < [`ITA_DEGENERATE_B`]; the angle then rests on the
    /// b* → 0 limit convention.
    pub ita_degenerate: bool,
}

/// `100 · log10(100 / L*)`.
pub fn melanin_index(lab: LabColor) -> Result<f64> {
    if lab.l <= 0.0 || !lab.l.is_finite() {
        return Err(Error::Domain(format!(
            "melanin index needs L* > 0, got {}",
            lab.l
        )));
    }
    Ok(100.0 * (100.0 / lab.l).log10())
}

/// `a* − 0.5 · L*`.
pub fn erythema_index(lab: LabColor) -> f64 {
    lab.a - 0.5 * lab.l
}

/// Individual Typology Angle in degrees.
///
/// Evaluated as `atan2(L* − 50, max(b*, 0))`, which equals
/// `atan((L* − 50) / b*)` for b* > 0, gives ±90° at b* = 0 and 0° at
/// (50, 0), and keeps the result inside [−90°, 90°] for b* < 0.
pub fn ita(lab: LabColor) -> f64 {
    (lab.l - 50.0).atan2(lab.b.max(0.0)).to_degrees()
}

pub fn ita_is_degenerate(lab: LabColor) -> bool {
    lab.b.abs() < ITA_DEGENERATE_B
}

pub fn clinical_indices(lab: LabColor) -> Result<ClinicalIndices> {
    Ok(ClinicalIndices {
        melanin_index: melanin_index(lab)?,
        erythema_index: erythema_index(lab),
        ita_degrees: ita(lab),
        ita_degenerate: ita_is_degenerate(lab),
    })
}

/// Partial derivatives of ITA with respect to L* and b*, in degrees per
/// CIELAB unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItaSensitivity {
    pub d_ita_d_l: f64,
    pub d_ita_d_b: f64,
}

impl ItaSensitivity {
    pub fn d_ita_d_l_rad(&self) -> f64 {
        self.d_ita_d_l.to_radians()
    }

    pub fn d_ita_d_b_rad(&self) -> f64 {
        self.d_ita_d_b.to_radians()
    }

    /// First-order ITA change, in degrees, for perturbations δL*, δb*.
    pub fn predicted_ita_error(&self, delta_l: f64, delta_b: f64) -> f64 {
        self.d_ita_d_l * delta_l + self.d_ita_d_b * delta_b
    }
}

/// ∂ITA/∂L* = b*/r², ∂ITA/∂b* = −(L*−50)/r², with r² = (L*−50)² + b*².
pub fn ita_sensitivity(lab: LabColor) -> Result<ItaSensitivity> {
    let dl = lab.l - 50.0;
    let r2 = dl * dl + lab.b * lab.b;
    if r2 <= 0.0 || !r2.is_finite() {
        return Err(Error::Singularity(format!(
            "ITA gradient undefined at L* = {}, b* = {}",
            lab.l, lab.b
        )));
    }
    Ok(ItaSensitivity {
        d_ita_d_l: (lab.b / r2).to_degrees(),
        d_ita_d_b: (-dl / r2).to_degrees(),
    })
}
