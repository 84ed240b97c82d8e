//! sRGB / linear RGB / CIE XYZ / CIELAB conversions (D65, 2° observer) and
//! the CIEDE2000 colour difference.
//!
//! Constants are frozen here and referenced by every test:
//!
//! * RGB→XYZ matrix: the IEC 61966-2-1 primaries at seven decimals. Its row
//!   sums reproduce [`D65_WHITE`] to within 1e-7, so neutral linear RGB maps
//!   onto the achromatic axis.
//! * White point: `(0.95047, 1.00000, 1.08883)`.
//! * The sRGB transfer curve switches between its linear and power pieces at
//!   [`SRGB_DECODE_THRESHOLD`], the point where the two pieces intersect.
//!   This sits 1.8e-6 below the commonly printed 0.04045 and makes the curve
//!   continuous to machine precision; no 8, 10 or 12-bit code value lies in
//!   between.
//! * 8-bit code values are ingested as `v / 255` with no half-step offset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-light RGB to XYZ for sRGB primaries and a D65 white.
pub const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Inverse of [`RGB_TO_XYZ`], printed to the precision needed for 1e-12
/// roundtrips.
pub const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.240_454_836_021_408_5, -1.537_138_850_102_575, -0.498_531_546_868_480_9],
    [-0.969_266_389_875_653_8, 1.876_010_928_842_491_2, 0.041_556_082_346_673_53],
    [0.055_643_419_604_213_66, -0.204_025_854_267_698_14, 1.057_225_162_457_928_8],
];

/// D65 reference white (Y normalised to 1).
pub const D65_WHITE: [f64; 3] = [0.95047, 1.00000, 1.08883];

/// Encoded-domain switch point of the sRGB transfer curve.
pub const SRGB_DECODE_THRESHOLD: f64 = 0.040_448_236_277_108_19;
/// Linear-domain switch point, `SRGB_DECODE_THRESHOLD / 12.92`.
pub const SRGB_ENCODE_THRESHOLD: f64 = 0.003_130_668_442_500_634;

const LAB_DELTA: f64 = 6.0 / 29.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrgbColor {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XyzColor {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl SrgbColor {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    /// 8-bit code values, divided by 255 exactly.
    pub fn from_u8(r: u8, g: u8, b: u8) -> Self {
        Self::new(r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

impl LinearRgb {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

impl XyzColor {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.a.is_finite() && self.b.is_finite()
    }
}

const CHANNELS: [&str; 3] = ["r", "g", "b"];

fn decode_component(v: f64) -> f64 {
    if v <= SRGB_DECODE_THRESHOLD {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn encode_component(v: f64) -> f64 {
    if v <= SRGB_ENCODE_THRESHOLD {
        v * 12.92
    } else if v >= 1.0 {
        // 1.055 - 0.055 rounds to 0.9999999999999999
        1.0
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// sRGB electro-optical transfer: display-referred values to linear light.
pub fn srgb_decode(c: SrgbColor) -> Result<LinearRgb> {
    let mut out = [0.0; 3];
    for (i, v) in c.to_array().into_iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!(
                "sRGB channel {} = {v} outside [0, 1]",
                CHANNELS[i]
            )));
        }
        out[i] = decode_component(v).max(0.0);
    }
    Ok(LinearRgb::from_array(out))
}

/// Inverse of [`srgb_decode`]. Components above 1 are clipped before encoding.
pub fn srgb_encode(c: LinearRgb) -> Result<SrgbColor> {
    let mut out = [0.0; 3];
    for (i, v) in c.to_array().into_iter().enumerate() {
        if v.is_nan() || v < 0.0 {
            return Err(Error::Domain(format!(
                "linear channel {} = {v} is negative",
                CHANNELS[i]
            )));
        }
        out[i] = encode_component(v.min(1.0));
    }
    Ok(SrgbColor::new(out[0], out[1], out[2]))
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn require_finite(v: [f64; 3], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite {what} component: {v:?}")))
    }
}

pub fn linear_to_xyz(c: LinearRgb) -> Result<XyzColor> {
    let v = c.to_array();
    require_finite(v, "linear RGB")?;
    let [x, y, z] = mat_vec(&RGB_TO_XYZ, v);
    Ok(XyzColor::new(x, y, z))
}

/// Inverse of [`linear_to_xyz`]. The result may leave the unit cube for
/// out-of-gamut XYZ; callers clip according to their own policy.
pub fn xyz_to_linear(c: XyzColor) -> Result<LinearRgb> {
    let v = c.to_array();
    require_finite(v, "XYZ")?;
    Ok(LinearRgb::from_array(mat_vec(&XYZ_TO_RGB, v)))
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA * LAB_DELTA * LAB_DELTA {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

pub fn xyz_to_lab(c: XyzColor) -> Result<LabColor> {
    let v = c.to_array();
    require_finite(v, "XYZ")?;
    let fx = lab_f(v[0] / D65_WHITE[0]);
    let fy = lab_f(v[1] / D65_WHITE[1]);
    let fz = lab_f(v[2] / D65_WHITE[2]);
    Ok(LabColor::new(
        116.0 * fy - 16.0,
        500.0 * (fx - fy),
        200.0 * (fy - fz),
    ))
}

pub fn lab_to_xyz(c: LabColor) -> Result<XyzColor> {
    require_finite(c.to_array(), "Lab")?;
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    Ok(XyzColor::new(
        lab_f_inv(fx) * D65_WHITE[0],
        lab_f_inv(fy) * D65_WHITE[1],
        lab_f_inv(fz) * D65_WHITE[2],
    ))
}

pub fn linear_to_lab(c: LinearRgb) -> Result<LabColor> {
    xyz_to_lab(linear_to_xyz(c)?)
}

pub fn lab_to_linear(c: LabColor) -> Result<LinearRgb> {
    xyz_to_linear(lab_to_xyz(c)?)
}

pub fn srgb_to_lab(c: SrgbColor) -> Result<LabColor> {
    linear_to_lab(srgb_decode(c)?)
}

/// CIEDE2000 colour difference with `k_L = k_C = k_H = 1`.
///
/// Hue means and differences follow the published reference notes, including
/// the `|h1 - h2| > 180°` wrap and the zero-chroma conventions, so the result
/// reproduces the standard test-pair table to its printed four decimals.
pub fn ciede2000(x: LabColor, y: LabColor) -> f64 {
    let (l1, a1, b1) = (x.l, x.a, x.b);
    let (l2, a2, b2) = (y.l, y.a, y.b);

    let c1 = a1.hypot(b1);
    let c2 = a2.hypot(b2);
    let c_bar7 = ((c1 + c2) / 2.0).powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + 25f64.powi(7))).sqrt());

    let a1p = (1.0 + g) * a1;
    let a2p = (1.0 + g) * a2;
    let c1p = a1p.hypot(b1);
    let c2p = a2p.hypot(b2);
    let h1p = hue_degrees(b1, a1p);
    let h2p = hue_degrees(b2, a2p);

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;
    let dh_angle = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh = 2.0 * chroma_product.sqrt() * (dh_angle.to_radians() / 2.0).sin();

    let l_bar = (l1 + l2) / 2.0;
    let c_bar_p = (c1p + c2p) / 2.0;
    let h_bar_p = if chroma_product == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * (h_bar_p - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar_p).to_radians().cos()
        + 0.32 * (3.0 * h_bar_p + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar_p - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((h_bar_p - 275.0) / 25.0).powi(2)).exp();
    let c_bar_p7 = c_bar_p.powi(7);
    let r_c = 2.0 * (c_bar_p7 / (c_bar_p7 + 25f64.powi(7))).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_p;
    let s_h = 1.0 + 0.015 * c_bar_p * t;
    let r_t = -(2.0 * d_theta).to_radians().sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

fn hue_degrees(b: f64, a_prime: f64) -> f64 {
    if b == 0.0 && a_prime == 0.0 {
        return 0.0;
    }
    let h = b.atan2(a_prime).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_fixed_points_and_mid_gray() {
        let z = srgb_decode(SrgbColor::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(z.to_array(), [0.0; 3]);
        let w = srgb_decode(SrgbColor::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(w.to_array(), [1.0; 3]);
        // ((0.5 + 0.055) / 1.055)^2.4 at 40 digits: 0.21404114048223244...
        let m = srgb_decode(SrgbColor::new(0.5, 0.5, 0.5)).unwrap();
        for v in m.to_array() {
            assert!((v - 0.214_041_140_482_232_44).abs() < 1e-15);
        }
    }

    #[test]
    fn decode_rejects_out_of_range_and_names_channel() {
        let err = srgb_decode(SrgbColor::new(0.2, 1.2, 0.3)).unwrap_err();
        assert!(err.to_string().contains("channel g"), "{err}");
        assert!(srgb_decode(SrgbColor::new(-0.01, 0.0, 0.0)).is_err());
    }

    #[test]
    fn encode_inverse_and_clipping() {
        let e = srgb_encode(LinearRgb::new(0.214_04, 0.214_04, 0.214_04)).unwrap();
        for v in e.to_array() {
            assert!((v - 0.5).abs() < 1e-5);
        }
        let clipped = srgb_encode(LinearRgb::new(1.7, 0.0, 1.0)).unwrap();
        assert_eq!(clipped.r, 1.0);
        assert_eq!(clipped.g, 0.0);
        let err = srgb_encode(LinearRgb::new(0.1, 0.1, -1e-3)).unwrap_err();
        assert!(err.to_string().contains("channel b"));
    }

    #[test]
    fn roundtrip_on_tenths() {
        for i in 1..=9 {
            let v = i as f64 / 10.0;
            let back = srgb_encode(srgb_decode(SrgbColor::new(v, v, v)).unwrap()).unwrap();
            assert!((back.r - v).abs() < 1e-9);
        }
    }

    #[test]
    fn transfer_curve_pieces_meet() {
        let t = SRGB_DECODE_THRESHOLD;
        let linear = t / 12.92;
        let power = ((t + 0.055) / 1.055).powf(2.4);
        assert!((linear - power).abs() < 1e-9);
        assert!((SRGB_ENCODE_THRESHOLD - linear).abs() < 1e-15);
        let d3 = LAB_DELTA.powi(3);
        assert!((d3.cbrt() - (d3 / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0)).abs() < 1e-9);
    }

    #[test]
    fn matrix_inverse_is_consistent() {
        for col in 0..3 {
            let mut e = [0.0; 3];
            e[col] = 1.0;
            let back = mat_vec(&XYZ_TO_RGB, mat_vec(&RGB_TO_XYZ, e));
            for (i, v) in back.iter().enumerate() {
                let expect = if i == col { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12, "{back:?}");
            }
        }
    }

    #[test]
    fn linear_to_xyz_examples() {
        let w = linear_to_xyz(LinearRgb::new(1.0, 1.0, 1.0)).unwrap();
        assert!((w.x - 0.9505).abs() < 1e-4);
        assert!((w.y - 1.0).abs() < 1e-4);
        assert!((w.z - 1.0890).abs() < 1e-3);
        let r = linear_to_xyz(LinearRgb::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(r.to_array(), [RGB_TO_XYZ[0][0], RGB_TO_XYZ[1][0], RGB_TO_XYZ[2][0]]);
        assert!(linear_to_xyz(LinearRgb::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn xyz_to_lab_examples() {
        let white = xyz_to_lab(XyzColor::new(D65_WHITE[0], D65_WHITE[1], D65_WHITE[2])).unwrap();
        assert!((white.l - 100.0).abs() < 1e-12 && white.a.abs() < 1e-12 && white.b.abs() < 1e-12);
        let black = xyz_to_lab(XyzColor::new(0.0, 0.0, 0.0)).unwrap();
        assert!(black.l.abs() < 1e-12 && black.a.abs() < 1e-12 && black.b.abs() < 1e-12);
        // Y = ((50 + 16) / 116)^3 = 0.184186518...
        let g = 0.184_19;
        let gray = linear_to_lab(LinearRgb::new(g, g, g)).unwrap();
        assert!((gray.l - 50.0).abs() < 0.05, "{gray:?}");
    }

    #[test]
    fn srgb_to_lab_examples() {
        let w = srgb_to_lab(SrgbColor::new(1.0, 1.0, 1.0)).unwrap();
        assert!((w.l - 100.0).abs() < 0.01 && w.a.abs() < 0.01 && w.b.abs() < 0.01);
        let k = srgb_to_lab(SrgbColor::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(k.l, 0.0);
        let mut last = -1.0;
        for i in 0..=255u8 {
            let lab = srgb_to_lab(SrgbColor::from_u8(i, i, i)).unwrap();
            assert!(lab.a.abs() < 0.01 && lab.b.abs() < 0.01);
            assert!(lab.l > last);
            last = lab.l;
        }
    }

    #[test]
    fn lab_inverse_roundtrip() {
        let lab = LabColor::new(81.35, 7.95, 17.59);
        let back = linear_to_lab(lab_to_linear(lab).unwrap()).unwrap();
        for (x, y) in back.to_array().iter().zip(lab.to_array()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn ciede2000_first_reference_pair() {
        let d = ciede2000(
            LabColor::new(50.0, 2.6772, -79.7751),
            LabColor::new(50.0, 0.0, -82.7485),
        );
        assert!((d - 2.0425).abs() < 1e-4);
    }

    #[test]
    fn ciede2000_identity_and_symmetry() {
        let x = LabColor::new(63.0, 12.0, 18.5);
        assert_eq!(ciede2000(x, x), 0.0);
        let y = LabColor::new(58.0, 9.0, 11.0);
        assert!((ciede2000(x, y) - ciede2000(y, x)).abs() < 1e-12);
    }
}
