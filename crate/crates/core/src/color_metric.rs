//! sRGB / CIELAB conversion under D65 and the HyAB color distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized XYZ of the D65 reference white, 2° observer.
pub const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

// Linear sRGB -> XYZ (D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const LAB_DELTA: f64 = 6.0 / 29.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Srgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Srgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Self { r: v, g: v, b: v }
    }

    /// Packs the channels into a 24-bit integer `0xRRGGBB`.
    pub fn packed(self) -> u32 {
        (u32::from(self.r) << 16) | (u32::from(self.g) << 8) | u32::from(self.b)
    }

    pub fn from_packed(v: u32) -> Self {
        Self {
            r: ((v >> 16) & 0xff) as u8,
            g: ((v >> 8) & 0xff) as u8,
            b: (v & 0xff) as u8,
        }
    }

    pub fn channels(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

fn expand_gamma(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn compress_gamma(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t.powi(3)
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// CIE 1976 L*a*b* of an sRGB color under the D65 / 2° white point.
pub fn srgb_to_lab(c: Srgb) -> Lab {
    srgb_f64_to_lab(c.channels().map(f64::from))
}

/// Like [`srgb_to_lab`] for fractional channel values on the 0..=255 scale.
pub fn srgb_f64_to_lab(c: [f64; 3]) -> Lab {
    let lin = c.map(|v| expand_gamma(v / 255.0));
    let xyz = mat_vec(&RGB_TO_XYZ, lin);
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Inverse of [`srgb_to_lab`]. Out-of-gamut values are clamped per channel.
pub fn lab_to_srgb(c: Lab) -> Srgb {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    let xyz = [
        lab_f_inv(fx) * D65_WHITE[0],
        lab_f_inv(fy) * D65_WHITE[1],
        lab_f_inv(fz) * D65_WHITE[2],
    ];
    let lin = mat_vec(&XYZ_TO_RGB, xyz);
    let to_u8 = |v: f64| (compress_gamma(v.clamp(0.0, 1.0)) * 255.0).round().clamp(0.0, 255.0) as u8;
    Srgb::new(to_u8(lin[0]), to_u8(lin[1]), to_u8(lin[2]))
}

/// HyAB distance: city-block on lightness plus Euclidean on the chromatic plane.
pub fn hyab(m: &Lab, n: &Lab) -> f64 {
    (m.l - n.l).abs() + (m.a - n.a).hypot(m.b - n.b)
}

/// An ordered set of distinct sRGB colors together with their Lab coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorSet {
    rgb: Vec<Srgb>,
    lab: Vec<Lab>,
}

impl ColorSet {
    pub fn new(rgb: Vec<Srgb>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(rgb.len());
        if let Some(dup) = rgb.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::invalid(format!("duplicate color {dup:?} in color set")));
        }
        let lab = rgb.iter().map(|&c| srgb_to_lab(c)).collect();
        Ok(Self { rgb, lab })
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    pub fn rgb(&self) -> &[Srgb] {
        &self.rgb
    }

    pub fn lab(&self) -> &[Lab] {
        &self.lab
    }
}

/// Per-channel sample values `0, step, 2*step, ..., 255`.
pub fn grid_channel_values(step: u32) -> Result<Vec<u8>> {
    if step == 0 || step > 255 || 255 % step != 0 {
        return Err(Error::invalid(format!(
            "grid step must be a positive divisor of 255, got {step}"
        )));
    }
    Ok((0..=255u32).step_by(step as usize).map(|v| v as u8).collect())
}

/// The uniform sRGB grid with the given step, in lexicographic (r, g, b) order.
pub fn sample_srgb_grid(step: u32) -> Result<ColorSet> {
    let values = grid_channel_values(step)?;
    let mut rgb = Vec::with_capacity(values.len().pow(3));
    for &r in &values {
        for &g in &values {
            for &b in &values {
                rgb.push(Srgb::new(r, g, b));
            }
        }
    }
    ColorSet::new(rgb)
}
