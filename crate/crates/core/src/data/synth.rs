//! Procedural "faces" with analytically invertible age cues.
//!
//! Geometry is defined on a 64-unit canvas and scaled to the requested side.
//! Age cues: skin-to-background contrast falls linearly with age, the face
//! carries `⌊age/10⌋` concentric rings, and a hair band fades from dark to
//! light. Identity cues: face eccentricity and height, plus three coloured
//! marker spots.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::Image;
use crate::error::{Error, Result};

pub const MIN_AGE: f64 = 15.0;
pub const MAX_AGE: f64 = 70.0;

pub(crate) const UNITS: f64 = 64.0;
pub(crate) const BACKGROUND: f64 = -0.6;
pub(crate) const CENTER: (f64, f64) = (35.0, 32.0);
pub(crate) const SKIN_TINT: [f64; 3] = [1.0, 0.95, 0.9];
pub(crate) const CONTRAST_YOUNG: f64 = 0.9;
pub(crate) const CONTRAST_SPAN: f64 = 0.6;
pub(crate) const RING_DARKEN: f64 = 0.35;
pub(crate) const HAIR_DARK: [f64; 3] = [-0.85, -0.9, -0.95];
pub(crate) const HAIR_LIGHT: [f64; 3] = [0.85, 0.85, 0.85];
/// Rows `(2, 9)` and columns `(14, 50)` in canvas units, exclusive.
pub(crate) const HAIR_BAND: ((f64, f64), (f64, f64)) = ((2.0, 9.0), (14.0, 50.0));
pub(crate) const MARKER_RADIUS: f64 = 3.0;
const MARKER_COUNT: usize = 3;
const MARKER_MIN_SEPARATION: f64 = 9.0;

/// Normalized radius of ring `k`.
pub(crate) fn ring_radius(k: usize) -> f64 {
    0.2 + 0.11 * k as f64
}

/// Position of `age` along the young→old axis, `0` at 15 and `1` at 70.
pub(crate) fn age_fraction(age: f64) -> f64 {
    (age - MIN_AGE) / (MAX_AGE - MIN_AGE)
}

pub(crate) fn fraction_age(f: f64) -> f64 {
    MIN_AGE + f * (MAX_AGE - MIN_AGE)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFaceSpec {
    pub identity_seed: u64,
    pub age: f64,
    /// Output side in pixels.
    pub canvas: usize,
}

impl SyntheticFaceSpec {
    pub fn new(identity_seed: u64, age: f64, canvas: usize) -> Result<Self> {
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            return Err(Error::Validation(format!("synthetic age {age} outside [{MIN_AGE}, {MAX_AGE}]")));
        }
        if canvas < 16 {
            return Err(Error::Validation(format!("canvas of {canvas} pixels is too small")));
        }
        Ok(Self { identity_seed, age, canvas })
    }
}

/// Marker centres in normalized `(row, col)` image coordinates and their
/// hues in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityMarkers {
    pub positions: Vec<(f64, f64)>,
    pub hues: Vec<f64>,
}

/// Age-independent appearance of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTraits {
    /// Horizontal over vertical semi-axis.
    pub eccentricity: f64,
    /// Vertical semi-axis in canvas units.
    pub half_height: f64,
    pub markers: IdentityMarkers,
}

impl IdentityTraits {
    pub fn half_width(&self) -> f64 {
        self.half_height * self.eccentricity
    }
}

pub fn identity_traits(identity_seed: u64) -> IdentityTraits {
    let mut rng = ChaCha8Rng::seed_from_u64(identity_seed);
    let eccentricity = rng.random_range(0.72..0.9);
    let half_height = rng.random_range(21.0..24.0);
    let half_width = half_height * eccentricity;
    let mut centres: Vec<(f64, f64)> = Vec::with_capacity(MARKER_COUNT);
    while centres.len() < MARKER_COUNT {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.45..0.75);
        let c = (CENTER.0 + angle.sin() * rad * half_height, CENTER.1 + angle.cos() * rad * half_width);
        if centres.iter().all(|o| ((o.0 - c.0).powi(2) + (o.1 - c.1).powi(2)).sqrt() >= MARKER_MIN_SEPARATION) {
            centres.push(c);
        }
    }
    let hues = (0..MARKER_COUNT).map(|_| rng.random_range(0.0..1.0)).collect();
    let positions = centres.into_iter().map(|(r, c)| (r / UNITS, c / UNITS)).collect();
    IdentityTraits { eccentricity, half_height, markers: IdentityMarkers { positions, hues } }
}

/// Fully saturated, full-value colour for `hue ∈ [0, 1)`, in `[-1, 1]`.
pub fn hue_color(hue: f64) -> [f64; 3] {
    [5.0, 3.0, 1.0].map(|k: f64| {
        let q = (k + hue * 6.0).rem_euclid(6.0);
        let c = 1.0 - q.min(4.0 - q).clamp(0.0, 1.0);
        2.0 * c - 1.0
    })
}

fn mix(a: [f64; 3], b: [f64; 3], w: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] * (1.0 - w) + b[c] * w)
}

/// Renders one face. Pure in `spec`.
pub fn synthesize_face(spec: &SyntheticFaceSpec) -> Image {
    let traits = identity_traits(spec.identity_seed);
    let side = spec.canvas;
    let scale = side as f64 / UNITS;
    let (ry, rx) = (traits.half_height, traits.half_width());
    let f = age_fraction(spec.age);
    let skin_level = BACKGROUND + CONTRAST_YOUNG - CONTRAST_SPAN * f;
    let skin = SKIN_TINT.map(|t| skin_level * t);
    let rings = (spec.age / 10.0).floor() as usize;
    let hair = mix(HAIR_DARK, HAIR_LIGHT, f);
    let markers: Vec<((f64, f64), [f64; 3])> = traits
        .markers
        .positions
        .iter()
        .zip(&traits.markers.hues)
        .map(|(&(r, c), &h)| ((r * UNITS, c * UNITS), hue_color(h)))
        .collect();
    let ((band_r0, band_r1), (band_c0, band_c1)) = HAIR_BAND;

    let mut img = Image::filled(side, 0.0);
    for row in 0..side {
        let y = (row as f64 + 0.5) / scale;
        for col in 0..side {
            let x = (col as f64 + 0.5) / scale;
            let d = (((x - CENTER.1) / rx).powi(2) + ((y - CENTER.0) / ry).powi(2)).sqrt();
            let cover = ((1.0 - d) * ry + 0.5).clamp(0.0, 1.0);
            let mut px = mix([BACKGROUND; 3], skin, cover);
            for k in 0..rings {
                let ring = (1.0 - (d - ring_radius(k)).abs() * ry).clamp(0.0, 1.0);
                for v in &mut px {
                    *v -= RING_DARKEN * ring;
                }
            }
            if y > band_r0 && y < band_r1 && x > band_c0 && x < band_c1 {
                px = hair;
            }
            for &((my, mx), color) in &markers {
                let dm = ((x - mx).powi(2) + (y - my).powi(2)).sqrt();
                let w = (MARKER_RADIUS - dm + 0.5).clamp(0.0, 1.0);
                px = mix(px, color, w);
            }
            for (c, v) in px.iter().enumerate() {
                img.set(c, row, col, v.clamp(-1.0, 1.0) as f32);
            }
        }
    }
    img
}
