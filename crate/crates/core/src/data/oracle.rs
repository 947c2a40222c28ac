//! Analytic readers for synthetic faces, independent of any learned model.
use super::image::Image;
use super::synth::{
    fraction_age, ring_radius, CENTER, CONTRAST_SPAN, CONTRAST_YOUNG, HAIR_BAND, HAIR_DARK,
    HAIR_LIGHT, RING_DARKEN, UNITS,
};

/// Returned by [`oracle_identity_distance`] when markers cannot be found.
pub const IDENTITY_DISTANCE_SENTINEL: f64 = 1.0;

/// Weight of the ring-count estimate relative to the two continuous cues.
const RING_WEIGHT: f64 = 0.1;
const MAX_RINGS: usize = 8;
/// Minimum channel spread (max − min) of a marker pixel.
const MARKER_SATURATION: f32 = 0.8;
const MAX_MARKERS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeFeatures {
    pub contrast_age: f64,
    pub hair_age: f64,
    pub rings: usize,
}

impl AgeFeatures {
    /// Weighted least-squares fusion of the three per-cue ages.
    pub fn combined(&self) -> f64 {
        let ring_age = 10.0 * self.rings as f64 + 5.0;
        (self.contrast_age + self.hair_age + RING_WEIGHT * ring_age) / (2.0 + RING_WEIGHT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgeReadout {
    Age(f64),
    Unreadable,
}

impl AgeReadout {
    pub fn age(self) -> Option<f64> {
        match self {
            AgeReadout::Age(a) => Some(a),
            AgeReadout::Unreadable => None,
        }
    }
}

struct Canvas<'a> {
    img: &'a Image,
    scale: f64,
}

impl Canvas<'_> {
    fn side(&self) -> usize {
        self.img.side()
    }

    /// Pixel index covering canvas coordinate `u`.
    fn px(&self, u: f64) -> usize {
        ((u * self.scale) as usize).min(self.side() - 1)
    }

    /// Canvas coordinate of pixel centre `i`.
    fn unit(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.scale
    }

    fn red(&self, row: usize, col: usize) -> f64 {
        self.img.get(0, row, col) as f64
    }

    fn saturation(&self, row: usize, col: usize) -> f32 {
        let p = self.img.pixel(row, col);
        p.iter().copied().fold(f32::MIN, f32::max) - p.iter().copied().fold(f32::MAX, f32::min)
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Distance from the face centre to where the red channel first rises above
/// `level`, scanning pixel centres inward along one axis.
fn edge_distance(c: &Canvas, level: f64, axis_row: bool, sign: f64) -> Option<f64> {
    let (cy, cx) = CENTER;
    let (fixed, origin) = if axis_row { (c.px(cy), cx) } else { (c.px(cx), cy) };
    let mut samples: Vec<(f64, f64)> = (0..c.side())
        .map(|i| {
            let t = (c.unit(i) - origin) * sign;
            let v = if axis_row { c.red(fixed, i) } else { c.red(i, fixed) };
            (t, v)
        })
        .filter(|&(t, _)| t >= 0.0)
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut prev: Option<(f64, f64)> = None;
    for (t, v) in samples {
        if v > level {
            return Some(match prev {
                Some((pt, pv)) if pv != v => t + (pt - t) * (v - level) / (v - pv),
                _ => t,
            });
        }
        prev = Some((t, v));
    }
    None
}

/// Per-cue age estimates, or `None` when the image does not look like a
/// synthetic face.
pub fn age_features(img: &Image) -> Option<AgeFeatures> {
    let side = img.side();
    if side < 16 {
        return None;
    }
    let c = Canvas { img, scale: side as f64 / UNITS };
    let patch = |r0: f64, c0: f64| {
        let mut v = Vec::new();
        for row in c.px(r0)..c.px(r0 + 5.0) {
            for col in c.px(c0)..c.px(c0 + 5.0) {
                v.push(c.red(row, col));
            }
        }
        v
    };
    let mut corners = patch(1.0, 1.0);
    corners.extend(patch(1.0, 58.0));
    corners.extend(patch(58.0, 1.0));
    corners.extend(patch(58.0, 58.0));
    let bg = median(corners)?;

    let (cy, cx) = CENTER;
    let mut centre = Vec::new();
    for row in c.px(cy - 3.0)..=c.px(cy + 3.0) {
        for col in c.px(cx - 3.0)..=c.px(cx + 3.0) {
            if (c.unit(row) - cy).powi(2) + (c.unit(col) - cx).powi(2) <= 9.0 {
                centre.push(c.red(row, col));
            }
        }
    }
    let skin = median(centre)?;
    let contrast = skin - bg;
    if !(0.1..=1.3).contains(&contrast) {
        return None;
    }
    let fc = (CONTRAST_YOUNG - contrast) / CONTRAST_SPAN;

    let ((br0, br1), (bc0, bc1)) = HAIR_BAND;
    let mut band = [0f64; 3];
    let mut n = 0.0;
    for row in c.px(br0 + 2.0)..c.px(br1 - 1.0) {
        for col in c.px(bc0 + 2.0)..c.px(bc1 - 1.0) {
            for (ch, b) in band.iter_mut().enumerate() {
                *b += img.get(ch, row, col) as f64;
            }
            n += 1.0;
        }
    }
    if n == 0.0 {
        return None;
    }
    let dv: Vec<f64> = (0..3).map(|i| HAIR_LIGHT[i] - HAIR_DARK[i]).collect();
    let num: f64 = (0..3).map(|i| (band[i] / n - HAIR_DARK[i]) * dv[i]).sum();
    let fh = num / dv.iter().map(|d| d * d).sum::<f64>();
    if !(-0.5..=1.5).contains(&fc) || !(-0.5..=1.5).contains(&fh) {
        return None;
    }

    let level = bg + 0.5 * contrast;
    let left = edge_distance(&c, level, true, -1.0)?;
    let right = edge_distance(&c, level, true, 1.0)?;
    let bottom = edge_distance(&c, level, false, 1.0)?;
    let rx = 0.5 * (left + right);
    let ry = bottom;
    if rx < 5.0 || ry < 5.0 {
        return None;
    }
    let rings = count_rings(&c, rx, ry);

    Some(AgeFeatures { contrast_age: fraction_age(fc), hair_age: fraction_age(fh), rings })
}

/// Counts ring slots whose core is darker than the gaps on either side.
fn count_rings(c: &Canvas, rx: f64, ry: f64) -> usize {
    let (cy, cx) = CENTER;
    let half_gap = 0.055;
    let mut core = vec![(0.0, 0usize); MAX_RINGS];
    let mut gap = vec![(0.0, 0usize); MAX_RINGS + 1];
    for row in 0..c.side() {
        for col in 0..c.side() {
            if c.saturation(row, col) > 0.3 {
                continue;
            }
            let (y, x) = (c.unit(row), c.unit(col));
            let d = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
            let v = c.red(row, col);
            for k in 0..MAX_RINGS {
                if ((d - ring_radius(k)) * ry).abs() < 0.35 {
                    core[k].0 += v;
                    core[k].1 += 1;
                }
            }
            for (k, g) in gap.iter_mut().enumerate() {
                if ((d - (ring_radius(k) - half_gap)) * ry).abs() < 0.35 {
                    g.0 += v;
                    g.1 += 1;
                }
            }
        }
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { None } else { Some(s / n as f64) };
    (0..MAX_RINGS)
        .filter(|&k| match (mean(core[k]), mean(gap[k]), mean(gap[k + 1])) {
            (Some(r), Some(a), Some(b)) => 0.5 * (a + b) - r > 0.5 * RING_DARKEN,
            _ => false,
        })
        .count()
}

/// Combined age estimate of a synthetic face.
pub fn oracle_age_readout(img: &Image) -> AgeReadout {
    match age_features(img) {
        Some(f) => AgeReadout::Age(f.combined()),
        None => AgeReadout::Unreadable,
    }
}

/// A detected marker: normalized `(row, col)` centroid and mean hue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedMarker {
    pub position: (f64, f64),
    pub hue: f64,
    pub pixels: usize,
}

/// HSV hue in `[0, 1)` of an RGB triple given in `[-1, 1]`.
pub fn rgb_hue(rgb: [f64; 3]) -> f64 {
    let [r, g, b] = rgb.map(|v| (v + 1.0) / 2.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta <= 0.0 {
        return 0.0;
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0).rem_euclid(1.0)
}

/// Strongly saturated 8-connected blobs, largest first.
pub fn detect_markers(img: &Image) -> Vec<DetectedMarker> {
    let side = img.side();
    let scale = side as f64 / UNITS;
    let min_pixels = ((3.0 * scale * scale).round() as usize).max(2);
    let sat = |row: usize, col: usize| {
        let p = img.pixel(row, col);
        p.iter().copied().fold(f32::MIN, f32::max) - p.iter().copied().fold(f32::MAX, f32::min)
    };
    let mut seen = vec![false; side * side];
    let mut out = Vec::new();
    for start in 0..side * side {
        if seen[start] || sat(start / side, start % side) <= MARKER_SATURATION {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let (mut w_sum, mut r_sum, mut c_sum) = (0.0, 0.0, 0.0);
        let mut rgb = [0f64; 3];
        let mut count = 0;
        while let Some(i) = stack.pop() {
            let (row, col) = (i / side, i % side);
            let w = (sat(row, col) - MARKER_SATURATION) as f64;
            w_sum += w;
            r_sum += w * (row as f64 + 0.5);
            c_sum += w * (col as f64 + 0.5);
            for (ch, v) in img.pixel(row, col).iter().enumerate() {
                rgb[ch] += w * *v as f64;
            }
            count += 1;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= side as i64 || nc >= side as i64 {
                        continue;
                    }
                    let j = nr as usize * side + nc as usize;
                    if !seen[j] && sat(nr as usize, nc as usize) > MARKER_SATURATION {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if count >= min_pixels && w_sum > 0.0 {
            out.push(DetectedMarker {
                position: (r_sum / w_sum / side as f64, c_sum / w_sum / side as f64),
                hue: rgb_hue(rgb.map(|v| v / w_sum)),
                pixels: count,
            });
        }
    }
    out.sort_by(|a, b| b.pixels.cmp(&a.pixels));
    out.truncate(MAX_MARKERS);
    out
}

fn marker_cost(a: &DetectedMarker, b: &DetectedMarker) -> f64 {
    let pos = ((a.position.0 - b.position.0).powi(2) + (a.position.1 - b.position.1).powi(2)).sqrt();
    let dh = (a.hue - b.hue).abs();
    let hue = dh.min(1.0 - dh);
    (pos + hue).min(IDENTITY_DISTANCE_SENTINEL)
}

/// Cheapest assignment of `small` into distinct elements of `large`.
fn best_assignment(small: &[DetectedMarker], large: &[DetectedMarker], used: &mut Vec<bool>) -> f64 {
    let Some((first, rest)) = small.split_first() else {
        return 0.0;
    };
    let mut best = f64::INFINITY;
    for j in 0..large.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        let cost = marker_cost(first, &large[j]) + best_assignment(rest, large, used);
        used[j] = false;
        best = best.min(cost);
    }
    best
}

/// Mean position-plus-hue discrepancy of matched marker spots. Unmatched
/// markers count as the sentinel; no markers at all gives the sentinel.
pub fn oracle_identity_distance(a: &Image, b: &Image) -> f64 {
    if a.side() != b.side() {
        return IDENTITY_DISTANCE_SENTINEL;
    }
    let (ma, mb) = (detect_markers(a), detect_markers(b));
    if ma.is_empty() || mb.is_empty() {
        return IDENTITY_DISTANCE_SENTINEL;
    }
    let (small, large) = if ma.len() <= mb.len() { (&ma, &mb) } else { (&mb, &ma) };
    let matched = best_assignment(small, large, &mut vec![false; large.len()]);
    let unmatched = (large.len() - small.len()) as f64 * IDENTITY_DISTANCE_SENTINEL;
    (matched + unmatched) / large.len() as f64
}

