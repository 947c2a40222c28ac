use std::path::Path;

use image::{Rgb, RgbImage};
use serde::Serialize;

use super::confusion::ConfusionMatrix;
use super::groups::GroupAge;
use crate::data::save_rgb_png;
use crate::error::{Error, Result};

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    write_text(path, &text)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn confusion_table(m: &ConfusionMatrix) -> String {
    let mut s = format!("# mode={} reader={:?} mean_abs_error={:.4}\n", m.mode.name(), m.reader, m.mean_abs_error());
    s.push_str(&format!("{:>6} {:>8} {:>8} {:>5} |", "target", "mean", "abs_err", "unrd"));
    for t in &m.targets {
        s.push_str(&format!(" {t:>4}"));
    }
    s.push('\n');
    for (i, t) in m.targets.iter().enumerate() {
        s.push_str(&format!("{t:>6} {:>8.2} {:>8.2} {:>5} |", m.means[i], m.abs_errors[i], m.unreadable[i]));
        for c in &m.counts[i] {
            s.push_str(&format!(" {c:>4}"));
        }
        s.push('\n');
    }
    s
}

pub fn age_table(rows: &[GroupAge]) -> String {
    let mut s = format!("{:>8} {:>7} {:>12} {:>14} {:>11}\n", "group", "images", "mean_target", "mean_estimate", "unreadable");
    for r in rows {
        s.push_str(&format!(
            "{:>8} {:>7} {:>12.2} {:>14.2} {:>11}\n",
            r.group.label(),
            r.images,
            r.mean_target,
            r.mean_estimate,
            r.unreadable
        ));
    }
    s
}

/// Row-normalized heat map, one `cell × cell` square per matrix entry;
/// white is zero, dark blue is the whole row.
pub fn render_confusion_heatmap(m: &ConfusionMatrix, cell: u32, path: impl AsRef<Path>) -> Result<()> {
    let n = m.targets.len() as u32;
    let mut img = RgbImage::new(n * cell, n * cell);
    for (i, row) in m.counts.iter().enumerate() {
        let total = row.iter().sum::<u32>().max(1) as f64;
        for (j, &c) in row.iter().enumerate() {
            let v = c as f64 / total;
            let color = Rgb([(255.0 * (1.0 - 0.9 * v)) as u8, (255.0 * (1.0 - 0.75 * v)) as u8, (255.0 * (1.0 - 0.35 * v)) as u8]);
            for dy in 0..cell {
                for dx in 0..cell {
                    img.put_pixel(j as u32 * cell + dx, i as u32 * cell + dy, color);
                }
            }
        }
    }
    save_rgb_png(&img, path)
}
