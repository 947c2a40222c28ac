//! Image grids and labeled strips.
use image::{Rgb, RgbImage};

use crate::data::Image;
use crate::error::{Error, Result};

const GAP: u32 = 2;
const GLYPH_W: u32 = 3;
const GLYPH_H: u32 = 5;
const LABEL_SCALE: u32 = 2;

/// 3×5 bitmaps for `0-9` and `.`, one row per byte, high bit on the left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => return None,
    })
}

fn draw_label(canvas: &mut RgbImage, text: &str, x0: u32, y0: u32, width: u32) {
    let glyphs: Vec<[u8; 5]> = text.chars().filter_map(glyph).collect();
    let advance = (GLYPH_W + 1) * LABEL_SCALE;
    let total = (glyphs.len() as u32 * advance).saturating_sub(LABEL_SCALE);
    let mut x = x0 + width.saturating_sub(total) / 2;
    for g in glyphs {
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - col) & 1 == 1 {
                    for dy in 0..LABEL_SCALE {
                        for dx in 0..LABEL_SCALE {
                            let (px, py) = (x + col * LABEL_SCALE + dx, y0 + row as u32 * LABEL_SCALE + dy);
                            if px < canvas.width() && py < canvas.height() {
                                canvas.put_pixel(px, py, Rgb([0, 0, 0]));
                            }
                        }
                    }
                }
            }
        }
        x += advance;
    }
}

fn check_sides<'a>(images: impl Iterator<Item = &'a Image>) -> Result<u32> {
    let mut side = None;
    for img in images {
        match side {
            None => side = Some(img.side()),
            Some(s) if s != img.side() => return Err(Error::Contract("montage images differ in size".into())),
            _ => {}
        }
    }
    side.map(|s| s as u32).ok_or_else(|| Error::Validation("nothing to render".into()))
}

fn blit(canvas: &mut RgbImage, img: &Image, x0: u32, y0: u32) {
    let tile = img.to_rgb8();
    for (x, y, px) in tile.enumerate_pixels() {
        canvas.put_pixel(x0 + x, y0 + y, *px);
    }
}

/// Rows of equally sized images on a white background.
pub fn image_grid(rows: &[Vec<Image>]) -> Result<RgbImage> {
    let side = check_sides(rows.iter().flatten())?;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let step = side + GAP;
    let mut canvas = RgbImage::from_pixel(cols * step + GAP, rows.len() as u32 * step + GAP, Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            blit(&mut canvas, img, GAP + c as u32 * step, GAP + r as u32 * step);
        }
    }
    Ok(canvas)
}

/// One row of frames with a numeric label under each.
pub fn labeled_strip(frames: &[Image], labels: &[String]) -> Result<RgbImage> {
    if frames.len() != labels.len() {
        return Err(Error::Contract(format!("{} frames, {} labels", frames.len(), labels.len())));
    }
    let side = check_sides(frames.iter())?;
    let step = side + GAP;
    let label_h = GLYPH_H * LABEL_SCALE + 2 * GAP;
    let mut canvas =
        RgbImage::from_pixel(frames.len() as u32 * step + GAP, side + 2 * GAP + label_h, Rgb([255, 255, 255]));
    for (i, (img, label)) in frames.iter().zip(labels).enumerate() {
        let x = GAP + i as u32 * step;
        blit(&mut canvas, img, x, GAP);
        draw_label(&mut canvas, label, x, side + 2 * GAP + GAP, side);
    }
    Ok(canvas)
}
