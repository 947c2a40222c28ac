use std::path::Path;

use image::imageops::FilterType;
use image::{ImageFormat, RgbImage};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// A square RGB image, channel-major, values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn filled(side: usize, value: f32) -> Self {
        Self { side, data: vec![value; 3 * side * side] }
    }

    pub fn from_chw(side: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * side * side {
            return Err(Error::Contract(format!("{} values for a {side}×{side} RGB image", data.len())));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.side + row) * self.side + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f32) {
        self.data[(c * self.side + row) * self.side + col] = v;
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        [self.get(0, row, col), self.get(1, row, col), self.get(2, row, col)]
    }

    /// `[3, S, S]` float tensor.
    pub fn to_tensor(&self) -> Tensor {
        let s = self.side as i64;
        Tensor::from_slice(&self.data).reshape([3, s, s])
    }

    /// Accepts `[3, S, S]` or `[1, 3, S, S]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let t = if t.dim() == 4 && t.size()[0] == 1 { t.squeeze_dim(0) } else { t.shallow_clone() };
        let size = t.size();
        if size.len() != 3 || size[0] != 3 || size[1] != size[2] {
            return Err(Error::Contract(format!("expected a [3, S, S] image tensor, got {size:?}")));
        }
        let data = Vec::<f32>::try_from(&t.detach().to_kind(Kind::Float).contiguous().view([-1]))?;
        Ok(Self { side: size[1] as usize, data })
    }

    /// 8-bit RGB with `v ↦ round((v + 1)/2 · 255)` after clamping.
    pub fn to_rgb8(&self) -> RgbImage {
        let s = self.side as u32;
        RgbImage::from_fn(s, s, |x, y| {
            let px = self.pixel(y as usize, x as usize);
            image::Rgb(px.map(to_byte))
        })
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        if img.width() != img.height() {
            return Err(Error::Contract(format!("image is {}×{}, expected a square", img.width(), img.height())));
        }
        let side = img.width() as usize;
        let mut out = Self::filled(side, 0.0);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, from_byte(p.0[c]));
            }
        }
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_rgb_png(&self.to_rgb8(), path)
    }
}

pub fn to_byte(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round()) as u8
}

/// `[0, 255] → [-1, 1]`.
pub fn from_byte(b: u8) -> f32 {
    (2.0 * (b as f64) / 255.0 - 1.0) as f32
}

pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    img.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode { path: path.into(), msg: other.to_string() },
    })
}

/// Decodes any supported raster, resizes bilinearly to `side × side` and
/// maps channels to `[-1, 1]`.
pub fn load_image_file(path: impl AsRef<Path>, side: usize) -> Result<Image> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode { path: path.into(), msg: other.to_string() },
    })?;
    let mut rgb = decoded.to_rgb8();
    if rgb.width() != side as u32 || rgb.height() != side as u32 {
        rgb = image::imageops::resize(&rgb, side as u32, side as u32, FilterType::Triangle);
    }
    Image::from_rgb8(&rgb)
}

/// Stacks images into an `[N, 3, S, S]` tensor.
pub fn stack_images(images: &[Image]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::Validation("no images to stack".into()));
    };
    if images.iter().any(|i| i.side != first.side) {
        return Err(Error::Contract("images of different sizes".into()));
    }
    let s = first.side as i64;
    let mut flat = Vec::with_capacity(images.len() * first.data.len());
    for img in images {
        flat.extend_from_slice(&img.data);
    }
    Ok(Tensor::from_slice(&flat).reshape([images.len() as i64, 3, s, s]))
}

/// Splits an `[N, 3, S, S]` tensor into images.
pub fn unstack_images(batch: &Tensor) -> Result<Vec<Image>> {
    if batch.dim() != 4 {
        return Err(Error::Contract(format!("expected [N, 3, S, S], got {:?}", batch.size())));
    }
    (0..batch.size()[0]).map(|i| Image::from_tensor(&batch.get(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_mapping() {
        assert_eq!(from_byte(0), -1.0);
        assert_eq!(from_byte(255), 1.0);
        assert!((from_byte(128) as f64 - (2.0 * 128.0 / 255.0 - 1.0)).abs() < 1e-7);
        for b in 0..=255u8 {
            assert_eq!(to_byte(from_byte(b)), b);
        }
    }

    #[test]
    fn tensor_round_trip() {
        let mut img = Image::filled(4, 0.25);
        img.set(1, 2, 3, -0.5);
        let back = Image::from_tensor(&img.to_tensor()).unwrap();
        assert_eq!(back, img);
        let batch = stack_images(&[img.clone(), img.clone()]).unwrap();
        assert_eq!(batch.size(), vec![2, 3, 4, 4]);
        assert_eq!(unstack_images(&batch).unwrap()[1], img);
    }
}
