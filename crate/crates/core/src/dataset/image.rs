//! Planar float images, PNG I/O, center-crop preprocessing and panorama
//! reprojection.

use std::f64::consts::PI;
use std::path::Path;

use image::{imageops, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Channel-planar image with values nominally in `[0, 1]`:
/// `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid("image", format!("degenerate size {width}x{height}x{channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch {
                expected: vec![channels, height, width],
                actual: vec![data.len()],
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    fn to_rgb8(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::invalid("image", format!("expected 3 channels, got {}", self.channels)));
        }
        Ok(ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| (self.at(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([px(0), px(1), px(2)])
        }))
    }

    fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::filled(w, h, 3, 0.0);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, p[c] as f32 / 255.0);
            }
        }
        out
    }

    /// 8-bit RGB PNG.
    pub fn write_rgb_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8()?.save(path.as_ref())?;
        Ok(())
    }

    /// Loads any PNG as RGB in `[0, 1]`.
    pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_rgb8(&image::open(path.as_ref())?.to_rgb8()))
    }

    /// One-channel image stored as 16-bit grayscale PNG, `round(v * 65535)`.
    pub fn write_depth_png(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::invalid("depth", format!("expected 1 channel, got {}", self.channels)));
        }
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.at(0, y as usize, x as usize).clamp(0.0, 1.0) * 65535.0).round() as u16])
        });
        img.save(path.as_ref())?;
        Ok(())
    }

    pub fn read_depth_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.pixels().map(|p| p[0] as f32 / 65535.0).collect();
        Image::new(w, h, 1, data)
    }
}

/// Center square crop at `min(width, height)`, bilinear resize to `size`,
/// values in `[0, 1]`.
pub fn preprocess_image(img: &Image, size: usize) -> Result<Image> {
    if img.width == 0 || img.height == 0 || size == 0 {
        return Err(Error::invalid("image", "degenerate dimensions"));
    }
    let side = img.width.min(img.height);
    let (x0, y0) = ((img.width - side) / 2, (img.height - side) / 2);
    let mut out = Image::filled(size, size, img.channels, 0.0);
    for c in 0..img.channels {
        let plane: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::from_fn(side as u32, side as u32, |x, y| {
            Luma([img.at(c, y0 + y as usize, x0 + x as usize)])
        });
        let resized = if side == size {
            plane
        } else {
            imageops::resize(&plane, size as u32, size as u32, imageops::FilterType::Triangle)
        };
        for (x, y, p) in resized.enumerate_pixels() {
            out.set(c, y as usize, x as usize, p[0].clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Unit view direction `(x right, y up, z forward)` for yaw about the
/// vertical axis and pitch above the horizon.
pub(crate) fn rotate(d: [f64; 3], yaw: f64, pitch: f64) -> [f64; 3] {
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    // Pitch about x, then yaw about y.
    let y = d[1] * cp + d[2] * sp;
    let z = -d[1] * sp + d[2] * cp;
    let x = d[0];
    [x * cy + z * sy, y, -x * sy + z * cy]
}

/// Continuous pixel coordinates of a direction on a `width x height`
/// equirectangular panorama (pixel centers at integer + 0.5 edges).
pub fn direction_to_pano(d: [f64; 3], width: usize, height: usize) -> (f64, f64) {
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let lon = d[0].atan2(d[2]);
    let lat = (d[1] / norm).clamp(-1.0, 1.0).asin();
    let px = (lon / (2.0 * PI) + 0.5) * width as f64 - 0.5;
    let py = (0.5 - lat / PI) * height as f64 - 0.5;
    (px, py)
}

/// Direction of the ray through the center of the output image.
pub fn view_center_direction(yaw: f64, pitch: f64) -> [f64; 3] {
    rotate([0.0, 0.0, 1.0], yaw, pitch)
}

fn sample_bilinear(pano: &Image, c: usize, px: f64, py: f64) -> f32 {
    let (w, h) = (pano.width as i64, pano.height as i64);
    let py = py.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (px.floor() as i64, py.floor() as i64);
    let (fx, fy) = ((px - x0 as f64) as f32, (py - y0 as f64) as f32);
    let wrap = |x: i64| x.rem_euclid(w) as usize;
    let y1 = (y0 + 1).min(h - 1) as usize;
    let y0 = y0 as usize;
    let (xa, xb) = (wrap(x0), wrap(x0 + 1));
    let top = pano.at(c, y0, xa) * (1.0 - fx) + pano.at(c, y0, xb) * fx;
    let bottom = pano.at(c, y1, xa) * (1.0 - fx) + pano.at(c, y1, xb) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Gnomonic (rectilinear) view of a 2:1 equirectangular panorama. `fov` is
/// horizontal; the vertical extent follows the output aspect ratio.
pub fn equirect_to_rectilinear(
    pano: &Image,
    yaw: f64,
    pitch: f64,
    fov: f64,
    out_width: usize,
    out_height: usize,
) -> Result<Image> {
    if !(fov > 0.0 && fov < PI) {
        return Err(Error::invalid("fov", format!("must lie in (0, pi), got {fov}")));
    }
    if pano.width != 2 * pano.height {
        return Err(Error::invalid(
            "panorama",
            format!("expected 2:1 aspect, got {}x{}", pano.width, pano.height),
        ));
    }
    if out_width == 0 || out_height == 0 {
        return Err(Error::invalid("output size", "must be non-zero"));
    }
    let half = (fov / 2.0).tan();
    let aspect = out_height as f64 / out_width as f64;
    let mut out = Image::filled(out_width, out_height, pano.channels, 0.0);
    for j in 0..out_height {
        for i in 0..out_width {
            let x = (2.0 * (i as f64 + 0.5) / out_width as f64 - 1.0) * half;
            let y = -(2.0 * (j as f64 + 0.5) / out_height as f64 - 1.0) * half * aspect;
            let (px, py) = direction_to_pano(rotate([x, y, 1.0], yaw, pitch), pano.width, pano.height);
            for c in 0..pano.channels {
                out.set(c, j, i, sample_bilinear(pano, c, px, py));
            }
        }
    }
    Ok(out)
}
