//! Image carrier types: grayscale rasters, binary masks and label maps.
//!
//! All rasters are row-major. Grayscale intensities live in `[0, 1]`;
//! 8-bit files are mapped by `v / 255` on load and `round(v * 255)` on
//! save, so a save/load round trip moves each pixel by at most `1/255`.

use std::path::Path;

use image::{DynamicImage, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("cannot read image {path}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("cannot write image {path}")]
    Write {
        path: String,
        source: image::ImageError,
    },
    #[error("unsupported pixel format {0} (expected 8-bit grayscale or RGB)")]
    UnsupportedFormat(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    LengthMismatch {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("intensity {0} outside [0, 1]")]
    IntensityOutOfRange(f64),
}

/// A 2-D grid of unit-interval intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from a row-major pixel buffer.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if pixels.len() != width * height {
            return Err(RasterError::LengthMismatch {
                len: pixels.len(),
                width,
                height,
            });
        }
        if let Some(&v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RasterError::IntensityOutOfRange(v));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = v;
    }

    /// Clamped sample: coordinates outside the grid read the nearest
    /// border pixel (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Loads an 8-bit grayscale or RGB image (PNG or JPEG).
    ///
    /// RGB is converted to luminance as `0.299 R + 0.587 G + 0.114 B`;
    /// 8-bit values map to `[0, 1]` by `v / 255`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let as_str = || path.display().to_string();
        let decoded = ImageReader::open(path)
            .map_err(|e| RasterError::Read {
                path: as_str(),
                source: image::ImageError::IoError(e),
            })?
            .decode()
            .map_err(|e| RasterError::Read {
                path: as_str(),
                source: e,
            })?;
        Self::from_dynamic(decoded)
    }

    fn from_dynamic(img: DynamicImage) -> Result<Self, RasterError> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(RasterError::ZeroDimension);
        }
        let pixels: Vec<f64> = match img {
            DynamicImage::ImageLuma8(buf) => {
                buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect()
            }
            DynamicImage::ImageLumaA8(buf) => {
                buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect()
            }
            DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luminance(p.0)).collect(),
            DynamicImage::ImageRgba8(buf) => {
                buf.pixels().map(|p| luminance([p.0[0], p.0[1], p.0[2]])).collect()
            }
            other => {
                return Err(RasterError::UnsupportedFormat(format!("{:?}", other.color())));
            }
        };
        Self::new(w, h, pixels)
    }

    /// Writes the image as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        let buf: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions");
        img.save(path).map_err(|e| RasterError::Write {
            path: path.display().to_string(),
            source: e,
        })
    }
}

fn luminance(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(f64::from);
    ((0.299 * r + 0.587 * g + 0.114 * b) / 255.0).clamp(0.0, 1.0)
}

/// Row-major boolean mask; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if bits.len() != width * height {
            return Err(RasterError::LengthMismatch {
                len: bits.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x] = v;
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> bool {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Pointwise AND with another mask of the same dimensions.
    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// Writes the mask as an 8-bit PNG (foreground white).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let buf: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions");
        img.save(path.as_ref()).map_err(|e| RasterError::Write {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }
}

/// Segmentation labels: 0 is the watershed line / unassigned, `k >= 1`
/// names region `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension);
        }
        if labels.len() != width * height {
            return Err(RasterError::LengthMismatch {
                len: labels.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        debug_assert!(x < self.width && y < self.height);
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u32) {
        debug_assert!(x < self.width && y < self.height);
        self.labels[y * self.width + x] = v;
    }

    /// Largest label present (0 for an all-background map).
    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Mask of pixels whose label satisfies `pred`.
    pub fn mask_where(&self, pred: impl Fn(u32) -> bool) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| pred(l)).collect(),
        }
    }

    /// Writes the map as a 16-bit PNG (labels above 65535 saturate).
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let buf: Vec<u16> = self
            .labels
            .iter()
            .map(|&l| l.min(u32::from(u16::MAX)) as u16)
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
            self.width as u32,
            self.height as u32,
            buf,
        )
        .expect("buffer length matches dimensions");
        img.save(path.as_ref()).map_err(|e| RasterError::Write {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dimensions() {
        assert!(matches!(
            GrayImage::new(0, 4, vec![]),
            Err(RasterError::ZeroDimension)
        ));
        assert!(matches!(
            BinaryMask::new(3, 0, vec![]),
            Err(RasterError::ZeroDimension)
        ));
    }

    #[test]
    fn rejects_out_of_range_intensity() {
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(1, 1, vec![-0.1]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.0]).is_ok());
    }

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(matches!(
            GrayImage::new(2, 2, vec![0.0; 3]),
            Err(RasterError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn clamped_reads_replicate_border() {
        let img = GrayImage::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(img.get_clamped(-5, 0), 0.25);
        assert_eq!(img.get_clamped(7, 3), 0.75);
    }

    #[test]
    fn load_maps_extremes_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let white = dir.path().join("white.png");
        let black = dir.path().join("black.png");
        image::GrayImage::from_raw(1, 1, vec![255]).unwrap().save(&white).unwrap();
        image::GrayImage::from_raw(1, 1, vec![0]).unwrap().save(&black).unwrap();
        assert_eq!(GrayImage::load(&white).unwrap().pixels(), &[1.0]);
        assert_eq!(GrayImage::load(&black).unwrap().pixels(), &[0.0]);
    }

    #[test]
    fn load_divides_by_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.png");
        image::GrayImage::from_raw(2, 1, vec![51, 102]).unwrap().save(&path).unwrap();
        // 51/255 = 0.2 and 102/255 = 0.4, both exact after f64 division
        assert_eq!(GrayImage::load(&path).unwrap().pixels(), &[0.2, 0.4]);
    }

    #[test]
    fn rgb_uses_bt601_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        image::RgbImage::from_raw(1, 1, vec![255, 0, 0]).unwrap().save(&path).unwrap();
        let img = GrayImage::load(&path).unwrap();
        assert!((img.pixels()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn load_rejects_missing_file() {
        assert!(matches!(
            GrayImage::load("/nonexistent/nowhere.png"),
            Err(RasterError::Read { .. })
        ));
    }

    #[test]
    fn label_map_mask_where_selects_labels() {
        let map = LabelMap::new(2, 2, vec![0, 1, 2, 1]).unwrap();
        let fg = map.mask_where(|l| l == 1);
        assert_eq!(fg.bits(), &[false, true, false, true]);
        assert_eq!(map.max_label(), 2);
    }
}
