//! Linear-radiance image container.

use crate::error::{Error, Result};

/// Linear floating-point RGB environment map (skyangular when square).
///
/// Pixels are row-major `[r, g, b]` in relative radiometric units. All
/// channel values are finite and non-negative by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

/// BT.709 luma weights for linear RGB.
pub const BT709: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// BT.709 linear luminance of one RGB triple.
#[inline]
pub fn luminance_of(px: [f32; 3]) -> f64 {
    BT709[0] * px[0] as f64 + BT709[1] * px[1] as f64 + BT709[2] * px[2] as f64
}

impl RadianceImage {
    /// Builds an image from row-major pixel data, validating finiteness
    /// and non-negativity.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{}={} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        for (i, px) in pixels.iter().enumerate() {
            for c in px {
                if !c.is_finite() || *c < 0.0 {
                    return Err(Error::InvalidPixel(format!(
                        "pixel {i} has non-finite or negative channel {c}"
                    )));
                }
            }
        }
        Ok(RadianceImage { width, height, pixels })
    }

    /// All-zero image.
    pub fn zeros(width: usize, height: usize) -> Self {
        RadianceImage { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    /// Constant-valued image.
    pub fn constant(width: usize, height: usize, value: [f32; 3]) -> Result<Self> {
        Self::from_pixels(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [f32; 3]) {
        self.pixels[y * self.width + x] = px;
    }

    /// Applies `f` to every pixel. The result is not revalidated; callers
    /// must keep values finite and non-negative.
    pub fn map(&self, f: impl Fn([f32; 3]) -> [f32; 3] + Sync) -> RadianceImage {
        RadianceImage {
            width: self.width,
            height: self.height,
            pixels: crate::par::map(&self.pixels, |px| f(*px)),
        }
    }

    /// Per-pixel BT.709 luminance, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        crate::par::map(&self.pixels, |px| luminance_of(*px))
    }

    /// Scales every channel by `factor`.
    pub fn scaled(&self, factor: f64) -> RadianceImage {
        self.map(|px| {
            [
                (px[0] as f64 * factor) as f32,
                (px[1] as f64 * factor) as f32,
                (px[2] as f64 * factor) as f32,
            ]
        })
    }

    pub fn same_shape(&self, other: &RadianceImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &RadianceImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_nan() {
        assert!(RadianceImage::from_pixels(1, 1, vec![[-1.0, 0.0, 0.0]]).is_err());
        assert!(RadianceImage::from_pixels(1, 1, vec![[f32::NAN, 0.0, 0.0]]).is_err());
        assert!(RadianceImage::from_pixels(1, 1, vec![[f32::INFINITY, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn luminance_weights() {
        let img = RadianceImage::from_pixels(3, 1, vec![[1.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
            .unwrap();
        let lum = img.luminance();
        assert!((lum[0] - 1.0).abs() < 1e-12);
        assert!((lum[1] - 0.2126).abs() < 1e-12);
        assert!((lum[2] - 1.4304).abs() < 1e-12);
    }
}
