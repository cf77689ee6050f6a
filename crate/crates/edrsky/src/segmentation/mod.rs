//! Sun/cloud/border/skydome segmentation and 1-channel label synthesis.

pub mod ephemeris;
pub mod morphology;

pub use ephemeris::{solar_position, CaptureMeta, SolarPosition};
pub use morphology::morph_brush;

use serde::{Deserialize, Serialize};

use crate::envmap::SkyangularGeometry;
use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::par;
use crate::tonemap::{TonemapOperator, DEFAULT_MU};

/// Default angular radius (degrees) of the masked solar region: the 0.5
/// degree solar disc extended to a 5 degree diameter cap.
pub const DEFAULT_SOLAR_RADIUS_DEG: f64 = 2.5;

/// Default blue-red ratio threshold below which a pixel counts as cloud.
pub const DEFAULT_CLOUD_THRESHOLD: f64 = 0.05;

/// Default morphological brush diameter in pixels.
pub const DEFAULT_BRUSH_PX: usize = 15;

/// Label classes of the uniform 1-channel label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum LabelClass {
    Border = 0,
    Skydome = 1,
    Cloud = 2,
    Sun = 3,
}

impl LabelClass {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(LabelClass::Border),
            1 => Some(LabelClass::Skydome),
            2 => Some(LabelClass::Cloud),
            3 => Some(LabelClass::Sun),
            _ => None,
        }
    }
}

/// Per-pixel boolean selection, optionally tagged with the class it was
/// derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
    class: Option<LabelClass>,
}

impl ClassMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>, class: Option<LabelClass>) -> Self {
        assert_eq!(values.len(), width * height, "mask shape mismatch");
        ClassMask { width, height, values, class }
    }

    pub fn full(width: usize, height: usize) -> Self {
        ClassMask::new(width, height, vec![true; width * height], None)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        ClassMask::new(width, height, vec![false; width * height], None)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class(&self) -> Option<LabelClass> {
        self.class
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn matches_image(&self, img: &RadianceImage) -> bool {
        self.width == img.width() && self.height == img.height()
    }

    /// Pixelwise AND.
    pub fn intersect(&self, other: &ClassMask) -> ClassMask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a && *b)
            .collect();
        ClassMask::new(self.width, self.height, values, self.class)
    }
}

/// Pixels within `radius_deg` angular distance of the sun direction.
/// A sun at or below the horizon produces an empty mask.
pub fn solar_mask(pos: &SolarPosition, geom: &SkyangularGeometry, radius_deg: f64) -> ClassMask {
    let n = geom.resolution();
    if pos.elevation <= 0.0 {
        return ClassMask::new(n, n, vec![false; n * n], Some(LabelClass::Sun));
    }
    let sun = SkyangularGeometry::direction_from_az_el(pos.azimuth, pos.elevation);
    let cos_radius = radius_deg.to_radians().cos();
    let values = par::map_indexed(n * n, |i| {
        match geom.direction(i % n, i / n) {
            Some(d) => d[0] * sun[0] + d[1] * sun[1] + d[2] * sun[2] >= cos_radius,
            None => false,
        }
    });
    ClassMask::new(n, n, values, Some(LabelClass::Sun))
}

/// Per-pixel blue-red ratio `(B-R)/(B+R)` computed on mu-lawLog2
/// tonemapped values; 0 where `B+R = 0`.
pub fn cloud_ratio(img: &RadianceImage) -> Vec<f64> {
    cloud_ratio_with(img, &TonemapOperator::MuLawLog2 { mu: DEFAULT_MU })
}

pub fn cloud_ratio_with(img: &RadianceImage, op: &TonemapOperator) -> Vec<f64> {
    par::map(img.pixels(), |px| {
        let r = op.forward(px[0] as f64);
        let b = op.forward(px[2] as f64);
        if r + b > 0.0 {
            (b - r) / (b + r)
        } else {
            0.0
        }
    })
}

/// Cloud where the blue-red ratio drops below `threshold` (grey clouds
/// against blue sky), restricted to on-disc pixels.
pub fn cloud_mask(ratio: &[f64], geom: &SkyangularGeometry, threshold: f64) -> Result<ClassMask> {
    let n = geom.resolution();
    if ratio.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "ratio image has {} entries for geometry {n}^2",
            ratio.len()
        )));
    }
    // threshold -1 is allowed and selects nothing since the ratio is
    // always >= -1 and the comparison is strict.
    if !(-1.0..1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!(
            "cloud threshold must be in [-1, 1), got {threshold}"
        )));
    }
    let values = (0..n * n)
        .map(|i| geom.is_on_disc(i % n, i / n) && ratio[i] < threshold)
        .collect();
    Ok(ClassMask::new(n, n, values, Some(LabelClass::Cloud)))
}

/// Uniform 1-channel class map over the skyangular disc.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    resolution: usize,
    classes: Vec<u8>,
}

impl LabelMap {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> LabelClass {
        LabelClass::from_id(self.classes[y * self.resolution + x]).unwrap()
    }

    /// Boolean mask of one class.
    pub fn mask_for(&self, class: LabelClass) -> ClassMask {
        let values = self.classes.iter().map(|c| *c == class as u8).collect();
        ClassMask::new(self.resolution, self.resolution, values, Some(class))
    }

    /// Pixel counts per class id 0..=3.
    pub fn histogram(&self) -> [usize; 4] {
        let mut hist = [0usize; 4];
        for c in &self.classes {
            hist[*c as usize] += 1;
        }
        hist
    }
}

/// Combines sun and cloud masks into the final label with precedence
/// border > sun > cloud > skydome.
pub fn compose_label(
    sun: &ClassMask,
    cloud: &ClassMask,
    geom: &SkyangularGeometry,
) -> Result<LabelMap> {
    let n = geom.resolution();
    if sun.width != n || sun.height != n || cloud.width != n || cloud.height != n {
        return Err(Error::ShapeMismatch(format!(
            "masks {}x{} / {}x{} vs geometry {n}^2",
            sun.width, sun.height, cloud.width, cloud.height
        )));
    }
    let classes = (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            if !geom.is_on_disc(x, y) {
                LabelClass::Border as u8
            } else if sun.values[i] {
                LabelClass::Sun as u8
            } else if cloud.values[i] {
                LabelClass::Cloud as u8
            } else {
                LabelClass::Skydome as u8
            }
        })
        .collect();
    Ok(LabelMap { resolution: n, classes })
}

/// Full sun + cloud segmentation of one capture.
pub struct SegmentationConfig {
    pub cloud_threshold: f64,
    pub brush_px: usize,
    pub solar_radius_deg: f64,
    pub mu: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            cloud_threshold: DEFAULT_CLOUD_THRESHOLD,
            brush_px: DEFAULT_BRUSH_PX,
            solar_radius_deg: DEFAULT_SOLAR_RADIUS_DEG,
            mu: DEFAULT_MU,
        }
    }
}

pub fn segment(
    img: &RadianceImage,
    meta: &CaptureMeta,
    config: &SegmentationConfig,
) -> Result<(LabelMap, SolarPosition)> {
    let geom = SkyangularGeometry::of_image(img)?;
    let pos = solar_position(meta)?;
    let sun = solar_mask(&pos, &geom, config.solar_radius_deg);
    let ratio = cloud_ratio_with(img, &TonemapOperator::MuLawLog2 { mu: config.mu });
    let raw_cloud = cloud_mask(&ratio, &geom, config.cloud_threshold)?;
    let cloud = morph_brush(&raw_cloud, config.brush_px)?;
    let label = compose_label(&sun, &cloud, &geom)?;
    Ok((label, pos))
}
