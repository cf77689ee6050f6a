//! Reconstruction metrics and exposure-aware Cascade / class-Selective
//! losses, plus the truncation-sensitivity sweep.
//!
//! Banding follows the floor rule: band 0 covers `[0, 1)`, band `i >= 1`
//! covers `[2^(i-1), 2^i)`, and everything at or above `2^(ev_max)` is
//! folded into the top band, so the bands partition the selected pixels.

use std::collections::HashMap;

use crate::envmap::{clip_to_ev, integrated_illumination, ExposureValue, SolidAngleMap};
use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::par;
use crate::segmentation::ClassMask;
use crate::tonemap::TonemapOperator;

/// Inner reconstruction metric applied inside Cascade/Selective terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerLoss {
    L1,
    L2,
}

impl InnerLoss {
    #[inline]
    fn per_channel(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        match self {
            InnerLoss::L1 => d.abs(),
            InnerLoss::L2 => d * d,
        }
    }
}

/// Result of a (possibly masked) reconstruction loss. `pixel_count` is
/// the number of selected pixels; an empty selection yields value 0 with
/// the emptiness observable here rather than a NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub pixel_count: usize,
}

impl LossResult {
    pub fn is_empty(&self) -> bool {
        self.pixel_count == 0
    }
}

fn masked_mean(
    a: &RadianceImage,
    b: &RadianceImage,
    mask: Option<&ClassMask>,
    inner: InnerLoss,
) -> Result<LossResult> {
    a.ensure_same_shape(b)?;
    if let Some(m) = mask {
        if !m.matches_image(a) {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs image {}x{}",
                m.width(),
                m.height(),
                a.width(),
                a.height()
            )));
        }
    }
    let pa = a.pixels();
    let pb = b.pixels();
    let (sum, count) = match mask {
        None => {
            let sum = par::sum_by_indexed(pa.len(), |i| {
                (0..3).map(|c| inner.per_channel(pa[i][c] as f64, pb[i][c] as f64)).sum()
            });
            (sum, pa.len())
        }
        Some(m) => {
            let mv = m.values();
            let sum = par::sum_by_indexed(pa.len(), |i| {
                if mv[i] {
                    (0..3).map(|c| inner.per_channel(pa[i][c] as f64, pb[i][c] as f64)).sum()
                } else {
                    0.0
                }
            });
            (sum, m.count())
        }
    };
    if count == 0 {
        return Ok(LossResult { value: 0.0, pixel_count: 0 });
    }
    Ok(LossResult { value: sum / (3 * count) as f64, pixel_count: count })
}

/// Mean absolute difference over the selected pixels.
pub fn l1(a: &RadianceImage, b: &RadianceImage, mask: Option<&ClassMask>) -> Result<LossResult> {
    masked_mean(a, b, mask, InnerLoss::L1)
}

/// Mean squared difference over the selected pixels.
pub fn l2(a: &RadianceImage, b: &RadianceImage, mask: Option<&ClassMask>) -> Result<LossResult> {
    masked_mean(a, b, mask, InnerLoss::L2)
}

/// Exposure-band layout: band 0 is `[0, 1)`, band `i` is `[2^(i-1), 2^i)`
/// and values above `2^ev_max` fold into the top band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandSpec {
    pub ev_max: u32,
}

impl Default for BandSpec {
    fn default() -> Self {
        BandSpec { ev_max: 15 }
    }
}

impl BandSpec {
    pub fn band_count(&self) -> usize {
        self.ev_max as usize + 1
    }

    /// Band index of a luminance value.
    #[inline]
    pub fn band_of(&self, luminance: f64) -> usize {
        if luminance < 1.0 {
            0
        } else {
            ((luminance.log2().floor() as i64 + 1).max(1) as usize).min(self.ev_max as usize)
        }
    }
}

/// Per-band or per-exposure scaling factors; indices without an explicit
/// entry use the default of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    overrides: HashMap<usize, f64>,
    default: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { overrides: HashMap::new(), default: 1.0 }
    }
}

impl LossWeights {
    pub fn uniform(value: f64) -> Self {
        LossWeights { overrides: HashMap::new(), default: value }
    }

    pub fn with(mut self, index: usize, alpha: f64) -> Self {
        self.overrides.insert(index, alpha);
        self
    }

    pub fn alpha(&self, index: usize) -> f64 {
        *self.overrides.get(&index).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.default.is_finite() || self.default < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "default alpha {} must be finite and >= 0",
                self.default
            )));
        }
        for (i, a) in &self.overrides {
            if !a.is_finite() || *a < 0.0 {
                return Err(Error::InvalidParameter(format!("alpha[{i}] = {a} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// One term of a cascade breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTerm {
    pub index: usize,
    pub pixel_count: usize,
    pub loss: f64,
    pub weighted: f64,
}

/// Total plus per-term report of a cascade loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeBreakdown {
    pub total: f64,
    pub terms: Vec<CascadeTerm>,
}

/// Exposure-band selection loss: pixels are banded on the luminance of
/// `real_img`, the inner loss runs per band on both images' pixels and
/// terms are summed with per-band alpha weights.
pub fn cascade_bands_loss(
    real_img: &RadianceImage,
    fake_img: &RadianceImage,
    inner: InnerLoss,
    bands: BandSpec,
    weights: &LossWeights,
    mask: Option<&ClassMask>,
) -> Result<CascadeBreakdown> {
    real_img.ensure_same_shape(fake_img)?;
    weights.validate()?;
    let band_masks = band_masks(real_img, bands, mask);
    let mut terms = Vec::with_capacity(bands.band_count());
    let mut total = 0.0;
    for (i, band_mask) in band_masks.into_iter().enumerate() {
        let result = masked_mean(real_img, fake_img, Some(&band_mask), inner)?;
        let alpha = weights.alpha(i);
        let weighted = alpha * result.value;
        total += weighted;
        terms.push(CascadeTerm {
            index: i,
            pixel_count: result.pixel_count,
            loss: result.value,
            weighted,
        });
    }
    Ok(CascadeBreakdown { total, terms })
}

/// Band membership masks keyed on the real image's luminance; a
/// selection mask restricts which pixels participate at all.
pub fn band_masks(
    real_img: &RadianceImage,
    bands: BandSpec,
    mask: Option<&ClassMask>,
) -> Vec<ClassMask> {
    let (w, h) = (real_img.width(), real_img.height());
    let lum = real_img.luminance();
    let selected = |i: usize| mask.map(|m| m.values()[i]).unwrap_or(true);
    (0..bands.band_count())
        .map(|band| {
            let values = (0..lum.len())
                .map(|i| selected(i) && bands.band_of(lum[i]) == band)
                .collect();
            ClassMask::new(w, h, values, mask.and_then(|m| m.class()))
        })
        .collect()
}

/// Optional gamma-tonemap and clamp applied inside each exposure term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TonemapClamp {
    pub gamma: f64,
}

/// Re-exposure cascade: `sum_i alpha(i) * inner(2^-i * real, 2^-i *
/// fake)` over `exposures` brackets, optionally masked, gamma-tonemapped
/// and clamped to [0, 1] at each exposure.
pub fn cascade_exposure_loss(
    real_img: &RadianceImage,
    fake_img: &RadianceImage,
    inner: InnerLoss,
    exposures: u32,
    weights: &LossWeights,
    mask: Option<&ClassMask>,
    tonemap_clamp: Option<TonemapClamp>,
) -> Result<CascadeBreakdown> {
    real_img.ensure_same_shape(fake_img)?;
    weights.validate()?;
    if exposures == 0 {
        return Err(Error::InvalidParameter("exposures must be >= 1".into()));
    }
    let mut terms = Vec::with_capacity(exposures as usize);
    let mut total = 0.0;
    for i in 0..exposures {
        let scale = (-(i as f64)).exp2();
        let transform = |img: &RadianceImage| -> RadianceImage {
            match tonemap_clamp {
                None => img.scaled(scale),
                Some(tc) => {
                    let inv = 1.0 / tc.gamma;
                    img.map(|px| {
                        [
                            ((px[0] as f64 * scale).powf(inv)).clamp(0.0, 1.0) as f32,
                            ((px[1] as f64 * scale).powf(inv)).clamp(0.0, 1.0) as f32,
                            ((px[2] as f64 * scale).powf(inv)).clamp(0.0, 1.0) as f32,
                        ]
                    })
                }
            }
        };
        let result = masked_mean(&transform(real_img), &transform(fake_img), mask, inner)?;
        let alpha = weights.alpha(i as usize);
        let weighted = alpha * result.value;
        total += weighted;
        terms.push(CascadeTerm {
            index: i as usize,
            pixel_count: result.pixel_count,
            loss: result.value,
            weighted,
        });
    }
    Ok(CascadeBreakdown { total, terms })
}

/// Scale-invariant log-space loss:
/// `(1/n) sum d^2 - (1/n^2) (sum d)^2` with `d = ln(real) - ln(fake)`.
/// Requires strictly positive pixels; no silent epsilon.
pub fn scale_invariant_loss(real_img: &RadianceImage, fake_img: &RadianceImage) -> Result<f64> {
    real_img.ensure_same_shape(fake_img)?;
    let pa = real_img.pixels();
    let pb = fake_img.pixels();
    let n = (pa.len() * 3) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (a, b) in pa.iter().zip(pb) {
        for c in 0..3 {
            if a[c] <= 0.0 || b[c] <= 0.0 {
                return Err(Error::Domain(format!(
                    "scale-invariant loss needs strictly positive pixels, got {} vs {}",
                    a[c], b[c]
                )));
            }
            let d = (a[c] as f64).ln() - (b[c] as f64).ln();
            sum += d;
            sum_sq += d * d;
        }
    }
    Ok(sum_sq / n - (sum * sum) / (n * n))
}

/// One row of the truncation-sensitivity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub truncation_ev: u32,
    pub l1_hdr: f64,
    pub l2_hdr: f64,
    pub l1_ldr: f64,
    pub l2_ldr: f64,
    pub illumination_ratio: f64,
}

/// For each truncation level `t = 0..=ev_max`, compares the image
/// against its EV-clipped version in HDR space and in tonemapped LDR
/// space, and reports the retained illumination ratio.
pub fn sensitivity_sweep(
    img: &RadianceImage,
    omega: &SolidAngleMap,
    bands: BandSpec,
    ldr_op: &TonemapOperator,
) -> Result<Vec<SensitivityRow>> {
    ldr_op.validate()?;
    let full_ii = integrated_illumination(img, omega)?;
    let ldr_full = ldr_op.apply(img)?;
    let mut rows = Vec::with_capacity(bands.band_count());
    for t in 0..=bands.ev_max {
        let clipped = clip_to_ev(img, ExposureValue { stops: t as f64 });
        let ldr_clipped = ldr_op.apply(&clipped)?;
        let ii = integrated_illumination(&clipped, omega)?;
        rows.push(SensitivityRow {
            truncation_ev: t,
            l1_hdr: l1(img, &clipped, None)?.value,
            l2_hdr: l2(img, &clipped, None)?.value,
            l1_ldr: l1(&ldr_full, &ldr_clipped, None)?.value,
            l2_ldr: l2(&ldr_full, &ldr_clipped, None)?.value,
            illumination_ratio: if full_ii > 0.0 { ii / full_ii } else { 1.0 },
        });
    }
    Ok(rows)
}
