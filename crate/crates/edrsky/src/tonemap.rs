//! Bijective tone-mapping operators with exact closed-form inverses.
//!
//! All operators map linear radiance `I >= 0` into a compressed range and
//! back. Math is done in f64 even though images store f32, so round trips
//! stay well inside 1e-5 relative error over `[0, 2^15]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RadianceImage;

pub const DEFAULT_MU: f64 = 5000.0;
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Offset in the DeepClouds compression `I' = 1/(1 + I + 0.01)`.
pub const DEEPCLOUDS_OFFSET: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TonemapOperator {
    /// Power law `I' = I^(1/gamma)`.
    Gamma { gamma: f64 },
    /// Logarithmic `I' = log_n(I + 1)`.
    LogN { base: f64 },
    /// `I' = ln(1 + mu*I) / ln(1 + mu)`.
    MuLaw { mu: f64 },
    /// Hybrid `I' = log2(mu-law(I) + 1)`.
    MuLawLog2 { mu: f64 },
    /// DeepClouds compression `I' = 1/(1 + I + 0.01)`; strictly decreasing.
    DeepCloudsRecip,
}

impl TonemapOperator {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            TonemapOperator::Gamma { gamma } => *gamma > 0.0 && gamma.is_finite(),
            TonemapOperator::LogN { base } => *base > 1.0 && base.is_finite(),
            TonemapOperator::MuLaw { mu } | TonemapOperator::MuLawLog2 { mu } => {
                *mu > 0.0 && mu.is_finite()
            }
            TonemapOperator::DeepCloudsRecip => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad tonemap parameters: {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TonemapOperator::Gamma { .. } => "gamma",
            TonemapOperator::LogN { .. } => "logn",
            TonemapOperator::MuLaw { .. } => "mulaw",
            TonemapOperator::MuLawLog2 { .. } => "mulawlog2",
            TonemapOperator::DeepCloudsRecip => "deepclouds",
        }
    }

    /// Scalar forward map, defined for `x >= 0`.
    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match self {
            TonemapOperator::Gamma { gamma } => x.powf(1.0 / gamma),
            TonemapOperator::LogN { base } => (x + 1.0).ln() / base.ln(),
            TonemapOperator::MuLaw { mu } => (1.0 + mu * x).ln() / (1.0 + mu).ln(),
            TonemapOperator::MuLawLog2 { mu } => {
                ((1.0 + mu * x).ln() / (1.0 + mu).ln() + 1.0).log2()
            }
            TonemapOperator::DeepCloudsRecip => 1.0 / (1.0 + x + DEEPCLOUDS_OFFSET),
        }
    }

    /// Scalar closed-form inverse; errors when `y` is outside the
    /// operator's range.
    #[inline]
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let out_of_range = |v: f64| Error::OutOfRange { operator: format!("{self:?}"), value: v };
        match self {
            TonemapOperator::Gamma { gamma } => {
                if y < 0.0 {
                    return Err(out_of_range(y));
                }
                Ok(y.powf(*gamma))
            }
            TonemapOperator::LogN { base } => {
                if y < 0.0 {
                    return Err(out_of_range(y));
                }
                Ok(base.powf(y) - 1.0)
            }
            TonemapOperator::MuLaw { mu } => {
                if y < 0.0 {
                    return Err(out_of_range(y));
                }
                Ok(((1.0 + mu).powf(y) - 1.0) / mu)
            }
            TonemapOperator::MuLawLog2 { mu } => {
                if y < 0.0 {
                    return Err(out_of_range(y));
                }
                let inner = y.exp2() - 1.0;
                Ok(((1.0 + mu).powf(inner) - 1.0) / mu)
            }
            TonemapOperator::DeepCloudsRecip => {
                let upper = 1.0 / (1.0 + DEEPCLOUDS_OFFSET);
                if y <= 0.0 || y > upper + 1e-12 {
                    return Err(out_of_range(y));
                }
                Ok((1.0 / y - 1.0 - DEEPCLOUDS_OFFSET).max(0.0))
            }
        }
    }

    /// Per-channel application to a whole image.
    pub fn apply(&self, img: &RadianceImage) -> Result<RadianceImage> {
        self.validate()?;
        Ok(img.map(|px| {
            [
                self.forward(px[0] as f64) as f32,
                self.forward(px[1] as f64) as f32,
                self.forward(px[2] as f64) as f32,
            ]
        }))
    }

    /// Per-channel inverse; fails on the first out-of-range value.
    pub fn invert(&self, img: &RadianceImage) -> Result<RadianceImage> {
        self.validate()?;
        let inverted: Vec<Result<[f32; 3]>> = crate::par::map(img.pixels(), |px| {
            Ok([
                self.inverse(px[0] as f64)? as f32,
                self.inverse(px[1] as f64)? as f32,
                self.inverse(px[2] as f64)? as f32,
            ])
        });
        let mut pixels = Vec::with_capacity(inverted.len());
        for px in inverted {
            pixels.push(px?);
        }
        RadianceImage::from_pixels(img.width(), img.height(), pixels)
    }

    /// HDR-space error `Delta = I - tau^-1(tau(I) - delta)` produced by a
    /// fixed LDR-space error `delta`.
    pub fn error_propagation(&self, intensity: f64, delta: f64) -> Result<f64> {
        self.validate()?;
        let mapped = self.forward(intensity) - delta;
        Ok(intensity - self.inverse(mapped)?)
    }
}

/// One row of the operator sweep table (compressed value and HDR-space
/// error at a fixed LDR delta).
#[derive(Debug, Clone, Serialize)]
pub struct SweepCurveRow {
    pub operator: String,
    pub intensity: f64,
    pub mapped: f64,
    pub hdr_error: Option<f64>,
}

/// Tabulates `tau(I)` and `Delta(I, delta)` per operator over a grid.
pub fn sweep_curves(
    ops: &[TonemapOperator],
    intensities: &[f64],
    delta: f64,
) -> Result<Vec<SweepCurveRow>> {
    if intensities.is_empty() {
        return Err(Error::InvalidParameter("empty intensity grid".into()));
    }
    let mut rows = Vec::with_capacity(ops.len() * intensities.len());
    for op in ops {
        op.validate()?;
        for &i in intensities {
            rows.push(SweepCurveRow {
                operator: op.name().to_string(),
                intensity: i,
                mapped: op.forward(i),
                hdr_error: op.error_propagation(i, delta).ok(),
            });
        }
    }
    Ok(rows)
}

/// Log-uniform grid over `[lo, hi]` (plus an exact zero when `lo == 0`).
pub fn log_uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(count);
    let lo_pos = if lo > 0.0 { lo } else { 1e-6 };
    if lo <= 0.0 {
        grid.push(0.0);
    }
    let n = count - grid.len();
    for k in 0..n {
        let t = k as f64 / (n - 1).max(1) as f64;
        grid.push(lo_pos * (hi / lo_pos).powf(t));
    }
    grid
}
