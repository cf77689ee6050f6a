//! Illumination-preserving dataset preprocessing: zenith rotation,
//! power-of-two inter-area downsampling, retention audits and
//! date-grouped dataset splitting.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envmap::{
    dynamic_range_ev, integrated_illumination, solid_angles, SkyangularGeometry,
};
use crate::error::{Error, Result};
use crate::image::RadianceImage;
use crate::par;
use crate::segmentation::CaptureMeta;

/// Rotates the skyangular image about its center (the zenith) with
/// bilinear interpolation. Interpolation weights are restricted to
/// on-disc source pixels and renormalized at the disc edge, so no border
/// zeros bleed into the sky; border stays border.
pub fn rotate_about_zenith(img: &RadianceImage, angle_deg: f64) -> Result<RadianceImage> {
    let geom = SkyangularGeometry::of_image(img)?;
    let n = img.width();
    let half = n as f64 / 2.0;
    let (sin, cos) = (-angle_deg.to_radians()).sin_cos();
    let pixels = par::map_indexed(n * n, |i| {
        let (x, y) = (i % n, i / n);
        if !geom.is_on_disc(x, y) {
            return [0.0f32; 3];
        }
        // Inverse-rotate the target pixel center into source space.
        let dx = x as f64 + 0.5 - half;
        let dy = y as f64 + 0.5 - half;
        let sx = cos * dx - sin * dy + half - 0.5;
        let sy = sin * dx + cos * dy + half - 0.5;
        let x0 = sx.floor() as i64;
        let y0 = sy.floor() as i64;
        let fx = sx - x0 as f64;
        let fy = sy - y0 as f64;
        let mut acc = [0.0f64; 3];
        let mut weight = 0.0f64;
        for (ox, oy, w) in [
            (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let (px, py) = (x0 + ox, y0 + oy);
            if px < 0 || py < 0 || px >= n as i64 || py >= n as i64 {
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            if !geom.is_on_disc(px, py) {
                continue;
            }
            let v = img.get(px, py);
            acc[0] += v[0] as f64 * w;
            acc[1] += v[1] as f64 * w;
            acc[2] += v[2] as f64 * w;
            weight += w;
        }
        if weight > 0.0 {
            [
                (acc[0] / weight) as f32,
                (acc[1] / weight) as f32,
                (acc[2] / weight) as f32,
            ]
        } else {
            [0.0; 3]
        }
    });
    RadianceImage::from_pixels(n, n, pixels)
}

/// Inter-area downsampling by `1/2^factor_exp`: each output pixel is the
/// mean of its source block, so the global mean is preserved exactly.
pub fn downsample_pow2(img: &RadianceImage, factor_exp: u32) -> Result<RadianceImage> {
    let block = 1usize << factor_exp;
    if !img.width().is_multiple_of(block) || !img.height().is_multiple_of(block) {
        return Err(Error::InvalidParameter(format!(
            "{}x{} not divisible by 2^{factor_exp}",
            img.width(),
            img.height()
        )));
    }
    let (ow, oh) = (img.width() / block, img.height() / block);
    let norm = 1.0 / (block * block) as f64;
    let pixels = par::map_indexed(ow * oh, |i| {
        let (x, y) = (i % ow, i / ow);
        let mut acc = [0.0f64; 3];
        for sy in y * block..(y + 1) * block {
            for sx in x * block..(x + 1) * block {
                let v = img.get(sx, sy);
                acc[0] += v[0] as f64;
                acc[1] += v[1] as f64;
                acc[2] += v[2] as f64;
            }
        }
        [
            (acc[0] * norm) as f32,
            (acc[1] * norm) as f32,
            (acc[2] * norm) as f32,
        ]
    });
    RadianceImage::from_pixels(ow, oh, pixels)
}

/// Before/after audit of a preprocessing step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetentionReport {
    pub ev_before: Option<f64>,
    pub ev_after: Option<f64>,
    pub illumination_ratio: f64,
    pub channel_mean_ratios: [f64; 3],
}

/// Compares EV, integrated illumination and per-channel means before and
/// after a pipeline step. Solid angles are recomputed per resolution.
pub fn retention_audit(before: &RadianceImage, after: &RadianceImage) -> Result<RetentionReport> {
    let ii = |img: &RadianceImage| -> Result<f64> {
        let omega = solid_angles(&SkyangularGeometry::of_image(img)?);
        integrated_illumination(img, &omega)
    };
    let ii_before = ii(before)?;
    let ii_after = ii(after)?;
    let means = |img: &RadianceImage| -> [f64; 3] {
        let n = img.pixels().len() as f64;
        let mut acc = [0.0f64; 3];
        for px in img.pixels() {
            for c in 0..3 {
                acc[c] += px[c] as f64;
            }
        }
        [acc[0] / n, acc[1] / n, acc[2] / n]
    };
    let mb = means(before);
    let ma = means(after);
    Ok(RetentionReport {
        ev_before: dynamic_range_ev(before).ok().map(|e| e.stops),
        ev_after: dynamic_range_ev(after).ok().map(|e| e.stops),
        illumination_ratio: if ii_before > 0.0 { ii_after / ii_before } else { 1.0 },
        channel_mean_ratios: [
            if mb[0] > 0.0 { ma[0] / mb[0] } else { 1.0 },
            if mb[1] > 0.0 { ma[1] / mb[1] } else { 1.0 },
            if mb[2] > 0.0 { ma[2] / mb[2] } else { 1.0 },
        ],
    })
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One dataset entry: an HDR file, its capture metadata, the derived
/// label (if built) and the split it landed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image_path: PathBuf,
    pub meta: CaptureMeta,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<Split>,
}

/// Assigns splits by capture date: dates are shuffled with the seed and
/// dealt greedily into train/val/test by the requested fractions, so no
/// date ever spans two splits and the same seed reproduces the split.
pub fn split_dataset(
    records: &mut [DatasetRecord],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("empty record list".into()));
    }
    let (ft, fv, fe) = fractions;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    // Group record indices by capture date (BTreeMap for a stable base
    // order before the seeded shuffle).
    let mut by_date: BTreeMap<(i32, u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        let d = rec.meta.timestamp.date_naive();
        by_date.entry((d.year(), d.month(), d.day())).or_default().push(i);
    }
    let mut dates: Vec<_> = by_date.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dates.shuffle(&mut rng);

    let total = records.len() as f64;
    let mut counts = (0usize, 0usize);
    for date in dates {
        let indices = &by_date[&date];
        let split = if (counts.0 as f64) < ft * total {
            counts.0 += indices.len();
            Split::Train
        } else if (counts.1 as f64) < fv * total {
            counts.1 += indices.len();
            Split::Val
        } else {
            Split::Test
        };
        for &i in indices {
            records[i].split = Some(split);
        }
    }
    Ok(())
}
