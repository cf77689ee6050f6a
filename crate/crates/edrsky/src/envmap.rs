//! Skyangular geometry, solid angles, dynamic-range and illumination
//! metrics, exposure manipulation and the diffuse-sphere probe.
//!
//! The skyangular mapping is equidistant: a pixel at normalized radius
//! `r <= 1` from the image center looks at zenith angle `theta = r*pi/2`.
//! Pixels with `r > 1` are border.

use crate::error::{Error, Result};
use crate::image::{luminance_of, RadianceImage};
use crate::par;

/// Square hemisphere-to-disc mapping with the equidistant radial law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkyangularGeometry {
    resolution: usize,
}

impl SkyangularGeometry {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "skyangular resolution must be >= 2, got {resolution}"
            )));
        }
        Ok(SkyangularGeometry { resolution })
    }

    /// Geometry matching a square image.
    pub fn of_image(img: &RadianceImage) -> Result<Self> {
        if !img.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "skyangular image must be square, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        Self::new(img.width())
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Normalized disc coordinates of the pixel center, in [-1, 1].
    /// `u` grows to the right (east), `v` grows downward.
    #[inline]
    pub fn uv(&self, x: usize, y: usize) -> (f64, f64) {
        let n = self.resolution as f64;
        let u = (2.0 * (x as f64 + 0.5)) / n - 1.0;
        let v = (2.0 * (y as f64 + 0.5)) / n - 1.0;
        (u, v)
    }

    #[inline]
    pub fn radius(&self, x: usize, y: usize) -> f64 {
        let (u, v) = self.uv(x, y);
        (u * u + v * v).sqrt()
    }

    #[inline]
    pub fn is_on_disc(&self, x: usize, y: usize) -> bool {
        self.radius(x, y) <= 1.0
    }

    /// Unit world direction (X east, Y north, Z up) of the pixel center,
    /// or `None` for border pixels. Image up (-v) points north.
    #[inline]
    pub fn direction(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        let (u, v) = self.uv(x, y);
        let r = (u * u + v * v).sqrt();
        if r > 1.0 {
            return None;
        }
        let theta = r * std::f64::consts::FRAC_PI_2;
        let (su, sv) = if r > 1e-12 { (u / r, -v / r) } else { (0.0, 0.0) };
        let st = theta.sin();
        Some([st * su, st * sv, theta.cos()])
    }

    /// World direction for a solar azimuth (degrees clockwise from north)
    /// and elevation (degrees above horizon).
    pub fn direction_from_az_el(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
        let az = azimuth_deg.to_radians();
        let el = elevation_deg.to_radians();
        [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()]
    }
}

/// Per-pixel solid angle (steradians), zero on border pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidAngleMap {
    resolution: usize,
    omega: Vec<f64>,
}

impl SolidAngleMap {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.omega
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.omega[y * self.resolution + x]
    }

    /// Sum over the disc; approaches 2*pi (hemisphere) as resolution grows.
    pub fn total(&self) -> f64 {
        par::sum_by(&self.omega, |w| *w)
    }
}

/// Per-pixel angular footprint from the Jacobian of the equidistant
/// mapping: `omega(r) = (pi/2) * sin(theta)/r * du*dv` with the analytic
/// limit `(pi/2)^2 * du*dv` at the center.
pub fn solid_angles(geom: &SkyangularGeometry) -> SolidAngleMap {
    let n = geom.resolution();
    let du_dv = (2.0 / n as f64) * (2.0 / n as f64);
    let omega = par::map_indexed(n * n, |i| {
        solid_angle_at(geom, i % n, i / n, du_dv)
    });
    SolidAngleMap { resolution: n, omega }
}

/// Sequential variant, kept for benchmarking the parallel kernel.
pub fn solid_angles_seq(geom: &SkyangularGeometry) -> SolidAngleMap {
    let n = geom.resolution();
    let du_dv = (2.0 / n as f64) * (2.0 / n as f64);
    let omega = par::map_indexed_seq(n * n, |i| {
        solid_angle_at(geom, i % n, i / n, du_dv)
    });
    SolidAngleMap { resolution: n, omega }
}

#[inline]
fn solid_angle_at(geom: &SkyangularGeometry, x: usize, y: usize, du_dv: f64) -> f64 {
    let r = geom.radius(x, y);
    if r > 1.0 {
        0.0
    } else if r < 1e-9 {
        std::f64::consts::FRAC_PI_2 * std::f64::consts::FRAC_PI_2 * du_dv
    } else {
        let theta = r * std::f64::consts::FRAC_PI_2;
        std::f64::consts::FRAC_PI_2 * (theta.sin() / r) * du_dv
    }
}

/// Per-pixel unit directions; border pixels hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMap {
    resolution: usize,
    xyz: Vec<[f64; 3]>,
}

impl DirectionMap {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.xyz
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        self.xyz[y * self.resolution + x]
    }
}

pub fn directions(geom: &SkyangularGeometry) -> DirectionMap {
    let n = geom.resolution();
    let xyz = par::map_indexed(n * n, |i| {
        geom.direction(i % n, i / n).unwrap_or([0.0; 3])
    });
    DirectionMap { resolution: n, xyz }
}

/// Dynamic range in base-2 stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureValue {
    pub stops: f64,
}

/// EV = log2(max|I| - min|I|) over non-border pixels, with |I| the BT.709
/// luminance.
pub fn dynamic_range_ev(img: &RadianceImage) -> Result<ExposureValue> {
    let geom = SkyangularGeometry::of_image(img)?;
    let n = geom.resolution();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for y in 0..n {
        for x in 0..n {
            if geom.is_on_disc(x, y) {
                let l = luminance_of(img.get(x, y));
                min = min.min(l);
                max = max.max(l);
            }
        }
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also trips on NaN luminance
    if !(max > min) {
        return Err(Error::DegenerateRange(format!(
            "luminance max ({max}) must exceed min ({min})"
        )));
    }
    Ok(ExposureValue { stops: (max - min).log2() })
}

/// Integrated illumination: the solid-angle-weighted sum of luminance
/// over the skydome.
pub fn integrated_illumination(img: &RadianceImage, omega: &SolidAngleMap) -> Result<f64> {
    ensure_omega_shape(img, omega)?;
    let pixels = img.pixels();
    Ok(par::sum_by_indexed(pixels.len(), |i| {
        omega.omega[i] * luminance_of(pixels[i])
    }))
}

/// Sequential variant for benchmarking.
pub fn integrated_illumination_seq(img: &RadianceImage, omega: &SolidAngleMap) -> Result<f64> {
    ensure_omega_shape(img, omega)?;
    let pixels = img.pixels();
    Ok(par::sum_by_indexed_seq(pixels.len(), |i| {
        omega.omega[i] * luminance_of(pixels[i])
    }))
}

fn ensure_omega_shape(img: &RadianceImage, omega: &SolidAngleMap) -> Result<()> {
    if img.width() != omega.resolution || img.height() != omega.resolution {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs solid-angle map {}^2",
            img.width(),
            img.height(),
            omega.resolution
        )));
    }
    Ok(())
}

/// Per-channel clamp at `2^ev`; idempotent.
pub fn clip_to_ev(img: &RadianceImage, ev: ExposureValue) -> RadianceImage {
    let ceiling = ev.stops.exp2() as f32;
    img.map(|px| [px[0].min(ceiling), px[1].min(ceiling), px[2].min(ceiling)])
}

/// Scales `img` so its integrated illumination matches `reference`.
pub fn equalize_exposure(
    img: &RadianceImage,
    reference: &RadianceImage,
    omega: &SolidAngleMap,
) -> Result<RadianceImage> {
    let own = integrated_illumination(img, omega)?;
    if own <= 0.0 {
        return Err(Error::Domain("cannot equalize a zero-illumination image".into()));
    }
    let omega_ref = if reference.width() == omega.resolution {
        omega.clone()
    } else {
        solid_angles(&SkyangularGeometry::of_image(reference)?)
    };
    let target = integrated_illumination(reference, &omega_ref)?;
    Ok(img.scaled(target / own))
}

/// Multiplies all channels by `2^-stops` (the exposure-bracket term).
pub fn reexpose(img: &RadianceImage, stops: i32) -> RadianceImage {
    img.scaled((-stops as f64).exp2())
}

/// Renders an orthographic top view of a diffuse unit sphere lit by the
/// environment map: `E(n) = sum_p omega_p * I_p * max(0, n . d_p)`.
pub fn render_diffuse_sphere(
    img: &RadianceImage,
    omega: &SolidAngleMap,
    dirs: &DirectionMap,
    out_resolution: usize,
) -> Result<RadianceImage> {
    ensure_omega_shape(img, omega)?;
    if dirs.resolution != omega.resolution {
        return Err(Error::ShapeMismatch(format!(
            "direction map {}^2 vs solid-angle map {}^2",
            dirs.resolution, omega.resolution
        )));
    }
    // Tight list of contributing samples.
    let samples: Vec<([f64; 3], [f64; 3])> = img
        .pixels()
        .iter()
        .zip(omega.omega.iter())
        .zip(dirs.xyz.iter())
        .filter(|((_, w), _)| **w > 0.0)
        .map(|((px, w), d)| {
            (
                *d,
                [px[0] as f64 * w, px[1] as f64 * w, px[2] as f64 * w],
            )
        })
        .collect();
    let n = out_resolution as f64;
    let pixels = par::map_indexed(out_resolution * out_resolution, |i| {
        let (x, y) = (i % out_resolution, i / out_resolution);
        let u = (2.0 * (x as f64 + 0.5)) / n - 1.0;
        let v = (2.0 * (y as f64 + 0.5)) / n - 1.0;
        let rr = u * u + v * v;
        if rr > 1.0 {
            return [0.0f32; 3];
        }
        let normal = [u, -v, (1.0 - rr).sqrt()];
        let e = irradiance(&samples, normal);
        [e[0] as f32, e[1] as f32, e[2] as f32]
    });
    RadianceImage::from_pixels(out_resolution, out_resolution, pixels)
}

/// Cosine-weighted irradiance for one normal.
pub fn irradiance(samples: &[([f64; 3], [f64; 3])], normal: [f64; 3]) -> [f64; 3] {
    let mut e = [0.0f64; 3];
    for (d, wi) in samples {
        let cos = normal[0] * d[0] + normal[1] * d[1] + normal[2] * d[2];
        if cos > 0.0 {
            e[0] += wi[0] * cos;
            e[1] += wi[1] * cos;
            e[2] += wi[2] * cos;
        }
    }
    e
}

/// Weighted samples `(direction, omega * rgb)` for irradiance probes.
pub fn light_samples(
    img: &RadianceImage,
    omega: &SolidAngleMap,
    dirs: &DirectionMap,
) -> Vec<([f64; 3], [f64; 3])> {
    img.pixels()
        .iter()
        .zip(omega.omega.iter())
        .zip(dirs.xyz.iter())
        .filter(|((_, w), _)| **w > 0.0)
        .map(|((px, w), d)| (*d, [px[0] as f64 * w, px[1] as f64 * w, px[2] as f64 * w]))
        .collect()
}
