//! Synthetic skyangular fixtures used by demos, benches and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envmap::SkyangularGeometry;
use crate::error::Result;
use crate::image::RadianceImage;

/// Constant-radiance disc with black border.
pub fn uniform_sky(resolution: usize, value: [f32; 3]) -> Result<RadianceImage> {
    let geom = SkyangularGeometry::new(resolution)?;
    let pixels = (0..resolution * resolution)
        .map(|i| {
            if geom.is_on_disc(i % resolution, i / resolution) {
                value
            } else {
                [0.0; 3]
            }
        })
        .collect();
    RadianceImage::from_pixels(resolution, resolution, pixels)
}

/// Smooth clear-sky gradient: bluish, brighter toward the horizon.
pub fn gradient_sky(resolution: usize) -> Result<RadianceImage> {
    let geom = SkyangularGeometry::new(resolution)?;
    let pixels = (0..resolution * resolution)
        .map(|i| {
            let (x, y) = (i % resolution, i / resolution);
            let r = geom.radius(x, y);
            if r > 1.0 {
                return [0.0; 3];
            }
            let (u, v) = geom.uv(x, y);
            let base = 0.4 + 0.5 * r + 0.1 * (2.5 * u).sin() * (1.7 * v).cos();
            [(base * 0.55) as f32, (base * 0.75) as f32, base as f32]
        })
        .collect();
    RadianceImage::from_pixels(resolution, resolution, pixels)
}

/// Clear sky plus a bright solar disc.
///
/// `sun_fraction` is the fraction of on-disc pixels covered by the sun;
/// `sun_ev` sets the sun radiance to `2^sun_ev` so the image's dynamic
/// range lands at roughly that EV. The sun is placed at the given
/// azimuth/elevation (degrees).
pub fn sunny_sky(
    resolution: usize,
    sun_fraction: f64,
    sun_ev: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> Result<RadianceImage> {
    let geom = SkyangularGeometry::new(resolution)?;
    let n = resolution;
    // Sun center in image space: radius encodes zenith angle.
    let zenith = 90.0 - elevation_deg;
    let rad = (zenith / 90.0).clamp(0.0, 1.0);
    let az = azimuth_deg.to_radians();
    let cu = rad * az.sin();
    let cv = -rad * az.cos();
    let cx = (cu + 1.0) / 2.0 * n as f64;
    let cy = (cv + 1.0) / 2.0 * n as f64;

    let on_disc = (0..n * n).filter(|i| geom.is_on_disc(i % n, i / n)).count();
    let sun_radius_px = (sun_fraction * on_disc as f64 / std::f64::consts::PI).sqrt();
    let sun_value = sun_ev.exp2() as f32;

    let pixels = (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            if !geom.is_on_disc(x, y) {
                return [0.0; 3];
            }
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if (dx * dx + dy * dy).sqrt() <= sun_radius_px {
                return [sun_value; 3];
            }
            let r = geom.radius(x, y);
            let base = 0.5 + 0.5 * r;
            [(base * 0.5) as f32, (base * 0.7) as f32, base as f32]
        })
        .collect();
    RadianceImage::from_pixels(n, n, pixels)
}

/// Smooth random positive sky built from a few random directional lobes.
pub fn random_sky(resolution: usize, seed: u64) -> Result<RadianceImage> {
    let geom = SkyangularGeometry::new(resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lobes: Vec<([f64; 3], [f64; 3], f64)> = (0..6)
        .map(|_| {
            let az = rng.gen_range(0.0..360.0);
            let el = rng.gen_range(5.0..90.0);
            let dir = SkyangularGeometry::direction_from_az_el(az, el);
            let color = [
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.2..1.0),
            ];
            let sharpness = rng.gen_range(1.0..8.0);
            (dir, color, sharpness)
        })
        .collect();
    let n = resolution;
    let pixels = crate::par::map_indexed(n * n, |i| {
        let (x, y) = (i % n, i / n);
        match geom.direction(x, y) {
            None => [0.0; 3],
            Some(d) => {
                let mut px = [0.05f64; 3];
                for (dir, color, sharpness) in &lobes {
                    let cos = (d[0] * dir[0] + d[1] * dir[1] + d[2] * dir[2]).max(0.0);
                    let w = cos.powf(*sharpness);
                    for c in 0..3 {
                        px[c] += color[c] * w;
                    }
                }
                [px[0] as f32, px[1] as f32, px[2] as f32]
            }
        }
    });
    RadianceImage::from_pixels(n, n, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmap::dynamic_range_ev;
    use crate::image::luminance_of;

    #[test]
    fn sunny_sky_hits_target_fraction_and_ev() {
        let n = 256;
        let img = sunny_sky(n, 0.036, 13.4, 135.0, 45.0).unwrap();
        let geom = SkyangularGeometry::new(n).unwrap();
        let threshold = 2f64.powf(13.0);
        let (mut sun, mut disc) = (0usize, 0usize);
        for y in 0..n {
            for x in 0..n {
                if geom.is_on_disc(x, y) {
                    disc += 1;
                    if luminance_of(img.get(x, y)) > threshold {
                        sun += 1;
                    }
                }
            }
        }
        let frac = sun as f64 / disc as f64;
        assert!((frac - 0.036).abs() < 0.01, "sun fraction {frac}");
        let ev = dynamic_range_ev(&img).unwrap();
        assert!((ev.stops - 13.4).abs() < 0.05, "EV {}", ev.stops);
    }

    #[test]
    fn random_sky_is_reproducible() {
        let a = random_sky(64, 7).unwrap();
        let b = random_sky(64, 7).unwrap();
        assert_eq!(a, b);
        let c = random_sky(64, 8).unwrap();
        assert_ne!(a, c);
    }
}
