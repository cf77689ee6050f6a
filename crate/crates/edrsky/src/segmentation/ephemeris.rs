//! Low-order solar ephemeris (declination, equation of time, hour
//! angle). Geometric elevation, no refraction; accurate to a few
//! hundredths of a degree over 1950-2050, well inside the +/-0.5 degree
//! budget for a 2.5 degree solar mask.

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capture geolocation and instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub latitude: f64,
    pub longitude: f64,
    pub timestamp: DateTime<Utc>,
}

impl CaptureMeta {
    pub fn validate(&self) -> Result<()> {
        if self.latitude.abs() > 90.0 || self.longitude.abs() > 180.0 {
            return Err(Error::InvalidParameter(format!(
                "bad geolocation lat={} lon={}",
                self.latitude, self.longitude
            )));
        }
        Ok(())
    }
}

/// Sun direction in the local horizon frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarPosition {
    /// Degrees clockwise from north, in [0, 360).
    pub azimuth: f64,
    /// Degrees above the horizon, in [-90, 90].
    pub elevation: f64,
}

fn julian_centuries(t: DateTime<Utc>) -> f64 {
    // Julian day from the Unix epoch (JD 2440587.5).
    let secs = t.timestamp() as f64 + t.nanosecond() as f64 * 1e-9;
    let jd = 2440587.5 + secs / 86400.0;
    (jd - 2451545.0) / 36525.0
}

/// Solar azimuth/elevation for a capture location and UTC instant.
pub fn solar_position(meta: &CaptureMeta) -> Result<SolarPosition> {
    meta.validate()?;
    let t = julian_centuries(meta.timestamp);

    // Geometric mean longitude and anomaly of the sun (degrees).
    let l0 = wrap360(280.46646 + t * (36000.76983 + t * 0.0003032));
    let m = 357.52911 + t * (35999.05029 - 0.0001537 * t);
    let m_rad = m.to_radians();

    // Equation of center and apparent longitude.
    let c = (1.914602 - t * (0.004817 + 0.000014 * t)) * m_rad.sin()
        + (0.019993 - 0.000101 * t) * (2.0 * m_rad).sin()
        + 0.000289 * (3.0 * m_rad).sin();
    let true_long = l0 + c;
    let omega = (125.04 - 1934.136 * t).to_radians();
    let lambda = (true_long - 0.00569 - 0.00478 * omega.sin()).to_radians();

    // Obliquity, corrected for nutation.
    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.8150 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0;
    let eps = (eps0 + 0.00256 * omega.cos()).to_radians();

    let declination = (eps.sin() * lambda.sin()).asin();

    // Equation of time, minutes.
    let e = 0.016708634 - t * (0.000042037 + 0.0000001267 * t);
    let y = (eps / 2.0).tan().powi(2);
    let l0_rad = l0.to_radians();
    let eot = 4.0
        * (y * (2.0 * l0_rad).sin() - 2.0 * e * m_rad.sin()
            + 4.0 * e * y * m_rad.sin() * (2.0 * l0_rad).cos()
            - 0.5 * y * y * (4.0 * l0_rad).sin()
            - 1.25 * e * e * (2.0 * m_rad).sin())
        .to_degrees();

    let minutes_utc = meta.timestamp.hour() as f64 * 60.0
        + meta.timestamp.minute() as f64
        + meta.timestamp.second() as f64 / 60.0;
    let true_solar_minutes = minutes_utc + eot + 4.0 * meta.longitude;
    let hour_angle = (true_solar_minutes / 4.0 - 180.0).to_radians();

    let lat = meta.latitude.to_radians();
    let elevation = (lat.sin() * declination.sin()
        + lat.cos() * declination.cos() * hour_angle.cos())
    .asin();
    let azimuth = hour_angle
        .sin()
        .atan2(hour_angle.cos() * lat.sin() - declination.tan() * lat.cos())
        .to_degrees()
        + 180.0;

    Ok(SolarPosition {
        azimuth: wrap360(azimuth),
        elevation: elevation.to_degrees(),
    })
}

fn wrap360(deg: f64) -> f64 {
    let w = deg % 360.0;
    if w < 0.0 {
        w + 360.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(lat: f64, lon: f64, y: i32, mo: u32, d: u32, h: u32, mi: u32) -> SolarPosition {
        let meta = CaptureMeta {
            latitude: lat,
            longitude: lon,
            timestamp: Utc.with_ymd_and_hms(y, mo, d, h, mi, 0).unwrap(),
        };
        solar_position(&meta).unwrap()
    }

    #[test]
    fn equator_equinox_noon_is_near_zenith() {
        // March equinox 2020 was Mar 20 ~03:50 UTC; solar noon at lon 0
        // the same day.
        let pos = at(0.0, 0.0, 2020, 3, 20, 12, 8);
        assert!(pos.elevation > 89.0, "elevation {}", pos.elevation);
    }

    #[test]
    fn quebec_city_summer_solstice_noon() {
        // 46.81N 71.21W, June 21 solar noon (~16:48 UTC).
        // 90 - latitude + declination(23.44) = 66.63.
        let pos = at(46.81, -71.21, 2016, 6, 21, 16, 48);
        assert!((pos.elevation - 66.6).abs() < 0.5, "elevation {}", pos.elevation);
        assert!((pos.azimuth - 180.0).abs() < 3.0, "azimuth {}", pos.azimuth);
    }

    #[test]
    fn midnight_winter_sun_is_below_horizon() {
        let pos = at(46.81, -71.21, 2015, 12, 21, 5, 0);
        assert!(pos.elevation < 0.0, "elevation {}", pos.elevation);
    }

    #[test]
    fn rejects_bad_coordinates() {
        let meta = CaptureMeta {
            latitude: 95.0,
            longitude: 0.0,
            timestamp: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
        };
        assert!(solar_position(&meta).is_err());
    }
}
