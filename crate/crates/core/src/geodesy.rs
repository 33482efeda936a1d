//! Transverse Mercator conversion between projected grid coordinates and
//! longitude/latitude, using Krüger's series to sixth order in n.
//!
//! No datum shift is applied: NAD 1983 and WGS 84 coordinates are treated as
//! interchangeable, which is well below a cell at the resolutions handled here.

use std::f64::consts::FRAC_PI_2;

use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ellipsoid {
    pub name: &'static str,
    pub a: f64,
    pub f: f64,
}

pub const GRS80: Ellipsoid = Ellipsoid { name: "GRS 1980", a: 6_378_137.0, f: 1.0 / 298.257_222_101 };
pub const WGS84: Ellipsoid = Ellipsoid { name: "WGS 84", a: 6_378_137.0, f: 1.0 / 298.257_223_563 };

impl Ellipsoid {
    /// Build from semi-major axis and first eccentricity squared.
    pub fn from_e2(name: &'static str, a: f64, e2: f64) -> Ellipsoid {
        Ellipsoid { name, a, f: 1.0 - (1.0 - e2).sqrt() }
    }

    pub fn e2(&self) -> f64 {
        self.f * (2.0 - self.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransverseMercator {
    pub ellipsoid: Ellipsoid,
    pub lon0_deg: f64,
    pub k0: f64,
    pub false_easting: f64,
    pub false_northing: f64,
    #[serde(skip)]
    series: Series,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Series {
    e: f64,
    rect_radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

impl Series {
    fn new(ell: &Ellipsoid) -> Series {
        let n = ell.f / (2.0 - ell.f);
        let (n2, n3, n4, n5, n6) = (n * n, n.powi(3), n.powi(4), n.powi(5), n.powi(6));
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ];
        Series {
            e: ell.e2().sqrt(),
            rect_radius: ell.a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0),
            alpha,
            beta,
        }
    }
}

impl TransverseMercator {
    pub fn new(ellipsoid: Ellipsoid, lon0_deg: f64, k0: f64, false_easting: f64, false_northing: f64) -> Self {
        TransverseMercator {
            series: Series::new(&ellipsoid),
            ellipsoid,
            lon0_deg,
            k0,
            false_easting,
            false_northing,
        }
    }

    pub fn utm(zone: u8, north: bool, ellipsoid: Ellipsoid) -> Result<Self> {
        if !(1..=60).contains(&zone) {
            return Err(Error::InvalidArgument(format!("UTM zone {zone} outside 1..=60")));
        }
        let lon0 = -183.0 + 6.0 * f64::from(zone);
        Ok(Self::new(ellipsoid, lon0, 0.9996, 500_000.0, if north { 0.0 } else { 10_000_000.0 }))
    }

    /// Recognizes `EPSG:269zz` (NAD83), `EPSG:326zz` / `EPSG:327zz` (WGS 84)
    /// and free text naming a "UTM zone 10N" style zone.
    pub fn from_crs_tag(tag: &str) -> Result<Self> {
        let epsg = Regex::new(r"(?i)EPSG:(\d{5})").expect("static regex");
        if let Some(code) = epsg.captures(tag).and_then(|c| c[1].parse::<u32>().ok()) {
            let (zone, rest) = ((code % 100) as u8, code / 100);
            match rest {
                269 => return Self::utm(zone, true, GRS80),
                326 => return Self::utm(zone, true, WGS84),
                327 => return Self::utm(zone, false, WGS84),
                _ => {}
            }
        }
        let text = Regex::new(r"(?i)UTM[\s_]*zone[\s_]*(\d{1,2})\s*([NS])").expect("static regex");
        let caps = text.captures(tag).ok_or_else(|| Error::UnsupportedCrs(tag.to_string()))?;
        let zone: u8 = caps[1].parse().map_err(|_| Error::UnsupportedCrs(tag.to_string()))?;
        let north = caps[2].eq_ignore_ascii_case("n");
        let upper = tag.to_ascii_uppercase();
        let ellipsoid = if upper.contains("WGS") { WGS84 } else { GRS80 };
        Self::utm(zone, north, ellipsoid)
    }

    /// Longitude/latitude in degrees to easting/northing in metres.
    pub fn forward(&self, lon_deg: f64, lat_deg: f64) -> (f64, f64) {
        let s = &self.series;
        let phi = lat_deg.to_radians();
        let dlon = (lon_deg - self.lon0_deg).to_radians();
        let sin_phi = phi.sin();
        let t = (sin_phi.atanh() - s.e * (s.e * sin_phi).atanh()).sinh();
        let xi_p = t.atan2(dlon.cos());
        let eta_p = (dlon.sin() / (1.0 + t * t).sqrt()).atanh();
        let (mut xi, mut eta) = (xi_p, eta_p);
        for (j, a) in s.alpha.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
            eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
        }
        let scale = self.k0 * s.rect_radius;
        (self.false_easting + scale * eta, self.false_northing + scale * xi)
    }

    /// Easting/northing in metres to longitude/latitude in degrees.
    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let s = &self.series;
        let scale = self.k0 * s.rect_radius;
        let xi = (y - self.false_northing) / scale;
        let eta = (x - self.false_easting) / scale;
        let (mut xi_p, mut eta_p) = (xi, eta);
        for (j, b) in s.beta.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi_p -= b * (k * xi).sin() * (k * eta).cosh();
            eta_p -= b * (k * xi).cos() * (k * eta).sinh();
        }
        let chi = (xi_p.sin() / eta_p.cosh()).asin();
        // Conformal to geodetic latitude by fixed-point iteration.
        let mut phi = chi;
        for _ in 0..20 {
            let es = s.e * phi.sin();
            let next = 2.0 * (((1.0 + es) / (1.0 - es)).powf(s.e / 2.0) * (FRAC_PI_2 / 2.0 + chi / 2.0).tan()).atan()
                - FRAC_PI_2;
            let done = (next - phi).abs() < 1e-15;
            phi = next;
            if done {
                break;
            }
        }
        let lon = self.lon0_deg + eta_p.sinh().atan2(xi_p.cos()).to_degrees();
        (lon, phi.to_degrees())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_from_tags() {
        let tm = TransverseMercator::from_crs_tag("EPSG:26910 NAD 1983 UTM Zone 10N").unwrap();
        assert_eq!(tm.lon0_deg, -123.0);
        assert_eq!(tm.ellipsoid, GRS80);
        let tm = TransverseMercator::from_crs_tag("WGS 84 / UTM zone 33S").unwrap();
        assert_eq!((tm.lon0_deg, tm.false_northing), (15.0, 10_000_000.0));
        assert!(TransverseMercator::from_crs_tag("local grid").is_err());
    }

    #[test]
    fn central_meridian_on_equator_is_false_origin() {
        let tm = TransverseMercator::utm(10, true, GRS80).unwrap();
        let (x, y) = tm.forward(-123.0, 0.0);
        assert!((x - 500_000.0).abs() < 1e-9 && y.abs() < 1e-9);
    }
}
