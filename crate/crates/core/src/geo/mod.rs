//! Great-circle geometry, exact nearest-neighbour search over POIs, and the
//! analysis grid.

mod balltree;
mod grid;
mod index;

pub use balltree::{BallTree, Neighbor};
pub use grid::{CellId, GridSpec};
pub use index::{CategoryIndex, QueryMode, Scope};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// WGS84 longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !(lon.is_finite() && lat.is_finite()) {
            return Err(invalid(format!("non-finite coordinate ({lon}, {lat})")));
        }
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(invalid(format!("coordinate ({lon}, {lat}) out of WGS84 range")));
        }
        Ok(GeoPoint { lon, lat })
    }

    /// Point on the unit sphere.
    pub(crate) fn unit_vector(self) -> [f64; 3] {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }
}

/// Haversine great-circle distance in meters.
///
/// Never inlined: a single compiled copy keeps distances bit-identical
/// wherever they are computed, which exact tie-breaking relies on.
#[inline(never)]
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * s.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        assert_eq!(haversine_m(p(139.10, 35.23), p(139.10, 35.23)), 0.0);
    }

    #[test]
    fn one_degree_on_equator() {
        // R * pi / 180
        let expected = 6_371_000.0 * std::f64::consts::PI / 180.0;
        assert!((expected - 111_194.93).abs() < 0.01);
        assert!((haversine_m(p(0.0, 0.0), p(1.0, 0.0)) - expected).abs() < 0.01);
    }

    #[test]
    fn hakone_pair_matches_vincenty_sphere_formula() {
        // Independent route: the Vincenty (atan2) form of the central angle on
        // a sphere, evaluated directly from spherical trigonometry.
        let (a, b) = (p(139.105, 35.232), p(139.110, 35.232));
        let (f1, f2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        let num = ((f2.cos() * dl.sin()).powi(2)
            + (f1.cos() * f2.sin() - f1.sin() * f2.cos() * dl.cos()).powi(2))
        .sqrt();
        let den = f1.sin() * f2.sin() + f1.cos() * f2.cos() * dl.cos();
        let oracle = EARTH_RADIUS_M * num.atan2(den);
        let d = haversine_m(a, b);
        assert!(((d - oracle) / oracle).abs() < 1e-6, "{d} vs {oracle}");
        // ~454.5 m: 0.005 deg of longitude at 35.232 N.
        assert!((d - 454.5).abs() < 1.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -91.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = GeoPoint> {
            (138.9f64..139.3, 35.1f64..35.35).prop_map(|(lon, lat)| GeoPoint { lon, lat })
        }

        proptest! {
            #[test]
            fn symmetric_non_negative(a in point(), b in point()) {
                let d1 = haversine_m(a, b);
                prop_assert!(d1 >= 0.0);
                prop_assert_eq!(d1, haversine_m(b, a));
            }

            #[test]
            fn triangle_inequality(a in point(), b in point(), c in point()) {
                let ab = haversine_m(a, b);
                let bc = haversine_m(b, c);
                let ac = haversine_m(a, c);
                prop_assert!(ac <= ab + bc + 1e-6);
            }
        }
    }
}
