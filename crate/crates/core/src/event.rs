//! Observed stay events and points of interest.

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geo::GeoPoint;
use crate::taxonomy::{Mid10, SoftLabel};

/// One observed stay: when, how long, where, and which category (softly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayEvent {
    pub user_id: String,
    pub day: NaiveDate,
    /// Local-time start timestamp.
    pub start: NaiveDateTime,
    pub dwell_min: f64,
    pub lon: f64,
    pub lat: f64,
    pub label: SoftLabel,
}

impl StayEvent {
    /// Hour-of-day of the local start time.
    #[inline]
    pub fn start_hour(&self) -> usize {
        self.start.hour() as usize
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::microseconds((self.dwell_min * 60e6).round() as i64)
    }

    pub fn location(&self) -> GeoPoint {
        GeoPoint {
            lon: self.lon,
            lat: self.lat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dwell_min.is_finite() && self.dwell_min > 0.0) {
            return Err(invalid(format!("dwell_min {} must be > 0", self.dwell_min)));
        }
        if self.start.date() != self.day {
            return Err(invalid(format!(
                "start {} is not on day {}",
                self.start, self.day
            )));
        }
        let midnight = self.day.succ_opt().unwrap_or(self.day).and_hms_opt(0, 0, 0).unwrap();
        if self.end() > midnight {
            return Err(invalid(format!(
                "stay starting {} with {} min crosses midnight",
                self.start, self.dwell_min
            )));
        }
        GeoPoint::new(self.lon, self.lat)?;
        Ok(())
    }
}

/// A point of interest with a stable identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub lon: f64,
    pub lat: f64,
    pub category: Mid10,
}

impl Poi {
    pub fn location(&self) -> GeoPoint {
        GeoPoint {
            lon: self.lon,
            lat: self.lat,
        }
    }
}

/// A POI table. POIs are kept sorted by `poi_id`, so positions double as
/// a deterministic tie-break order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Poi>", into = "Vec<Poi>")]
pub struct PoiInventory {
    pois: Vec<Poi>,
}

impl PoiInventory {
    pub fn new(pois: Vec<Poi>) -> Result<Self> {
        Self::with_bbox(pois, None)
    }

    /// Validates ids and coordinates; `bbox` is `[min_lon, min_lat, max_lon, max_lat]`.
    pub fn with_bbox(mut pois: Vec<Poi>, bbox: Option<[f64; 4]>) -> Result<Self> {
        pois.sort_by(|a, b| a.poi_id.cmp(&b.poi_id));
        for w in pois.windows(2) {
            if w[0].poi_id == w[1].poi_id {
                return Err(invalid(format!("duplicate poi_id `{}`", w[0].poi_id)));
            }
        }
        for p in &pois {
            if p.poi_id.is_empty() {
                return Err(invalid("empty poi_id"));
            }
            GeoPoint::new(p.lon, p.lat)
                .map_err(|e| invalid(format!("poi `{}`: {e}", p.poi_id)))?;
            if let Some([x0, y0, x1, y1]) = bbox {
                if !(p.lon >= x0 && p.lon <= x1 && p.lat >= y0 && p.lat <= y1) {
                    return Err(invalid(format!(
                        "poi `{}` at ({}, {}) lies outside the study bounding box",
                        p.poi_id, p.lon, p.lat
                    )));
                }
            }
        }
        Ok(PoiInventory { pois })
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn get(&self, idx: usize) -> &Poi {
        &self.pois[idx]
    }

    pub fn position(&self, poi_id: &str) -> Option<usize> {
        self.pois
            .binary_search_by(|p| p.poi_id.as_str().cmp(poi_id))
            .ok()
    }

    pub fn find(&self, poi_id: &str) -> Option<&Poi> {
        self.position(poi_id).map(|i| &self.pois[i])
    }

    pub fn contains(&self, poi_id: &str) -> bool {
        self.position(poi_id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.pois.iter().map(|p| p.poi_id.as_str())
    }

    pub fn count_in(&self, c: Mid10) -> usize {
        self.pois.iter().filter(|p| p.category == c).count()
    }

    /// `[min_lon, min_lat, max_lon, max_lat]` of all POIs.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let first = self.pois.first()?;
        let mut b = [first.lon, first.lat, first.lon, first.lat];
        for p in &self.pois {
            b[0] = b[0].min(p.lon);
            b[1] = b[1].min(p.lat);
            b[2] = b[2].max(p.lon);
            b[3] = b[3].max(p.lat);
        }
        Some(b)
    }
}

impl TryFrom<Vec<Poi>> for PoiInventory {
    type Error = crate::Error;

    fn try_from(pois: Vec<Poi>) -> Result<Self> {
        PoiInventory::new(pois)
    }
}

impl From<PoiInventory> for Vec<Poi> {
    fn from(inv: PoiInventory) -> Self {
        inv.pois
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poi(id: &str, c: Mid10) -> Poi {
        Poi {
            poi_id: id.into(),
            lon: 139.1,
            lat: 35.2,
            category: c,
        }
    }

    fn event(start: &str, dwell: f64) -> StayEvent {
        let start = NaiveDateTime::parse_from_str(start, "%Y-%m-%dT%H:%M:%S").unwrap();
        StayEvent {
            user_id: "u".into(),
            day: start.date(),
            start,
            dwell_min: dwell,
            lon: 139.1,
            lat: 35.2,
            label: SoftLabel::one_hot(Mid10::Transit),
        }
    }

    #[test]
    fn start_hour_is_floor_of_local_time() {
        assert_eq!(event("2021-11-03T09:59:59", 1.0).start_hour(), 9);
        assert_eq!(event("2021-11-03T00:00:00", 1.0).start_hour(), 0);
    }

    #[test]
    fn event_validation() {
        assert!(event("2021-11-03T09:00:00", 30.0).validate().is_ok());
        assert!(event("2021-11-03T09:00:00", 0.0).validate().is_err());
        assert!(event("2021-11-03T23:30:00", 31.0).validate().is_err());
        assert!(event("2021-11-03T23:30:00", 30.0).validate().is_ok());
        let mut e = event("2021-11-03T09:00:00", 30.0);
        e.day = e.day.succ_opt().unwrap();
        assert!(e.validate().is_err());
    }

    #[test]
    fn inventory_sorted_and_unique() {
        let inv = PoiInventory::new(vec![poi("b", Mid10::Retail), poi("a", Mid10::Transit)]).unwrap();
        assert_eq!(inv.ids().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(inv.position("b"), Some(1));
        assert!(inv.find("z").is_none());
        assert!(PoiInventory::new(vec![poi("a", Mid10::Retail), poi("a", Mid10::Transit)]).is_err());
    }

    #[test]
    fn inventory_bbox_check() {
        let p = poi("a", Mid10::Retail);
        assert!(PoiInventory::with_bbox(vec![p.clone()], Some([139.0, 35.0, 140.0, 36.0])).is_ok());
        assert!(PoiInventory::with_bbox(vec![p], Some([139.5, 35.0, 140.0, 36.0])).is_err());
        let bad = Poi {
            lat: 95.0,
            ..poi("x", Mid10::Retail)
        };
        assert!(PoiInventory::new(vec![bad]).is_err());
    }
}
