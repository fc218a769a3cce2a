//! Weak POI-level prior counters from nearest-POI matching of observed stays.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::event::{Poi, PoiInventory, StayEvent};
use crate::geo::{haversine_m, CategoryIndex, GeoPoint, Scope};
use crate::taxonomy::{Mid10, N_CATEGORIES};

/// Share of matched stays whose matched POI lies inside the reference zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneStats {
    pub center: GeoPoint,
    pub radius_m: f64,
    /// Matched events in zone / matched events; `None` without matches.
    pub overall_share: Option<f64>,
    /// Soft mass of category c matched in zone / soft mass of c matched.
    pub category_share: [Option<f64>; N_CATEGORIES],
}

impl ZoneStats {
    pub fn contains(&self, p: GeoPoint) -> bool {
        haversine_m(self.center, p) <= self.radius_m
    }

    /// Per-category share, falling back to the overall share.
    pub fn observed_zone_share(&self, c: Mid10) -> Option<f64> {
        self.category_share[c.index()].or(self.overall_share)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiPriorTable {
    /// Accumulated soft label mass per poi_id; every inventory POI has an entry.
    pub counters: BTreeMap<String, [f64; N_CATEGORIES]>,
    pub matched_events: u64,
    pub dropped_events: u64,
    pub zone: ZoneStats,
    /// Set when no event matched any POI.
    pub no_matches: bool,
}

impl PoiPriorTable {
    /// pi(i): counter mass in the POI's current category.
    pub fn own_prior(&self, poi: &Poi) -> f64 {
        self.counters
            .get(&poi.poi_id)
            .map_or(0.0, |v| v[poi.category.index()])
    }

    pub fn total_mass(&self) -> f64 {
        self.counters.values().flatten().sum()
    }
}

/// Adds each event's soft vector to its nearest POI when within
/// `prior_match_radius_m`; unmatched events are counted as dropped.
pub fn accumulate_weak_prior(
    corpus: &[StayEvent],
    inventory: &PoiInventory,
    index: &CategoryIndex,
    cfg: &SimConfig,
) -> PoiPriorTable {
    let radius = cfg.prior_match_radius_m;
    let matches: Vec<Option<usize>> = corpus
        .par_iter()
        .map(|e| {
            index
                .knn(e.location(), Scope::Global, 1)
                .first()
                .filter(|n| n.distance_m <= radius)
                .map(|n| n.item)
        })
        .collect();

    let mut counters: BTreeMap<String, [f64; N_CATEGORIES]> = inventory
        .ids()
        .map(|id| (id.to_string(), [0.0; N_CATEGORIES]))
        .collect();
    let center = cfg.zone_center();
    let in_zone: Vec<bool> = inventory
        .pois()
        .iter()
        .map(|p| haversine_m(center, p.location()) <= cfg.yumoto_r_m)
        .collect();

    let (mut matched, mut dropped, mut matched_in_zone) = (0u64, 0u64, 0u64);
    let mut cat_all = [0.0; N_CATEGORIES];
    let mut cat_zone = [0.0; N_CATEGORIES];
    for (e, m) in corpus.iter().zip(&matches) {
        let Some(i) = *m else {
            dropped += 1;
            continue;
        };
        matched += 1;
        let p = e.label.probs();
        let slot = counters.get_mut(&inventory.get(i).poi_id).unwrap();
        for c in 0..N_CATEGORIES {
            slot[c] += p[c];
            cat_all[c] += p[c];
            if in_zone[i] {
                cat_zone[c] += p[c];
            }
        }
        if in_zone[i] {
            matched_in_zone += 1;
        }
    }
    let mut category_share = [None; N_CATEGORIES];
    for c in 0..N_CATEGORIES {
        if cat_all[c] > 0.0 {
            category_share[c] = Some(cat_zone[c] / cat_all[c]);
        }
    }
    PoiPriorTable {
        counters,
        matched_events: matched,
        dropped_events: dropped,
        zone: ZoneStats {
            center,
            radius_m: cfg.yumoto_r_m,
            overall_share: (matched > 0).then(|| matched_in_zone as f64 / matched as f64),
            category_share,
        },
        no_matches: matched == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::SoftLabel;
    use chrono::NaiveDate;

    fn poi(id: &str, lon: f64, lat: f64, c: Mid10) -> Poi {
        Poi {
            poi_id: id.into(),
            lon,
            lat,
            category: c,
        }
    }

    fn event_at(p: GeoPoint, label: SoftLabel) -> StayEvent {
        let day = NaiveDate::from_ymd_opt(2021, 11, 2).unwrap();
        StayEvent {
            user_id: "u".into(),
            day,
            start: day.and_hms_opt(10, 0, 0).unwrap(),
            dwell_min: 30.0,
            lon: p.lon,
            lat: p.lat,
            label,
        }
    }

    /// Point `meters` due east of `p` along the parallel.
    fn east(p: GeoPoint, meters: f64) -> GeoPoint {
        let dlon = meters / (crate::geo::EARTH_RADIUS_M * p.lat.to_radians().cos()) * 180.0 / std::f64::consts::PI;
        GeoPoint::new(p.lon + dlon, p.lat).unwrap()
    }

    fn setup(pois: Vec<Poi>) -> (PoiInventory, CategoryIndex) {
        let inv = PoiInventory::new(pois).unwrap();
        let idx = CategoryIndex::build(&inv).unwrap();
        (inv, idx)
    }

    #[test]
    fn nearest_within_radius_gets_the_vector() {
        let origin = GeoPoint::new(139.10, 35.23).unwrap();
        let a = east(origin, 50.0);
        let b = east(origin, -70.0);
        let (inv, idx) = setup(vec![
            poi("A", a.lon, a.lat, Mid10::Retail),
            poi("B", b.lon, b.lat, Mid10::Culture),
        ]);
        let mut p = [0.0; N_CATEGORIES];
        p[Mid10::Retail.index()] = 0.7;
        p[Mid10::Culture.index()] = 0.3;
        let label = SoftLabel::new(p).unwrap();
        let t = accumulate_weak_prior(&[event_at(origin, label)], &inv, &idx, &SimConfig::default());
        assert_eq!(t.counters["A"], p);
        assert_eq!(t.counters["B"], [0.0; N_CATEGORIES]);
        assert_eq!((t.matched_events, t.dropped_events), (1, 0));
    }

    #[test]
    fn beyond_radius_is_dropped() {
        let origin = GeoPoint::new(139.10, 35.23).unwrap();
        let a = east(origin, 81.0);
        let (inv, idx) = setup(vec![poi("A", a.lon, a.lat, Mid10::Retail)]);
        let t = accumulate_weak_prior(
            &[event_at(origin, SoftLabel::one_hot(Mid10::Retail))],
            &inv,
            &idx,
            &SimConfig::default(),
        );
        assert_eq!(t.dropped_events, 1);
        assert!(t.no_matches);
        assert_eq!(t.total_mass(), 0.0);
    }

    #[test]
    fn on_poi_events_sum_to_own_category_mass() {
        let pois: Vec<Poi> = (0..5)
            .map(|i| poi(&format!("P{i}"), 139.0 + 0.01 * i as f64, 35.2, Mid10::from_index(i * 2).unwrap()))
            .collect();
        let (inv, idx) = setup(pois.clone());
        let mut corpus = Vec::new();
        let mut expected = [0.0; 5];
        for k in 0..50 {
            let i = (k * 7) % 5;
            let mut w = [0.0; N_CATEGORIES];
            for (c, slot) in w.iter_mut().enumerate() {
                *slot = ((k * 13 + c * 3) % 11) as f64 + 0.5;
            }
            let label = SoftLabel::from_weights(w).unwrap();
            expected[i] += label.get(pois[i].category);
            corpus.push(event_at(pois[i].location(), label));
        }
        let t = accumulate_weak_prior(&corpus, &inv, &idx, &SimConfig::default());
        for (i, p) in pois.iter().enumerate() {
            assert!((t.own_prior(p) - expected[i]).abs() < 1e-12);
        }
        // Conservation: matched mass + dropped = corpus size.
        assert!((t.total_mass() + t.dropped_events as f64 - corpus.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn zone_shares() {
        let cfg = SimConfig::default();
        let center = cfg.zone_center();
        let near = east(center, 100.0);
        let far = east(center, 10_000.0);
        let (inv, idx) = setup(vec![
            poi("N", near.lon, near.lat, Mid10::SpaOnsen),
            poi("F", far.lon, far.lat, Mid10::SpaOnsen),
        ]);
        let corpus = vec![
            event_at(near, SoftLabel::one_hot(Mid10::SpaOnsen)),
            event_at(near, SoftLabel::one_hot(Mid10::SpaOnsen)),
            event_at(far, SoftLabel::one_hot(Mid10::SpaOnsen)),
            event_at(far, SoftLabel::one_hot(Mid10::Retail)),
        ];
        let t = accumulate_weak_prior(&corpus, &inv, &idx, &cfg);
        assert_eq!(t.zone.overall_share, Some(0.5));
        assert_eq!(t.zone.category_share[Mid10::SpaOnsen.index()], Some(2.0 / 3.0));
        assert_eq!(t.zone.category_share[Mid10::Retail.index()], Some(0.0));
        assert_eq!(t.zone.observed_zone_share(Mid10::Culture), Some(0.5));
    }
}
