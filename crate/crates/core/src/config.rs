//! Simulation and estimation settings, serialized as a flat JSON object.

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::taxonomy::Mid10;

/// Every knob of the pipeline. Missing keys take their defaults when
/// deserialized; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    // Monte Carlo scale
    pub sim_users_n: usize,
    pub mc_runs: usize,
    pub persondays_per_user: usize,
    pub max_events: usize,
    pub random_seed: u64,
    pub reset_seed_per_scenario: bool,

    // Start mechanism
    pub use_spatial_start: bool,
    pub start_lambda: f64,
    pub start_beta: f64,

    // Termination
    pub use_stop_hazard: bool,
    pub hazard_scale: f64,

    // Transitions
    pub use_t_block: bool,
    pub block_edges: Vec<u8>,
    pub alpha: f64,

    // Dwell
    pub use_dwell_mixture: bool,
    pub gmm_components: usize,
    pub dwell_min_effw_hour: f64,
    pub dwell_shrink: f64,
    pub min_dwell_min: f64,

    // Candidate retrieval and likelihood
    pub poi_k_neigh: usize,
    pub poi_explore_eps: f64,
    pub poi_explore_radius_m: f64,
    pub r_default: f64,
    pub r_accom: f64,
    pub poi_dist_power: f64,
    pub poi_uniform_mix: f64,

    // Weak spatial prior
    pub use_soft_spatial_prior: bool,
    pub prior_match_radius_m: f64,
    pub prior_lambda: f64,
    pub prior_beta: f64,
    pub prior_eps: f64,

    // Scenario emphasis
    pub use_scenario_boost: bool,
    pub poi_boost_factor: f64,

    // Zone emphasis
    pub use_yumoto_zone_boost: bool,
    pub yumoto_r_m: f64,
    pub zone_lambda: f64,
    pub zone_beta: f64,
    pub zone_center_lon: f64,
    pub zone_center_lat: f64,

    pub end_of_day_cap: NaiveTime,

    // Simulated calendar: person-day k of a user lands on
    // sim_start_date + ((user * persondays_per_user + k) mod sim_n_days).
    pub sim_start_date: NaiveDate,
    pub sim_n_days: usize,

    /// Fit dwell mixtures on a weighted resample instead of weighted EM.
    pub dwell_fit_resample: bool,
    pub ipf_tol: f64,
    pub ipf_max_iter: usize,

    // Evaluation
    pub grid_cell_m: f64,
    pub hit_radius_m: f64,
    /// Optional [min_lon, min_lat, max_lon, max_lat] that every POI must fall in.
    pub study_bbox: Option<[f64; 4]>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sim_users_n: 5000,
            mc_runs: 50,
            persondays_per_user: 1,
            max_events: 48,
            random_seed: 20251209,
            reset_seed_per_scenario: true,
            use_spatial_start: true,
            start_lambda: 0.70,
            start_beta: 0.70,
            use_stop_hazard: true,
            hazard_scale: 1.0,
            use_t_block: true,
            block_edges: vec![0, 5, 8, 11, 14, 18, 24],
            alpha: 0.5,
            use_dwell_mixture: true,
            gmm_components: 2,
            dwell_min_effw_hour: 60.0,
            dwell_shrink: 0.5,
            min_dwell_min: 5.0,
            poi_k_neigh: 40,
            poi_explore_eps: 0.02,
            poi_explore_radius_m: 3000.0,
            r_default: 100.0,
            r_accom: 120.0,
            poi_dist_power: 0.75,
            poi_uniform_mix: 0.06,
            use_soft_spatial_prior: true,
            prior_match_radius_m: 80.0,
            prior_lambda: 0.60,
            prior_beta: 0.60,
            prior_eps: 1e-12,
            use_scenario_boost: true,
            poi_boost_factor: 3.0,
            use_yumoto_zone_boost: true,
            yumoto_r_m: 3000.0,
            zone_lambda: 0.50,
            zone_beta: 0.50,
            // Hakone-Yumoto Station
            zone_center_lon: 139.1036,
            zone_center_lat: 35.2329,
            end_of_day_cap: NaiveTime::from_hms_opt(23, 59, 59).unwrap(),
            sim_start_date: NaiveDate::from_ymd_opt(2021, 11, 1).unwrap(),
            sim_n_days: 30,
            dwell_fit_resample: false,
            ipf_tol: 1e-9,
            ipf_max_iter: 1000,
            grid_cell_m: 250.0,
            hit_radius_m: 150.0,
            study_bbox: None,
        }
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Config {
        field,
        reason: reason.into(),
    }
}

fn unit_interval(field: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(bad(field, format!("{v} is not a probability in [0, 1]")));
    }
    Ok(())
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(bad(field, format!("{v} must be finite and > 0")));
    }
    Ok(())
}

fn non_negative(field: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(bad(field, format!("{v} must be finite and >= 0")));
    }
    Ok(())
}

fn at_least_one(field: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(bad(field, "must be >= 1"));
    }
    Ok(())
}

impl SimConfig {
    /// Returns the config unchanged if every invariant holds, otherwise the
    /// first violation with its field name.
    pub fn validate(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        at_least_one("sim_users_n", self.sim_users_n)?;
        at_least_one("mc_runs", self.mc_runs)?;
        at_least_one("persondays_per_user", self.persondays_per_user)?;
        at_least_one("max_events", self.max_events)?;

        unit_interval("start_lambda", self.start_lambda)?;
        non_negative("start_beta", self.start_beta)?;
        non_negative("hazard_scale", self.hazard_scale)?;

        let e = &self.block_edges;
        if e.len() < 2 {
            return Err(bad("block_edges", "needs at least two edges"));
        }
        if e[0] != 0 {
            return Err(bad("block_edges", format!("first edge is {}, expected 0", e[0])));
        }
        if *e.last().unwrap() != 24 {
            return Err(bad(
                "block_edges",
                format!("last edge is {}, expected 24", e.last().unwrap()),
            ));
        }
        if e.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("block_edges", "edges must be strictly increasing"));
        }
        non_negative("alpha", self.alpha)?;

        at_least_one("gmm_components", self.gmm_components)?;
        non_negative("dwell_min_effw_hour", self.dwell_min_effw_hour)?;
        unit_interval("dwell_shrink", self.dwell_shrink)?;
        positive("min_dwell_min", self.min_dwell_min)?;

        at_least_one("poi_k_neigh", self.poi_k_neigh)?;
        unit_interval("poi_explore_eps", self.poi_explore_eps)?;
        positive("poi_explore_radius_m", self.poi_explore_radius_m)?;
        positive("r_default", self.r_default)?;
        positive("r_accom", self.r_accom)?;
        positive("poi_dist_power", self.poi_dist_power)?;
        unit_interval("poi_uniform_mix", self.poi_uniform_mix)?;

        positive("prior_match_radius_m", self.prior_match_radius_m)?;
        unit_interval("prior_lambda", self.prior_lambda)?;
        non_negative("prior_beta", self.prior_beta)?;
        positive("prior_eps", self.prior_eps)?;

        positive("poi_boost_factor", self.poi_boost_factor)?;

        positive("yumoto_r_m", self.yumoto_r_m)?;
        unit_interval("zone_lambda", self.zone_lambda)?;
        non_negative("zone_beta", self.zone_beta)?;
        if GeoPoint::new(self.zone_center_lon, self.zone_center_lat).is_err() {
            return Err(bad("zone_center_lon", "zone center is not a valid WGS84 coordinate"));
        }
        if self.end_of_day_cap.num_seconds_from_midnight() == 0 {
            return Err(bad("end_of_day_cap", "cap must be after midnight"));
        }

        at_least_one("sim_n_days", self.sim_n_days)?;
        if self.persondays_per_user > self.sim_n_days {
            return Err(bad(
                "persondays_per_user",
                "cannot exceed sim_n_days (person-days of one user need distinct dates)",
            ));
        }
        positive("ipf_tol", self.ipf_tol)?;
        at_least_one("ipf_max_iter", self.ipf_max_iter)?;
        positive("grid_cell_m", self.grid_cell_m)?;
        positive("hit_radius_m", self.hit_radius_m)?;
        if let Some([x0, y0, x1, y1]) = self.study_bbox {
            if !(x0 < x1 && y0 < y1) {
                return Err(bad("study_bbox", "expected [min_lon, min_lat, max_lon, max_lat]"));
            }
        }
        Ok(())
    }

    /// Distance scale of the likelihood kernel for a category.
    pub fn distance_scale(&self, c: Mid10) -> f64 {
        match c {
            Mid10::Accommodation => self.r_accom,
            _ => self.r_default,
        }
    }

    pub fn zone_center(&self) -> GeoPoint {
        GeoPoint {
            lon: self.zone_center_lon,
            lat: self.zone_center_lat,
        }
    }

    /// End-of-day cap in seconds after midnight.
    pub fn cap_seconds(&self) -> f64 {
        self.end_of_day_cap.num_seconds_from_midnight() as f64
    }

    pub fn n_blocks(&self) -> usize {
        self.block_edges.len() - 1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.clone().validate().unwrap(), cfg);
        assert_eq!(cfg.sim_users_n, 5000);
        assert_eq!(cfg.mc_runs, 50);
        assert_eq!(cfg.random_seed, 20251209);
        assert_eq!(cfg.block_edges, vec![0, 5, 8, 11, 14, 18, 24]);
        assert_eq!(cfg.prior_eps, 1e-12);
        assert_eq!(cfg.cap_seconds(), 86399.0);
    }

    #[test]
    fn block_edges_must_end_at_24() {
        let cfg = SimConfig {
            block_edges: vec![0, 5, 8],
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "block_edges"),
            other => panic!("expected block_edges error, got {other:?}"),
        }
    }

    #[test]
    fn zero_min_dwell_rejected() {
        let cfg = SimConfig {
            min_dwell_min: 0.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "min_dwell_min"),
            other => panic!("expected min_dwell_min error, got {other:?}"),
        }
    }

    #[test]
    fn probabilities_checked() {
        let cfg = SimConfig {
            poi_explore_eps: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig {
            max_events: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_keys_and_round_trip() {
        let cfg = SimConfig::default();
        let json = cfg.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let obj = v.as_object().unwrap();
        for key in [
            "sim_users_n",
            "mc_runs",
            "persondays_per_user",
            "max_events",
            "random_seed",
            "reset_seed_per_scenario",
            "use_spatial_start",
            "start_lambda",
            "start_beta",
            "use_stop_hazard",
            "hazard_scale",
            "use_t_block",
            "block_edges",
            "alpha",
            "use_dwell_mixture",
            "gmm_components",
            "dwell_min_effw_hour",
            "dwell_shrink",
            "min_dwell_min",
            "poi_k_neigh",
            "poi_explore_eps",
            "poi_explore_radius_m",
            "r_default",
            "r_accom",
            "poi_dist_power",
            "poi_uniform_mix",
            "use_soft_spatial_prior",
            "prior_match_radius_m",
            "prior_lambda",
            "prior_beta",
            "prior_eps",
            "use_scenario_boost",
            "poi_boost_factor",
            "use_yumoto_zone_boost",
            "yumoto_r_m",
            "zone_lambda",
            "zone_beta",
            "zone_center_lon",
            "zone_center_lat",
            "end_of_day_cap",
        ] {
            assert!(obj.contains_key(key), "missing key {key}");
        }
        assert_eq!(obj["end_of_day_cap"], "23:59:59");
        let back = SimConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn partial_json_fills_defaults_and_rejects_unknown() {
        let cfg = SimConfig::from_json(r#"{"mc_runs": 2, "sim_users_n": 100}"#).unwrap();
        assert_eq!(cfg.mc_runs, 2);
        assert_eq!(cfg.alpha, 0.5);
        assert!(SimConfig::from_json(r#"{"mc_runz": 2}"#).is_err());
    }
}
