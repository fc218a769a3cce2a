//! Synthetic stay-event corpora drawn from a known ground-truth bundle.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{empty_prior_table, InventoryContext};
use crate::config::SimConfig;
use crate::error::{invalid, Result};
use crate::estimation::{
    bundle_artifacts, derive_start_priors, Component, DwellModel, Kernel, LogMixture, RhythmArtifacts,
    StopHazard, TransitionKernels,
};
use crate::event::{Poi, PoiInventory, StayEvent};
use crate::geo::{CategoryIndex, GeoPoint, Scope, EARTH_RADIUS_M};
use crate::matrix::{HourCategoryMatrix, MatrixKind};
use crate::rng::{seeded_rng, UniformSource};
use crate::simulator::{generate_person_day, start_timestamp};
use crate::taxonomy::{Mid10, SoftLabel, N_CATEGORIES, N_HOURS};

/// A Gaussian blob of POIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub lon: f64,
    pub lat: f64,
    pub spread_m: f64,
    pub weight: f64,
}

/// Hidden generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// First-event hour x category mass.
    pub start_matrix: [[f64; N_CATEGORIES]; N_HOURS],
    pub hazard: [f64; N_HOURS],
    pub block_edges: Vec<u8>,
    /// One row-stochastic kernel per block.
    pub kernels: Vec<[[f64; N_CATEGORIES]; N_CATEGORIES]>,
    pub dwell: BTreeMap<Mid10, LogMixture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
    /// Label-noise temperature; 0 gives one-hot labels.
    pub temperature: f64,
    /// Categories with a POI this close to the stay compete for label mass.
    pub label_radius_m: f64,
    /// Standard deviation of the positional noise added to each stay.
    pub gps_jitter_m: f64,
    pub poi_counts: BTreeMap<Mid10, usize>,
    pub clusters: Vec<ClusterSpec>,
    pub truth: GroundTruth,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let counts = [120, 30, 150, 60, 50, 60, 200, 40, 60, 30];
        SynthSpec {
            n_users: 500,
            n_days: 30,
            start_date: NaiveDate::from_ymd_opt(2021, 11, 1).unwrap(),
            seed: 7,
            temperature: 0.2,
            label_radius_m: 150.0,
            gps_jitter_m: 10.0,
            poi_counts: Mid10::ALL.iter().copied().zip(counts).collect(),
            clusters: vec![
                ClusterSpec { lon: 139.1036, lat: 35.2329, spread_m: 400.0, weight: 0.40 },
                ClusterSpec { lon: 139.0478, lat: 35.2497, spread_m: 300.0, weight: 0.20 },
                ClusterSpec { lon: 139.0744, lat: 35.2392, spread_m: 300.0, weight: 0.15 },
                ClusterSpec { lon: 139.0244, lat: 35.2017, spread_m: 500.0, weight: 0.25 },
            ],
            truth: GroundTruth::default(),
        }
    }
}

fn mixture(parts: &[(f64, f64, f64)]) -> LogMixture {
    LogMixture::new(
        parts
            .iter()
            .map(|&(weight, minutes, sd)| Component { weight, mean: minutes.ln(), sd })
            .collect(),
    )
    .expect("valid built-in mixture")
}

impl Default for GroundTruth {
    fn default() -> Self {
        use Mid10::*;
        let mut start_matrix = [[0.0; N_CATEGORIES]; N_HOURS];
        for (h, row) in start_matrix.iter_mut().enumerate() {
            let hf = h as f64;
            let w = (-(hf - 10.0).powi(2) / 8.0).exp() + 0.002;
            let morning = (-(hf - 8.0).powi(2) / 4.0).exp();
            let q = [
                0.05 + 0.25 * morning, // Accommodation
                0.35,                  // Transit
                0.05,
                0.03,
                0.20, // Parking
                0.04,
                0.10, // FoodDrink
                0.03,
                0.10, // Sightseeing
                0.05,
            ];
            for c in 0..N_CATEGORIES {
                row[c] = w * q[c];
            }
        }
        let mut hazard = [0.0; N_HOURS];
        for (h, v) in hazard.iter_mut().enumerate() {
            *v = match h {
                0..=9 => 0.0,
                10..=16 => 0.04 + 0.02 * (h - 10) as f64,
                17..=19 => 0.3,
                20..=22 => 0.5,
                _ => 1.0,
            };
        }
        let block_edges = vec![0, 5, 8, 11, 14, 18, 24];
        // Category attractiveness per block: night, early, morning, midday, afternoon, evening.
        let appeal: [[f64; N_CATEGORIES]; 6] = [
            [5.0, 0.5, 0.2, 0.2, 0.2, 1.0, 0.5, 0.1, 0.1, 0.1],
            [1.0, 3.0, 0.5, 0.5, 1.0, 0.5, 1.0, 0.3, 1.0, 0.8],
            [0.5, 1.5, 1.0, 0.6, 0.8, 0.8, 1.0, 1.5, 2.5, 1.5],
            [0.4, 1.0, 1.5, 0.6, 0.6, 1.0, 3.0, 1.2, 1.8, 1.0],
            [1.0, 1.5, 1.5, 0.5, 0.6, 2.0, 1.2, 0.8, 1.2, 0.8],
            [3.0, 1.0, 0.8, 0.3, 0.4, 2.0, 2.5, 0.2, 0.3, 0.2],
        ];
        let kernels = appeal
            .iter()
            .map(|a| {
                let mut k = [[0.0; N_CATEGORIES]; N_CATEGORIES];
                for (i, row) in k.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = a[j] * if i == j { 0.3 } else { 1.0 } * (1.0 + 0.1 * ((i * 7 + j * 3) % 5) as f64);
                    }
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                k
            })
            .collect();
        let dwell = [
            (Accommodation, mixture(&[(0.6, 45.0, 0.5), (0.4, 240.0, 0.5)])),
            (Transit, mixture(&[(0.7, 8.0, 0.4), (0.3, 20.0, 0.4)])),
            (Retail, mixture(&[(0.6, 15.0, 0.4), (0.4, 40.0, 0.4)])),
            (Services, mixture(&[(1.0, 20.0, 0.5)])),
            (Parking, mixture(&[(1.0, 10.0, 0.4)])),
            (SpaOnsen, mixture(&[(0.5, 60.0, 0.3), (0.5, 120.0, 0.3)])),
            (FoodDrink, mixture(&[(0.6, 45.0, 0.3), (0.4, 80.0, 0.3)])),
            (Culture, mixture(&[(0.5, 60.0, 0.4), (0.5, 100.0, 0.4)])),
            (Sightseeing, mixture(&[(1.0, 30.0, 0.5)])),
            (NaturePark, mixture(&[(0.5, 60.0, 0.4), (0.5, 120.0, 0.4)])),
        ]
        .into_iter()
        .collect();
        GroundTruth {
            start_matrix,
            hazard,
            block_edges,
            kernels,
            dwell,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 1 || self.n_days < 1 {
            return Err(invalid("synth spec needs at least one user and one day"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(invalid("temperature must be >= 0"));
        }
        if !(self.label_radius_m > 0.0) || !(self.gps_jitter_m >= 0.0) {
            return Err(invalid("label_radius_m must be > 0 and gps_jitter_m >= 0"));
        }
        for c in Mid10::ALL {
            if self.poi_counts.get(&c).copied().unwrap_or(0) < 1 {
                return Err(invalid(format!("poi_counts needs at least one {c}")));
            }
            if !self.truth.dwell.contains_key(&c) {
                return Err(invalid(format!("truth.dwell lacks {c}")));
            }
        }
        if self.clusters.is_empty() || self.clusters.iter().any(|c| !(c.weight > 0.0 && c.spread_m > 0.0)) {
            return Err(invalid("clusters need positive weights and spreads"));
        }
        if self.truth.kernels.len() + 1 != self.truth.block_edges.len() {
            return Err(invalid("truth.kernels needs one kernel per block"));
        }
        Ok(())
    }

    /// Simulator settings used by the generator.
    pub fn generator_config(&self) -> SimConfig {
        SimConfig {
            block_edges: self.truth.block_edges.clone(),
            sim_start_date: self.start_date,
            sim_n_days: self.n_days,
            persondays_per_user: 1,
            random_seed: self.seed,
            use_yumoto_zone_boost: false,
            ..SimConfig::default()
        }
    }
}

fn offset(p: GeoPoint, east_m: f64, north_m: f64) -> GeoPoint {
    let dlat = north_m / EARTH_RADIUS_M * 180.0 / std::f64::consts::PI;
    let dlon = east_m / (EARTH_RADIUS_M * p.lat.to_radians().cos()) * 180.0 / std::f64::consts::PI;
    GeoPoint {
        lon: p.lon + dlon,
        lat: (p.lat + dlat).clamp(-90.0, 90.0),
    }
}

fn normal_pair<U: UniformSource>(rng: &mut U) -> (f64, f64) {
    let r = (-2.0 * (1.0 - rng.uniform()).ln()).sqrt();
    let t = std::f64::consts::TAU * rng.uniform();
    (r * t.cos(), r * t.sin())
}

fn build_inventory(spec: &SynthSpec) -> Result<PoiInventory> {
    let mut rng = seeded_rng(&[b"synth-pois", &spec.seed.to_le_bytes()]);
    let weights: Vec<f64> = spec.clusters.iter().map(|c| c.weight).collect();
    let mut pois = Vec::new();
    for c in Mid10::ALL {
        for k in 0..spec.poi_counts[&c] {
            let cl = &spec.clusters[crate::rng::inverse_cdf(&weights, rng.uniform())];
            let (zx, zy) = normal_pair(&mut rng);
            let p = offset(GeoPoint { lon: cl.lon, lat: cl.lat }, zx * cl.spread_m, zy * cl.spread_m);
            pois.push(Poi {
                poi_id: format!("{}-{k:04}", c.label()),
                lon: p.lon,
                lat: p.lat,
                category: c,
            });
        }
    }
    PoiInventory::new(pois)
}

/// The hidden truth as a simulatable artifact bundle.
pub fn truth_artifacts(spec: &SynthSpec, inventory: &PoiInventory) -> Result<RhythmArtifacts> {
    let cfg = spec.generator_config();
    let s_ipf = HourCategoryMatrix::from_rows(MatrixKind::TargetMass, spec.truth.start_matrix)?;
    let blocks: Vec<Kernel> = spec
        .truth
        .kernels
        .iter()
        .map(|k| Kernel::from_probs(*k))
        .collect::<Result<_>>()?;
    let mut global = [[0.0; N_CATEGORIES]; N_CATEGORIES];
    for k in &blocks {
        for i in 0..N_CATEGORIES {
            for j in 0..N_CATEGORIES {
                global[i][j] += k.probs[i][j] / blocks.len() as f64;
            }
        }
    }
    let kernels = TransitionKernels {
        alpha: cfg.alpha,
        block_edges: spec.truth.block_edges.clone(),
        global: Kernel::from_probs(global)?,
        blocks,
    };
    let dwell: [LogMixture; N_CATEGORIES] = std::array::from_fn(|c| spec.truth.dwell[&Mid10::from_index(c).unwrap()].clone());
    bundle_artifacts(
        derive_start_priors(&s_ipf)?,
        StopHazard::from_values(spec.truth.hazard)?,
        kernels,
        DwellModel::per_category(dwell),
        empty_prior_table(inventory, &cfg),
        s_ipf,
        &cfg,
    )
}

/// Soft label from distances to the nearest POI of each competing category.
/// `p_c ∝ exp(z_c / T)` with `z_true = 0` and `z_c = -d_c / R` for categories
/// with a POI within `R`; T = 0 gives a one-hot label.
fn noisy_label(truth: Mid10, at: GeoPoint, index: &CategoryIndex, spec: &SynthSpec) -> SoftLabel {
    if spec.temperature == 0.0 {
        return SoftLabel::one_hot(truth);
    }
    let mut w = [0.0; N_CATEGORIES];
    w[truth.index()] = 1.0;
    for c in Mid10::ALL {
        if c == truth {
            continue;
        }
        if let Some(n) = index.knn(at, Scope::Category(c), 1).first() {
            if n.distance_m <= spec.label_radius_m {
                w[c.index()] = (-(n.distance_m / spec.label_radius_m) / spec.temperature).exp();
            }
        }
    }
    SoftLabel::from_weights(w).expect("positive weight on the true category")
}

/// Output of [`synthesize_corpus`].
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub events: Vec<StayEvent>,
    pub inventory: PoiInventory,
    pub truth: RhythmArtifacts,
    /// True category of every event, aligned with `events`.
    pub true_categories: Vec<Mid10>,
}

/// Generates `n_users x n_days` person-days with the simulator mechanics and
/// the hidden truth, then adds positional and label noise.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let inventory = build_inventory(spec)?;
    let truth = truth_artifacts(spec, &inventory)?;
    let cfg = spec.generator_config();
    let ctx = InventoryContext::new(inventory.clone(), truth.poi_priors.clone(), BTreeSet::new(), &cfg)?;
    let width = spec.n_users.to_string().len().max(4);
    let jobs: Vec<(usize, usize)> = (0..spec.n_users)
        .flat_map(|u| (0..spec.n_days).map(move |d| (u, d)))
        .collect();
    let days: Vec<Vec<(StayEvent, Mid10)>> = jobs
        .par_iter()
        .map(|&(u, d)| -> Result<Vec<(StayEvent, Mid10)>> {
            let mut rng = seeded_rng(&[
                b"synth-day",
                &spec.seed.to_le_bytes(),
                &(u as u64).to_le_bytes(),
                &(d as u64).to_le_bytes(),
            ]);
            let chain = generate_person_day(&truth, &ctx, &cfg, &mut rng)?;
            let day = spec.start_date + Duration::days(d as i64);
            Ok(chain
                .into_iter()
                .map(|e| {
                    let (zx, zy) = normal_pair(&mut rng);
                    let at = offset(
                        GeoPoint { lon: e.lon, lat: e.lat },
                        zx * spec.gps_jitter_m,
                        zy * spec.gps_jitter_m,
                    );
                    let label = noisy_label(e.category, at, ctx.index(), spec);
                    let ev = StayEvent {
                        user_id: format!("u{u:0width$}"),
                        day,
                        start: start_timestamp(day, e.start_s),
                        dwell_min: e.dwell_min,
                        lon: at.lon,
                        lat: at.lat,
                        label,
                    };
                    (ev, e.category)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let (events, true_categories) = days.into_iter().flatten().unzip();
    Ok(SyntheticCorpus {
        events,
        inventory,
        truth,
        true_categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n_users: 20,
            n_days: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn temperature_zero_is_one_hot() {
        let spec = SynthSpec { temperature: 0.0, ..small() };
        let out = synthesize_corpus(&spec).unwrap();
        assert!(!out.events.is_empty());
        for (e, c) in out.events.iter().zip(&out.true_categories) {
            assert!(e.label.is_one_hot());
            assert_eq!(e.label.argmax(), *c);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = synthesize_corpus(&small()).unwrap();
        let b = synthesize_corpus(&small()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.inventory, b.inventory);
        let c = synthesize_corpus(&SynthSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn events_are_valid_and_soft() {
        let out = synthesize_corpus(&small()).unwrap();
        for e in &out.events {
            e.validate().unwrap();
        }
        assert!(out.events.iter().any(|e| !e.label.is_one_hot()));
        assert!(out.events.iter().zip(&out.true_categories).all(|(e, c)| e.label.argmax() == *c));
    }

    #[test]
    fn spec_json_round_trip() {
        let s = serde_json::to_string(&SynthSpec::default()).unwrap();
        let back: SynthSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, SynthSpec::default());
        let partial: SynthSpec = serde_json::from_str(r#"{"n_users": 3, "temperature": 0}"#).unwrap();
        assert_eq!(partial.n_users, 3);
        assert_eq!(partial.truth, GroundTruth::default());
    }
}
