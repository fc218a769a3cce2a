//! Event-to-POI instantiation: candidate retrieval, prior-likelihood scoring
//! with bias controls, normalization and sampling.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::config::SimConfig;
use crate::error::{invalid, Error, Result};
use crate::estimation::PoiPriorTable;
use crate::event::{Poi, PoiInventory};
use crate::geo::{haversine_m, CategoryIndex, GeoPoint, Neighbor, Scope};
use crate::rng::{inverse_cdf, UniformSource};
use crate::taxonomy::{Mid10, N_CATEGORIES};

/// Everything a scenario varies: inventory, its index, adjusted priors and
/// the changed-POI set. Behavioral artifacts live elsewhere.
#[derive(Debug, Clone)]
pub struct InventoryContext {
    inventory: PoiInventory,
    index: CategoryIndex,
    priors: PoiPriorTable,
    changed: BTreeSet<String>,
    cfg: SimConfig,
    own_prior: Vec<f64>,
    changed_flag: Vec<bool>,
    in_zone: Vec<bool>,
    /// Start-POI candidates and weights per category (global if empty).
    start: Vec<(Vec<usize>, Vec<f64>)>,
}

impl InventoryContext {
    /// `priors` must cover exactly the inventory's ids.
    pub fn new(
        inventory: PoiInventory,
        priors: PoiPriorTable,
        changed: BTreeSet<String>,
        cfg: &SimConfig,
    ) -> Result<Self> {
        if priors.counters.len() != inventory.len()
            || !inventory.ids().all(|id| priors.counters.contains_key(id))
        {
            return Err(Error::Mismatch(
                "POI prior table does not cover exactly the inventory's poi_ids".into(),
            ));
        }
        let index = CategoryIndex::build(&inventory)?;
        let own_prior: Vec<f64> = inventory.pois().iter().map(|p| priors.own_prior(p)).collect();
        let changed_flag = inventory.pois().iter().map(|p| changed.contains(&p.poi_id)).collect();
        let center = cfg.zone_center();
        let in_zone = inventory
            .pois()
            .iter()
            .map(|p| haversine_m(center, p.location()) <= cfg.yumoto_r_m)
            .collect();
        let lambda = if cfg.use_spatial_start { cfg.start_lambda } else { 0.0 };
        let start = Mid10::ALL
            .iter()
            .map(|&c| {
                let mut members: Vec<usize> = (0..inventory.len())
                    .filter(|&i| inventory.get(i).category == c)
                    .collect();
                if members.is_empty() {
                    members = (0..inventory.len()).collect();
                }
                let priors: Vec<f64> = members.iter().map(|&i| own_prior[i]).collect();
                let w = mixed_weights(&priors, lambda, cfg.start_beta, cfg.prior_eps);
                (members, w)
            })
            .collect();
        Ok(InventoryContext {
            inventory,
            index,
            priors,
            changed,
            cfg: cfg.clone(),
            own_prior,
            changed_flag,
            in_zone,
            start,
        })
    }

    pub fn inventory(&self) -> &PoiInventory {
        &self.inventory
    }

    pub fn index(&self) -> &CategoryIndex {
        &self.index
    }

    pub fn priors(&self) -> &PoiPriorTable {
        &self.priors
    }

    pub fn changed(&self) -> &BTreeSet<String> {
        &self.changed
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn poi(&self, i: usize) -> &Poi {
        self.inventory.get(i)
    }

    pub fn own_prior(&self, i: usize) -> f64 {
        self.own_prior[i]
    }

    pub fn in_zone(&self, i: usize) -> bool {
        self.in_zone[i]
    }
}

/// `(1 - lambda) / n + lambda * (v + eps)^beta / sum (v + eps)^beta`.
pub fn mixed_weights(values: &[f64], lambda: f64, beta: f64, eps: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let powered: Vec<f64> = values.iter().map(|v| (v + eps).powf(beta)).collect();
    let total: f64 = powered.iter().sum();
    powered
        .iter()
        .map(|p| {
            let share = if total > 0.0 { p / total } else { 0.0 };
            (1.0 - lambda) / n + lambda * share
        })
        .collect()
}

/// Distance-decay likelihood `exp(-(d / R_c)^gamma)`.
pub fn likelihood(distance_m: f64, category: Mid10, cfg: &SimConfig) -> f64 {
    (-(distance_m / cfg.distance_scale(category)).powf(cfg.poi_dist_power)).exp()
}

/// Exploration radius query with probability `poi_explore_eps`, otherwise
/// knn within the category; global knn when the category result is empty.
/// Always consumes exactly one variate.
pub fn retrieve_candidates<U: UniformSource>(
    anchor: GeoPoint,
    category: Mid10,
    ctx: &InventoryContext,
    rng: &mut U,
) -> Result<Vec<Neighbor>> {
    if ctx.inventory.is_empty() {
        return Err(invalid("empty POI inventory"));
    }
    let cfg = &ctx.cfg;
    let explore = rng.uniform() < cfg.poi_explore_eps;
    let scope = Scope::Category(category);
    let found = if explore {
        ctx.index.within(anchor, scope, cfg.poi_explore_radius_m)
    } else {
        ctx.index.knn(anchor, scope, cfg.poi_k_neigh)
    };
    if found.is_empty() {
        Ok(ctx.index.knn(anchor, Scope::Global, cfg.poi_k_neigh))
    } else {
        Ok(found)
    }
}

/// Per-candidate score components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredCandidate {
    /// Position in the inventory.
    pub poi: usize,
    pub distance_m: f64,
    pub likelihood: f64,
    pub mixed_likelihood: f64,
    pub prior_multiplier: f64,
    pub zone_factor: f64,
    pub boost: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDistribution {
    pub candidates: Vec<ScoredCandidate>,
    pub probs: Vec<f64>,
}

impl CandidateDistribution {
    pub fn poi_ids<'a>(&'a self, ctx: &'a InventoryContext) -> impl Iterator<Item = &'a str> + 'a {
        self.candidates.iter().map(move |c| ctx.poi(c.poi).poi_id.as_str())
    }
}

/// Zone factor for a candidate, given the observed and candidate-set zone shares.
pub fn zone_factor(in_zone: bool, s_obs: f64, s_cand: f64, lambda: f64, beta: f64) -> f64 {
    let ratio = if in_zone {
        s_obs / s_cand
    } else {
        (1.0 - s_obs) / (1.0 - s_cand)
    };
    let ratio = if ratio.is_finite() { ratio.clamp(0.25, 4.0) } else { 4.0 };
    (1.0 - lambda) + lambda * ratio.powf(beta)
}

/// Score and normalize a non-empty candidate list:
/// `s_i = L'_i * Pi_i * g_i * m_i`, `P(i) = (s_i + eps) / sum (s_k + eps)`.
pub fn score_candidates(
    category: Mid10,
    candidates: &[Neighbor],
    ctx: &InventoryContext,
) -> CandidateDistribution {
    let cfg = &ctx.cfg;
    let n = candidates.len();
    let nf = n as f64;
    let eps = cfg.prior_eps;

    let base: Vec<f64> = candidates
        .iter()
        .map(|c| likelihood(c.distance_m, ctx.poi(c.item).category, cfg))
        .collect();
    let base_total: f64 = base.iter().sum();
    let u = cfg.poi_uniform_mix;

    let prior_mult = if cfg.use_soft_spatial_prior {
        let pri: Vec<f64> = candidates.iter().map(|c| ctx.own_prior[c.item]).collect();
        mixed_weights(&pri, cfg.prior_lambda, cfg.prior_beta, eps)
    } else {
        vec![1.0; n]
    };

    let zone = if cfg.use_yumoto_zone_boost {
        ctx.priors.zone.observed_zone_share(category).map(|s_obs| {
            let s_cand = candidates.iter().filter(|c| ctx.in_zone[c.item]).count() as f64 / nf;
            (s_obs, s_cand)
        })
    } else {
        None
    };

    let mut scored = Vec::with_capacity(n);
    for (k, c) in candidates.iter().enumerate() {
        let norm = if base_total > 0.0 { base[k] / base_total } else { 0.0 };
        let mixed = (1.0 - u) * norm + u / nf;
        let g = zone.map_or(1.0, |(s_obs, s_cand)| {
            zone_factor(ctx.in_zone[c.item], s_obs, s_cand, cfg.zone_lambda, cfg.zone_beta)
        });
        let boost = if cfg.use_scenario_boost && ctx.changed_flag[c.item] {
            cfg.poi_boost_factor
        } else {
            1.0
        };
        scored.push(ScoredCandidate {
            poi: c.item,
            distance_m: c.distance_m,
            likelihood: base[k],
            mixed_likelihood: mixed,
            prior_multiplier: prior_mult[k],
            zone_factor: g,
            boost,
            score: mixed * prior_mult[k] * g * boost,
        });
    }
    let probs = normalize_scores(scored.iter().map(|s| s.score), eps);
    CandidateDistribution {
        candidates: scored,
        probs,
    }
}

/// `(s_i + eps) / sum (s_k + eps)`.
pub fn normalize_scores(scores: impl Iterator<Item = f64>, eps: f64) -> Vec<f64> {
    let shifted: Vec<f64> = scores.map(|s| s + eps).collect();
    let total: f64 = shifted.iter().sum();
    if total > 0.0 && total.is_finite() {
        shifted.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / shifted.len() as f64; shifted.len()]
    }
}

/// Inverse-CDF draw over the candidate order; one variate.
pub fn sample_poi<U: UniformSource>(dist: &CandidateDistribution, rng: &mut U) -> usize {
    dist.candidates[inverse_cdf(&dist.probs, rng.uniform())].poi
}

/// Draws a start POI of `category` (any POI if the category is empty) with
/// weights mixing uniform and prior mass; one variate.
pub fn sample_start_poi<U: UniformSource>(category: Mid10, ctx: &InventoryContext, rng: &mut U) -> usize {
    let (members, w) = &ctx.start[category.index()];
    members[inverse_cdf(w, rng.uniform())]
}

/// Start weights for `category` aligned with inventory positions.
pub fn start_weights(category: Mid10, ctx: &InventoryContext) -> Vec<(usize, f64)> {
    let (members, w) = &ctx.start[category.index()];
    members.iter().copied().zip(w.iter().copied()).collect()
}

/// Draws a POI for a stay of `category` around `anchor`: retrieval then scoring
/// then sampling; two variates.
pub fn instantiate<U: UniformSource>(
    anchor: GeoPoint,
    category: Mid10,
    ctx: &InventoryContext,
    rng: &mut U,
) -> Result<usize> {
    let candidates = retrieve_candidates(anchor, category, ctx, rng)?;
    let dist = score_candidates(category, &candidates, ctx);
    Ok(sample_poi(&dist, rng))
}

/// A prior table with zero counters for every inventory POI.
pub fn empty_prior_table(inventory: &PoiInventory, cfg: &SimConfig) -> PoiPriorTable {
    PoiPriorTable {
        counters: inventory.ids().map(|id| (id.to_string(), [0.0; N_CATEGORIES])).collect(),
        matched_events: 0,
        dropped_events: 0,
        zone: crate::estimation::ZoneStats {
            center: cfg.zone_center(),
            radius_m: cfg.yumoto_r_m,
            overall_share: None,
            category_share: [None; N_CATEGORIES],
        },
        no_matches: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ScriptedVariates;

    fn poi(id: &str, lon: f64, lat: f64, c: Mid10) -> Poi {
        Poi {
            poi_id: id.into(),
            lon,
            lat,
            category: c,
        }
    }

    fn ctx_with(pois: Vec<Poi>, changed: &[&str], cfg: &SimConfig) -> InventoryContext {
        let inv = PoiInventory::new(pois).unwrap();
        let priors = empty_prior_table(&inv, cfg);
        InventoryContext::new(inv, priors, changed.iter().map(|s| s.to_string()).collect(), cfg).unwrap()
    }

    #[test]
    fn likelihood_values() {
        let cfg = SimConfig::default();
        assert_eq!(likelihood(0.0, Mid10::Retail, &cfg), 1.0);
        assert!((likelihood(100.0, Mid10::Retail, &cfg) - (-1f64).exp()).abs() < 1e-15);
        assert!((likelihood(120.0, Mid10::Accommodation, &cfg) - (-1f64).exp()).abs() < 1e-15);
        // exp(-2^0.75) to 15 digits.
        assert!((likelihood(200.0, Mid10::Retail, &cfg) - 0.186_040_138_435_915).abs() < 1e-12);
    }

    #[test]
    fn normalization_cases() {
        let p = normalize_scores([2.0, 1.0, 1.0].into_iter(), 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
        let z = normalize_scores([0.0; 5].into_iter(), 1e-12);
        assert!(z.iter().all(|x| (x - 0.2).abs() < 1e-15));
        assert_eq!(normalize_scores([7.0].into_iter(), 1e-12), vec![1.0]);
    }

    #[test]
    fn boost_three_gives_three_quarters() {
        let cfg = SimConfig::default();
        let ctx = ctx_with(
            vec![poi("A", 139.101, 35.23, Mid10::FoodDrink), poi("B", 139.099, 35.23, Mid10::FoodDrink)],
            &["A"],
            &cfg,
        );
        let anchor = GeoPoint::new(139.100, 35.23).unwrap();
        let cands = ctx.index().knn(anchor, Scope::Category(Mid10::FoodDrink), 40);
        assert!((cands[0].distance_m - cands[1].distance_m).abs() < 1e-9);
        let d = score_candidates(Mid10::FoodDrink, &cands, &ctx);
        let pa = d.candidates.iter().zip(&d.probs).find(|(c, _)| c.poi == 0).unwrap().1;
        assert!((pa - 0.75).abs() < 1e-12, "{pa}");
    }

    #[test]
    fn lambda_zero_is_likelihood_only() {
        let cfg = SimConfig {
            prior_lambda: 0.0,
            use_yumoto_zone_boost: false,
            ..SimConfig::default()
        };
        let pois: Vec<Poi> = (0..6)
            .map(|i| poi(&format!("P{i}"), 139.10 + 0.001 * i as f64, 35.23, Mid10::Retail))
            .collect();
        let inv = PoiInventory::new(pois).unwrap();
        let mut priors = empty_prior_table(&inv, &cfg);
        for (k, v) in priors.counters.values_mut().enumerate() {
            v[Mid10::Retail.index()] = (k * k) as f64;
        }
        let ctx = InventoryContext::new(inv, priors, BTreeSet::new(), &cfg).unwrap();
        let anchor = GeoPoint::new(139.1012, 35.2301).unwrap();
        let cands = ctx.index().knn(anchor, Scope::Category(Mid10::Retail), 40);
        let d = score_candidates(Mid10::Retail, &cands, &ctx);
        let base: Vec<f64> = cands.iter().map(|c| likelihood(c.distance_m, Mid10::Retail, &cfg)).collect();
        let bt: f64 = base.iter().sum();
        let u = cfg.poi_uniform_mix;
        let lik: Vec<f64> = base.iter().map(|b| (1.0 - u) * b / bt + u / 6.0).collect();
        // Pi is the constant 1/|Z|; it cancels up to the eps stabilizer.
        let scaled = normalize_scores(lik.iter().map(|l| l / 6.0), cfg.prior_eps);
        let pure = normalize_scores(lik.iter().copied(), 0.0);
        for ((a, b), c) in d.probs.iter().zip(&scaled).zip(&pure) {
            assert!((a - b).abs() < 1e-15);
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn start_weights_by_hand() {
        // Priors (9, 1), lambda 0.7, beta 0.7.
        let w = mixed_weights(&[9.0, 1.0], 0.7, 0.7, 1e-12);
        let a = 9f64.powf(0.7);
        let e0 = 0.15 + 0.7 * a / (a + 1.0);
        assert!((w[0] - e0).abs() < 1e-12);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
        assert_eq!(mixed_weights(&[9.0, 1.0], 0.0, 0.7, 1e-12), vec![0.5, 0.5]);
        let eq = mixed_weights(&[3.0; 4], 0.7, 0.7, 1e-12);
        assert!(eq.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn empty_category_falls_back_to_global() {
        let cfg = SimConfig::default();
        let ctx = ctx_with(vec![poi("A", 139.1, 35.23, Mid10::Retail)], &[], &cfg);
        let mut rng = ScriptedVariates::new(vec![0.5]);
        let c = retrieve_candidates(GeoPoint::new(139.1, 35.2).unwrap(), Mid10::Culture, &ctx, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(rng.consumed(), 1);
        let mut rng = ScriptedVariates::new(vec![0.3]);
        assert_eq!(sample_start_poi(Mid10::Culture, &ctx, &mut rng), 0);
    }

    #[test]
    fn exploration_uses_radius() {
        let cfg = SimConfig::default();
        let pois: Vec<Poi> = (0..60)
            .map(|i| poi(&format!("P{i:02}"), 139.10 + 0.0005 * i as f64, 35.23, Mid10::Retail))
            .collect();
        let ctx = ctx_with(pois, &[], &cfg);
        let anchor = GeoPoint::new(139.10, 35.23).unwrap();
        let mut rng = ScriptedVariates::new(vec![0.01]);
        let explore = retrieve_candidates(anchor, Mid10::Retail, &ctx, &mut rng).unwrap();
        let expected = ctx
            .inventory()
            .pois()
            .iter()
            .filter(|p| haversine_m(anchor, p.location()) <= 3000.0)
            .count();
        assert_eq!(explore.len(), expected);
        let mut rng = ScriptedVariates::new(vec![0.5]);
        assert_eq!(retrieve_candidates(anchor, Mid10::Retail, &ctx, &mut rng).unwrap().len(), 40);
    }

    #[test]
    fn prior_table_must_match_inventory() {
        let cfg = SimConfig::default();
        let inv = PoiInventory::new(vec![poi("A", 139.1, 35.2, Mid10::Retail)]).unwrap();
        let other = PoiInventory::new(vec![poi("B", 139.1, 35.2, Mid10::Retail)]).unwrap();
        let priors = empty_prior_table(&other, &cfg);
        assert!(InventoryContext::new(inv, priors, BTreeSet::new(), &cfg).is_err());
    }

    #[test]
    fn zone_factor_clips() {
        assert_eq!(zone_factor(true, 1.0, 0.1, 0.5, 0.5), 0.5 + 0.5 * 2.0);
        assert_eq!(zone_factor(false, 0.9, 0.0, 1.0, 1.0), 0.25);
        assert_eq!(zone_factor(true, 0.3, 0.3, 0.5, 0.5), 1.0);
    }
}
