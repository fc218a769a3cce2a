//! Counterfactual POI-inventory edits, prior bookkeeping and paired suites.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::InventoryContext;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::estimation::{PoiPriorTable, RhythmArtifacts};
use crate::event::{Poi, PoiInventory};
use crate::geo::haversine_m;
use crate::simulator::{run_monte_carlo, Parallelism, SimLog};
use crate::taxonomy::{Mid10, N_CATEGORIES};

/// Moves larger than this put a POI in the changed set.
pub const MOVE_THRESHOLD_M: f64 = 1.0;

/// Fallback prior for a POI added to a category without positive priors.
pub const ADDED_PRIOR_FALLBACK: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioEdit {
    TypeSwitch { poi_id: String, new_category: Mid10 },
    Add { poi_id: String, lon: f64, lat: f64, category: Mid10 },
    Remove { poi_id: String },
    RelocateSwap { poi_id_a: String, poi_id_b: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    #[serde(default)]
    pub edits: Vec<ScenarioEdit>,
    /// Role tags by poi_id, e.g. "target_food".
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
}

impl ScenarioSpec {
    pub fn identity(scenario_id: &str) -> Self {
        ScenarioSpec {
            scenario_id: scenario_id.to_string(),
            edits: Vec::new(),
            roles: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditedInventory {
    pub inventory: PoiInventory,
    /// Category changed, moved more than 1 m, or newly added.
    pub changed: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

/// Applies edits in order; each must be valid against the state left by the
/// previous ones.
pub fn apply_edits(baseline: &PoiInventory, spec: &ScenarioSpec) -> Result<EditedInventory> {
    let mut pois: BTreeMap<String, Poi> = baseline
        .pois()
        .iter()
        .map(|p| (p.poi_id.clone(), p.clone()))
        .collect();
    for (index, edit) in spec.edits.iter().enumerate() {
        let err = |reason: String| Error::Edit { index, reason };
        let missing = |id: &str| {
            err(if baseline.contains(id) {
                format!("poi `{id}` was removed by an earlier edit")
            } else {
                format!("unknown poi `{id}`")
            })
        };
        match edit {
            ScenarioEdit::TypeSwitch { poi_id, new_category } => {
                pois.get_mut(poi_id).ok_or_else(|| missing(poi_id))?.category = *new_category;
            }
            ScenarioEdit::Add { poi_id, lon, lat, category } => {
                if poi_id.is_empty() {
                    return Err(err("empty poi_id".into()));
                }
                if pois.contains_key(poi_id) {
                    return Err(err(format!("poi `{poi_id}` already exists")));
                }
                crate::geo::GeoPoint::new(*lon, *lat).map_err(|e| err(e.to_string()))?;
                pois.insert(
                    poi_id.clone(),
                    Poi {
                        poi_id: poi_id.clone(),
                        lon: *lon,
                        lat: *lat,
                        category: *category,
                    },
                );
            }
            ScenarioEdit::Remove { poi_id } => {
                pois.remove(poi_id).ok_or_else(|| missing(poi_id))?;
            }
            ScenarioEdit::RelocateSwap { poi_id_a, poi_id_b } => {
                if poi_id_a == poi_id_b {
                    return Err(err(format!("cannot swap `{poi_id_a}` with itself")));
                }
                let a = pois.get(poi_id_a).ok_or_else(|| missing(poi_id_a))?.clone();
                let b = pois.get(poi_id_b).ok_or_else(|| missing(poi_id_b))?.clone();
                let pa = pois.get_mut(poi_id_a).unwrap();
                (pa.lon, pa.lat) = (b.lon, b.lat);
                let pb = pois.get_mut(poi_id_b).unwrap();
                (pb.lon, pb.lat) = (a.lon, a.lat);
            }
        }
    }
    let mut changed = BTreeSet::new();
    for (id, p) in &pois {
        match baseline.find(id) {
            None => {
                changed.insert(id.clone());
            }
            Some(b) => {
                if b.category != p.category || haversine_m(b.location(), p.location()) > MOVE_THRESHOLD_M {
                    changed.insert(id.clone());
                }
            }
        }
    }
    let removed = baseline
        .ids()
        .filter(|id| !pois.contains_key(*id))
        .map(str::to_string)
        .collect();
    Ok(EditedInventory {
        inventory: PoiInventory::new(pois.into_values().collect())?,
        changed,
        removed,
    })
}

/// Carries baseline counters over to the scenario inventory. Added POIs get
/// the smallest positive own-category prior of their category in the
/// baseline (1.0 if there is none); removed POIs disappear; switched and
/// relocated POIs keep their full counter vectors.
pub fn adjust_prior_table(
    baseline_priors: &PoiPriorTable,
    baseline: &PoiInventory,
    scenario: &PoiInventory,
) -> PoiPriorTable {
    let mut min_positive = [f64::INFINITY; N_CATEGORIES];
    for p in baseline.pois() {
        let v = baseline_priors.own_prior(p);
        if v > 0.0 {
            let slot = &mut min_positive[p.category.index()];
            *slot = slot.min(v);
        }
    }
    let counters = scenario
        .pois()
        .iter()
        .map(|p| {
            let v = match baseline_priors.counters.get(&p.poi_id).filter(|_| baseline.contains(&p.poi_id)) {
                Some(v) => *v,
                None => {
                    let mut v = [0.0; N_CATEGORIES];
                    let m = min_positive[p.category.index()];
                    v[p.category.index()] = if m.is_finite() { m } else { ADDED_PRIOR_FALLBACK };
                    v
                }
            };
            (p.poi_id.clone(), v)
        })
        .collect();
    PoiPriorTable {
        counters,
        ..baseline_priors.clone()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    pub edited: EditedInventory,
    pub log: SimLog,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub baseline: SimLog,
    pub scenarios: Vec<ScenarioRun>,
}

pub const BASELINE_ID: &str = "baseline";

/// Baseline plus one run per scenario with the behavioral artifacts held
/// fixed; only the inventory context changes.
pub fn run_suite(
    artifacts: &RhythmArtifacts,
    baseline: &PoiInventory,
    scenarios: &[ScenarioSpec],
    cfg: &SimConfig,
    parallelism: Parallelism,
) -> Result<SuiteResult> {
    let mut seen = BTreeSet::new();
    for s in scenarios {
        if s.scenario_id == BASELINE_ID || !seen.insert(s.scenario_id.clone()) {
            return Err(crate::error::invalid(format!(
                "scenario id `{}` is reserved or duplicated",
                s.scenario_id
            )));
        }
    }
    let edited: Vec<EditedInventory> = scenarios
        .iter()
        .map(|s| apply_edits(baseline, s))
        .collect::<Result<_>>()?;
    let base_ctx = InventoryContext::new(baseline.clone(), artifacts.poi_priors.clone(), BTreeSet::new(), cfg)?;
    let base_log = run_monte_carlo(artifacts, &base_ctx, cfg, BASELINE_ID, parallelism)?;
    let mut runs = Vec::with_capacity(scenarios.len());
    for (spec, ed) in scenarios.iter().zip(edited) {
        let priors = adjust_prior_table(&artifacts.poi_priors, baseline, &ed.inventory);
        let ctx = InventoryContext::new(ed.inventory.clone(), priors, ed.changed.clone(), cfg)?;
        let log = run_monte_carlo(artifacts, &ctx, cfg, &spec.scenario_id, parallelism)?;
        runs.push(ScenarioRun {
            spec: spec.clone(),
            edited: ed,
            log,
        });
    }
    Ok(SuiteResult {
        baseline: base_log,
        scenarios: runs,
    })
}
