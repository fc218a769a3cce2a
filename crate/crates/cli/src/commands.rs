//! One function per subcommand. Every output is computed in memory first and
//! only then written, each file through a temp-file rename.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rhythmsim::assignment::InventoryContext;
use rhythmsim::estimation::{category_sequences, estimate_transition_kernels, group_person_days, TransitionKernels};
use rhythmsim::io::{load_inventory, load_stay_events, read_json, to_json_pretty, write_atomic, write_inventory, write_stay_events};
use rhythmsim::matrix::write_category_by_hour;
use rhythmsim::metrics::{
    aggregate_hour_category, aggregate_sim_log, compare_kernels, day_hour_heatmaps, day_range, diurnal_similarity,
    evaluation_period, first_event_compliance, grid_covering, hit_rate, reestimate_and_compare_kernels, residual_stats,
    sim_heatmaps_by_run, sim_log_points, sim_sequences, spatial_diff_grid, write_diurnal_csv, write_grid_csv,
    write_residual_csv, write_transition_csv, AggMode, DiurnalProfile, Labeling,
};
use rhythmsim::scenario::{run_suite, ScenarioRun, ScenarioSpec, BASELINE_ID};
use rhythmsim::simulator::{run_monte_carlo, Parallelism, SimLog, SIM_LOG_HEADER};
use rhythmsim::synth::{synthesize_corpus, SynthSpec};
use rhythmsim::{GeoPoint, GridSpec, HourCategoryMatrix, MatrixKind, PoiInventory, RhythmArtifacts, SimConfig, StayEvent};
use serde_json::json;

use crate::outcome::{data_err, CliError, InputContext, OutputContext, Summary};
use crate::{FitArgs, ScenarioArgs, SimulateArgs, SynthArgs, ValidateArgs};

/// Files waiting to be written.
#[derive(Default)]
struct Staged(Vec<(PathBuf, Vec<u8>)>);

impl Staged {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.0.push((path, bytes.into()));
    }

    fn add_with(&mut self, path: PathBuf, f: impl FnOnce(&mut Vec<u8>) -> rhythmsim::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).output(&path)?;
        self.add(path, buf);
        Ok(())
    }

    fn json(&mut self, path: PathBuf, value: &impl serde::Serialize) -> Result<(), CliError> {
        let s = to_json_pretty(value).output(&path)?;
        self.add(path, s);
        Ok(())
    }

    fn commit(self, summary: &mut Summary) -> Result<(), CliError> {
        for (path, bytes) in self.0 {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("creating {}: {e}", dir.display())))?;
            }
            write_atomic(&path, &bytes).output(&path)?;
            summary.wrote(&path);
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    SimConfig::from_json(&read_text(path)?).and_then(SimConfig::validate).input(path)
}

fn load_artifacts(path: &Path) -> Result<RhythmArtifacts, CliError> {
    RhythmArtifacts::from_json(&read_text(path)?).input(path)
}

fn load_sim_log(path: &Path) -> Result<SimLog, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    SimLog::read_csv(BufReader::new(f), &path.display().to_string()).input(path)
}

/// Scenario ids become folder names.
fn check_folder_name(id: &str) -> Result<(), CliError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !ok {
        return Err(CliError::data(format!(
            "scenario id {id:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
        )));
    }
    Ok(())
}

fn matrix_csv(m: &HourCategoryMatrix) -> impl FnOnce(&mut Vec<u8>) -> rhythmsim::Result<()> + '_ {
    move |buf| m.write_csv(buf)
}

/// Log, sidecar and ES/EDM matrices of one run.
fn stage_log(staged: &mut Staged, dir: &Path, log: &SimLog) -> Result<(), CliError> {
    staged.add(dir.join("simlog.csv"), log.to_csv_bytes());
    staged.json(dir.join("simlog.meta.json"), &log.meta())?;
    let es = aggregate_sim_log(log, AggMode::Es);
    let edm = aggregate_sim_log(log, AggMode::Edm);
    staged.add_with(dir.join("es.csv"), matrix_csv(&es))?;
    staged.add_with(dir.join("edm.csv"), matrix_csv(&edm))?;
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<Summary, CliError> {
    let cfg = load_config(&a.config)?;
    let events = load_stay_events(&a.events).input(&a.events)?;
    let inventory = load_inventory(&a.inventory, cfg.study_bbox).input(&a.inventory)?;
    let sipf = match &a.sipf {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            Some(HourCategoryMatrix::read_csv(BufReader::new(f), MatrixKind::TargetMass).input(p)?)
        }
        None => None,
    };
    let (artifacts, diagnostics) = data_err(rhythmsim::estimation::fit_artifacts(&events, &inventory, &cfg, sipf))?;

    let mut staged = Staged::default();
    let path = a.out.join("artifacts.json");
    staged.add(path.clone(), artifacts.to_json().output(&path)?);
    staged.json(a.out.join("fit_diagnostics.json"), &diagnostics)?;
    let w_eff = diagnostics.w_eff;
    staged.add_with(a.out.join("dwell_w_eff.csv"), |buf| write_category_by_hour(buf, |h, c| w_eff[h][c]))?;

    let mut summary = Summary::new("fit");
    staged.commit(&mut summary)?;
    summary.detail("artifact_fingerprint", &artifacts.fingerprint);
    summary.detail("n_events", diagnostics.n_events);
    summary.detail("n_person_days", diagnostics.n_person_days);
    summary.detail("local_dwell_cells", diagnostics.local_dwell_cells);
    summary.detail("sipf_supplied", diagnostics.sipf_supplied);
    Ok(summary)
}

pub fn simulate(a: &SimulateArgs) -> Result<Summary, CliError> {
    check_folder_name(&a.scenario_id)?;
    let cfg = load_config(&a.config)?;
    let artifacts = load_artifacts(&a.artifacts)?;
    let inventory = load_inventory(&a.inventory, cfg.study_bbox).input(&a.inventory)?;
    let ctx = data_err(InventoryContext::new(inventory, artifacts.poi_priors.clone(), BTreeSet::new(), &cfg))?;
    let log = data_err(run_monte_carlo(&artifacts, &ctx, &cfg, &a.scenario_id, Parallelism::Auto))?;
    let compliance = data_err(first_event_compliance(&log, &artifacts.s_ipf))?;

    let dir = a.out.join(&a.scenario_id);
    let mut staged = Staged::default();
    stage_log(&mut staged, &dir, &log)?;
    staged.json(
        dir.join("compliance.json"),
        &json!({ "first_event_relative_frobenius": compliance, "n_chains": log.chains.len() }),
    )?;

    let mut summary = Summary::new("simulate");
    staged.commit(&mut summary)?;
    summary.detail("scenario_id", &a.scenario_id);
    summary.detail("n_chains", log.chains.len());
    summary.detail("n_events", log.n_events());
    summary.detail("first_event_relative_frobenius", compliance);
    Ok(summary)
}

/// Reference locations for the hit-rate delta: role-tagged and changed POIs
/// at their scenario coordinates, removed POIs at their baseline coordinates.
fn hit_reference(run: &ScenarioRun, baseline: &PoiInventory) -> Result<Vec<GeoPoint>, CliError> {
    let scen = &run.edited.inventory;
    let mut ids: BTreeSet<&str> = run.spec.roles.keys().map(String::as_str).collect();
    ids.extend(run.edited.changed.iter().map(String::as_str));
    ids.extend(run.edited.removed.iter().map(String::as_str));
    ids.into_iter()
        .map(|id| {
            scen.find(id)
                .or_else(|| baseline.find(id))
                .map(|p| p.location())
                .ok_or_else(|| CliError::data(format!("scenario {}: role tag names unknown poi_id {id:?}", run.spec.scenario_id)))
        })
        .collect()
}

fn sim_kernels(log: &SimLog, template: &TransitionKernels) -> Result<TransitionKernels, CliError> {
    data_err(estimate_transition_kernels(&sim_sequences(log), template.alpha, &template.block_edges))
}

pub fn scenario(a: &ScenarioArgs) -> Result<Summary, CliError> {
    let cfg = load_config(&a.config)?;
    let artifacts = load_artifacts(&a.artifacts)?;
    let baseline = load_inventory(&a.baseline, cfg.study_bbox).input(&a.baseline)?;
    let specs: Vec<ScenarioSpec> = a
        .specs
        .iter()
        .map(|p| read_json::<ScenarioSpec>(p).input(p))
        .collect::<Result<_, _>>()?;
    for s in &specs {
        check_folder_name(&s.scenario_id)?;
    }
    let suite = data_err(run_suite(&artifacts, &baseline, &specs, &cfg, Parallelism::Auto))?;

    let mut pois: Vec<GeoPoint> = baseline.pois().iter().map(|p| p.location()).collect();
    for run in &suite.scenarios {
        pois.extend(run.edited.inventory.pois().iter().map(|p| p.location()));
    }
    let grid: GridSpec = data_err(grid_covering(cfg.zone_center(), cfg.grid_cell_m, pois))?;

    let mut staged = Staged::default();
    stage_log(&mut staged, &a.out.join(BASELINE_ID), &suite.baseline)?;
    let base_es = aggregate_sim_log(&suite.baseline, AggMode::Es);
    let base_edm = aggregate_sim_log(&suite.baseline, AggMode::Edm);
    let base_kernels = sim_kernels(&suite.baseline, &artifacts.kernels)?;

    let mut rows = Vec::new();
    for run in &suite.scenarios {
        let dir = a.out.join(&run.spec.scenario_id);
        let log = &run.log;
        stage_log(&mut staged, &dir, log)?;
        let inv = &run.edited.inventory;
        staged.add_with(dir.join("inventory.csv"), |buf| write_inventory(buf, inv))?;

        let d_es = aggregate_sim_log(log, AggMode::Es).diff(&base_es);
        let d_edm = aggregate_sim_log(log, AggMode::Edm).diff(&base_edm);
        staged.add_with(dir.join("delta_es.csv"), |buf| write_category_by_hour(buf, |h, c| d_es[h][c]))?;
        staged.add_with(dir.join("delta_edm.csv"), |buf| write_category_by_hour(buf, |h, c| d_edm[h][c]))?;

        let reference = hit_reference(run, &baseline)?;
        let (hit_base, hit_scen, delta_hit) = if reference.is_empty() {
            (None, None, 0.0)
        } else {
            let b = data_err(hit_rate(sim_log_points(&suite.baseline), &reference, cfg.hit_radius_m))?;
            let s = data_err(hit_rate(sim_log_points(log), &reference, cfg.hit_radius_m))?;
            (Some(b), Some(s), s - b)
        };
        let hit = json!({
            "radius_m": cfg.hit_radius_m,
            "n_reference_pois": reference.len(),
            "hit_baseline": hit_base,
            "hit_scenario": hit_scen,
            "delta_hit": delta_hit,
        });
        staged.json(dir.join("hit.json"), &hit)?;

        for mode in [AggMode::Es, AggMode::Edm] {
            let diff = spatial_diff_grid(&suite.baseline, log, &grid, mode);
            let name = match mode {
                AggMode::Es => "grid_delta_es",
                AggMode::Edm => "grid_delta_edm",
            };
            staged.add_with(dir.join(format!("{name}.csv")), |buf| write_grid_csv(buf, &grid, &diff.values))?;
        }

        let scen_kernels = sim_kernels(log, &artifacts.kernels)?;
        let report = data_err(compare_kernels(&base_kernels, &scen_kernels))?;
        staged.add_with(dir.join("delta_transitions.csv"), |buf| write_transition_csv(buf, &report))?;

        rows.push(json!({
            "scenario_id": run.spec.scenario_id,
            "changed": run.edited.changed,
            "removed": run.edited.removed,
            "n_events": log.n_events(),
            "identical_to_baseline": log.same_events(&suite.baseline),
            "delta_hit": delta_hit,
            "inventory_fingerprint": log.inventory_fingerprint,
        }));
    }
    let meta = suite.baseline.meta();
    let report = json!({
        "config_fingerprint": meta.config_fingerprint,
        "artifact_fingerprint": meta.artifact_fingerprint,
        "baseline_inventory_fingerprint": meta.inventory_fingerprint,
        "grid": { "cell_m": cfg.grid_cell_m, "rows": grid.n_rows(), "cols": grid.n_cols() },
        "scenarios": rows,
    });
    staged.json(a.out.join("suite.json"), &report)?;

    let mut summary = Summary::new("scenario");
    staged.commit(&mut summary)?;
    summary.detail("suite", report);
    Ok(summary)
}

fn is_sim_log(path: &Path) -> Result<bool, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(f)
        .read_line(&mut first)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(first.trim_end() == SIM_LOG_HEADER.join(","))
}

fn sim_period(log: &SimLog) -> Option<Vec<NaiveDate>> {
    let first = log.chains.iter().map(|c| c.day).min()?;
    let last = log.chains.iter().map(|c| c.day).max()?;
    Some(day_range(first, last))
}

pub fn validate(a: &ValidateArgs) -> Result<Summary, CliError> {
    let artifacts = load_artifacts(&a.artifacts)?;
    let (observed, labeling): (Vec<StayEvent>, Labeling) = if is_sim_log(&a.observed)? {
        (load_sim_log(&a.observed)?.to_stay_events(), Labeling::Hard)
    } else {
        (load_stay_events(&a.observed).input(&a.observed)?, Labeling::Soft)
    };
    let sim = load_sim_log(&a.simlog)?;
    let obs_days = evaluation_period(&observed).ok_or_else(|| CliError::data("observed file has no events"))?;
    let sim_days = sim_period(&sim).ok_or_else(|| CliError::data("simulation log has no events"))?;
    if obs_days != sim_days {
        return Err(CliError::data(format!(
            "evaluation periods differ: observed {}..{} vs simulated {}..{}",
            obs_days[0],
            obs_days[obs_days.len() - 1],
            sim_days[0],
            sim_days[sim_days.len() - 1]
        )));
    }

    let obs_edm = aggregate_hour_category(&observed, AggMode::Edm, labeling);
    let sim_edm = aggregate_sim_log(&sim, AggMode::Edm);
    let diurnal = diurnal_similarity(&DiurnalProfile::from_matrix(&obs_edm), &DiurnalProfile::from_matrix(&sim_edm));

    let obs_maps = day_hour_heatmaps(&observed, AggMode::Edm, labeling, &obs_days);
    let sim_maps = sim_heatmaps_by_run(&sim, AggMode::Edm, &obs_days);
    let residuals = data_err(residual_stats(&sim_maps, &obs_maps))?;

    let (alpha, edges) = (artifacts.kernels.alpha, artifacts.kernels.block_edges.clone());
    let obs_kernels = data_err(estimate_transition_kernels(
        &category_sequences(&group_person_days(&observed)),
        alpha,
        &edges,
    ))?;
    let (_, transitions) = data_err(reestimate_and_compare_kernels(&obs_kernels, &sim, alpha, &edges))?;
    let compliance = data_err(first_event_compliance(&sim, &artifacts.s_ipf))?;

    let mut staged = Staged::default();
    staged.add_with(a.out.join("diurnal_edm.csv"), |buf| write_diurnal_csv(buf, &diurnal))?;
    staged.add_with(a.out.join("residuals_edm.csv"), |buf| write_residual_csv(buf, &residuals))?;
    staged.add_with(a.out.join("transitions.csv"), |buf| write_transition_csv(buf, &transitions))?;
    staged.json(
        a.out.join("compliance.json"),
        &json!({ "first_event_relative_frobenius": compliance, "n_chains": sim.chains.len() }),
    )?;
    let report = json!({
        "observed_labeling": match labeling { Labeling::Soft => "soft", Labeling::Hard => "hard" },
        "evaluation_period": [obs_days[0], obs_days[obs_days.len() - 1]],
        "diurnal_edm": diurnal,
        "residuals_edm": residuals,
        "transitions": transitions,
        "first_event_relative_frobenius": compliance,
    });
    staged.json(a.out.join("validation.json"), &report)?;

    let mut summary = Summary::new("validate");
    staged.commit(&mut summary)?;
    summary.detail("macro_rmse", diurnal.macro_rmse);
    summary.detail("macro_pearson", diurnal.macro_pearson);
    summary.detail("macro_mar", residuals.macro_mar);
    summary.detail("first_event_relative_frobenius", compliance);
    Ok(summary)
}

pub fn synth(a: &SynthArgs) -> Result<Summary, CliError> {
    let spec: SynthSpec = read_json(&a.spec).input(&a.spec)?;
    let out = data_err(synthesize_corpus(&spec))?;

    let mut staged = Staged::default();
    staged.add_with(a.out.join("events.csv"), |buf| write_stay_events(buf, &out.events))?;
    staged.add_with(a.out.join("inventory.csv"), |buf| write_inventory(buf, &out.inventory))?;
    let truth = a.out.join("truth.json");
    staged.add(truth.clone(), out.truth.to_json().output(&truth)?);
    staged.json(a.out.join("synth_spec.json"), &spec)?;

    let mut summary = Summary::new("synth");
    staged.commit(&mut summary)?;
    summary.detail("n_events", out.events.len());
    summary.detail("n_pois", out.inventory.len());
    Ok(summary)
}
