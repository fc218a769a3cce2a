//! The immutable train-side bundle and the end-to-end fit.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::estimation::{
    accumulate_weak_prior, category_sequences, default_start_seed, derive_start_priors,
    estimate_stop_hazard, estimate_transition_kernels, fit_dwell_models, fit_ipf,
    group_person_days, DwellModel, PoiPriorTable, StartPriors, StopHazard, TransitionKernels,
};
use crate::event::{PoiInventory, StayEvent};
use crate::geo::CategoryIndex;
use crate::matrix::{HourCategoryMatrix, MatrixKind};
use crate::taxonomy::{N_CATEGORIES, N_HOURS};

pub const ARTIFACT_FORMAT: &str = "rhythmsim-artifacts/1";

/// Smoothing added to the observed first-event matrix when seeding IPF.
const START_SEED_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhythmArtifacts {
    pub format: String,
    /// Configuration the artifacts were fitted with.
    pub fit_config: SimConfig,
    pub s_ipf: HourCategoryMatrix,
    pub start_priors: StartPriors,
    pub stop_hazard: StopHazard,
    pub kernels: TransitionKernels,
    pub dwell: DwellModel,
    pub poi_priors: PoiPriorTable,
    /// SHA-256 of the canonical JSON with this field empty.
    pub fingerprint: String,
}

impl RhythmArtifacts {
    fn content_hash(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.fingerprint.clear();
        let bytes = serde_json::to_vec(&blank)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and checks format tag, fingerprint and internal consistency.
    pub fn from_json(s: &str) -> Result<Self> {
        let a: RhythmArtifacts = serde_json::from_str(s)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Mismatch(format!(
                "artifact format {:?}, expected {ARTIFACT_FORMAT:?}",
                a.format
            )));
        }
        let expected = a.content_hash()?;
        if a.fingerprint != expected {
            return Err(Error::Mismatch("artifact fingerprint does not match content".into()));
        }
        check_consistency(&a.start_priors, &a.kernels, &a.s_ipf, &a.fit_config)?;
        Ok(a)
    }

    /// Checks that a simulation config can run on these artifacts.
    pub fn check_compatible(&self, cfg: &SimConfig) -> Result<()> {
        if cfg.block_edges != self.kernels.block_edges {
            return Err(Error::Mismatch(format!(
                "config block_edges {:?} differ from artifact block_edges {:?}",
                cfg.block_edges, self.kernels.block_edges
            )));
        }
        Ok(())
    }
}

fn check_consistency(
    start: &StartPriors,
    kernels: &TransitionKernels,
    s_ipf: &HourCategoryMatrix,
    cfg: &SimConfig,
) -> Result<()> {
    if kernels.block_edges != cfg.block_edges {
        return Err(Error::Mismatch(format!(
            "kernels use block_edges {:?}, config has {:?}",
            kernels.block_edges, cfg.block_edges
        )));
    }
    if kernels.blocks.len() != cfg.n_blocks() {
        return Err(Error::Mismatch(format!(
            "{} block kernels, config defines {} blocks",
            kernels.blocks.len(),
            cfg.n_blocks()
        )));
    }
    if kernels.alpha != cfg.alpha {
        return Err(Error::Mismatch(format!(
            "kernels smoothed with alpha {}, config has {}",
            kernels.alpha, cfg.alpha
        )));
    }
    kernels.validate().map_err(|e| Error::Mismatch(e.to_string()))?;
    let derived = derive_start_priors(s_ipf)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let same = (0..N_HOURS).all(|h| {
        close(derived.p_h[h], start.p_h[h])
            && (0..N_CATEGORIES).all(|c| close(derived.p_c_given_h[h][c], start.p_c_given_h[h][c]))
    });
    if !same {
        return Err(Error::Mismatch("start priors were not derived from S_ipf".into()));
    }
    Ok(())
}

/// Validates mutual consistency and stamps the fingerprint.
pub fn bundle_artifacts(
    start_priors: StartPriors,
    stop_hazard: StopHazard,
    kernels: TransitionKernels,
    dwell: DwellModel,
    poi_priors: PoiPriorTable,
    s_ipf: HourCategoryMatrix,
    cfg: &SimConfig,
) -> Result<RhythmArtifacts> {
    cfg.check()?;
    check_consistency(&start_priors, &kernels, &s_ipf, cfg)?;
    let mut a = RhythmArtifacts {
        format: ARTIFACT_FORMAT.to_string(),
        fit_config: cfg.clone(),
        s_ipf,
        start_priors,
        stop_hazard,
        kernels,
        dwell,
        poi_priors,
        fingerprint: String::new(),
    };
    a.fingerprint = a.content_hash()?;
    Ok(a)
}

/// Side outputs of a fit that are not needed for simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_events: usize,
    pub n_person_days: usize,
    pub w_eff: [[f64; N_CATEGORIES]; N_HOURS],
    pub local_dwell_cells: usize,
    pub hazard_ending: [u64; N_HOURS],
    pub hazard_at_risk: [u64; N_HOURS],
    pub ipf_iterations: usize,
    pub ipf_trace: Vec<f64>,
    pub sipf_supplied: bool,
    pub empty_blocks: Vec<usize>,
    pub prior_matched_events: u64,
    pub prior_dropped_events: u64,
    pub prior_no_matches: bool,
}

/// Fits every artifact from a corpus. When `sipf` is given it is used as the
/// start target directly; otherwise the observed first-event matrix (plus
/// a tiny smoothing) is raked to its own marginals.
pub fn fit_artifacts(
    corpus: &[StayEvent],
    inventory: &PoiInventory,
    cfg: &SimConfig,
    sipf: Option<HourCategoryMatrix>,
) -> Result<(RhythmArtifacts, FitDiagnostics)> {
    cfg.check()?;
    if corpus.is_empty() {
        return Err(crate::error::invalid("corpus has no stay events"));
    }
    let sipf_supplied = sipf.is_some();
    let (s_ipf, ipf_iterations, ipf_trace) = match sipf {
        Some(m) => {
            let m = HourCategoryMatrix::from_rows(MatrixKind::TargetMass, m.m)?;
            (m, 0, Vec::new())
        }
        None => {
            let seed = default_start_seed(corpus, START_SEED_SMOOTHING);
            let fit = fit_ipf(&seed, &seed.row_sums(), &seed.col_sums(), cfg.ipf_tol, cfg.ipf_max_iter)?;
            (fit.matrix, fit.iterations, fit.trace)
        }
    };
    let start_priors = derive_start_priors(&s_ipf)?;
    let stop_hazard = estimate_stop_hazard(corpus)?;
    let days = group_person_days(corpus);
    let kernels = estimate_transition_kernels(&category_sequences(&days), cfg.alpha, &cfg.block_edges)?;
    let dwell = fit_dwell_models(corpus, cfg)?;
    let index = CategoryIndex::build(inventory)?;
    let poi_priors = accumulate_weak_prior(corpus, inventory, &index, cfg);

    let diagnostics = FitDiagnostics {
        n_events: corpus.len(),
        n_person_days: days.len(),
        w_eff: dwell.w_eff_table(),
        local_dwell_cells: dwell.local_cells(),
        hazard_ending: stop_hazard.ending,
        hazard_at_risk: stop_hazard.at_risk,
        ipf_iterations,
        ipf_trace,
        sipf_supplied,
        empty_blocks: kernels.empty_blocks(),
        prior_matched_events: poi_priors.matched_events,
        prior_dropped_events: poi_priors.dropped_events,
        prior_no_matches: poi_priors.no_matches,
    };
    let artifacts = bundle_artifacts(start_priors, stop_hazard, kernels, dwell, poi_priors, s_ipf, cfg)?;
    Ok((artifacts, diagnostics))
}
