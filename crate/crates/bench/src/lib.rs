//! Shared fixtures for the benchmarks.

use std::collections::BTreeSet;

use rhythmsim::assignment::InventoryContext;
use rhythmsim::estimation::fit_artifacts;
use rhythmsim::synth::{synthesize_corpus, SynthSpec, SyntheticCorpus};
use rhythmsim::{RhythmArtifacts, SimConfig};

pub fn corpus(n_users: usize, n_days: usize) -> SyntheticCorpus {
    let spec = SynthSpec {
        n_users,
        n_days,
        seed: 1,
        ..SynthSpec::default()
    };
    synthesize_corpus(&spec).expect("default synthetic spec is valid")
}

pub fn config(n_days: usize, users: usize) -> SimConfig {
    SimConfig {
        sim_n_days: n_days,
        sim_users_n: users,
        mc_runs: 1,
        ..SimConfig::default()
    }
}

/// Fitted artifacts and a ready simulation context.
pub struct Fitted {
    pub corpus: SyntheticCorpus,
    pub artifacts: RhythmArtifacts,
    pub context: InventoryContext,
}

pub fn fitted(n_users: usize, n_days: usize) -> Fitted {
    let corpus = corpus(n_users, n_days);
    let cfg = config(n_days, 1);
    let (artifacts, _) = fit_artifacts(&corpus.events, &corpus.inventory, &cfg, None).expect("fit");
    let context = InventoryContext::new(
        corpus.inventory.clone(),
        artifacts.poi_priors.clone(),
        BTreeSet::new(),
        &cfg,
    )
    .expect("context");
    Fitted {
        corpus,
        artifacts,
        context,
    }
}
