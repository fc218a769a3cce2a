//! Train-side estimation of every rhythm artifact from an observed corpus.

mod artifacts;
mod dwell;
mod gmm;
mod hazard;
mod ipf;
mod prior;
mod start;
mod transitions;

pub use artifacts::{bundle_artifacts, fit_artifacts, FitDiagnostics, RhythmArtifacts, ARTIFACT_FORMAT};
pub use dwell::{fit_dwell_models, CategoryModel, CellModel, DwellModel};
pub use gmm::{fit_weighted_em, Component, EmSettings, LogMixture, SD_FLOOR};
pub use hazard::{estimate_stop_hazard, StopHazard};
pub use ipf::{default_start_seed, fit_ipf, IpfFit};
pub use prior::{accumulate_weak_prior, PoiPriorTable, ZoneStats};
pub use start::{derive_start_priors, StartPriors};
pub use transitions::{block_of, estimate_transition_kernels, Kernel, TransitionKernels};

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::event::StayEvent;
use crate::taxonomy::N_CATEGORIES;

/// One user's events on one calendar day, ordered by start time.
#[derive(Debug, Clone)]
pub struct PersonDay<'a> {
    pub user_id: &'a str,
    pub day: NaiveDate,
    pub events: Vec<&'a StayEvent>,
}

/// Groups a corpus by (user, day) in sorted key order; events within a day
/// are ordered by start time (ties keep corpus order).
pub fn group_person_days(corpus: &[StayEvent]) -> Vec<PersonDay<'_>> {
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<&StayEvent>> = BTreeMap::new();
    for e in corpus {
        groups.entry((e.user_id.as_str(), e.day)).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|((user_id, day), mut events)| {
            events.sort_by_key(|e| e.start);
            PersonDay {
                user_id,
                day,
                events,
            }
        })
        .collect()
}

/// An event reduced to what the transition estimator needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceStep {
    pub hour: usize,
    pub probs: [f64; N_CATEGORIES],
}

pub fn category_sequences(days: &[PersonDay<'_>]) -> Vec<Vec<SequenceStep>> {
    days.iter()
        .map(|d| {
            d.events
                .iter()
                .map(|e| SequenceStep {
                    hour: e.start_hour(),
                    probs: *e.label.probs(),
                })
                .collect()
        })
        .collect()
}
