//! Discrete-time stop hazard over the start hour of each person-day's last event.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimation::group_person_days;
use crate::event::StayEvent;
use crate::taxonomy::N_HOURS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopHazard {
    pub hazard: [f64; N_HOURS],
    /// Person-days whose last event starts at hour h.
    pub ending: [u64; N_HOURS],
    /// Person-days whose last event starts at hour h or later.
    pub at_risk: [u64; N_HOURS],
}

impl StopHazard {
    /// H(h) = #{last = h} / #{last >= h}. Hours past the latest observed
    /// last-event hour (zero at risk) get 1.
    pub fn from_last_hours(last_hours: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut ending = [0u64; N_HOURS];
        let mut n = 0u64;
        for h in last_hours {
            if h >= N_HOURS {
                return Err(invalid(format!("hour {h} out of range")));
            }
            ending[h] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(invalid("stop hazard needs at least one person-day"));
        }
        let mut at_risk = [0u64; N_HOURS];
        let mut acc = 0;
        for h in (0..N_HOURS).rev() {
            acc += ending[h];
            at_risk[h] = acc;
        }
        let mut hazard = [1.0; N_HOURS];
        for h in 0..N_HOURS {
            if at_risk[h] > 0 {
                hazard[h] = ending[h] as f64 / at_risk[h] as f64;
            }
        }
        Ok(StopHazard {
            hazard,
            ending,
            at_risk,
        })
    }

    /// A hazard given directly (e.g. a ground truth); support counts are zero.
    pub fn from_values(hazard: [f64; N_HOURS]) -> Result<Self> {
        if hazard.iter().any(|h| !(0.0..=1.0).contains(h)) {
            return Err(invalid("hazard values must be probabilities"));
        }
        Ok(StopHazard {
            hazard,
            ending: [0; N_HOURS],
            at_risk: [0; N_HOURS],
        })
    }
}

pub fn estimate_stop_hazard(corpus: &[StayEvent]) -> Result<StopHazard> {
    if corpus.is_empty() {
        return Err(invalid("cannot estimate a stop hazard from an empty corpus"));
    }
    let days = group_person_days(corpus);
    StopHazard::from_last_hours(
        days.iter()
            .map(|d| d.events.last().expect("non-empty person-day").start_hour()),
    )
}
