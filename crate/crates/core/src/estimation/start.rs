use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::HourCategoryMatrix;
use crate::taxonomy::{N_CATEGORIES, N_HOURS};

/// Start-hour prior and per-hour category prior for the first event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPriors {
    pub p_h: [f64; N_HOURS],
    pub p_c_given_h: [[f64; N_CATEGORIES]; N_HOURS],
}

/// Row sums over the grand total give p(h); row-normalized entries give
/// p(c|h). Hours without mass get p(h) = 0 and a uniform p(c|h).
pub fn derive_start_priors(s_ipf: &HourCategoryMatrix) -> Result<StartPriors> {
    let total = s_ipf.total();
    if !(total > 0.0) {
        return Err(invalid("start target matrix has no mass"));
    }
    let rows = s_ipf.row_sums();
    let mut p_h = [0.0; N_HOURS];
    let mut p_c_given_h = [[1.0 / N_CATEGORIES as f64; N_CATEGORIES]; N_HOURS];
    for h in 0..N_HOURS {
        p_h[h] = rows[h] / total;
        if rows[h] > 0.0 {
            for c in 0..N_CATEGORIES {
                p_c_given_h[h][c] = s_ipf.m[h][c] / rows[h];
            }
        }
    }
    Ok(StartPriors { p_h, p_c_given_h })
}
