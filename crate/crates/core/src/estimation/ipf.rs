//! Iterative proportional fitting of the first-event hour x category target.

use crate::error::{Error, Result};
use crate::estimation::group_person_days;
use crate::event::StayEvent;
use crate::matrix::{HourCategoryMatrix, MatrixKind};
use crate::taxonomy::{Mid10, N_CATEGORIES, N_HOURS};

#[derive(Debug, Clone, PartialEq)]
pub struct IpfFit {
    pub matrix: HourCategoryMatrix,
    pub iterations: usize,
    /// Max marginal deviation after each row+column sweep.
    pub trace: Vec<f64>,
}

fn max_deviation(m: &HourCategoryMatrix, rows: &[f64; N_HOURS], cols: &[f64; N_CATEGORIES]) -> f64 {
    let r = m
        .row_sums()
        .iter()
        .zip(rows)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let c = m
        .col_sums()
        .iter()
        .zip(cols)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    r.max(c)
}

/// Alternating row/column scaling of `seed` toward the target marginals.
/// Zero seed cells stay zero.
pub fn fit_ipf(
    seed: &HourCategoryMatrix,
    row_targets: &[f64; N_HOURS],
    col_targets: &[f64; N_CATEGORIES],
    tol: f64,
    max_iter: usize,
) -> Result<IpfFit> {
    if row_targets
        .iter()
        .chain(col_targets)
        .any(|x| !x.is_finite() || *x < 0.0)
    {
        return Err(Error::IpfInfeasible("marginal targets must be finite and >= 0".into()));
    }
    let (rt, ct): (f64, f64) = (row_targets.iter().sum(), col_targets.iter().sum());
    if (rt - ct).abs() > 1e-6 * rt.abs().max(ct.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::IpfInfeasible(format!(
            "row marginals total {rt} but column marginals total {ct}"
        )));
    }
    let seed_rows = seed.row_sums();
    for h in 0..N_HOURS {
        if row_targets[h] > 0.0 && seed_rows[h] <= 0.0 {
            return Err(Error::IpfInfeasible(format!(
                "hour {h} has target {} but an all-zero seed row",
                row_targets[h]
            )));
        }
    }
    let seed_cols = seed.col_sums();
    for c in 0..N_CATEGORIES {
        if col_targets[c] > 0.0 && seed_cols[c] <= 0.0 {
            return Err(Error::IpfInfeasible(format!(
                "category {} has target {} but an all-zero seed column",
                Mid10::ALL[c],
                col_targets[c]
            )));
        }
    }

    let mut m = seed.clone();
    m.kind = MatrixKind::TargetMass;
    let mut trace = Vec::new();
    let mut dev = max_deviation(&m, row_targets, col_targets);
    if dev < tol {
        return Ok(IpfFit {
            matrix: m,
            iterations: 0,
            trace,
        });
    }
    for it in 1..=max_iter {
        let rows = m.row_sums();
        for h in 0..N_HOURS {
            if rows[h] > 0.0 {
                let f = row_targets[h] / rows[h];
                m.m[h].iter_mut().for_each(|x| *x *= f);
            }
        }
        let cols = m.col_sums();
        for c in 0..N_CATEGORIES {
            if cols[c] > 0.0 {
                let f = col_targets[c] / cols[c];
                for row in m.m.iter_mut() {
                    row[c] *= f;
                }
            }
        }
        dev = max_deviation(&m, row_targets, col_targets);
        trace.push(dev);
        if dev < tol {
            return Ok(IpfFit {
                matrix: m,
                iterations: it,
                trace,
            });
        }
    }
    Err(Error::IpfNotConverged {
        iterations: max_iter,
        deviation: dev,
    })
}

/// Soft-weighted hour x category counts of each person-day's first event,
/// plus `smoothing` in every cell.
pub fn default_start_seed(corpus: &[StayEvent], smoothing: f64) -> HourCategoryMatrix {
    let mut m = HourCategoryMatrix::zeros(MatrixKind::TargetMass);
    for day in group_person_days(corpus) {
        if let Some(first) = day.events.first() {
            let h = first.start_hour();
            for (c, p) in first.label.probs().iter().enumerate() {
                m.add(h, c, *p);
            }
        }
    }
    m.m.iter_mut().flatten().for_each(|x| *x += smoothing);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn embed(cells: &[(usize, usize, f64)]) -> HourCategoryMatrix {
        let mut m = HourCategoryMatrix::zeros(MatrixKind::TargetMass);
        for &(h, c, v) in cells {
            m.m[h][c] = v;
        }
        m
    }

    #[test]
    fn uniform_seed_gives_outer_product() {
        let seed = embed(&[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let mut rows = [0.0; 24];
        rows[0] = 3.0;
        rows[1] = 1.0;
        let mut cols = [0.0; 10];
        cols[0] = 2.0;
        cols[1] = 2.0;
        let fit = fit_ipf(&seed, &rows, &cols, 1e-9, 1000).unwrap();
        assert_eq!(fit.matrix.m[0][0], 1.5);
        assert_eq!(fit.matrix.m[0][1], 1.5);
        assert_eq!(fit.matrix.m[1][0], 0.5);
        assert_eq!(fit.matrix.m[1][1], 0.5);
    }

    #[test]
    fn own_marginals_are_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seed = HourCategoryMatrix::zeros(MatrixKind::TargetMass);
        seed.m.iter_mut().flatten().for_each(|x| *x = rng.random_range(0.1..5.0));
        let fit = fit_ipf(&seed, &seed.row_sums(), &seed.col_sums(), 1e-9, 1000).unwrap();
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.matrix.m, seed.m);
    }

    #[test]
    fn structural_zero_rejected_with_slice_name() {
        let seed = embed(&[(0, 0, 1.0)]);
        let mut rows = [0.0; 24];
        rows[0] = 1.0;
        rows[5] = 1.0;
        let mut cols = [0.0; 10];
        cols[0] = 2.0;
        match fit_ipf(&seed, &rows, &cols, 1e-9, 100) {
            Err(Error::IpfInfeasible(msg)) => assert!(msg.contains("hour 5"), "{msg}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
        let mut cols = [0.0; 10];
        cols[0] = 1.0;
        cols[3] = 1.0;
        let mut rows = [0.0; 24];
        rows[0] = 2.0;
        match fit_ipf(&seed, &rows, &cols, 1e-9, 100) {
            Err(Error::IpfInfeasible(msg)) => assert!(msg.contains("Services"), "{msg}"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_totals_rejected() {
        let seed = embed(&[(0, 0, 1.0)]);
        let mut rows = [0.0; 24];
        rows[0] = 1.0;
        let mut cols = [0.0; 10];
        cols[0] = 2.0;
        assert!(matches!(
            fit_ipf(&seed, &rows, &cols, 1e-9, 100),
            Err(Error::IpfInfeasible(_))
        ));
    }

    #[test]
    fn non_convergence_reported() {
        // Row 0 forces cell (0,0) = 1 while column 0 wants 0.5. No single
        // slice is all-zero, so only the sweep limit catches it.
        let seed = embed(&[(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let mut rows = [0.0; 24];
        rows[0] = 1.0;
        rows[1] = 1.0;
        let mut cols = [0.0; 10];
        cols[0] = 0.5;
        cols[1] = 1.5;
        match fit_ipf(&seed, &rows, &cols, 1e-12, 5) {
            Err(Error::IpfNotConverged { iterations, deviation }) => {
                assert_eq!(iterations, 5);
                assert!(deviation > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_cells_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seed = HourCategoryMatrix::zeros(MatrixKind::TargetMass);
        seed.m.iter_mut().flatten().for_each(|x| *x = rng.random_range(0.5..2.0));
        seed.m[3][4] = 0.0;
        seed.m[10][0] = 0.0;
        let mut rows = [0.0; 24];
        rows.iter_mut().for_each(|r| *r = rng.random_range(1.0..10.0));
        let total: f64 = rows.iter().sum();
        let cols = [total / 10.0; 10];
        let fit = fit_ipf(&seed, &rows, &cols, 1e-9, 1000).unwrap();
        assert_eq!(fit.matrix.m[3][4], 0.0);
        assert_eq!(fit.matrix.m[10][0], 0.0);
    }
}
