//! One-dimensional Gaussian mixtures over log-dwell, fitted by weighted EM.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Standard-deviation floor on the log scale.
pub const SD_FLOOR: f64 = 0.05;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl Component {
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - LN_SQRT_2PI
    }
}

/// Mixture over ln(minutes); components sorted by ascending mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct LogMixture {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for LogMixture {
    type Error = crate::Error;

    fn try_from(c: Vec<Component>) -> Result<Self> {
        LogMixture::new(c)
    }
}

impl From<LogMixture> for Vec<Component> {
    fn from(m: LogMixture) -> Self {
        m.components
    }
}

impl LogMixture {
    /// Sorts components by mean. Weights must sum to one; a zero sd is
    /// allowed for hand-built (deterministic) models.
    pub fn new(mut components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("mixture needs at least one component"));
        }
        for c in &components {
            if !(c.weight.is_finite() && c.weight >= 0.0 && c.mean.is_finite() && c.sd.is_finite() && c.sd >= 0.0) {
                return Err(invalid(format!("invalid mixture component {c:?}")));
            }
        }
        let w: f64 = components.iter().map(|c| c.weight).sum();
        if (w - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("mixture weights sum to {w}")));
        }
        components.sort_by(|a, b| {
            a.mean
                .total_cmp(&b.mean)
                .then(a.sd.total_cmp(&b.sd))
                .then(a.weight.total_cmp(&b.weight))
        });
        Ok(LogMixture { components })
    }

    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            sd,
        }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Mean and variance of log-dwell.
    pub fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.components.iter().map(|c| c.weight * c.mean).sum();
        let second: f64 = self
            .components
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean))
            .sum();
        (mean, second - mean * mean)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_density(x)))
    }

    /// Draws a log-dwell from three uniforms: one picks the component by
    /// inverse CDF, two feed a Box-Muller normal.
    pub fn sample_log(&self, u_pick: f64, u1: f64, u2: f64) -> f64 {
        let mut acc = 0.0;
        let mut chosen = self.components.last().unwrap();
        for c in &self.components {
            acc += c.weight;
            if u_pick < acc {
                chosen = c;
                break;
            }
        }
        let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        chosen.mean + chosen.sd * z
    }

    /// Convex combination `(1 - s) * self + s * target`, matching components
    /// by ascending mean. `None` when the component counts differ.
    pub fn shrink_toward(&self, target: &LogMixture, s: f64) -> Option<LogMixture> {
        if self.components.len() != target.components.len() {
            return None;
        }
        if s == 0.0 {
            return Some(self.clone());
        }
        if s == 1.0 {
            return Some(target.clone());
        }
        let components = self
            .components
            .iter()
            .zip(&target.components)
            .map(|(a, b)| Component {
                weight: (1.0 - s) * a.weight + s * b.weight,
                mean: (1.0 - s) * a.mean + s * b.mean,
                sd: (1.0 - s) * a.sd + s * b.sd,
            })
            .collect();
        let mut m = LogMixture { components };
        let w: f64 = m.components.iter().map(|c| c.weight).sum();
        m.components.iter_mut().for_each(|c| c.weight /= w);
        m.components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        Some(m)
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub components: usize,
    pub max_iter: usize,
    /// Stop when the mean per-unit-weight log-likelihood improves by less.
    pub tol: f64,
    pub sd_floor: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        EmSettings {
            components: 2,
            max_iter: 200,
            tol: 1e-8,
            sd_floor: SD_FLOOR,
        }
    }
}

fn weighted_quantile(sorted: &[(f64, f64)], total: f64, q: f64) -> f64 {
    let target = q * total;
    let mut acc = 0.0;
    for &(x, w) in sorted {
        acc += w;
        if acc >= target {
            return x;
        }
    }
    sorted.last().unwrap().0
}

/// Weighted EM for a `settings.components`-component mixture. Means start at
/// evenly spaced weighted quantiles (25th/75th for two components) with equal
/// weights and the pooled sd. Returns `None` if the total weight is zero.
pub fn fit_weighted_em(xs: &[f64], ws: &[f64], settings: &EmSettings) -> Option<LogMixture> {
    assert_eq!(xs.len(), ws.len());
    let mut data: Vec<(f64, f64)> = xs
        .iter()
        .zip(ws)
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| (*x, *w))
        .collect();
    let total: f64 = data.iter().map(|d| d.1).sum();
    if data.is_empty() || !(total > 0.0) {
        return None;
    }
    data.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let k = settings.components.max(1);
    let floor = settings.sd_floor;
    let mean_all: f64 = data.iter().map(|(x, w)| w * x).sum::<f64>() / total;
    let var_all: f64 = data.iter().map(|(x, w)| w * (x - mean_all).powi(2)).sum::<f64>() / total;
    let sd0 = var_all.sqrt().max(floor);
    let mut comps: Vec<Component> = (0..k)
        .map(|i| Component {
            weight: 1.0 / k as f64,
            mean: weighted_quantile(&data, total, (i as f64 + 0.5) / k as f64),
            sd: sd0,
        })
        .collect();

    let n = data.len();
    let mut resp = vec![0.0; n * k];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..settings.max_iter {
        // E step
        let mut ll = 0.0;
        for (i, &(x, w)) in data.iter().enumerate() {
            let logs: Vec<f64> = comps
                .iter()
                .map(|c| {
                    if c.weight > 0.0 {
                        c.weight.ln() + c.log_density(x)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let lse = log_sum_exp(logs.iter().copied());
            ll += w * lse;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        // M step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| data[i].1 * resp[i * k + j]).sum();
            if nk <= 0.0 {
                comps[j].weight = 0.0;
                continue;
            }
            let mean = (0..n).map(|i| data[i].1 * resp[i * k + j] * data[i].0).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| data[i].1 * resp[i * k + j] * (data[i].0 - mean).powi(2))
                .sum::<f64>()
                / nk;
            comps[j] = Component {
                weight: nk / total,
                mean,
                sd: var.sqrt().max(floor),
            };
        }
        let improvement = (ll - prev_ll) / total;
        prev_ll = ll;
        if improvement.abs() < settings.tol {
            break;
        }
    }
    let w: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= w);
    comps.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.sd.total_cmp(&b.sd)));
    Some(LogMixture { components: comps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_values_floor_the_sd() {
        let xs = vec![30f64.ln(); 200];
        let ws = vec![1.0; 200];
        let m = fit_weighted_em(&xs, &ws, &EmSettings::default()).unwrap();
        for c in m.components() {
            assert!((c.mean - 30f64.ln()).abs() < 1e-12);
            assert_eq!(c.sd, SD_FLOOR);
        }
        let (mean, _) = m.moments();
        assert!((mean - 30f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn recovers_known_mixture() {
        let truth = LogMixture::new(vec![
            Component { weight: 0.3, mean: 10f64.ln(), sd: 0.3 },
            Component { weight: 0.7, mean: 90f64.ln(), sd: 0.4 },
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| truth.sample_log(rng.random(), rng.random(), rng.random()))
            .collect();
        let m = fit_weighted_em(&xs, &vec![1.0; xs.len()], &EmSettings::default()).unwrap();
        for (got, want) in m.components().iter().zip(truth.components()) {
            assert!((got.weight - want.weight).abs() <= 0.1 * want.weight, "{got:?} vs {want:?}");
            assert!((got.mean - want.mean).abs() <= 0.1 * want.mean.abs(), "{got:?} vs {want:?}");
            assert!((got.sd - want.sd).abs() <= 0.1 * want.sd, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn weights_act_like_replication() {
        let xs = [1.0, 2.0, 3.0, 5.0, 8.0];
        let ws = [2.0, 1.0, 3.0, 1.0, 2.0];
        let mut rep = Vec::new();
        for (x, w) in xs.iter().zip(ws) {
            for _ in 0..w as usize {
                rep.push(*x);
            }
        }
        let a = fit_weighted_em(&xs, &ws, &EmSettings::default()).unwrap();
        let b = fit_weighted_em(&rep, &vec![1.0; rep.len()], &EmSettings::default()).unwrap();
        for (ca, cb) in a.components().iter().zip(b.components()) {
            assert!((ca.mean - cb.mean).abs() < 1e-9);
            assert!((ca.sd - cb.sd).abs() < 1e-9);
            assert!((ca.weight - cb.weight).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_weight_gives_none() {
        assert!(fit_weighted_em(&[1.0], &[0.0], &EmSettings::default()).is_none());
    }

    #[test]
    fn shrink_endpoints() {
        let a = LogMixture::new(vec![
            Component { weight: 0.4, mean: 1.0, sd: 0.2 },
            Component { weight: 0.6, mean: 3.0, sd: 0.5 },
        ])
        .unwrap();
        let b = LogMixture::new(vec![
            Component { weight: 0.5, mean: 2.0, sd: 0.3 },
            Component { weight: 0.5, mean: 4.0, sd: 0.6 },
        ])
        .unwrap();
        assert_eq!(a.shrink_toward(&b, 0.0).unwrap(), a);
        assert_eq!(a.shrink_toward(&b, 1.0).unwrap(), b);
        let half = a.shrink_toward(&b, 0.5).unwrap();
        assert!((half.components()[0].mean - 1.5).abs() < 1e-15);
        assert!(a.shrink_toward(&LogMixture::single(0.0, 1.0).unwrap(), 0.5).is_none());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(LogMixture::new(vec![Component { weight: 0.5, mean: 0.0, sd: 1.0 }]).is_err());
        assert!(LogMixture::new(vec![]).is_err());
    }
}
