//! Seed derivation shared by every stochastic component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed parts, so ("ab","c") and ("a","bc") differ.
pub fn derive_seed(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn seeded_rng(parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(parts))
}

/// A source of uniform variates in [0, 1). Every sampling routine draws
/// through this trait so variate consumption can be audited and scripted.
pub trait UniformSource {
    fn uniform(&mut self) -> f64;
}

impl UniformSource for ChaCha8Rng {
    fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }
}

/// Replays a fixed list of variates; panics when exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedVariates {
    values: Vec<f64>,
    next: usize,
}

impl ScriptedVariates {
    pub fn new(values: Vec<f64>) -> Self {
        ScriptedVariates { values, next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl UniformSource for ScriptedVariates {
    fn uniform(&mut self) -> f64 {
        let v = self.values[self.next];
        self.next += 1;
        v
    }
}

/// Counts draws from an inner source.
#[derive(Debug)]
pub struct CountingSource<'a, U: UniformSource> {
    pub inner: &'a mut U,
    pub count: usize,
}

impl<U: UniformSource> UniformSource for CountingSource<'_, U> {
    fn uniform(&mut self) -> f64 {
        self.count += 1;
        self.inner.uniform()
    }
}

/// First index whose cumulative weight reaches `u * total`. Weights need not
/// be normalized; the last positive index absorbs round-off.
pub fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if acc >= target && *w > 0.0 {
            return i;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_four_at_point_six_is_third() {
        assert_eq!(inverse_cdf(&[0.25; 4], 0.6), 2);
    }

    #[test]
    fn exact_boundary_takes_first_reaching_index() {
        assert_eq!(inverse_cdf(&[0.5, 0.5], 0.5), 0);
    }

    #[test]
    fn zero_weights_are_never_chosen() {
        assert_eq!(inverse_cdf(&[0.0, 1.0, 0.0], 0.0), 1);
        assert_eq!(inverse_cdf(&[1.0, 0.0, 0.0], 1.0), 0);
    }

    #[test]
    fn seed_parts_are_delimited() {
        assert_ne!(derive_seed(&[b"ab", b"c"]), derive_seed(&[b"a", b"bc"]));
        assert_eq!(derive_seed(&[b"x"]), derive_seed(&[b"x"]));
    }
}
