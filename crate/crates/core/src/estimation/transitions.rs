//! Soft-count transition kernels with Dirichlet smoothing, globally and per
//! time block.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimation::SequenceStep;
use crate::taxonomy::N_CATEGORIES;

type Square = [[f64; N_CATEGORIES]; N_CATEGORIES];

/// Block index of an hour for edges like `[0, 5, 8, ..., 24]`.
pub fn block_of(edges: &[u8], hour: usize) -> usize {
    let h = hour as u8;
    edges
        .windows(2)
        .position(|w| h >= w[0] && h < w[1])
        .unwrap_or(edges.len() - 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    /// Expected transition counts N(i, j).
    pub counts: Square,
    /// Row-stochastic T(i, j).
    pub probs: Square,
    /// Adjacent event pairs contributing to `counts`.
    pub n_pairs: u64,
}

impl Kernel {
    /// T(i,j) = (N(i,j) + alpha) / sum_j' (N(i,j') + alpha). A row with no
    /// mass at all (possible only with alpha = 0) is uniform.
    pub fn from_counts(counts: Square, alpha: f64, n_pairs: u64) -> Self {
        let mut probs = [[0.0; N_CATEGORIES]; N_CATEGORIES];
        for i in 0..N_CATEGORIES {
            let denom: f64 = counts[i].iter().map(|n| n + alpha).sum();
            for j in 0..N_CATEGORIES {
                probs[i][j] = if denom > 0.0 {
                    (counts[i][j] + alpha) / denom
                } else {
                    1.0 / N_CATEGORIES as f64
                };
            }
        }
        Kernel {
            counts,
            probs,
            n_pairs,
        }
    }

    /// A kernel given directly by its probabilities.
    pub fn from_probs(probs: Square) -> Result<Self> {
        for row in &probs {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) || (s - 1.0).abs() > 1e-9 {
                return Err(invalid("kernel rows must be probability vectors"));
            }
        }
        Ok(Kernel {
            counts: [[0.0; N_CATEGORIES]; N_CATEGORIES],
            probs,
            n_pairs: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernels {
    pub alpha: f64,
    pub block_edges: Vec<u8>,
    pub global: Kernel,
    pub blocks: Vec<Kernel>,
}

impl TransitionKernels {
    pub fn block_of(&self, hour: usize) -> usize {
        block_of(&self.block_edges, hour)
    }

    /// Kernel applied at an update hour.
    pub fn for_hour(&self, hour: usize, use_blocks: bool) -> &Kernel {
        if use_blocks {
            &self.blocks[self.block_of(hour)]
        } else {
            &self.global
        }
    }

    /// Blocks that saw no transitions and therefore hold the smoothing-only kernel.
    pub fn empty_blocks(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, k)| k.n_pairs == 0)
            .map(|(b, _)| b)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.len() + 1 != self.block_edges.len() {
            return Err(invalid(format!(
                "{} block kernels for {} block edges",
                self.blocks.len(),
                self.block_edges.len()
            )));
        }
        for k in std::iter::once(&self.global).chain(&self.blocks) {
            for row in &k.probs {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("kernel row sums to {s}")));
                }
            }
        }
        Ok(())
    }
}

/// Adds p_t p_{t+1}^T for every adjacent pair; block counts are keyed by the
/// current event's start hour.
pub fn estimate_transition_kernels(
    sequences: &[Vec<SequenceStep>],
    alpha: f64,
    block_edges: &[u8],
) -> Result<TransitionKernels> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid(format!("alpha {alpha} must be >= 0")));
    }
    if block_edges.len() < 2 || block_edges[0] != 0 || *block_edges.last().unwrap() != 24 {
        return Err(invalid("block edges must run from 0 to 24"));
    }
    let n_blocks = block_edges.len() - 1;
    let mut global = [[0.0; N_CATEGORIES]; N_CATEGORIES];
    let mut blocks = vec![[[0.0; N_CATEGORIES]; N_CATEGORIES]; n_blocks];
    let mut global_pairs = 0u64;
    let mut block_pairs = vec![0u64; n_blocks];

    for seq in sequences {
        for pair in seq.windows(2) {
            let (cur, next) = (&pair[0], &pair[1]);
            if cur.hour >= 24 {
                return Err(invalid(format!("hour {} out of range", cur.hour)));
            }
            let b = block_of(block_edges, cur.hour);
            for i in 0..N_CATEGORIES {
                let pi = cur.probs[i];
                if pi == 0.0 {
                    continue;
                }
                for j in 0..N_CATEGORIES {
                    let v = pi * next.probs[j];
                    global[i][j] += v;
                    blocks[b][i][j] += v;
                }
            }
            global_pairs += 1;
            block_pairs[b] += 1;
        }
    }

    Ok(TransitionKernels {
        alpha,
        block_edges: block_edges.to_vec(),
        global: Kernel::from_counts(global, alpha, global_pairs),
        blocks: blocks
            .into_iter()
            .zip(block_pairs)
            .map(|(c, n)| Kernel::from_counts(c, alpha, n))
            .collect(),
    })
}
