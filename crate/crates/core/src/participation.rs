//! Per-round node availability.
//!
//! A scheme is a distribution over subsets of `[n]`. The algorithm only needs
//! its first two moments: the marginal probability `p_a` that a node
//! participates and the probability `p_aa` that two distinct nodes both do.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compressors::partial_fisher_yates;
use crate::error::{Error, Result};
use crate::linalg::norm_sq;

/// Largest `n` for which masks are enumerated explicitly.
pub const MAX_ENUMERATION_NODES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SchemeKind {
    Full,
    SNice { s: usize },
    Independent { p_a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipationScheme {
    kind: SchemeKind,
    n: usize,
}

impl ParticipationScheme {
    pub fn full(n: usize) -> Result<Self> {
        Self::new(SchemeKind::Full, n)
    }

    pub fn s_nice(n: usize, s: usize) -> Result<Self> {
        Self::new(SchemeKind::SNice { s }, n)
    }

    pub fn independent(n: usize, p_a: f64) -> Result<Self> {
        Self::new(SchemeKind::Independent { p_a }, n)
    }

    pub fn new(kind: SchemeKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidScheme("node count must be positive".into()));
        }
        match kind {
            SchemeKind::Full => {}
            SchemeKind::SNice { s } => {
                if s == 0 || s > n {
                    return Err(Error::InvalidScheme(format!("s-nice needs 1 <= s <= n, got s = {s}, n = {n}")));
                }
            }
            SchemeKind::Independent { p_a } => {
                if !(p_a > 0.0 && p_a <= 1.0) {
                    return Err(Error::InvalidScheme(format!("p_a must lie in (0, 1], got {p_a}")));
                }
            }
        }
        Ok(Self { kind, n })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn sample_round<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        match self.kind {
            SchemeKind::Full => vec![true; self.n],
            SchemeKind::SNice { s } => {
                let mut mask = vec![false; self.n];
                for i in partial_fisher_yates(rng, self.n, s) {
                    mask[i] = true;
                }
                mask
            }
            SchemeKind::Independent { p_a } => (0..self.n).map(|_| rng.random_bool(p_a)).collect(),
        }
    }

    /// `(p_a, p_aa)`.
    pub fn moments(&self) -> (f64, f64) {
        match self.kind {
            SchemeKind::Full => (1.0, 1.0),
            SchemeKind::SNice { s } => {
                let (s, n) = (s as f64, self.n as f64);
                let p_aa = if self.n == 1 { 1.0 } else { s * (s - 1.0) / (n * (n - 1.0)) };
                (s / n, p_aa)
            }
            SchemeKind::Independent { p_a } => (p_a, p_a * p_a),
        }
    }

    pub fn p_a(&self) -> f64 {
        self.moments().0
    }

    pub fn p_aa(&self) -> f64 {
        self.moments().1
    }

    /// `sqrt(1 - p_aa / p_a)`, zero exactly when every round is full.
    pub fn indicator(&self) -> f64 {
        let (p_a, p_aa) = self.moments();
        (1.0 - p_aa / p_a).max(0.0).sqrt()
    }

    /// Every possible mask together with its probability.
    pub fn mask_distribution(&self) -> Result<Vec<(f64, Vec<bool>)>> {
        if self.n > MAX_ENUMERATION_NODES && !matches!(self.kind, SchemeKind::Full) {
            return Err(Error::EnumerationTooLarge(format!(
                "{} nodes exceeds the enumeration limit of {MAX_ENUMERATION_NODES}",
                self.n
            )));
        }
        let n = self.n;
        Ok(match self.kind {
            SchemeKind::Full => vec![(1.0, vec![true; n])],
            SchemeKind::SNice { s } => {
                let masks: Vec<Vec<bool>> = (0u32..1 << n)
                    .filter(|bits| bits.count_ones() as usize == s)
                    .map(|bits| bits_to_mask(bits, n))
                    .collect();
                let p = 1.0 / masks.len() as f64;
                masks.into_iter().map(|m| (p, m)).collect()
            }
            SchemeKind::Independent { p_a } => (0u32..1 << n)
                .map(|bits| {
                    let k = bits.count_ones() as i32;
                    let p = p_a.powi(k) * (1.0 - p_a).powi(n as i32 - k);
                    (p, bits_to_mask(bits, n))
                })
                .collect(),
        })
    }
}

fn bits_to_mask(bits: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| bits >> i & 1 == 1).collect()
}

/// Exact variance of `(1/n) sum_i v_i` where `v_i = r_i + s_i / p_a` on
/// participating nodes and `v_i = r_i` otherwise, given the means and
/// total variances `E||s_i - E s_i||^2` of independent `s_i`.
pub fn pp_mean_variance_oracle(scheme: &ParticipationScheme, s_means: &[Vec<f64>], s_vars: &[f64]) -> Result<f64> {
    let n = scheme.nodes();
    if s_means.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: s_means.len() });
    }
    if s_vars.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: s_vars.len() });
    }
    let dim = s_means.first().map_or(0, Vec::len);
    if let Some(bad) = s_means.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: bad.len() });
    }
    if s_vars.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidDistribution("variances must be nonnegative".into()));
    }

    let (p_a, p_aa) = match scheme.kind() {
        SchemeKind::Independent { .. } => scheme.moments(),
        _ => mask_moments(&scheme.mask_distribution()?),
    };

    let nf = n as f64;
    let var_sum: f64 = s_vars.iter().sum();
    let mean_sq_sum: f64 = s_means.iter().map(|v| norm_sq(v)).sum();
    let mut mean = vec![0.0; dim];
    for v in s_means {
        for (acc, x) in mean.iter_mut().zip(v) {
            *acc += x / nf;
        }
    }
    let value = var_sum / (nf * nf * p_a)
        + (p_a - p_aa) / (nf * nf * p_a * p_a) * mean_sq_sum
        + (p_aa - p_a * p_a) / (p_a * p_a) * norm_sq(&mean);
    Ok(value.max(0.0))
}

/// Marginal and pairwise inclusion probabilities read off an enumerated
/// mask distribution (node 0 and the pair (0, 1) by symmetry).
fn mask_moments(dist: &[(f64, Vec<bool>)]) -> (f64, f64) {
    let p_a = dist.iter().filter(|(_, m)| m[0]).map(|(p, _)| p).sum();
    let p_aa = if dist[0].1.len() < 2 {
        p_a
    } else {
        dist.iter().filter(|(_, m)| m[0] && m[1]).map(|(p, _)| p).sum()
    };
    (p_a, p_aa)
}
