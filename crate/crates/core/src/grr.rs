//! Generalized randomized response with direct encoding over the genotype
//! domain {0, 1, 2}, and the matching frequency debiasing.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::metrics::FrequencyVector;
use crate::rng::{derive_seed, stream_rng};

pub const DOMAIN_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrrConfig {
    pub total_epsilon: f64,
    pub seq_len: usize,
    /// Divide the budget uniformly over loci. When false every locus gets
    /// the full `total_epsilon`.
    pub split: bool,
}

impl GrrConfig {
    pub fn new(total_epsilon: f64, seq_len: usize) -> Result<Self> {
        Self::build(total_epsilon, seq_len, true)
    }

    pub fn without_split(total_epsilon: f64, seq_len: usize) -> Result<Self> {
        Self::build(total_epsilon, seq_len, false)
    }

    fn build(total_epsilon: f64, seq_len: usize, split: bool) -> Result<Self> {
        if total_epsilon.is_nan() || total_epsilon <= 0.0 {
            return Err(Error::invalid(format!("epsilon must be positive, got {total_epsilon}")));
        }
        if seq_len == 0 {
            return Err(Error::invalid("sequence length must be positive"));
        }
        Ok(Self { total_epsilon, seq_len, split })
    }

    pub fn per_locus_epsilon(&self) -> f64 {
        if self.split {
            self.total_epsilon / self.seq_len as f64
        } else {
            self.total_epsilon
        }
    }

    /// Keep probability `p = e^eps / (e^eps + 2)`.
    pub fn keep_probability(&self) -> f64 {
        let t = (-self.per_locus_epsilon()).exp();
        1.0 / (1.0 + (DOMAIN_SIZE - 1) as f64 * t)
    }

    /// Probability of reporting one specific other value.
    pub fn flip_probability(&self) -> f64 {
        (1.0 - self.keep_probability()) / (DOMAIN_SIZE - 1) as f64
    }
}

fn check_width(m: &GenotypeMatrix, cfg: &GrrConfig) -> Result<()> {
    if m.n_loci() != cfg.seq_len {
        return Err(Error::shape(format!(
            "config is for {} loci, matrix has {}",
            cfg.seq_len,
            m.n_loci()
        )));
    }
    Ok(())
}

/// Perturbs every cell independently. Column `j` draws from substream `j`.
pub fn grr_perturb(m: &GenotypeMatrix, cfg: &GrrConfig, seed: u64) -> Result<GenotypeMatrix> {
    check_width(m, cfg)?;
    let p = cfg.keep_probability();
    let root = derive_seed(seed, "grr");
    let (n, l) = (m.n_individuals(), m.n_loci());
    let columns: Vec<Vec<u8>> = (0..l)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(root, j as u64);
            m.column(j)
                .iter()
                .map(|&g| {
                    if rng.random::<f64>() < p {
                        g
                    } else {
                        // uniform over the two other values
                        let k = rng.random_range(1..DOMAIN_SIZE as u8);
                        (g + k) % DOMAIN_SIZE as u8
                    }
                })
                .collect()
        })
        .collect();
    let values = Array2::from_shape_fn((n, l), |(i, j)| columns[j][i]);
    let out = GenotypeMatrix::new(values, None)?;
    match m.locus_ids() {
        Some(ids) => out.with_locus_ids(ids.to_vec()),
        None => Ok(out),
    }
}

/// Unbiased per-value frequencies `(f' - q) / (p - q)`, one `[f0, f1, f2]`
/// per locus. Entries may fall outside [0, 1].
pub fn grr_debias_value_frequencies(noisy: &GenotypeMatrix, cfg: &GrrConfig) -> Result<Vec<[f64; 3]>> {
    check_width(noisy, cfg)?;
    let n = noisy.n_individuals();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let (p, q) = (cfg.keep_probability(), cfg.flip_probability());
    if p - q <= 0.0 {
        return Err(Error::invalid("keep and flip probabilities coincide, cannot debias"));
    }
    Ok(noisy
        .values()
        .columns()
        .into_iter()
        .map(|c| {
            let mut counts = [0usize; 3];
            for &g in c {
                counts[g as usize] += 1;
            }
            counts.map(|k| (k as f64 / n as f64 - q) / (p - q))
        })
        .collect())
}

/// Debiased minor-allele frequencies `(f1 + 2 f2) / 2`, clipped to [0, 1].
pub fn grr_debias_frequencies(noisy: &GenotypeMatrix, cfg: &GrrConfig) -> Result<FrequencyVector> {
    let freqs = grr_debias_value_frequencies(noisy, cfg)?;
    FrequencyVector::new(
        freqs
            .iter()
            .map(|f| ((f[1] + 2.0 * f[2]) / 2.0).clamp(0.0, 1.0))
            .collect(),
    )
}
