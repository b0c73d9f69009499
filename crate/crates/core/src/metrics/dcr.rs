use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;

pub const DEFAULT_DCR_BINS: usize = 50;

/// Distance of each synthetic record to its closest real record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcrHistogram {
    pub per_record_min_distance: Vec<f64>,
    /// `bins + 1` equally spaced edges on [0, 1].
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// `sqrt(sum((a_i - b_i)^2) / 4L)`, which lies in [0, 1].
pub fn record_distance(a: &[u8], b: &[u8]) -> f64 {
    let ss: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = u64::from(x.abs_diff(y));
            d * d
        })
        .sum();
    (ss as f64 / (4.0 * a.len() as f64)).sqrt()
}

pub fn dcr(synth: &GenotypeMatrix, real: &GenotypeMatrix, bins: usize) -> Result<DcrHistogram> {
    if real.n_individuals() == 0 {
        return Err(Error::EmptyDataset);
    }
    if synth.n_loci() != real.n_loci() {
        return Err(Error::shape(format!(
            "synthetic data has {} loci, real data {}",
            synth.n_loci(),
            real.n_loci()
        )));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let real_rows = real.sequences();
    let distances: Vec<f64> = synth
        .sequences()
        .par_iter()
        .map(|s| {
            real_rows
                .iter()
                .map(|r| record_distance(s, r))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut counts = vec![0usize; bins];
    for &d in &distances {
        let b = ((d * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let bin_edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok(DcrHistogram {
        per_record_min_distance: distances,
        bin_edges,
        counts,
    })
}
