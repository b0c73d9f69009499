use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::params::TihmmParams;
use crate::genotype::GenotypeMatrix;
use crate::rng::{categorical, derive_seed, stream_rng};

/// Ancestral sampling of `n_samples` sequences. Row `i` is drawn from its own
/// substream of `seed`, so rows do not depend on `n_samples` or thread count.
pub fn sample(params: &TihmmParams, n_samples: usize, seed: u64) -> GenotypeMatrix {
    let prior = params.prior_probs().to_vec();
    let emission: Vec<Vec<f64>> = params.emission_probs().outer_iter().map(|r| r.to_vec()).collect();
    let transitions = params.transition_probs();
    let transition: Vec<Vec<Vec<f64>>> = transitions
        .outer_iter()
        .map(|s| s.outer_iter().map(|r| r.to_vec()).collect())
        .collect();
    let l = params.seq_len();
    let root = derive_seed(seed, "sample");

    let rows: Vec<Vec<u8>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(root, i as u64);
            let mut row = Vec::with_capacity(l);
            let mut z = categorical(&prior, rng.random());
            for locus in 0..l {
                row.push(categorical(&emission[z], rng.random()) as u8);
                if locus + 1 < l {
                    z = categorical(&transition[params.slice_index(locus)][z], rng.random());
                }
            }
            row
        })
        .collect();

    let mut values = Array2::zeros((n_samples, l));
    for (mut dst, src) in values.axis_iter_mut(Axis(0)).zip(&rows) {
        dst.assign(&ndarray::ArrayView1::from(src.as_slice()));
    }
    GenotypeMatrix::new(values, None).expect("emissions are in {0,1,2}")
}

/// Exact per-locus genotype marginals `[locus, symbol]`, propagating the
/// state distribution through the transition stack.
pub fn locus_marginals(params: &TihmmParams) -> Array2<f64> {
    let emission = params.emission_probs();
    let transitions = params.transition_probs();
    let mut state = params.prior_probs();
    let mut out = Array2::zeros((params.seq_len(), emission.ncols()));
    for locus in 0..params.seq_len() {
        out.row_mut(locus).assign(&state.dot(&emission));
        if locus + 1 < params.seq_len() {
            state = state.dot(&transitions.index_axis(Axis(0), params.slice_index(locus)));
        }
    }
    out
}
