//! Fidelity and privacy diagnostics for synthetic genotype data.

mod dcr;
mod freq;
mod ld;

pub use dcr::{dcr, record_distance, DcrHistogram, DEFAULT_DCR_BINS};
pub use freq::{euclidean_distance, manhattan_distance, minor_allele_freq, neis_distance, FrequencyVector};
pub use ld::{btss, exact_match_rate, ld_r2, tag_snps, BtssResult, LdMatrix, DEFAULT_BTSS_LAMBDA};
