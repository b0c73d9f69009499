//! Differentially private time-inhomogeneous hidden Markov models for
//! synthetic SNP genotype data, plus the fidelity metrics, randomized
//! response baseline and GWAS tooling used to evaluate them.

pub mod dp;
pub mod error;
pub mod genotype;
pub mod grr;
pub mod gwas;
pub mod hmm;
pub mod metrics;
pub mod rng;
pub mod vcf;

pub use error::{Error, Result};
pub use genotype::{load_matrix, read_matrix, remove_singletons, split, DatasetSplit, GenotypeMatrix, TextFormat};
pub use hmm::{log_likelihood, nll_gradient, sample, LogForwardTrellis, ParamGradient, TihmmParams, TransitionMode};
pub use vcf::{load_vcf, load_vcf_subset, VcfOptions};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
