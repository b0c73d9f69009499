//! Time-inhomogeneous (and homogeneous) hidden Markov models over genotype
//! sequences.

mod forward;
mod io;
mod params;
mod sample;

pub use forward::{log_likelihood, mean_nll, nll_gradient, LogForwardTrellis, LogProbs};
pub use io::{load_model, save_model, ModelFile, ModelMetadata, MODEL_FORMAT_VERSION};
pub use params::{ParamGradient, TihmmParams, TransitionMode, N_SYMBOLS};
pub use sample::{locus_marginals, sample};

#[cfg(test)]
pub(crate) use forward::logsumexp;
