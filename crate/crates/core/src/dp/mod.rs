//! DP-SGD training of HMMs and Rényi-DP accounting.

mod accountant;
mod train;

pub use accountant::{
    account, account_with_order, calibrate_sigma, rdp_orders, rdp_subsampled_gaussian,
    AccountantResult,
};
pub use train::{
    clip, clip_in_place, dp_step, poisson_batch, train, PrivacySpec, StepStats, TrainConfig,
    TrainOutcome, TrainReport,
};
