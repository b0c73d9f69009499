use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accountant::{account, calibrate_sigma};
use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::hmm::{mean_nll, LogProbs, ModelMetadata, TihmmParams, TransitionMode};
use crate::rng::tagged_rng;

/// Abort threshold on the fraction of examples per epoch whose gradient is
/// not finite.
const MAX_NON_FINITE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub dp_enabled: bool,
    pub noise_multiplier: f64,
    pub delta: f64,
    pub seed: u64,
    /// Worker threads for per-example gradients; 1 runs single-threaded.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            epochs: 20,
            learning_rate: 0.015,
            clip_norm: 1.0,
            dp_enabled: false,
            noise_multiplier: 0.0,
            delta: 1e-4,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::invalid("clip norm must be positive"));
        }
        if self.noise_multiplier < 0.0 || self.noise_multiplier.is_nan() {
            return Err(Error::invalid("noise multiplier must be nonnegative"));
        }
        if self.dp_enabled {
            if self.noise_multiplier.is_nan() || self.noise_multiplier <= 0.0 {
                return Err(Error::invalid("DP training needs a positive noise multiplier"));
            }
            if !(self.delta > 0.0 && self.delta < 1.0) {
                return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
            }
        }
        Ok(())
    }

    /// Sampling rate and step count the accountant sees for `n` examples.
    pub fn schedule(&self, n: usize) -> (f64, u64) {
        let q = (self.batch_size as f64 / n as f64).min(1.0);
        let steps = (self.epochs * n.div_ceil(self.batch_size)) as u64;
        (q, steps)
    }

    /// Enables DP with the noise multiplier calibrated for `target_epsilon`
    /// on a dataset of `n` examples.
    pub fn with_target_epsilon(mut self, target_epsilon: f64, delta: f64, n: usize) -> Result<Self> {
        self.delta = delta;
        let (q, steps) = self.schedule(n);
        self.noise_multiplier = calibrate_sigma(target_epsilon, delta, q, steps)?;
        self.dp_enabled = true;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub sampling_rate: f64,
    pub steps: u64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sequence NLL on the training data after each epoch.
    pub train_nll: Vec<f64>,
    /// Same on the holdout set; empty when no holdout was supplied.
    pub holdout_nll: Vec<f64>,
    pub privacy: Option<PrivacySpec>,
    pub steps: u64,
    pub non_finite_examples: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub batch_size: usize,
    pub non_finite: usize,
}

/// Rescales `g` in place to L2 norm at most `c`; vectors already within the
/// bound are left untouched.
pub fn clip_in_place(g: &mut [f64], c: f64) -> Result<()> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::invalid(format!("clip norm must be positive, got {c}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cannot clip a non-finite gradient".into()));
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let factor = (norm / c).max(1.0);
    if factor > 1.0 {
        g.iter_mut().for_each(|v| *v /= factor);
    }
    Ok(())
}

pub fn clip(g: &[f64], c: f64) -> Result<Vec<f64>> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, c)?;
    Ok(out)
}

/// One update: per-example gradients, individually clipped and summed, plus
/// N(0, σ²C²) noise per coordinate when DP is enabled, then
/// `θ ← θ − η · g̃`. The sum is not divided by the batch size.
///
/// Examples whose gradient is not finite contribute zero and are counted.
pub fn dp_step<R: Rng + ?Sized>(
    params: &TihmmParams,
    batch: &[&[u8]],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(TihmmParams, StepStats)> {
    let lp = LogProbs::new(params);
    let per_example = |x: &&[u8]| -> Result<Option<Vec<f64>>> {
        match lp.nll_gradient(params, x) {
            Ok((_, g)) => Ok(Some(g.to_flat())),
            Err(Error::NonFinite(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let grads: Vec<Option<Vec<f64>>> = if cfg.threads > 1 {
        batch.par_iter().map(per_example).collect::<Result<_>>()?
    } else {
        batch.iter().map(per_example).collect::<Result<_>>()?
    };

    let mut total = vec![0.0; params.n_params()];
    let mut stats = StepStats {
        batch_size: batch.len(),
        non_finite: 0,
    };
    // summed in batch order so results do not depend on the thread count
    for g in grads {
        let Some(mut g) = g else {
            stats.non_finite += 1;
            continue;
        };
        if cfg.dp_enabled {
            clip_in_place(&mut g, cfg.clip_norm)?;
        }
        total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
    }
    if cfg.dp_enabled && cfg.noise_multiplier > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_multiplier * cfg.clip_norm)
            .map_err(|e| Error::invalid(e.to_string()))?;
        total.iter_mut().for_each(|t| *t += noise.sample(rng));
    }
    let next = params.updated(&total, -cfg.learning_rate)?;
    Ok((next, stats))
}

/// Poisson subsample: each index joins independently with probability `q`.
pub fn poisson_batch<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<f64>() < q).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TihmmParams,
    pub report: TrainReport,
    pub privacy: Option<PrivacySpec>,
}

impl TrainOutcome {
    pub fn metadata(&self, cfg: &TrainConfig) -> ModelMetadata {
        ModelMetadata {
            seed: cfg.seed,
            trained_with_dp: cfg.dp_enabled,
            epsilon: self.privacy.map(|p| p.epsilon),
            delta: self.privacy.map(|p| p.delta),
            sigma: self.privacy.map(|p| p.sigma),
            clip: cfg.dp_enabled.then_some(cfg.clip_norm),
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.learning_rate,
        }
    }
}

/// Trains an HMM with `n_states` hidden states on the rows of `data`.
///
/// With DP enabled every step draws a Poisson batch at rate B/N; otherwise
/// each epoch walks a fresh shuffle in chunks of B. Both run ⌈N/B⌉ steps per
/// epoch.
pub fn train(
    data: &GenotypeMatrix,
    holdout: Option<&GenotypeMatrix>,
    n_states: usize,
    mode: TransitionMode,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.n_individuals();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.n_loci() < 2 {
        return Err(Error::invalid("training needs at least 2 loci"));
    }
    if let Some(h) = holdout {
        if h.n_loci() != data.n_loci() {
            return Err(Error::shape("holdout and training loci differ"));
        }
    }
    if cfg.dp_enabled && cfg.delta >= 1.0 / n as f64 {
        log::warn!("delta {} is not below 1/N = {}", cfg.delta, 1.0 / n as f64);
    }

    let run = || train_inner(data, holdout, n_states, mode, cfg);
    if cfg.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(run)
    } else {
        run()
    }
}

fn train_inner(
    data: &GenotypeMatrix,
    holdout: Option<&GenotypeMatrix>,
    n_states: usize,
    mode: TransitionMode,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let rows = data.sequences();
    let holdout_rows = holdout.map(GenotypeMatrix::sequences);
    let n = rows.len();
    let (q, total_steps) = cfg.schedule(n);
    let steps_per_epoch = n.div_ceil(cfg.batch_size);

    let mut params = TihmmParams::init(n_states, data.n_loci(), mode, cfg.seed)?;
    let mut batch_rng = tagged_rng(cfg.seed, "batches");
    let mut noise_rng = tagged_rng(cfg.seed, "noise");
    let mut report = TrainReport {
        train_nll: Vec::with_capacity(cfg.epochs),
        holdout_nll: Vec::new(),
        privacy: None,
        steps: 0,
        non_finite_examples: 0,
        wall_clock_seconds: 0.0,
    };
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut seen = 0usize;
        let mut bad = 0usize;
        if !cfg.dp_enabled {
            order.shuffle(&mut batch_rng);
        }
        for step in 0..steps_per_epoch {
            let idx: Vec<usize> = if cfg.dp_enabled {
                poisson_batch(n, q, &mut batch_rng)
            } else {
                let end = ((step + 1) * cfg.batch_size).min(n);
                order[step * cfg.batch_size..end].to_vec()
            };
            let batch: Vec<&[u8]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
            let (next, stats) = dp_step(&params, &batch, cfg, &mut noise_rng)?;
            params = next;
            seen += stats.batch_size;
            bad += stats.non_finite;
            report.steps += 1;
        }
        if bad > 0 {
            log::warn!("epoch {epoch}: {bad} of {seen} examples had non-finite gradients");
            report.non_finite_examples += bad;
            if bad as f64 > MAX_NON_FINITE_FRACTION * seen as f64 {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch}: {bad} of {seen} gradients were non-finite"
                )));
            }
        }
        report.train_nll.push(mean_nll(&params, &rows)?);
        if let Some(h) = &holdout_rows {
            report.holdout_nll.push(mean_nll(&params, h)?);
        }
        log::info!(
            "epoch {}/{}: train nll {:.4}",
            epoch + 1,
            cfg.epochs,
            report.train_nll.last().copied().unwrap_or(f64::NAN)
        );
    }

    let privacy = if cfg.dp_enabled {
        let steps = report.steps;
        debug_assert!(steps == total_steps || cfg.epochs == 0);
        Some(PrivacySpec {
            epsilon: account(cfg.noise_multiplier, q, steps, cfg.delta)?,
            delta: cfg.delta,
            sampling_rate: q,
            steps,
            sigma: cfg.noise_multiplier,
        })
    } else {
        None
    };
    report.privacy = privacy;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        params,
        report,
        privacy,
    })
}
