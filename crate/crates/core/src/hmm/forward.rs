//! Log-domain forward/backward recursions and the exact NLL gradient with
//! respect to the logits.

use ndarray::{Array1, Array2, Array3, Axis};

use super::params::{log_softmax, row_map, ParamGradient, TihmmParams, TransitionMode, N_SYMBOLS};
use crate::error::{Error, Result};

pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-probabilities derived once from a parameter set and reused across
/// sequences.
#[derive(Debug, Clone)]
pub struct LogProbs {
    pub(crate) prior: Array1<f64>,
    /// `[state, symbol]`
    pub(crate) emission: Array2<f64>,
    /// `[slice, from, to]`
    pub(crate) transition: Array3<f64>,
    transition_prob: Array3<f64>,
    seq_len: usize,
    homogeneous: bool,
}

impl LogProbs {
    pub fn new(params: &TihmmParams) -> Self {
        let mut transition = Array3::zeros(params.transition_logits().raw_dim());
        for (mut dst, src) in transition
            .outer_iter_mut()
            .zip(params.transition_logits().outer_iter())
        {
            dst.assign(&row_map(&src.to_owned(), log_softmax));
        }
        let transition_prob = transition.mapv(f64::exp);
        Self {
            prior: log_softmax(params.prior_logits().view()),
            emission: row_map(params.emission_logits(), log_softmax),
            transition,
            transition_prob,
            seq_len: params.seq_len(),
            homogeneous: params.mode() == TransitionMode::TimeHomogeneous,
        }
    }

    fn slice(&self, step: usize) -> usize {
        if self.homogeneous {
            0
        } else {
            step
        }
    }

    fn n_states(&self) -> usize {
        self.prior.len()
    }

    fn check(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.seq_len {
            return Err(Error::shape(format!(
                "sequence of length {} for a model of length {}",
                x.len(),
                self.seq_len
            )));
        }
        if let Some(pos) = x.iter().position(|&s| s as usize >= N_SYMBOLS) {
            return Err(Error::InvalidGenotype {
                row: 1,
                column: pos + 1,
                value: x[pos].to_string(),
            });
        }
        Ok(())
    }

    /// `log sum_j exp(a_j) * w_j`, shifting by `max_j a_j`. Equivalent to a
    /// log-sum-exp over `a_j + log w_j` unless a weight underflows.
    fn log_weighted_sum(a_shifted: &[f64], shift: f64, weights: impl Iterator<Item = f64>) -> f64 {
        let total: f64 = a_shifted.iter().zip(weights).map(|(a, w)| a * w).sum();
        shift + total.ln()
    }

    fn forward(&self, x: &[u8]) -> Array2<f64> {
        let h = self.n_states();
        let l = x.len();
        let mut alpha = Array2::from_elem((l, h), f64::NEG_INFINITY);
        for k in 0..h {
            alpha[[0, k]] = self.prior[k] + self.emission[[k, x[0] as usize]];
        }
        let mut shifted = vec![0.0; h];
        for step in 1..l {
            let prev = alpha.row(step - 1);
            let m = prev.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            if m == f64::NEG_INFINITY {
                break;
            }
            for (s, &a) in shifted.iter_mut().zip(prev.iter()) {
                *s = (a - m).exp();
            }
            let t = self.transition_prob.index_axis(Axis(0), self.slice(step - 1));
            let sym = x[step] as usize;
            for k in 0..h {
                alpha[[step, k]] =
                    self.emission[[k, sym]] + Self::log_weighted_sum(&shifted, m, t.column(k).iter().copied());
            }
        }
        alpha
    }

    fn backward(&self, x: &[u8]) -> Array2<f64> {
        let h = self.n_states();
        let l = x.len();
        let mut beta = Array2::zeros((l, h));
        let mut shifted = vec![0.0; h];
        for step in (0..l - 1).rev() {
            let sym = x[step + 1] as usize;
            let next: Vec<f64> = (0..h)
                .map(|k| self.emission[[k, sym]] + beta[[step + 1, k]])
                .collect();
            let m = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                beta.row_mut(step).fill(f64::NEG_INFINITY);
                continue;
            }
            for (s, &b) in shifted.iter_mut().zip(&next) {
                *s = (b - m).exp();
            }
            let t = self.transition_prob.index_axis(Axis(0), self.slice(step));
            for j in 0..h {
                beta[[step, j]] = Self::log_weighted_sum(&shifted, m, t.row(j).iter().copied());
            }
        }
        beta
    }

    pub fn log_likelihood(&self, x: &[u8]) -> Result<LogForwardTrellis> {
        self.check(x)?;
        let alphas = self.forward(x);
        let log_likelihood = logsumexp(&alphas.row(x.len() - 1).to_vec());
        Ok(LogForwardTrellis {
            alphas,
            log_likelihood,
        })
    }

    /// Negative log-likelihood and its gradient with respect to the logits
    /// of `params`, which must be the parameters `self` was built from.
    pub fn nll_gradient(&self, params: &TihmmParams, x: &[u8]) -> Result<(f64, ParamGradient)> {
        self.check(x)?;
        let h = self.n_states();
        let l = x.len();
        let alpha = self.forward(x);
        let beta = self.backward(x);
        let log_lik = logsumexp(&alpha.row(l - 1).to_vec());
        if !log_lik.is_finite() {
            return Err(Error::NonFinite(format!(
                "log-likelihood is {log_lik}; gradient undefined"
            )));
        }

        let mut grad = ParamGradient::zeros_like(params);

        // Posterior state marginals: gamma[l, k] = P(z_l = k | x).
        let gamma = (&alpha + &beta).mapv(|v| (v - log_lik).exp());

        let prior = self.prior.mapv(f64::exp);
        for k in 0..h {
            grad.d_prior[k] = prior[k] - gamma[[0, k]];
        }

        let emission = self.emission.mapv(f64::exp);
        for k in 0..h {
            let mut counts = [0.0; N_SYMBOLS];
            for step in 0..l {
                counts[x[step] as usize] += gamma[[step, k]];
            }
            let total: f64 = counts.iter().sum();
            for s in 0..N_SYMBOLS {
                grad.d_emission[[k, s]] = emission[[k, s]] * total - counts[s];
            }
        }

        // Pairwise posteriors xi[j, k] = P(z_step = j, z_step+1 = k | x).
        let mut xi = Array2::<f64>::zeros((h, h));
        let mut u = vec![0.0; h];
        let mut v = vec![0.0; h];
        for step in 0..l - 1 {
            let s = self.slice(step);
            let t_log = self.transition.index_axis(Axis(0), s);
            let t = self.transition_prob.index_axis(Axis(0), s);
            let sym = x[step + 1] as usize;
            let c = alpha.row(step).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut d_max = f64::NEG_INFINITY;
            for k in 0..h {
                v[k] = self.emission[[k, sym]] + beta[[step + 1, k]];
                d_max = d_max.max(v[k]);
            }
            let scale = c + d_max - log_lik;
            if scale < 700.0 {
                let factor = scale.exp();
                for j in 0..h {
                    u[j] = (alpha[[step, j]] - c).exp() * factor;
                }
                for vk in v.iter_mut() {
                    *vk = (*vk - d_max).exp();
                }
                for j in 0..h {
                    for k in 0..h {
                        xi[[j, k]] = u[j] * t[[j, k]] * v[k];
                    }
                }
            } else {
                for j in 0..h {
                    for k in 0..h {
                        xi[[j, k]] = (alpha[[step, j]] + t_log[[j, k]] + v[k] - log_lik).exp();
                    }
                }
            }
            let mut d = grad.d_transition.index_axis_mut(Axis(0), s);
            for j in 0..h {
                let row_total: f64 = xi.row(j).sum();
                for k in 0..h {
                    d[[j, k]] += t[[j, k]] * row_total - xi[[j, k]];
                }
            }
        }

        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient has non-finite entries".into()));
        }
        Ok((-log_lik, grad))
    }
}

/// Forward log-messages and the resulting sequence log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LogForwardTrellis {
    /// `alphas[[l, h]] = log P(x_1..x_l, z_l = h)`.
    pub alphas: Array2<f64>,
    pub log_likelihood: f64,
}

pub fn log_likelihood(params: &TihmmParams, x: &[u8]) -> Result<LogForwardTrellis> {
    LogProbs::new(params).log_likelihood(x)
}

pub fn nll_gradient(params: &TihmmParams, x: &[u8]) -> Result<(f64, ParamGradient)> {
    LogProbs::new(params).nll_gradient(params, x)
}

/// Mean negative log-likelihood over the rows of a dataset.
pub fn mean_nll(params: &TihmmParams, rows: &[Vec<u8>]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lp = LogProbs::new(params);
    let mut total = 0.0;
    for x in rows {
        total -= lp.log_likelihood(x)?.log_likelihood;
    }
    Ok(total / rows.len() as f64)
}
