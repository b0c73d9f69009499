use ndarray::{Array1, Array2, Array3, ArrayView1, Axis, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::tagged_rng;

/// Symbols an emission can produce: genotypes 0, 1 and 2.
pub const N_SYMBOLS: usize = 3;

const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionMode {
    /// One transition matrix per locus step.
    #[serde(rename = "tih")]
    TimeInhomogeneous,
    /// A single transition matrix shared by every step.
    #[serde(rename = "thom")]
    TimeHomogeneous,
}

impl TransitionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionMode::TimeInhomogeneous => "tih",
            TransitionMode::TimeHomogeneous => "thom",
        }
    }

    fn n_slices(self, seq_len: usize) -> usize {
        match self {
            TransitionMode::TimeInhomogeneous => seq_len - 1,
            TransitionMode::TimeHomogeneous => 1,
        }
    }
}

impl std::fmt::Display for TransitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TransitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tih" | "time_inhomogeneous" => Ok(Self::TimeInhomogeneous),
            "thom" | "time_homogeneous" => Ok(Self::TimeHomogeneous),
            other => Err(Error::invalid(format!("unknown transition mode {other:?}"))),
        }
    }
}

/// HMM parameters stored as unconstrained logits; every distribution is the
/// softmax of a logit row.
///
/// A logit of `-inf` marks a structural zero probability. Every row must
/// keep at least one finite entry; NaN and `+inf` are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TihmmParams {
    seq_len: usize,
    mode: TransitionMode,
    prior_logits: Array1<f64>,
    emission_logits: Array2<f64>,
    transition_logits: Array3<f64>,
}

fn check_row(row: ArrayView1<'_, f64>, what: &str) -> Result<()> {
    if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite(format!("{what} contains NaN or +inf")));
    }
    if !row.iter().any(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} has no finite entry")));
    }
    Ok(())
}

/// Numerically stable log-softmax of one row; `-inf` entries stay `-inf`.
pub(crate) fn log_softmax(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    row.mapv(|v| v - lse)
}

pub(crate) fn softmax(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = row.mapv(|v| (v - max).exp());
    let total = e.sum();
    e / total
}

impl TihmmParams {
    pub fn new(
        seq_len: usize,
        mode: TransitionMode,
        prior_logits: Array1<f64>,
        emission_logits: Array2<f64>,
        transition_logits: Array3<f64>,
    ) -> Result<Self> {
        let h = prior_logits.len();
        if h == 0 {
            return Err(Error::invalid("at least one hidden state is required"));
        }
        if seq_len < 2 {
            return Err(Error::invalid(format!(
                "sequence length must be at least 2, got {seq_len}"
            )));
        }
        if emission_logits.dim() != (h, N_SYMBOLS) {
            return Err(Error::shape(format!(
                "emission logits {:?}, expected ({h}, {N_SYMBOLS})",
                emission_logits.dim()
            )));
        }
        let expected = (mode.n_slices(seq_len), h, h);
        if transition_logits.dim() != expected {
            return Err(Error::shape(format!(
                "transition logits {:?}, expected {expected:?} for {mode} with L={seq_len}",
                transition_logits.dim()
            )));
        }
        check_row(prior_logits.view(), "prior logits")?;
        for (i, row) in emission_logits.outer_iter().enumerate() {
            check_row(row, &format!("emission row {i}"))?;
        }
        for (t, slice) in transition_logits.outer_iter().enumerate() {
            for (i, row) in slice.outer_iter().enumerate() {
                check_row(row, &format!("transition slice {t} row {i}"))?;
            }
        }
        Ok(Self {
            seq_len,
            mode,
            prior_logits,
            emission_logits,
            transition_logits,
        })
    }

    /// Random initialization: i.i.d. N(0, 0.1²) logits, deterministic in `seed`.
    pub fn init(n_states: usize, seq_len: usize, mode: TransitionMode, seed: u64) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::invalid("n_states must be at least 1"));
        }
        if seq_len < 2 {
            return Err(Error::invalid(format!(
                "sequence length must be at least 2, got {seq_len}"
            )));
        }
        let mut rng = tagged_rng(seed, "init");
        let normal = Normal::new(0.0, INIT_SCALE).expect("valid scale");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let slices = mode.n_slices(seq_len);
        let prior = Array1::from(draw(n_states));
        let emission = Array2::from_shape_vec((n_states, N_SYMBOLS), draw(n_states * N_SYMBOLS))
            .expect("shape");
        let transition = Array3::from_shape_vec(
            (slices, n_states, n_states),
            draw(slices * n_states * n_states),
        )
        .expect("shape");
        Self::new(seq_len, mode, prior, emission, transition)
    }

    pub fn n_states(&self) -> usize {
        self.prior_logits.len()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn mode(&self) -> TransitionMode {
        self.mode
    }

    pub fn n_slices(&self) -> usize {
        self.transition_logits.len_of(Axis(0))
    }

    /// Transition slice used between loci `step` and `step + 1` (0-based).
    pub fn slice_index(&self, step: usize) -> usize {
        match self.mode {
            TransitionMode::TimeInhomogeneous => step,
            TransitionMode::TimeHomogeneous => 0,
        }
    }

    pub fn prior_logits(&self) -> &Array1<f64> {
        &self.prior_logits
    }

    pub fn emission_logits(&self) -> &Array2<f64> {
        &self.emission_logits
    }

    pub fn transition_logits(&self) -> &Array3<f64> {
        &self.transition_logits
    }

    pub fn prior_probs(&self) -> Array1<f64> {
        softmax(self.prior_logits.view())
    }

    pub fn emission_probs(&self) -> Array2<f64> {
        row_map(&self.emission_logits, softmax)
    }

    /// Row-stochastic transition stack, `[slice, from, to]`.
    pub fn transition_probs(&self) -> Array3<f64> {
        let mut out = Array3::zeros(self.transition_logits.raw_dim());
        for (mut dst, src) in out.outer_iter_mut().zip(self.transition_logits.outer_iter()) {
            dst.assign(&row_map(&src.to_owned(), softmax));
        }
        out
    }

    /// Total number of scalar parameters (length of the flat gradient).
    pub fn n_params(&self) -> usize {
        self.prior_logits.len() + self.emission_logits.len() + self.transition_logits.len()
    }

    /// Concatenation prior, emission, transition, each in row-major order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend(self.prior_logits.iter());
        v.extend(self.emission_logits.iter());
        v.extend(self.transition_logits.iter());
        v
    }

    /// Returns a copy with `scale * delta` added to the flat parameter vector.
    pub fn updated(&self, delta: &[f64], scale: f64) -> Result<Self> {
        if delta.len() != self.n_params() {
            return Err(Error::shape(format!(
                "update of length {} for {} parameters",
                delta.len(),
                self.n_params()
            )));
        }
        let mut next = self.clone();
        let (dp, rest) = delta.split_at(self.prior_logits.len());
        let (de, dt) = rest.split_at(self.emission_logits.len());
        for (x, d) in next.prior_logits.iter_mut().zip(dp) {
            *x += scale * d;
        }
        for (x, d) in next.emission_logits.iter_mut().zip(de) {
            *x += scale * d;
        }
        for (x, d) in next.transition_logits.iter_mut().zip(dt) {
            *x += scale * d;
        }
        if next.to_flat().iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("parameter update produced NaN or +inf".into()));
        }
        Ok(next)
    }

    /// Relabels hidden states: new state `i` is old state `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        let h = self.n_states();
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..h).collect::<Vec<_>>() {
            return Err(Error::invalid("not a permutation of the hidden states"));
        }
        let prior = Array1::from_shape_fn(h, |i| self.prior_logits[perm[i]]);
        let emission =
            Array2::from_shape_fn((h, N_SYMBOLS), |(i, x)| self.emission_logits[[perm[i], x]]);
        let transition = Array3::from_shape_fn(self.transition_logits.raw_dim(), |(s, i, j)| {
            self.transition_logits[[s, perm[i], perm[j]]]
        });
        Self::new(self.seq_len, self.mode, prior, emission, transition)
    }

    /// Expands a homogeneous model into the equivalent inhomogeneous stack.
    pub fn to_inhomogeneous(&self) -> Self {
        match self.mode {
            TransitionMode::TimeInhomogeneous => self.clone(),
            TransitionMode::TimeHomogeneous => {
                let slice = self.transition_logits.index_axis(Axis(0), 0);
                let stack = Array3::from_shape_fn(
                    (self.seq_len - 1, self.n_states(), self.n_states()),
                    |(_, i, j)| slice[[i, j]],
                );
                Self {
                    mode: TransitionMode::TimeInhomogeneous,
                    transition_logits: stack,
                    ..self.clone()
                }
            }
        }
    }
}

pub(crate) fn row_map(m: &Array2<f64>, f: fn(ArrayView1<'_, f64>) -> Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(m.raw_dim());
    Zip::from(out.rows_mut())
        .and(m.rows())
        .for_each(|mut dst, src| dst.assign(&f(src)));
    out
}

/// Flat gradient of a scalar loss with respect to every logit group.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub d_prior: Array1<f64>,
    pub d_emission: Array2<f64>,
    pub d_transition: Array3<f64>,
}

impl ParamGradient {
    pub fn zeros_like(params: &TihmmParams) -> Self {
        Self {
            d_prior: Array1::zeros(params.prior_logits.raw_dim()),
            d_emission: Array2::zeros(params.emission_logits.raw_dim()),
            d_transition: Array3::zeros(params.transition_logits.raw_dim()),
        }
    }

    /// Same layout as [`TihmmParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v =
            Vec::with_capacity(self.d_prior.len() + self.d_emission.len() + self.d_transition.len());
        v.extend(self.d_prior.iter());
        v.extend(self.d_emission.iter());
        v.extend(self.d_transition.iter());
        v
    }

    pub fn is_finite(&self) -> bool {
        self.d_prior.iter().all(|v| v.is_finite())
            && self.d_emission.iter().all(|v| v.is_finite())
            && self.d_transition.iter().all(|v| v.is_finite())
    }
}
