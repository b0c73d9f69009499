//! Python bindings. Genotype matrices cross the boundary as lists of rows.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use snpsynth_core::dp::{self, TrainConfig};
use snpsynth_core::grr::{self, GrrConfig};
use snpsynth_core::hmm::{self, ModelMetadata};
use snpsynth_core::{gwas, metrics, GenotypeMatrix as CoreMatrix, TihmmParams, TransitionMode};

fn err(e: snpsynth_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<TransitionMode> {
    mode.parse().map_err(err)
}

#[pyclass(module = "snpsynth", from_py_object)]
#[derive(Clone)]
struct GenotypeMatrix {
    inner: CoreMatrix,
}

#[pymethods]
impl GenotypeMatrix {
    #[new]
    fn new(rows: Vec<Vec<u8>>) -> PyResult<Self> {
        Ok(Self { inner: CoreMatrix::from_rows(&rows).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let fmt = snpsynth_core::TextFormat::from_path(path.as_ref());
        Ok(Self { inner: snpsynth_core::load_matrix(path, fmt).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (path, max_loci=500, skip_singletons=true))]
    fn from_vcf(path: &str, max_loci: usize, skip_singletons: bool) -> PyResult<Self> {
        let opts = snpsynth_core::VcfOptions { max_loci, skip_singletons };
        Ok(Self { inner: snpsynth_core::load_vcf(path, opts).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_tsv(path).map_err(err)
    }

    fn rows(&self) -> Vec<Vec<u8>> {
        self.inner.sequences()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_individuals(), self.inner.n_loci())
    }

    #[getter]
    fn locus_ids(&self) -> Option<Vec<String>> {
        self.inner.locus_ids().map(<[String]>::to_vec)
    }

    /// Returns (train, holdout).
    fn split(&self, folds: usize, seed: u64) -> PyResult<(Self, Self)> {
        let s = snpsynth_core::split(&self.inner, folds, seed).map_err(err)?;
        Ok((Self { inner: s.train }, Self { inner: s.holdout }))
    }

    fn remove_singletons(&self) -> Self {
        Self { inner: snpsynth_core::remove_singletons(&self.inner) }
    }

    fn __repr__(&self) -> String {
        let (n, l) = self.shape();
        format!("GenotypeMatrix({n} individuals, {l} loci)")
    }
}

#[pyclass(module = "snpsynth", from_py_object)]
#[derive(Clone)]
struct Model {
    params: TihmmParams,
    metadata: ModelMetadata,
}

#[pymethods]
impl Model {
    /// Random initialization.
    #[new]
    #[pyo3(signature = (n_states, seq_len, mode="tih", seed=0))]
    fn new(n_states: usize, seq_len: usize, mode: &str, seed: u64) -> PyResult<Self> {
        let params = TihmmParams::init(n_states, seq_len, parse_mode(mode)?, seed).map_err(err)?;
        Ok(Self { params, metadata: ModelMetadata::default() })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (params, metadata) = hmm::load_model(path).map_err(err)?;
        Ok(Self { params, metadata })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        hmm::save_model(path, &self.params, self.metadata.clone()).map_err(err)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.params.n_states()
    }

    #[getter]
    fn seq_len(&self) -> usize {
        self.params.seq_len()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.params.mode().as_str()
    }

    /// Accounted epsilon if the model was trained privately.
    #[getter]
    fn epsilon(&self) -> Option<f64> {
        self.metadata.epsilon
    }

    fn log_likelihood(&self, x: Vec<u8>) -> PyResult<f64> {
        Ok(hmm::log_likelihood(&self.params, &x).map_err(err)?.log_likelihood)
    }

    /// Returns (nll, flat gradient) in prior, emission, transition order.
    fn nll_gradient(&self, x: Vec<u8>) -> PyResult<(f64, Vec<f64>)> {
        let (nll, g) = hmm::nll_gradient(&self.params, &x).map_err(err)?;
        Ok((nll, g.to_flat()))
    }

    fn sample(&self, n: usize, seed: u64) -> GenotypeMatrix {
        GenotypeMatrix { inner: hmm::sample(&self.params, n, seed) }
    }

    fn __repr__(&self) -> String {
        format!("Model(H={}, L={}, mode={})", self.n_states(), self.seq_len(), self.mode())
    }
}

/// Trains a model. Give `epsilon` to calibrate noise, or `sigma` directly;
/// neither trains without privacy. Returns (model, per-epoch train NLL).
#[pyfunction]
#[pyo3(signature = (data, n_states=10, mode="tih", epsilon=None, sigma=None, delta=1e-4,
                    batch_size=8, epochs=20, lr=0.015, clip=1.0, seed=0, threads=1))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &GenotypeMatrix,
    n_states: usize,
    mode: &str,
    epsilon: Option<f64>,
    sigma: Option<f64>,
    delta: f64,
    batch_size: usize,
    epochs: usize,
    lr: f64,
    clip: f64,
    seed: u64,
    threads: usize,
) -> PyResult<(Model, Vec<f64>)> {
    let mode = parse_mode(mode)?;
    let mut cfg = TrainConfig { batch_size, epochs, learning_rate: lr, clip_norm: clip, delta, seed, threads, ..Default::default() };
    match (epsilon, sigma) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give either epsilon or sigma, not both")),
        (Some(eps), None) => cfg = cfg.with_target_epsilon(eps, delta, data.inner.n_individuals()).map_err(err)?,
        (None, Some(s)) => {
            cfg.dp_enabled = true;
            cfg.noise_multiplier = s;
        }
        (None, None) => {}
    }
    let m = &data.inner;
    let out = py.detach(|| dp::train(m, None, n_states, mode, &cfg)).map_err(err)?;
    let metadata = out.metadata(&cfg);
    Ok((Model { params: out.params, metadata }, out.report.train_nll))
}

#[pyfunction]
fn account(sigma: f64, q: f64, steps: u64, delta: f64) -> PyResult<f64> {
    dp::account(sigma, q, steps, delta).map_err(err)
}

#[pyfunction]
fn calibrate_sigma(epsilon: f64, delta: f64, q: f64, steps: u64) -> PyResult<f64> {
    dp::calibrate_sigma(epsilon, delta, q, steps).map_err(err)
}

#[pyfunction]
fn minor_allele_freq(m: &GenotypeMatrix) -> PyResult<Vec<f64>> {
    Ok(metrics::minor_allele_freq(&m.inner).map_err(err)?.as_slice().to_vec())
}

/// Euclidean, Manhattan and Nei distances between the allele frequencies of
/// two matrices.
#[pyfunction]
fn frequency_distances(a: &GenotypeMatrix, b: &GenotypeMatrix) -> PyResult<(f64, f64, f64)> {
    let fa = metrics::minor_allele_freq(&a.inner).map_err(err)?;
    let fb = metrics::minor_allele_freq(&b.inner).map_err(err)?;
    Ok((
        metrics::euclidean_distance(&fa, &fb).map_err(err)?,
        metrics::manhattan_distance(&fa, &fb).map_err(err)?,
        metrics::neis_distance(&fa, &fb).map_err(err)?,
    ))
}

/// Per-record distance of each synthetic row to its closest real row.
#[pyfunction]
fn dcr(synth: &GenotypeMatrix, real: &GenotypeMatrix) -> PyResult<Vec<f64>> {
    let h = metrics::dcr(&synth.inner, &real.inner, metrics::DEFAULT_DCR_BINS).map_err(err)?;
    Ok(h.per_record_min_distance)
}

#[pyfunction]
fn ld_r2(m: &GenotypeMatrix) -> PyResult<Vec<Vec<f64>>> {
    let ld = metrics::ld_r2(&m.inner).map_err(err)?;
    Ok(ld.r2().outer_iter().map(|r| r.to_vec()).collect())
}

/// Returns (mean BTSS, exact match rate).
#[pyfunction]
#[pyo3(signature = (real, synth, lam=metrics::DEFAULT_BTSS_LAMBDA))]
fn ld_scores(real: &GenotypeMatrix, synth: &GenotypeMatrix, lam: f64) -> PyResult<(f64, f64)> {
    let la = metrics::ld_r2(&real.inner).map_err(err)?;
    let lb = metrics::ld_r2(&synth.inner).map_err(err)?;
    Ok((
        metrics::btss(&la, &lb, lam).map_err(err)?.mean_btss,
        metrics::exact_match_rate(&la, &lb).map_err(err)?,
    ))
}

/// Returns (perturbed matrix, debiased minor-allele frequencies).
#[pyfunction]
#[pyo3(signature = (m, epsilon, seed=0, split=true))]
fn grr_release(m: &GenotypeMatrix, epsilon: f64, seed: u64, split: bool) -> PyResult<(GenotypeMatrix, Vec<f64>)> {
    let l = m.inner.n_loci();
    let cfg = if split { GrrConfig::new(epsilon, l) } else { GrrConfig::without_split(epsilon, l) }.map_err(err)?;
    let noisy = grr::grr_perturb(&m.inner, &cfg, seed).map_err(err)?;
    let freq = grr::grr_debias_frequencies(&noisy, &cfg).map_err(err)?;
    Ok((GenotypeMatrix { inner: noisy }, freq.as_slice().to_vec()))
}

/// Returns (chi2, p-values, ranking).
#[pyfunction]
fn allelic_chi2(case: &GenotypeMatrix, control: &GenotypeMatrix) -> PyResult<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let r = gwas::allelic_chi2(&case.inner, &control.inner).map_err(err)?;
    Ok((r.chi2, r.p_values, r.ranking))
}

#[pyfunction]
fn top_k_accuracy(real_ranking: Vec<usize>, synth_ranking: Vec<usize>, k: usize) -> PyResult<f64> {
    gwas::top_k_accuracy(&real_ranking, &synth_ranking, k).map_err(err)
}

/// Returns (cases, controls, anchor locus).
#[pyfunction]
fn simulate_phenotype(m: &GenotypeMatrix, seed: u64) -> PyResult<(GenotypeMatrix, GenotypeMatrix, usize)> {
    let labels = gwas::simulate_phenotype(&m.inner, seed).map_err(err)?;
    let (a, b) = labels.partition(&m.inner).map_err(err)?;
    Ok((GenotypeMatrix { inner: a }, GenotypeMatrix { inner: b }, labels.anchor_locus))
}

#[pymodule]
fn snpsynth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", snpsynth_core::VERSION)?;
    m.add_class::<GenotypeMatrix>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(account, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(minor_allele_freq, m)?)?;
    m.add_function(wrap_pyfunction!(frequency_distances, m)?)?;
    m.add_function(wrap_pyfunction!(dcr, m)?)?;
    m.add_function(wrap_pyfunction!(ld_r2, m)?)?;
    m.add_function(wrap_pyfunction!(ld_scores, m)?)?;
    m.add_function(wrap_pyfunction!(grr_release, m)?)?;
    m.add_function(wrap_pyfunction!(allelic_chi2, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_phenotype, m)?)?;
    Ok(())
}
