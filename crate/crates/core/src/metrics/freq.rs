use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;

/// Per-locus minor-allele frequencies, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyVector(Vec<f64>);

impl FrequencyVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("frequency {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Frequencies of the other allele, `1 - f`.
    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|f| 1.0 - f).collect())
    }
}

/// `(n_het + 2 n_hom_minor) / 2N` per locus.
pub fn minor_allele_freq(m: &GenotypeMatrix) -> Result<FrequencyVector> {
    let n = m.n_individuals();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let denom = 2.0 * n as f64;
    let values = m
        .values()
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|&g| u64::from(g)).sum::<u64>() as f64 / denom)
        .collect();
    Ok(FrequencyVector(values))
}

fn check_pair(a: &FrequencyVector, b: &FrequencyVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "frequency vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("frequency vectors are empty"));
    }
    Ok(())
}

/// `sqrt(mean((f_b - f_a)^2))`.
pub fn euclidean_distance(a: &FrequencyVector, b: &FrequencyVector) -> Result<f64> {
    check_pair(a, b)?;
    let ss: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (y - x).powi(2)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// `mean(|f_b - f_a|)`.
pub fn manhattan_distance(a: &FrequencyVector, b: &FrequencyVector) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (y - x).abs()).sum();
    Ok(s / a.len() as f64)
}

/// Nei's standard genetic distance over all loci; `+inf` when the two
/// populations share no allele anywhere.
pub fn neis_distance(a: &FrequencyVector, b: &FrequencyVector) -> Result<f64> {
    check_pair(a, b)?;
    let (mut pa, mut pb, mut pab) = (0.0, 0.0, 0.0);
    for (&fa, &fb) in a.0.iter().zip(&b.0) {
        let (ga, gb) = (1.0 - fa, 1.0 - fb);
        pa += fa * fa + ga * ga;
        pb += fb * fb + gb * gb;
        pab += fa * fb + ga * gb;
    }
    if pab <= 0.0 {
        return Ok(f64::INFINITY);
    }
    // rounding can push the identity a hair above 1
    Ok((-(pab / (pa * pb).sqrt()).ln()).max(0.0))
}
