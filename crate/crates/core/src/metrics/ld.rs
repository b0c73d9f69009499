use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;

pub const DEFAULT_BTSS_LAMBDA: f64 = 2.0;

/// Pairwise squared correlations between genotype columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LdMatrix {
    r2: Array2<f64>,
}

impl LdMatrix {
    /// Validates symmetry, the unit diagonal and the [0, 1] range.
    pub fn new(r2: Array2<f64>) -> Result<Self> {
        let (n, m) = r2.dim();
        if n != m {
            return Err(Error::shape(format!("LD matrix must be square, got {n}x{m}")));
        }
        for i in 0..n {
            if r2[[i, i]] != 1.0 {
                return Err(Error::invalid(format!("LD diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = r2[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("r2[{i},{j}] = {v} outside [0, 1]")));
                }
                if (v - r2[[j, i]]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("LD matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { r2 })
    }

    pub fn r2(&self) -> &Array2<f64> {
        &self.r2
    }

    pub fn n_loci(&self) -> usize {
        self.r2.nrows()
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.r2.outer_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join("\t"))?;
        }
        Ok(())
    }
}

pub fn ld_r2(m: &GenotypeMatrix) -> Result<LdMatrix> {
    let n = m.n_individuals();
    if n < 2 {
        return Err(Error::invalid(format!(
            "LD needs at least 2 individuals, got {n}"
        )));
    }
    let l = m.n_loci();
    let centered: Vec<Vec<f64>> = m
        .values()
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.iter().map(|&g| f64::from(g)).sum::<f64>() / n as f64;
            c.iter().map(|&g| f64::from(g) - mean).collect()
        })
        .collect();
    let var: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let degenerate = var.iter().filter(|&&v| v == 0.0).count();
    if degenerate > 0 {
        log::debug!("{degenerate} monomorphic loci get r2 = 0 against all others");
    }
    let rows: Vec<Vec<f64>> = (0..l)
        .into_par_iter()
        .map(|i| {
            (0..l)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if var[i] == 0.0 || var[j] == 0.0 {
                        0.0
                    } else {
                        let (a, b) = if i < j { (i, j) } else { (j, i) };
                        let cov: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
                        (cov * cov / (var[a] * var[b])).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let r2 = Array2::from_shape_vec((l, l), rows.into_iter().flatten().collect())
        .map_err(|e| Error::shape(e.to_string()))?;
    Ok(LdMatrix { r2 })
}

/// Strongest off-diagonal partner of each locus and its r². Ties go to the
/// smallest index.
pub fn tag_snps(ld: &LdMatrix) -> Result<Vec<(usize, f64)>> {
    let l = ld.n_loci();
    if l < 2 {
        return Err(Error::invalid("tag SNPs need at least 2 loci"));
    }
    Ok(ld
        .r2
        .outer_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (j, &v) in row.iter().enumerate() {
                if j != i && v > best.1 {
                    best = (j, v);
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtssResult {
    pub mean_btss: f64,
    pub per_snp: Vec<f64>,
}

/// `(index, r2)` of the best tag for each locus.
type Tags = Vec<(usize, f64)>;

fn paired_tags(real: &LdMatrix, synth: &LdMatrix) -> Result<(Tags, Tags)> {
    if real.n_loci() != synth.n_loci() {
        return Err(Error::shape(format!(
            "LD matrices over {} and {} loci",
            real.n_loci(),
            synth.n_loci()
        )));
    }
    Ok((tag_snps(real)?, tag_snps(synth)?))
}

pub fn btss(real: &LdMatrix, synth: &LdMatrix, lambda: f64) -> Result<BtssResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let (a, b) = paired_tags(real, synth)?;
    let per_snp: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(&(j, r), &(jh, rh))| (-(j.abs_diff(jh) as f64) / lambda).exp() * (1.0 - (r - rh).abs()))
        .collect();
    let mean_btss = per_snp.iter().sum::<f64>() / per_snp.len() as f64;
    Ok(BtssResult { mean_btss, per_snp })
}

pub fn exact_match_rate(real: &LdMatrix, synth: &LdMatrix) -> Result<f64> {
    let (a, b) = paired_tags(real, synth)?;
    let hits = a.iter().zip(&b).filter(|(x, y)| x.0 == y.0).count();
    Ok(hits as f64 / a.len() as f64)
}
