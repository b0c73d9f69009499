//! Genotype matrices: validation, delimited-text IO, singleton filtering and
//! train/holdout splitting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::tagged_rng;

/// N individuals by L loci, each entry the minor-allele count 0, 1 or 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeMatrix {
    values: Array2<u8>,
    locus_ids: Option<Vec<String>>,
}

impl GenotypeMatrix {
    pub fn new(values: Array2<u8>, locus_ids: Option<Vec<String>>) -> Result<Self> {
        if let Some((idx, &v)) = values.indexed_iter().find(|(_, &v)| v > 2) {
            return Err(Error::InvalidGenotype {
                row: idx.0 + 1,
                column: idx.1 + 1,
                value: v.to_string(),
            });
        }
        if let Some(ids) = &locus_ids {
            if ids.len() != values.ncols() {
                return Err(Error::shape(format!(
                    "{} locus ids for {} loci",
                    ids.len(),
                    values.ncols()
                )));
            }
            let mut seen = HashSet::with_capacity(ids.len());
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::invalid(format!("duplicate locus id {dup:?}")));
            }
        }
        Ok(Self { values, locus_ids })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_loci = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * n_loci);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_loci {
                return Err(Error::Ragged {
                    row: i + 1,
                    expected: n_loci,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((rows.len(), n_loci), flat)
            .map_err(|e| Error::shape(e.to_string()))?;
        Self::new(values, None)
    }

    pub fn with_locus_ids(self, ids: Vec<String>) -> Result<Self> {
        Self::new(self.values, Some(ids))
    }

    pub fn n_individuals(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_loci(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn locus_ids(&self) -> Option<&[String]> {
        self.locus_ids.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, u8> {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, u8> {
        self.values.column(j)
    }

    /// Rows as owned contiguous sequences, the shape the HMM code consumes.
    pub fn sequences(&self) -> Vec<Vec<u8>> {
        self.values.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            locus_ids: self.locus_ids.clone(),
        }
    }

    pub fn select_loci(&self, loci: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), loci),
            locus_ids: self
                .locus_ids
                .as_ref()
                .map(|ids| loci.iter().map(|&j| ids[j].clone()).collect()),
        }
    }

    /// Canonical TSV: optional header of locus ids, one row per individual.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if let Some(ids) = &self.locus_ids {
            writeln!(w, "{}", ids.join("\t"))?;
        }
        let mut line = String::with_capacity(2 * self.n_loci());
        for row in self.values.outer_iter() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push('\t');
                }
                line.push(char::from(b'0' + v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_tsv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextFormat {
    Tsv,
    Csv,
}

impl TextFormat {
    fn delimiter(self) -> char {
        match self {
            TextFormat::Tsv => '\t',
            TextFormat::Csv => ',',
        }
    }

    /// Guess from the file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TextFormat::Csv,
            _ => TextFormat::Tsv,
        }
    }
}

/// Parses a delimited genotype file. The first line is treated as a header
/// of locus ids when any of its fields is not an integer.
pub fn read_matrix<R: BufRead>(reader: R, format: TextFormat) -> Result<GenotypeMatrix> {
    let delim = format.delimiter();
    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut flat: Vec<u8> = Vec::new();
    let mut n_rows = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let row = line_no + 1;
        let line = line.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();

        if header.is_none() && width.is_none() && fields.iter().any(|f| f.parse::<i64>().is_err())
        {
            header = Some(fields.iter().map(|s| s.to_string()).collect());
            width = Some(fields.len());
            continue;
        }

        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Ragged {
                row,
                expected,
                found: fields.len(),
            });
        }
        for (col, field) in fields.iter().enumerate() {
            let value = match *field {
                "0" => 0,
                "1" => 1,
                "2" => 2,
                other if other.parse::<i64>().is_ok() => {
                    return Err(Error::InvalidGenotype {
                        row,
                        column: col + 1,
                        value: other.to_string(),
                    })
                }
                other => {
                    return Err(Error::Parse {
                        row,
                        column: col + 1,
                        message: format!("{other:?} is not an integer"),
                    })
                }
            };
            flat.push(value);
        }
        n_rows += 1;
    }

    if n_rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let values = Array2::from_shape_vec((n_rows, width.unwrap_or(0)), flat)
        .map_err(|e| Error::shape(e.to_string()))?;
    GenotypeMatrix::new(values, header)
}

pub fn load_matrix(path: impl AsRef<Path>, format: TextFormat) -> Result<GenotypeMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(file), format)
}

/// Number of individuals carrying at least one minor allele at each locus.
pub(crate) fn carrier_counts(m: &GenotypeMatrix) -> Vec<usize> {
    m.values
        .columns()
        .into_iter()
        .map(|c| c.iter().filter(|&&g| g != 0).count())
        .collect()
}

/// Drops loci where exactly one individual has a nonzero genotype.
pub fn remove_singletons(m: &GenotypeMatrix) -> GenotypeMatrix {
    let keep: Vec<usize> = carrier_counts(m)
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c != 1)
        .map(|(j, _)| j)
        .collect();
    m.select_loci(&keep)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: GenotypeMatrix,
    pub holdout: GenotypeMatrix,
    pub train_rows: Vec<usize>,
    pub holdout_rows: Vec<usize>,
    pub seed: u64,
}

/// Shuffles rows under `seed` and cuts them into `folds` parts of
/// `N / folds` rows; `folds - 1` parts form the training set and the last
/// part, together with the division remainder, the holdout set.
pub fn split(m: &GenotypeMatrix, folds: usize, seed: u64) -> Result<DatasetSplit> {
    let n = m.n_individuals();
    if folds < 2 {
        return Err(Error::invalid(format!("folds must be at least 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::invalid(format!(
            "folds ({folds}) exceeds number of individuals ({n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut tagged_rng(seed, "split"));
    let n_train = (n / folds) * (folds - 1);
    let train_rows = order[..n_train].to_vec();
    let holdout_rows = order[n_train..].to_vec();
    Ok(DatasetSplit {
        train: m.select_rows(&train_rows),
        holdout: m.select_rows(&holdout_rows),
        train_rows,
        holdout_rows,
        seed,
    })
}
