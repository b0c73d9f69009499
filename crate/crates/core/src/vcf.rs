//! Minimal text-VCF reader: enough to pull biallelic SNP genotypes out of a
//! 1000 Genomes style file and turn them into alternate-allele counts.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcfOptions {
    pub max_loci: usize,
    /// Skip records with exactly one carrier while reading, so that
    /// `max_loci` counts surviving loci.
    pub skip_singletons: bool,
}

/// Takes the first `max_loci` biallelic SNP records in file order.
pub fn load_vcf_subset(path: impl AsRef<Path>, max_loci: usize) -> Result<GenotypeMatrix> {
    load_vcf(
        path,
        VcfOptions {
            max_loci,
            skip_singletons: false,
        },
    )
}

pub fn load_vcf(path: impl AsRef<Path>, opts: VcfOptions) -> Result<GenotypeMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_vcf(BufReader::new(file), opts)
}

enum Gt {
    Count(u8),
    Missing,
}

fn parse_gt(gt: &str) -> Option<Gt> {
    let mut count = 0u8;
    let mut n_alleles = 0;
    for allele in gt.split(['|', '/']) {
        n_alleles += 1;
        match allele {
            "0" => {}
            "1" => count += 1,
            "." => return Some(Gt::Missing),
            _ => return None,
        }
    }
    match n_alleles {
        2 => Some(Gt::Count(count)),
        // hemizygous calls (e.g. male chrX) are read as homozygous
        1 => Some(Gt::Count(count * 2)),
        _ => None,
    }
}

pub fn read_vcf<R: BufRead>(reader: R, opts: VcfOptions) -> Result<GenotypeMatrix> {
    if opts.max_loci == 0 {
        return Err(Error::invalid("max_loci must be positive"));
    }
    let mut n_samples: Option<usize> = None;
    let mut loci: Vec<Vec<u8>> = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    let mut id_uses: HashMap<String, usize> = HashMap::new();
    let mut skipped_multiallelic = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::Vcf {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with("##") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if line.starts_with('#') {
            n_samples = Some(fields.len().saturating_sub(9));
            continue;
        }
        let vcf_err = |message: String| Error::Vcf {
            line: line_no,
            message,
        };
        if fields.len() < 10 {
            return Err(vcf_err(format!(
                "expected at least 10 columns, found {}",
                fields.len()
            )));
        }
        let expected_samples = *n_samples.get_or_insert(fields.len() - 9);
        if fields.len() - 9 != expected_samples {
            return Err(vcf_err(format!(
                "expected {expected_samples} samples, found {}",
                fields.len() - 9
            )));
        }

        let (chrom, pos, id, reference, alt) = (fields[0], fields[1], fields[2], fields[3], fields[4]);
        if alt.contains(',') {
            skipped_multiallelic += 1;
            log::warn!("line {line_no}: skipping multiallelic record {chrom}:{pos}");
            continue;
        }
        if reference.len() != 1 || alt.len() != 1 || alt == "." {
            log::debug!("line {line_no}: skipping non-SNP record {chrom}:{pos}");
            continue;
        }
        let gt_index = fields[8]
            .split(':')
            .position(|k| k == "GT")
            .ok_or_else(|| vcf_err("missing GT field".into()))?;

        let mut genotypes = Vec::with_capacity(expected_samples);
        let mut missing = false;
        for (s, sample) in fields[9..].iter().enumerate() {
            let gt = sample.split(':').nth(gt_index).ok_or_else(|| {
                vcf_err(format!("sample {} has no GT value", s + 1))
            })?;
            match parse_gt(gt) {
                Some(Gt::Count(c)) => genotypes.push(c),
                Some(Gt::Missing) => {
                    missing = true;
                    break;
                }
                None => return Err(vcf_err(format!("unsupported GT {gt:?}"))),
            }
        }
        if missing {
            log::debug!("line {line_no}: dropping {chrom}:{pos} with missing genotypes");
            continue;
        }
        if opts.skip_singletons && genotypes.iter().filter(|&&g| g != 0).count() == 1 {
            continue;
        }

        let base = if id == "." {
            format!("{chrom}:{pos}")
        } else {
            id.to_string()
        };
        let uses = id_uses.entry(base.clone()).or_insert(0);
        *uses += 1;
        ids.push(if *uses == 1 {
            base
        } else {
            format!("{base}#{uses}")
        });
        loci.push(genotypes);
        if loci.len() == opts.max_loci {
            break;
        }
    }

    if skipped_multiallelic > 0 {
        log::warn!("skipped {skipped_multiallelic} multiallelic records");
    }
    if loci.is_empty() {
        return Err(Error::Vcf {
            line: 0,
            message: "no qualifying biallelic SNP records".into(),
        });
    }
    let n = n_samples.unwrap_or(0);
    let values = Array2::from_shape_fn((n, loci.len()), |(i, j)| loci[j][i]);
    GenotypeMatrix::new(values, Some(ids))
}
