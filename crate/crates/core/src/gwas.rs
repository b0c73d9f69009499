//! Case/control association testing on real or synthetic genotypes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::hmm::{sample, TihmmParams};
use crate::metrics::minor_allele_freq;
use crate::rng::tagged_rng;

pub const DEFAULT_GWAS_SAMPLES: usize = 2000;
pub const DEFAULT_TOP_K: [usize; 4] = [1, 3, 5, 10];
const MAF_WINDOW: (f64, f64) = (0.1, 0.9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseControlLabels {
    /// `true` marks a case.
    pub labels: Vec<bool>,
    pub anchor_locus: usize,
    pub seed: u64,
}

impl CaseControlLabels {
    pub fn n_cases(&self) -> usize {
        self.labels.iter().filter(|&&c| c).count()
    }

    pub fn n_controls(&self) -> usize {
        self.labels.len() - self.n_cases()
    }

    /// Splits `m` into (cases, controls).
    pub fn partition(&self, m: &GenotypeMatrix) -> Result<(GenotypeMatrix, GenotypeMatrix)> {
        if m.n_individuals() != self.labels.len() {
            return Err(Error::shape(format!(
                "{} labels for {} individuals",
                self.labels.len(),
                m.n_individuals()
            )));
        }
        let (cases, controls): (Vec<usize>, Vec<usize>) =
            (0..self.labels.len()).partition(|&i| self.labels[i]);
        Ok((m.select_rows(&cases), m.select_rows(&controls)))
    }
}

/// Picks a random anchor locus with MAF strictly inside (0.1, 0.9), makes
/// its genotype-2 carriers cases, then moves random members of the larger
/// group into the smaller until sizes differ by at most one.
pub fn simulate_phenotype(m: &GenotypeMatrix, seed: u64) -> Result<CaseControlLabels> {
    let maf = minor_allele_freq(m)?;
    let candidates: Vec<usize> = maf
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > MAF_WINDOW.0 && f < MAF_WINDOW.1)
        .map(|(j, _)| j)
        .collect();
    if candidates.is_empty() {
        return Err(Error::invalid("no locus with minor-allele frequency in (0.1, 0.9)"));
    }
    let mut rng = tagged_rng(seed, "phenotype");
    let anchor = candidates[rng.random_range(0..candidates.len())];
    let mut labels: Vec<bool> = m.column(anchor).iter().map(|&g| g == 2).collect();

    let (mut cases, mut controls): (Vec<usize>, Vec<usize>) =
        (0..labels.len()).partition(|&i| labels[i]);
    let (larger, target) = if cases.len() > controls.len() {
        (&mut cases, true)
    } else {
        (&mut controls, false)
    };
    let excess = larger.len().abs_diff(labels.len() - larger.len()) / 2;
    larger.shuffle(&mut rng);
    for &i in larger.iter().take(excess) {
        labels[i] = !target;
    }
    Ok(CaseControlLabels { labels, anchor_locus: anchor, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub chi2: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Locus indices by decreasing chi2, ties to the smaller index.
    pub ranking: Vec<usize>,
}

impl AssociationResult {
    pub fn from_chi2(chi2: Vec<f64>) -> Self {
        let p_values = chi2.iter().map(|&c| chi2_sf_1df(c)).collect();
        let ranking = rank_descending(&chi2);
        Self { chi2, p_values, ranking }
    }

    pub fn n_loci(&self) -> usize {
        self.chi2.len()
    }

    /// Rows in locus order with columns locus_id, chi2, p_value, rank (1-based).
    pub fn write_tsv<W: Write>(&self, mut w: W, locus_ids: Option<&[String]>) -> std::io::Result<()> {
        let mut rank = vec![0usize; self.n_loci()];
        for (r, &j) in self.ranking.iter().enumerate() {
            rank[j] = r + 1;
        }
        writeln!(w, "locus_id\tchi2\tp_value\trank")?;
        for j in 0..self.n_loci() {
            let id = locus_ids.map_or_else(|| j.to_string(), |ids| ids[j].clone());
            writeln!(w, "{id}\t{}\t{}\t{}", self.chi2[j], self.p_values[j], rank[j])?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>, locus_ids: Option<&[String]>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_tsv(&mut buf, locus_ids).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_sf_1df(chi2: f64) -> f64 {
    libm::erfc((chi2 / 2.0).sqrt())
}

fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn genotype_counts(m: &GenotypeMatrix, j: usize) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &g in m.column(j) {
        c[g as usize] += 1.0;
    }
    c
}

/// Allelic (1 df) association test per locus.
pub fn allelic_chi2(case: &GenotypeMatrix, control: &GenotypeMatrix) -> Result<AssociationResult> {
    if case.n_individuals() == 0 || control.n_individuals() == 0 {
        return Err(Error::EmptyDataset);
    }
    if case.n_loci() != control.n_loci() {
        return Err(Error::shape(format!(
            "case data has {} loci, control data {}",
            case.n_loci(),
            control.n_loci()
        )));
    }
    let (r_tot, s_tot) = (case.n_individuals() as f64, control.n_individuals() as f64);
    let n_tot = r_tot + s_tot;
    let chi2 = (0..case.n_loci())
        .into_par_iter()
        .map(|j| {
            let r = genotype_counts(case, j);
            let s = genotype_counts(control, j);
            let n = [r[0] + s[0], r[1] + s[1], r[2] + s[2]];
            let denom = r_tot * s_tot * (2.0 * n[0] + n[1]) * (n[1] + 2.0 * n[2]);
            if denom == 0.0 {
                return 0.0;
            }
            let diff = (2.0 * r[0] + r[1]) * s_tot - (2.0 * s[0] + s[1]) * r_tot;
            2.0 * n_tot * diff * diff / denom
        })
        .collect();
    Ok(AssociationResult::from_chi2(chi2))
}

/// Overlap of the two top-k sets, divided by k.
pub fn top_k_accuracy(real_ranking: &[usize], synth_ranking: &[usize], k: usize) -> Result<f64> {
    if k == 0 || k > real_ranking.len() || k > synth_ranking.len() {
        return Err(Error::invalid(format!(
            "k = {k} out of range for rankings of length {} and {}",
            real_ranking.len(),
            synth_ranking.len()
        )));
    }
    let top = &real_ranking[..k];
    let shared = synth_ranking[..k].iter().filter(|j| top.contains(j)).count();
    Ok(shared as f64 / k as f64)
}

/// Reads a ranking TSV and returns locus indices ordered by rank. Locus
/// indices are row positions in the file.
pub fn read_ranking<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut ranks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { row: i + 1, column: 0, message: e.to_string() })?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let field = line.split('\t').nth(3).ok_or_else(|| Error::Parse {
            row: i + 1,
            column: 4,
            message: "missing rank column".into(),
        })?;
        let rank: usize = field.trim().parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: 4,
            message: format!("invalid rank {field:?}"),
        })?;
        ranks.push(rank);
    }
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by_key(|&j| ranks[j]);
    if order.iter().enumerate().any(|(r, &j)| ranks[j] != r + 1) {
        return Err(Error::invalid("ranks must be a permutation of 1..=L"));
    }
    Ok(order)
}

pub fn load_ranking(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ranking(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwasReport {
    pub n_samples: usize,
    /// `(k, Acc(k))` pairs in the order requested.
    pub accuracy: Vec<(usize, f64)>,
    pub synthetic: AssociationResult,
}

/// Samples synthetic cases and controls from the two models, tests them and
/// scores the resulting ranking against `real_ranking`.
pub fn gwas_pipeline(
    case_model: &TihmmParams,
    control_model: &TihmmParams,
    real_ranking: &[usize],
    n_samples: usize,
    k_list: &[usize],
    case_seed: u64,
    control_seed: u64,
) -> Result<GwasReport> {
    if case_model.seq_len() != control_model.seq_len() {
        return Err(Error::shape(format!(
            "case model has {} loci, control model {}",
            case_model.seq_len(),
            control_model.seq_len()
        )));
    }
    if real_ranking.len() != case_model.seq_len() {
        return Err(Error::shape(format!(
            "real ranking covers {} loci, models {}",
            real_ranking.len(),
            case_model.seq_len()
        )));
    }
    let cases = sample(case_model, n_samples, case_seed);
    let controls = sample(control_model, n_samples, control_seed);
    let synthetic = allelic_chi2(&cases, &controls)?;
    let accuracy = k_list
        .iter()
        .map(|&k| Ok((k, top_k_accuracy(real_ranking, &synthetic.ranking, k)?)))
        .collect::<Result<_>>()?;
    Ok(GwasReport { n_samples, accuracy, synthetic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::TransitionMode;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn col(v: &[u8]) -> GenotypeMatrix {
        GenotypeMatrix::from_rows(&v.iter().map(|&g| vec![g]).collect::<Vec<_>>()).unwrap()
    }

    /// Pearson chi-square on the 2x2 allele table, no continuity correction.
    fn allele_table_chi2(case: &[u8], control: &[u8]) -> f64 {
        let alt = |g: &[u8]| g.iter().map(|&x| f64::from(x)).sum::<f64>();
        let t = [
            [2.0 * case.len() as f64 - alt(case), alt(case)],
            [2.0 * control.len() as f64 - alt(control), alt(control)],
        ];
        let total: f64 = t.iter().flatten().sum();
        let mut chi = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = (t[i][0] + t[i][1]) * (t[0][j] + t[1][j]) / total;
                chi += (t[i][j] - e).powi(2) / e;
            }
        }
        chi
    }

    #[test]
    fn hand_example() {
        let r = allelic_chi2(&col(&[2, 2]), &col(&[0, 0])).unwrap();
        assert_eq!(r.chi2[0], 8.0);
        assert!((allele_table_chi2(&[2, 2], &[0, 0]) - 8.0).abs() < 1e-12);
        let null = allelic_chi2(&col(&[0, 1, 2]), &col(&[2, 1, 0])).unwrap();
        assert_eq!(null.chi2[0], 0.0);
        assert_eq!(null.p_values[0], 1.0);
        let mono = allelic_chi2(&col(&[1, 1]), &col(&[1, 1, 1])).unwrap();
        assert_eq!((mono.chi2[0], mono.p_values[0]), (0.0, 1.0));
        let flat = allelic_chi2(&col(&[0, 0]), &col(&[0, 0, 0])).unwrap();
        assert_eq!((flat.chi2[0], flat.p_values[0]), (0.0, 1.0));
    }

    #[test]
    fn p_values_match_chi_square_distribution() {
        let dist = ChiSquared::new(1.0).unwrap();
        for i in 0..400 {
            let x = i as f64 * 0.1;
            assert!((chi2_sf_1df(x) - dist.sf(x)).abs() < 1e-12, "x = {x}");
        }
        assert_eq!(chi2_sf_1df(0.0), 1.0);
    }

    #[test]
    fn errors() {
        let empty = GenotypeMatrix::from_rows(&[]).unwrap();
        assert!(allelic_chi2(&empty, &col(&[0])).is_err());
        let wide = GenotypeMatrix::from_rows(&[vec![0, 1]]).unwrap();
        assert!(allelic_chi2(&wide, &col(&[0])).is_err());
    }

    #[test]
    fn ranking_ties_and_accuracy() {
        let r = AssociationResult::from_chi2(vec![1.0, 3.0, 1.0, 3.0, 0.0]);
        assert_eq!(r.ranking, vec![1, 3, 0, 2, 4]);
        let a = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
        assert_eq!(top_k_accuracy(&a, &a, 5).unwrap(), 1.0);
        let b = [5, 6, 7, 8, 9, 0, 1, 2, 3, 4];
        assert_eq!(top_k_accuracy(&a, &b, 5).unwrap(), 0.0);
        let c = [4, 9, 8, 7, 6, 0, 1, 2, 3, 5];
        assert!((top_k_accuracy(&a, &c, 5).unwrap() - 0.2).abs() < 1e-15);
        assert!(top_k_accuracy(&a, &c, 0).is_err());
        assert!(top_k_accuracy(&a, &c, 11).is_err());
    }

    #[test]
    fn random_rankings_have_chance_accuracy() {
        let mut rng = tagged_rng(3, "test");
        let real: Vec<usize> = (0..500).collect();
        let reps = 20_000;
        let mut total = 0.0;
        for _ in 0..reps {
            let mut s = real.clone();
            s.shuffle(&mut rng);
            total += top_k_accuracy(&real, &s, 5).unwrap();
        }
        // Acc(5) = X/5 with X hypergeometric(500, 5, 5): var(X) ~= 0.0496
        let sd = (0.0496f64 / 25.0 / reps as f64).sqrt();
        assert!((total / reps as f64 - 0.01).abs() < 4.0 * sd);
    }

    #[test]
    fn phenotype_examples() {
        let m = GenotypeMatrix::from_rows(&[vec![2, 0], vec![2, 0], vec![0, 0], vec![0, 0]]).unwrap();
        let lab = simulate_phenotype(&m, 0).unwrap();
        assert_eq!(lab.anchor_locus, 0);
        assert_eq!(lab.labels, vec![true, true, false, false]);

        // MAF of the anchor is 0.2 (one 2 and two 1s in ten)
        let rows: Vec<Vec<u8>> = [2, 1, 1, 0, 0, 0, 0, 0, 0, 0].iter().map(|&g| vec![g]).collect();
        let m = GenotypeMatrix::from_rows(&rows).unwrap();
        for seed in 0..20 {
            let lab = simulate_phenotype(&m, seed).unwrap();
            assert_eq!((lab.n_cases(), lab.n_controls()), (5, 5));
            assert!(lab.labels[0]);
        }

        let rows: Vec<Vec<u8>> = (0..10).map(|i| vec![u8::from(i == 0), 0]).collect();
        assert!(simulate_phenotype(&GenotypeMatrix::from_rows(&rows).unwrap(), 0).is_err());
    }

    #[test]
    fn ranking_tsv_round_trip() {
        let r = AssociationResult::from_chi2(vec![0.5, 9.0, 0.0, 2.0]);
        let mut buf = Vec::new();
        r.write_tsv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("locus_id\tchi2\tp_value\trank\n"));
        assert_eq!(read_ranking(buf.as_slice()).unwrap(), r.ranking);
        assert!(read_ranking("h\n0\t1\t1\t2\n".as_bytes()).is_err());
    }

    #[test]
    fn identical_models_give_zero_statistics() {
        let p = TihmmParams::init(3, 12, TransitionMode::TimeInhomogeneous, 4).unwrap();
        let real: Vec<usize> = (0..12).collect();
        let rep = gwas_pipeline(&p, &p, &real, 300, &DEFAULT_TOP_K, 9, 9).unwrap();
        assert!(rep.synthetic.chi2.iter().all(|&c| c == 0.0));
        assert_eq!(rep.accuracy.len(), 4);
        let short = TihmmParams::init(3, 5, TransitionMode::TimeInhomogeneous, 4).unwrap();
        assert!(gwas_pipeline(&p, &short, &real, 10, &[1], 0, 1).is_err());
    }

    fn groups() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (proptest::collection::vec(0u8..3, 1..30), proptest::collection::vec(0u8..3, 1..30))
    }

    proptest! {
        #[test]
        fn chi2_matches_allele_table_and_invariances((a, b) in groups()) {
            let chi = allelic_chi2(&col(&a), &col(&b)).unwrap().chi2[0];
            let alt = a.iter().chain(&b).map(|&g| u32::from(g)).sum::<u32>();
            let total = 2 * (a.len() + b.len()) as u32;
            if alt == 0 || alt == total {
                prop_assert_eq!(chi, 0.0);
            } else {
                let oracle = allele_table_chi2(&a, &b);
                prop_assert!((chi - oracle).abs() <= 1e-9 * oracle.max(1.0));
            }
            let swapped = allelic_chi2(&col(&b), &col(&a)).unwrap().chi2[0];
            prop_assert!((chi - swapped).abs() <= 1e-12 * chi.max(1.0));
            let flip = |v: &[u8]| v.iter().map(|g| 2 - g).collect::<Vec<_>>();
            let flipped = allelic_chi2(&col(&flip(&a)), &col(&flip(&b))).unwrap().chi2[0];
            prop_assert!((chi - flipped).abs() <= 1e-12 * chi.max(1.0));
        }

        #[test]
        fn p_values_decrease_in_chi2(x in 0.0f64..50.0, dx in 1e-6f64..5.0) {
            prop_assert!(chi2_sf_1df(x + dx) <= chi2_sf_1df(x));
            prop_assert!((0.0..=1.0).contains(&chi2_sf_1df(x)));
        }

        #[test]
        fn ranking_is_permutation(scores in proptest::collection::vec(0.0f64..10.0, 0..40)) {
            let mut r = AssociationResult::from_chi2(scores).ranking;
            r.sort_unstable();
            let expected: Vec<usize> = (0..r.len()).collect();
            prop_assert_eq!(r, expected);
        }

        #[test]
        fn rebalanced_groups_differ_by_at_most_one(v in proptest::collection::vec(0u8..3, 4..60), seed: u64) {
            let m = col(&v);
            if let Ok(lab) = simulate_phenotype(&m, seed) {
                prop_assert!(lab.n_cases().abs_diff(lab.n_controls()) <= 1);
            }
        }
    }
}
