use std::fs;

use snpsynth_core::dp::{train, TrainConfig};
use snpsynth_core::hmm::{load_model, save_model};
use snpsynth_core::metrics::{minor_allele_freq, neis_distance};
use snpsynth_core::{load_vcf, log_likelihood, sample, split, TextFormat, TransitionMode, VcfOptions};

fn toy_vcf(n: usize, l: usize) -> String {
    let mut s = String::from("##fileformat=VCFv4.2\n#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT");
    for i in 0..n {
        s += &format!("\ts{i}");
    }
    s.push('\n');
    for j in 0..l {
        s += &format!("1\t{}\t.\tC\tT\t.\tPASS\t.\tGT:DP", 10 * j + 1);
        for i in 0..n {
            let a = (i + j) % 3 == 0;
            let b = (i * j + i) % 4 == 1;
            s += &format!("\t{}|{}:7", u8::from(a), u8::from(b));
        }
        s.push('\n');
    }
    s
}

#[test]
fn vcf_to_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let vcf = dir.path().join("toy.vcf");
    fs::write(&vcf, toy_vcf(50, 12)).unwrap();
    let m = load_vcf(&vcf, VcfOptions { max_loci: 10, skip_singletons: true }).unwrap();
    assert_eq!((m.n_individuals(), m.n_loci()), (50, 10));
    assert_eq!(m.locus_ids().unwrap()[0], "1:1");

    let parts = split(&m, 5, 1).unwrap();
    assert_eq!((parts.train.n_individuals(), parts.holdout.n_individuals()), (40, 10));
    let table = dir.path().join("train.tsv");
    parts.train.save_tsv(&table).unwrap();
    assert_eq!(snpsynth_core::load_matrix(&table, TextFormat::Tsv).unwrap(), parts.train);

    let cfg = TrainConfig { epochs: 5, seed: 2, ..Default::default() };
    let out = train(&parts.train, Some(&parts.holdout), 3, TransitionMode::TimeInhomogeneous, &cfg).unwrap();
    assert_eq!(out.report.train_nll.len(), 5);
    assert_eq!(out.report.holdout_nll.len(), 5);
    assert!(out.report.train_nll[4] < out.report.train_nll[0]);

    let model = dir.path().join("model.json");
    save_model(&model, &out.params, out.metadata(&cfg)).unwrap();
    let (params, meta) = load_model(&model).unwrap();
    assert_eq!(params, out.params);
    assert!(!meta.trained_with_dp);

    let synth = sample(&params, 500, 3);
    let row = synth.row(0).to_vec();
    assert!(log_likelihood(&params, &row).unwrap().log_likelihood.is_finite());
    let d = neis_distance(&minor_allele_freq(&parts.train).unwrap(), &minor_allele_freq(&synth).unwrap()).unwrap();
    assert!(d.is_finite() && d >= 0.0);
}
