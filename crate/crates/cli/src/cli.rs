use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use snpsynth_core::TransitionMode;

#[derive(Debug, Parser)]
#[command(name = "snpsynth", version, about = "Private synthetic SNP genotypes with time-inhomogeneous HMMs")]
pub struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "SNPSYNTH_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a VCF or genotype table, drop singletons and split train/holdout.
    Preprocess(PreprocessArgs),
    /// Fit a model, optionally under differential privacy.
    Train(TrainArgs),
    /// Draw synthetic genotypes from a saved model.
    Sample(SampleArgs),
    /// Compare synthetic genotypes against real ones.
    Eval(EvalArgs),
    /// Split a genotype table into simulated cases and controls.
    Phenotype(PhenotypeArgs),
    /// Allelic association test between a case and a control table.
    Assoc(AssocArgs),
    /// Score GWAS rankings from synthetic case and control models.
    Gwas(GwasArgs),
    /// Randomized-response baseline with debiased allele frequencies.
    Grr(GrrArgs),
    /// Privacy accounting: epsilon for a noise level, or the reverse.
    Accountant(AccountantArgs),
    /// Train, sample and evaluate over a grid of settings into one CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tih,
    Thom,
}

impl From<Mode> for TransitionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Tih => TransitionMode::TimeInhomogeneous,
            Mode::Thom => TransitionMode::TimeHomogeneous,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    /// Input VCF.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    pub vcf: Option<PathBuf>,
    /// Input genotype table (TSV or CSV).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub max_loci: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep loci carried by a single individual.
    #[arg(long)]
    pub keep_singletons: bool,
    #[arg(long, default_value = "train.tsv")]
    pub train_out: PathBuf,
    #[arg(long, default_value = "holdout.tsv")]
    pub holdout_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PrivacyArgs {
    /// Target epsilon; the noise multiplier is calibrated to meet it.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub delta: f64,
    /// Explicit noise multiplier.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Plain minibatch SGD without clipping or noise.
    #[arg(long)]
    pub no_dp: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.015)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Number of hidden states.
    #[arg(long, default_value_t = 10)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = Mode::Tih)]
    pub mode: Mode,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "train_report.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic.tsv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Frequency distances and DCR and LD scores.
    All,
    /// Euclidean, Manhattan and Nei distances between allele frequencies.
    Freq,
    /// Distance to closest record.
    Dcr,
    /// LD matrices, BTSS and exact match rate.
    Ld,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Metric::Freq, Metric::Dcr])]
    pub metrics: Vec<Metric>,
    #[arg(long, default_value_t = snpsynth_core::metrics::DEFAULT_DCR_BINS)]
    pub bins: usize,
    /// BTSS positional decay.
    #[arg(long, default_value_t = snpsynth_core::metrics::DEFAULT_BTSS_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value = "eval.json")]
    pub out: PathBuf,
    /// Also write both LD matrices as TSV with this prefix.
    #[arg(long)]
    pub ld_prefix: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PhenotypeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "cases.tsv")]
    pub cases_out: PathBuf,
    #[arg(long, default_value = "controls.tsv")]
    pub controls_out: PathBuf,
    #[arg(long, default_value = "labels.json")]
    pub labels_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AssocArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub control: PathBuf,
    #[arg(long, default_value = "ranking.tsv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GwasArgs {
    #[arg(long)]
    pub case_model: PathBuf,
    #[arg(long)]
    pub control_model: PathBuf,
    /// Reference ranking TSV from `assoc` on the real data.
    #[arg(long)]
    pub real_ranking: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = snpsynth_core::gwas::DEFAULT_TOP_K)]
    pub k: Vec<usize>,
    /// Samples drawn from each model.
    #[arg(long, default_value_t = snpsynth_core::gwas::DEFAULT_GWAS_SAMPLES)]
    pub n: usize,
    /// Seed for the case draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed for the control draws; defaults to `seed + 1`.
    #[arg(long)]
    pub control_seed: Option<u64>,
    #[arg(long, default_value = "gwas.json")]
    pub out: PathBuf,
    /// Also write the synthetic ranking TSV here.
    #[arg(long)]
    pub ranking_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GrrArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Total budget, divided evenly over loci unless --no-split.
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub no_split: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbed genotypes.
    #[arg(long, default_value = "grr.tsv")]
    pub out: PathBuf,
    /// Debiased minor-allele frequencies.
    #[arg(long, default_value = "grr_freq.json")]
    pub freq_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AccountantArgs {
    /// Noise multiplier to account for.
    #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
    pub sigma: Option<f64>,
    /// Target epsilon to calibrate a noise multiplier for.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Poisson sampling rate.
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub delta: f64,
    #[arg(long, default_value = "accountant.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Real data to evaluate against; defaults to the training data.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize])]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Tih)]
    pub mode: Mode,
    /// Target epsilons; `inf` trains without privacy.
    #[arg(long, value_delimiter = ',', default_values_t = [f64::INFINITY])]
    pub epsilon: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub delta: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [2000usize])]
    pub n_samples: Vec<usize>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}
