use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use snpsynth_core::dp::{account_with_order, calibrate_sigma, train, TrainConfig, TrainOutcome};
use snpsynth_core::grr::{grr_debias_frequencies, grr_perturb, GrrConfig};
use snpsynth_core::gwas::{allelic_chi2, gwas_pipeline, load_ranking, simulate_phenotype};
use snpsynth_core::hmm::{load_model, save_model};
use snpsynth_core::metrics::{
    btss, dcr, euclidean_distance, exact_match_rate, ld_r2, manhattan_distance, minor_allele_freq,
    neis_distance, DcrHistogram,
};
use snpsynth_core::{
    load_matrix, load_vcf, remove_singletons, sample, split, GenotypeMatrix, TextFormat, VcfOptions,
};

use crate::cli::*;
use crate::manifest::{write_json, Manifest};

pub struct RunContext {
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl RunContext {
    /// Resolves a relative output path under the output directory and makes
    /// sure its parent exists.
    fn output(&self, p: &Path) -> Result<PathBuf> {
        let path = if p.is_absolute() { p.to_path_buf() } else { self.out_dir.join(p) };
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }
}

fn read_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    load_matrix(path, TextFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))
}

fn finish(command: &str, config: &impl Serialize, outputs: Vec<PathBuf>) -> Result<()> {
    let primary = outputs[0].clone();
    Manifest::new(command, config, outputs)?.write_beside(&primary)?;
    Ok(())
}

pub fn preprocess(ctx: &RunContext, args: &PreprocessArgs) -> Result<()> {
    let m = match (&args.vcf, &args.table) {
        (Some(vcf), _) => load_vcf(
            vcf,
            VcfOptions { max_loci: args.max_loci, skip_singletons: !args.keep_singletons },
        )
        .with_context(|| format!("reading {}", vcf.display()))?,
        (None, Some(table)) => {
            let mut m = read_genotypes(table)?;
            if !args.keep_singletons {
                m = remove_singletons(&m);
            }
            let keep: Vec<usize> = (0..m.n_loci().min(args.max_loci)).collect();
            m.select_loci(&keep)
        }
        (None, None) => bail!("one of --vcf or --table is required"),
    };
    let parts = split(&m, args.folds, args.seed)?;
    let train_path = ctx.output(&args.train_out)?;
    let holdout_path = ctx.output(&args.holdout_out)?;
    parts.train.save_tsv(&train_path)?;
    parts.holdout.save_tsv(&holdout_path)?;
    log::info!(
        "{} loci; {} training and {} holdout individuals",
        m.n_loci(),
        parts.train.n_individuals(),
        parts.holdout.n_individuals()
    );
    finish("preprocess", args, vec![train_path, holdout_path])
}

/// Turns the privacy flags into a training config.
pub fn resolve_privacy(p: &PrivacyArgs, mut cfg: TrainConfig, n: usize) -> Result<TrainConfig> {
    match (p.no_dp, p.epsilon, p.sigma) {
        (true, None, None) => {
            cfg.dp_enabled = false;
            Ok(cfg)
        }
        (true, _, _) => bail!("conflicting flags: --no-dp cannot be combined with --epsilon or --sigma"),
        (false, Some(_), Some(_)) => bail!("conflicting flags: give either --epsilon or --sigma, not both"),
        (false, Some(eps), None) => Ok(cfg.with_target_epsilon(eps, p.delta, n)?),
        (false, None, Some(sigma)) => {
            cfg.dp_enabled = true;
            cfg.noise_multiplier = sigma;
            cfg.delta = p.delta;
            Ok(cfg)
        }
        (false, None, None) => bail!("one of --no-dp, --epsilon or --sigma is required"),
    }
}

fn base_config(optim: &OptimArgs, seed: u64, threads: usize) -> TrainConfig {
    TrainConfig {
        batch_size: optim.batch_size,
        epochs: optim.epochs,
        learning_rate: optim.lr,
        clip_norm: optim.clip,
        seed,
        threads,
        ..TrainConfig::default()
    }
}

/// The training report without its wall-clock field, so reruns compare equal.
fn report_json(out: &TrainOutcome) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(&out.report)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_clock_seconds");
    }
    Ok(v)
}

pub fn train_cmd(ctx: &RunContext, args: &TrainArgs) -> Result<()> {
    let data = read_genotypes(&args.data)?;
    let holdout = args.holdout.as_deref().map(read_genotypes).transpose()?;
    let cfg = resolve_privacy(
        &args.privacy,
        base_config(&args.optim, args.seed, ctx.threads),
        data.n_individuals(),
    )?;
    let out = train(&data, holdout.as_ref(), args.hidden, args.mode.into(), &cfg)?;
    log::info!("trained in {:.1}s", out.report.wall_clock_seconds);
    if let Some(p) = &out.privacy {
        println!("epsilon = {} (delta = {}, sigma = {})", p.epsilon, p.delta, p.sigma);
    }
    let model_path = ctx.output(&args.out)?;
    let report_path = ctx.output(&args.report)?;
    save_model(&model_path, &out.params, out.metadata(&cfg))?;
    write_json(&report_path, &report_json(&out)?)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a TrainArgs,
        training: &'a TrainConfig,
    }
    let resolved = Resolved { args, training: &TrainConfig { threads: 1, ..cfg.clone() } };
    finish("train", &resolved, vec![model_path, report_path])
}

pub fn sample_cmd(ctx: &RunContext, args: &SampleArgs) -> Result<()> {
    let (params, _) = load_model(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let path = ctx.output(&args.out)?;
    sample(&params, args.n, args.seed).save_tsv(&path)?;
    finish("sample", args, vec![path])
}

#[derive(Debug, Serialize)]
pub struct FrequencyReport {
    pub euclidean: f64,
    pub manhattan: f64,
    /// `null` when infinite.
    pub nei: f64,
}

#[derive(Debug, Serialize)]
pub struct DcrReport {
    pub mean: f64,
    #[serde(flatten)]
    pub histogram: DcrHistogram,
}

#[derive(Debug, Serialize)]
pub struct LdReport {
    pub btss: f64,
    pub btss_per_snp: Vec<f64>,
    pub exact_match_rate: f64,
    pub lambda: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct EvalReport {
    pub n_real: usize,
    pub n_synth: usize,
    pub n_loci: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency: Option<FrequencyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dcr: Option<DcrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ld: Option<LdReport>,
}

pub fn frequency_report(real: &GenotypeMatrix, synth: &GenotypeMatrix) -> Result<FrequencyReport> {
    let (fa, fb) = (minor_allele_freq(real)?, minor_allele_freq(synth)?);
    Ok(FrequencyReport {
        euclidean: euclidean_distance(&fa, &fb)?,
        manhattan: manhattan_distance(&fa, &fb)?,
        nei: neis_distance(&fa, &fb)?,
    })
}

pub fn dcr_report(real: &GenotypeMatrix, synth: &GenotypeMatrix, bins: usize) -> Result<DcrReport> {
    let histogram = dcr(synth, real, bins)?;
    let d = &histogram.per_record_min_distance;
    let mean = if d.is_empty() { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 };
    Ok(DcrReport { mean, histogram })
}

pub fn eval(ctx: &RunContext, args: &EvalArgs) -> Result<()> {
    let real = read_genotypes(&args.real)?;
    let synth = read_genotypes(&args.synth)?;
    if real.n_loci() != synth.n_loci() {
        bail!("real data has {} loci, synthetic data {}", real.n_loci(), synth.n_loci());
    }
    let wants = |m: Metric| args.metrics.contains(&Metric::All) || args.metrics.contains(&m);
    let mut report = EvalReport {
        n_real: real.n_individuals(),
        n_synth: synth.n_individuals(),
        n_loci: real.n_loci(),
        ..Default::default()
    };
    let mut outputs = vec![ctx.output(&args.out)?];
    if wants(Metric::Freq) {
        report.frequency = Some(frequency_report(&real, &synth)?);
    }
    if wants(Metric::Dcr) {
        report.dcr = Some(dcr_report(&real, &synth, args.bins)?);
    }
    if wants(Metric::Ld) {
        let (la, lb) = (ld_r2(&real)?, ld_r2(&synth)?);
        let b = btss(&la, &lb, args.lambda)?;
        report.ld = Some(LdReport {
            btss: b.mean_btss,
            btss_per_snp: b.per_snp,
            exact_match_rate: exact_match_rate(&la, &lb)?,
            lambda: args.lambda,
        });
        if let Some(prefix) = &args.ld_prefix {
            for (tag, ld) in [("real", &la), ("synth", &lb)] {
                let name = format!("{}_{tag}.tsv", prefix.display());
                let path = ctx.output(Path::new(&name))?;
                let mut buf = Vec::new();
                ld.write_tsv(&mut buf)?;
                fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
                outputs.push(path);
            }
        }
    }
    write_json(&outputs[0], &report)?;
    finish("eval", args, outputs)
}

pub fn phenotype(ctx: &RunContext, args: &PhenotypeArgs) -> Result<()> {
    let m = read_genotypes(&args.data)?;
    let labels = simulate_phenotype(&m, args.seed)?;
    let (cases, controls) = labels.partition(&m)?;
    let labels_path = ctx.output(&args.labels_out)?;
    let cases_path = ctx.output(&args.cases_out)?;
    let controls_path = ctx.output(&args.controls_out)?;
    cases.save_tsv(&cases_path)?;
    controls.save_tsv(&controls_path)?;
    write_json(&labels_path, &labels)?;
    log::info!(
        "anchor locus {}: {} cases, {} controls",
        labels.anchor_locus,
        labels.n_cases(),
        labels.n_controls()
    );
    finish("phenotype", args, vec![labels_path, cases_path, controls_path])
}

pub fn assoc(ctx: &RunContext, args: &AssocArgs) -> Result<()> {
    let case = read_genotypes(&args.case)?;
    let control = read_genotypes(&args.control)?;
    let result = allelic_chi2(&case, &control)?;
    let path = ctx.output(&args.out)?;
    result.save_tsv(&path, case.locus_ids())?;
    finish("assoc", args, vec![path])
}

pub fn gwas(ctx: &RunContext, args: &GwasArgs) -> Result<()> {
    let (case_model, _) = load_model(&args.case_model)
        .with_context(|| format!("reading {}", args.case_model.display()))?;
    let (control_model, _) = load_model(&args.control_model)
        .with_context(|| format!("reading {}", args.control_model.display()))?;
    let real = load_ranking(&args.real_ranking)
        .with_context(|| format!("reading {}", args.real_ranking.display()))?;
    let control_seed = args.control_seed.unwrap_or(args.seed.wrapping_add(1));
    let report = gwas_pipeline(&case_model, &control_model, &real, args.n, &args.k, args.seed, control_seed)?;
    for (k, acc) in &report.accuracy {
        println!("Acc({k}) = {acc}");
    }
    let mut outputs = vec![ctx.output(&args.out)?];
    write_json(&outputs[0], &report)?;
    if let Some(r) = &args.ranking_out {
        let path = ctx.output(r)?;
        report.synthetic.save_tsv(&path, None)?;
        outputs.push(path);
    }

    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a GwasArgs,
        control_seed: u64,
    }
    finish("gwas", &Resolved { args, control_seed }, outputs)
}

pub fn grr(ctx: &RunContext, args: &GrrArgs) -> Result<()> {
    let m = read_genotypes(&args.data)?;
    let cfg = if args.no_split {
        GrrConfig::without_split(args.epsilon, m.n_loci())?
    } else {
        GrrConfig::new(args.epsilon, m.n_loci())?
    };
    let noisy = grr_perturb(&m, &cfg, args.seed)?;
    let freq = grr_debias_frequencies(&noisy, &cfg)?;
    let out = ctx.output(&args.out)?;
    let freq_out = ctx.output(&args.freq_out)?;
    noisy.save_tsv(&out)?;
    write_json(&freq_out, &freq)?;
    finish("grr", args, vec![out, freq_out])
}

#[derive(Debug, Serialize)]
struct AccountantOutput {
    sigma: f64,
    q: f64,
    steps: u64,
    delta: f64,
    epsilon: f64,
    order: f64,
}

pub fn accountant(ctx: &RunContext, args: &AccountantArgs) -> Result<()> {
    let sigma = match (args.sigma, args.epsilon) {
        (Some(s), None) => s,
        (None, Some(eps)) => calibrate_sigma(eps, args.delta, args.q, args.steps)?,
        _ => bail!("give exactly one of --sigma or --epsilon"),
    };
    let r = account_with_order(sigma, args.q, args.steps, args.delta)?;
    if args.epsilon.is_some() {
        println!("sigma = {sigma}");
    }
    println!("epsilon = {}", r.epsilon);
    let path = ctx.output(&args.out)?;
    let out = AccountantOutput {
        sigma,
        q: args.q,
        steps: args.steps,
        delta: args.delta,
        epsilon: r.epsilon,
        order: r.order,
    };
    write_json(&path, &out)?;
    finish("accountant", args, vec![path])
}

pub fn sweep(ctx: &RunContext, args: &SweepArgs) -> Result<()> {
    let data = read_genotypes(&args.data)?;
    let reference = match &args.reference {
        Some(p) => read_genotypes(p)?,
        None => data.clone(),
    };
    let mut csv = String::from(
        "hidden,mode,target_epsilon,sigma,epsilon,n_samples,euclidean,manhattan,nei,dcr_mean,train_nll\n",
    );
    let mode = snpsynth_core::TransitionMode::from(args.mode);
    for &h in &args.hidden {
        for &eps in &args.epsilon {
            let privacy = PrivacyArgs {
                epsilon: eps.is_finite().then_some(eps),
                delta: args.delta,
                sigma: None,
                no_dp: !eps.is_finite(),
            };
            let cfg = resolve_privacy(
                &privacy,
                base_config(&args.optim, args.seed, ctx.threads),
                data.n_individuals(),
            )?;
            let out = train(&data, None, h, mode, &cfg)?;
            let accounted = out.privacy.map_or(f64::INFINITY, |p| p.epsilon);
            let nll = out.report.train_nll.last().copied().unwrap_or(f64::NAN);
            for &n in &args.n_samples {
                let synth = sample(&out.params, n, args.seed);
                let f = frequency_report(&reference, &synth)?;
                let d = dcr_report(&reference, &synth, snpsynth_core::metrics::DEFAULT_DCR_BINS)?;
                writeln!(
                    csv,
                    "{h},{},{eps},{},{accounted},{n},{},{},{},{},{nll}",
                    mode.as_str(),
                    cfg.noise_multiplier,
                    f.euclidean,
                    f.manhattan,
                    f.nei,
                    d.mean
                )?;
                log::info!("H={h} epsilon={eps} n={n}: Nei {}", f.nei);
            }
        }
    }
    let path = ctx.output(&args.out)?;
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    finish("sweep", args, vec![path])
}
