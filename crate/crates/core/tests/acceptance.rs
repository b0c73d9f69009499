//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use snpsynth_core::dp::{account, train, TrainConfig};
use snpsynth_core::grr::{grr_debias_frequencies, grr_perturb, GrrConfig};
use snpsynth_core::gwas::{allelic_chi2, gwas_pipeline, top_k_accuracy, DEFAULT_TOP_K};
use snpsynth_core::metrics::{
    btss, euclidean_distance, exact_match_rate, manhattan_distance, minor_allele_freq,
    neis_distance, record_distance, FrequencyVector, LdMatrix,
};
use snpsynth_core::{log_likelihood, nll_gradient, sample, GenotypeMatrix, TihmmParams, TransitionMode};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(
        elapsed <= Duration::from_secs(limit_s),
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn random_params(rng: &mut ChaCha20Rng, h: usize, l: usize, mode: TransitionMode) -> TihmmParams {
    let slices = if mode == TransitionMode::TimeInhomogeneous { l - 1 } else { 1 };
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    TihmmParams::new(
        l,
        mode,
        Array1::from(draw(h)),
        Array2::from_shape_vec((h, 3), draw(h * 3)).unwrap(),
        Array3::from_shape_vec((slices, h, h), draw(slices * h * h)).unwrap(),
    )
    .unwrap()
}

fn random_mode(rng: &mut ChaCha20Rng) -> TransitionMode {
    if rng.random_bool(0.5) {
        TransitionMode::TimeHomogeneous
    } else {
        TransitionMode::TimeInhomogeneous
    }
}

fn enumerate_paths(p: &TihmmParams, x: &[u8]) -> f64 {
    let h = p.n_states();
    let (prior, em, tr) = (p.prior_probs(), p.emission_probs(), p.transition_probs());
    let mut total = 0.0;
    for code in 0..h.pow(x.len() as u32) {
        let path: Vec<usize> = (0..x.len()).map(|i| code / h.pow(i as u32) % h).collect();
        let mut prob = prior[path[0]] * em[[path[0], x[0] as usize]];
        for i in 1..x.len() {
            prob *= tr[[p.slice_index(i - 1), path[i - 1], path[i]]] * em[[path[i], x[i] as usize]];
        }
        total += prob;
    }
    total
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (h, l) = (rng.random_range(1..=3), rng.random_range(2..=6));
        let mode = random_mode(&mut rng);
        let p = random_params(&mut rng, h, l, mode);
        let x: Vec<u8> = (0..l).map(|_| rng.random_range(0..3)).collect();
        let got = log_likelihood(&p, &x).map_err(|e| e.to_string())?.log_likelihood;
        let want = enumerate_paths(&p, &x).ln();
        worst = worst.max(((got - want) / want).abs());
    }
    ensure(worst < 1e-10, format!("max relative error {worst:.2e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("200 instances, max relative error {worst:.2e}"))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for _ in 0..50 {
        let (h, l) = (rng.random_range(1..=4), rng.random_range(2..=8));
        let mode = random_mode(&mut rng);
        let p = random_params(&mut rng, h, l, mode);
        let x: Vec<u8> = (0..l).map(|_| rng.random_range(0..3)).collect();
        let (_, grad) = nll_gradient(&p, &x).map_err(|e| e.to_string())?;
        let analytic = grad.to_flat();
        let nll = |q: &TihmmParams| -log_likelihood(q, &x).unwrap().log_likelihood;
        for k in 0..p.n_params() {
            let mut e = vec![0.0; p.n_params()];
            e[k] = 1.0;
            let fd = (nll(&p.updated(&e, step).unwrap()) - nll(&p.updated(&e, -step).unwrap())) / (2.0 * step);
            let err = (analytic[k] - fd).abs();
            max_abs = max_abs.max(err);
            if err > 1e-8 {
                worst = worst.max(err / fd.abs().max(analytic[k].abs()));
            }
        }
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.2e}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!("50 instances, max absolute error {max_abs:.2e}, max relative error above the floor {worst:.2e}"))
}

/// H = 3 with states emitting mostly 0, 1 and 2. Each transition mixes
/// "stay" with a locus-specific target state.
fn planted_model(l: usize) -> TihmmParams {
    let emission = Array2::from_shape_vec((3, 3), vec![0.9, 0.08, 0.02, 0.1, 0.8, 0.1, 0.02, 0.08, 0.9])
        .unwrap()
        .mapv(f64::ln);
    let prior = Array1::from(vec![0.6, 0.3, 0.1]).mapv(f64::ln);
    let mut t = Array3::zeros((l - 1, 3, 3));
    for s in 0..l - 1 {
        let target = (s * 7 + s / 3) % 3;
        for j in 0..3 {
            for k in 0..3 {
                let pull = if k == target { 0.85 } else { 0.075 };
                let stay = if j == k { 0.5 } else { 0.0 };
                t[[s, j, k]] = f64::ln(stay + 0.5 * pull);
            }
        }
    }
    TihmmParams::new(l, TransitionMode::TimeInhomogeneous, prior, emission, t).unwrap()
}

fn nei_to(real: &FrequencyVector, synth: &GenotypeMatrix) -> f64 {
    neis_distance(real, &minor_allele_freq(synth).unwrap()).unwrap()
}

const PLANTED_N: usize = 2000;
const PLANTED_L: usize = 50;

fn criterion_3() -> Check {
    let start = Instant::now();
    let data = sample(&planted_model(PLANTED_L), PLANTED_N, 1);
    let real = minor_allele_freq(&data).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { seed: 3, ..Default::default() };
    let mut nei = Vec::new();
    for mode in [TransitionMode::TimeInhomogeneous, TransitionMode::TimeHomogeneous] {
        let out = train(&data, None, 10, mode, &cfg).map_err(|e| e.to_string())?;
        nei.push(nei_to(&real, &sample(&out.params, 2000, 5)));
    }
    ensure(nei[0] < 1e-3, format!("TIH Nei {:.3e} not below 1e-3", nei[0]))?;
    ensure(nei[1] > nei[0], format!("THom Nei {:.3e} not above TIH {:.3e}", nei[1], nei[0]))?;
    within(start.elapsed(), 600)?;
    Ok(format!("Nei TIH {:.3e} < THom {:.3e}", nei[0], nei[1]))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let data = sample(&planted_model(PLANTED_L), PLANTED_N, 1);
    let real = minor_allele_freq(&data).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { seed: 3, ..Default::default() }
        .with_target_epsilon(10.0, 1e-4, PLANTED_N)
        .map_err(|e| e.to_string())?;
    ensure((cfg.schedule(PLANTED_N).0 - 8.0 / 2000.0).abs() < 1e-15, "sampling rate is not 8/2000")?;
    let out = train(&data, None, 10, TransitionMode::TimeInhomogeneous, &cfg).map_err(|e| e.to_string())?;
    let eps = out.privacy.as_ref().ok_or("no privacy report")?.epsilon;
    ensure(eps <= 10.0, format!("accounted epsilon {eps}"))?;
    let dp_nei = nei_to(&real, &sample(&out.params, 2000, 5));
    let grr = GrrConfig::new(10.0, PLANTED_L).map_err(|e| e.to_string())?;
    let noisy = grr_perturb(&data, &grr, 7).map_err(|e| e.to_string())?;
    let grr_nei = neis_distance(&real, &grr_debias_frequencies(&noisy, &grr).unwrap()).unwrap();
    ensure(dp_nei < grr_nei, format!("DP TIH Nei {dp_nei:.3e} not below GRR {grr_nei:.3e}"))?;
    within(start.elapsed(), 900)?;
    Ok(format!(
        "sigma {:.3}, epsilon {eps:.3}, Nei DP TIH {dp_nei:.3e} < GRR {grr_nei:.3e}",
        cfg.noise_multiplier
    ))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let (sigma, steps, delta): (f64, u64, f64) = (4.0, 100, 1e-4);
    let rho = steps as f64 / (2.0 * sigma * sigma);
    let closed = rho + 2.0 * (rho * f64::ln(1.0 / delta)).sqrt();
    let got = account(sigma, 1.0, steps, delta).map_err(|e| e.to_string())?;
    ensure((got - closed).abs() < 1e-6, format!("{got} vs closed form {closed}"))?;
    let sigmas = [0.6, 0.8, 1.0, 1.5, 2.0];
    let step_grid = [10u64, 100, 1000, 5000, 20000];
    let q = 0.004;
    for &s in &sigmas {
        for w in step_grid.windows(2) {
            let (a, b) = (account(s, q, w[0], delta).unwrap(), account(s, q, w[1], delta).unwrap());
            ensure(b > a, format!("not increasing in steps at sigma {s}"))?;
        }
    }
    for &t in &step_grid {
        for w in sigmas.windows(2) {
            let (a, b) = (account(w[0], q, t, delta).unwrap(), account(w[1], q, t, delta).unwrap());
            ensure(b < a, format!("not decreasing in sigma at {t} steps"))?;
        }
    }
    within(start.elapsed(), 1)?;
    Ok(format!("epsilon {got:.9} vs closed form {closed:.9}; 5x5 grid monotone"))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let big = GenotypeMatrix::new(Array2::from_shape_fn((10_000, 100), |(i, j)| ((i * 5 + j) % 3) as u8), None)
        .map_err(|e| e.to_string())?;
    let cfg = GrrConfig::without_split(1.0, 100).unwrap();
    let noisy = grr_perturb(&big, &cfg, 1).unwrap();
    let kept = big.values().iter().zip(noisy.values()).filter(|(a, b)| a == b).count() as f64;
    let (n, p) = (1e6, cfg.keep_probability());
    let z = (kept - n * p) / (n * p * (1.0 - p)).sqrt();
    ensure(z.abs() < 4.0, format!("keep-rate z score {z:.2}"))?;

    let l = 5;
    let m = GenotypeMatrix::new(Array2::from_shape_fn((2000, l), |(i, j)| ((i * (j + 2) + i / 7) % 3) as u8), None)
        .unwrap();
    let truth = minor_allele_freq(&m).unwrap();
    let cfg = GrrConfig::without_split(1.0, l).unwrap();
    let mut mean = vec![0.0; l];
    for rep in 0..200 {
        let est = grr_debias_frequencies(&grr_perturb(&m, &cfg, 1000 + rep).unwrap(), &cfg).unwrap();
        for (acc, f) in mean.iter_mut().zip(est.as_slice()) {
            *acc += f / 200.0;
        }
    }
    let err = mean.iter().zip(truth.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err < 0.01, format!("max debiased MAF error {err:.4}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("keep-rate z {z:.2}, max MAF bias {err:.4}"))
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let fv = |v: &[f64]| FrequencyVector::new(v.to_vec()).unwrap();
    let a = fv(&[0.3, 0.6, 0.05]);
    ensure(neis_distance(&a, &a).unwrap() == 0.0, "Nei of identical vectors")?;
    ensure(neis_distance(&fv(&[0.0]), &fv(&[1.0])).unwrap() == f64::INFINITY, "Nei disjoint")?;
    let (zeros, ones) = (fv(&[0.0; 3]), fv(&[1.0; 3]));
    ensure(euclidean_distance(&zeros, &ones).unwrap() == 1.0, "euclidean upper bound")?;
    ensure(manhattan_distance(&zeros, &ones).unwrap() == 1.0, "manhattan upper bound")?;
    let (x, y) = (fv(&[0.0, 0.5]), fv(&[0.5, 0.5]));
    ensure(euclidean_distance(&x, &y).unwrap() == 0.125f64.sqrt(), "euclidean hand value")?;
    ensure(manhattan_distance(&x, &y).unwrap() == 0.25, "manhattan hand value")?;
    let nei = neis_distance(&fv(&[0.2]), &fv(&[0.3])).unwrap();
    let nei_hand = -(0.62f64 / (0.68f64 * 0.58).sqrt()).ln();
    ensure((nei - nei_hand).abs() < 1e-15, format!("Nei hand value {nei} vs {nei_hand}"))?;
    ensure(record_distance(&[0, 2], &[1, 1]) == 0.5, "DCR hand value")?;
    let col = |v: &[u8]| GenotypeMatrix::from_rows(&v.iter().map(|&g| vec![g]).collect::<Vec<_>>()).unwrap();
    let chi = allelic_chi2(&col(&[2, 2]), &col(&[0, 0])).unwrap().chi2[0];
    ensure(chi == 8.0, format!("chi2 hand value {chi}"))?;
    let mut real = Array2::<f64>::eye(6);
    let mut synth = Array2::<f64>::eye(6);
    for (m, j) in [(&mut real, 1), (&mut synth, 3)] {
        m[[0, j]] = 0.7;
        m[[j, 0]] = 0.7;
    }
    let (real, synth) = (LdMatrix::new(real).unwrap(), LdMatrix::new(synth).unwrap());
    let shifted = btss(&real, &synth, 2.0).unwrap().per_snp[0];
    ensure((shifted - (-1.0f64).exp()).abs() < 1e-12, format!("BTSS shift {shifted}"))?;
    ensure(exact_match_rate(&real, &real).unwrap() == 1.0, "exact match of identical")?;
    within(start.elapsed(), 1)?;
    Ok(format!("all anchors hold (Nei hand value {nei:.6})"))
}

/// Case and control models differing only at `loci`. The transition into
/// each such locus pulls toward state 2 (cases) or 0 (controls); the one out
/// of it is memoryless so the difference stays local.
fn gwas_models(l: usize, loci: &[usize]) -> (TihmmParams, TihmmParams) {
    let base = planted_model(l);
    let build = |hot: usize| {
        let mut t = base.transition_logits().clone();
        for &d in loci {
            for j in 0..3 {
                for k in 0..3 {
                    t[[d - 1, j, k]] = f64::ln(if k == hot { 0.9 } else { 0.05 });
                    t[[d, j, k]] = [0.4f64, 0.35, 0.25][k].ln();
                }
            }
        }
        TihmmParams::new(
            l,
            TransitionMode::TimeInhomogeneous,
            base.prior_logits().clone(),
            base.emission_logits().clone(),
            t,
        )
        .unwrap()
    };
    (build(2), build(0))
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let l = PLANTED_L;
    let model = planted_model(l);
    let real_order: Vec<usize> = (0..l).rev().collect();
    let same = gwas_pipeline(&model, &model, &real_order, 2000, &DEFAULT_TOP_K, 9, 9).map_err(|e| e.to_string())?;
    ensure(same.synthetic.chi2.iter().all(|&c| c == 0.0), "identical models gave nonzero chi2")?;
    let tie_order: Vec<usize> = (0..l).collect();
    ensure(same.synthetic.ranking == tie_order, "all-tie ranking is not the index order")?;
    for &(k, acc) in &same.accuracy {
        ensure(acc == top_k_accuracy(&real_order, &tie_order, k).unwrap(), format!("Acc({k}) off baseline"))?;
    }

    let (case_model, control_model) = gwas_models(l, &[5, 15, 25, 35, 45]);
    let case = sample(&case_model, 2000, 11);
    let control = sample(&control_model, 2000, 12);
    let real = allelic_chi2(&case, &control).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { seed: 3, ..Default::default() };
    let fit = |m: &GenotypeMatrix, seed| {
        train(m, None, 10, TransitionMode::TimeInhomogeneous, &TrainConfig { seed, ..cfg.clone() }).map(|o| o.params)
    };
    let (fa, fb) = (fit(&case, 3).map_err(|e| e.to_string())?, fit(&control, 4).map_err(|e| e.to_string())?);
    let rep = gwas_pipeline(&fa, &fb, &real.ranking, 2000, &[5], 21, 22).map_err(|e| e.to_string())?;
    let acc5 = rep.accuracy[0].1;
    ensure(acc5 >= 0.6, format!("Acc(5) = {acc5}"))?;
    within(start.elapsed(), 300)?;
    Ok(format!("identical models give chi2 = 0; planted Acc(5) = {acc5}"))
}

fn criterion_9() -> Check {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/reproduce_1000g.sh");
    ensure(script.is_file(), format!("missing {}", script.display()))?;
    match std::env::var_os("SNPSYNTH_1000G_VCF") {
        None => Ok("external data not supplied; reproduction script present".into()),
        Some(vcf) => reproduce_ordinals(Path::new(&vcf)),
    }
}

/// TIH beats GRR at matched epsilon and non-private TIH beats DP TIH, on a
/// user-supplied VCF.
fn reproduce_ordinals(vcf: &Path) -> Check {
    use snpsynth_core::{load_vcf, remove_singletons, split, VcfOptions};
    let max_loci = std::env::var("SNPSYNTH_1000G_MAX_LOCI").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
    let m = load_vcf(vcf, VcfOptions { max_loci, skip_singletons: true }).map_err(|e| e.to_string())?;
    let m = remove_singletons(&m);
    let parts = split(&m, 5, 7).map_err(|e| e.to_string())?;
    let real = minor_allele_freq(&parts.train).unwrap();
    let n = parts.train.n_individuals();
    let base = TrainConfig { seed: 3, ..Default::default() };
    let fit = |cfg: &TrainConfig| train(&parts.train, None, 10, TransitionMode::TimeInhomogeneous, cfg);
    let plain = fit(&base).map_err(|e| e.to_string())?;
    let dp_cfg = base.clone().with_target_epsilon(10.0, 1e-4, n).map_err(|e| e.to_string())?;
    let private = fit(&dp_cfg).map_err(|e| e.to_string())?;
    let nei_plain = nei_to(&real, &sample(&plain.params, 2000, 5));
    let nei_dp = nei_to(&real, &sample(&private.params, 2000, 5));
    let grr = GrrConfig::new(10.0, m.n_loci()).unwrap();
    let noisy = grr_perturb(&parts.train, &grr, 7).unwrap();
    let nei_grr = neis_distance(&real, &grr_debias_frequencies(&noisy, &grr).unwrap()).unwrap();
    ensure(nei_dp < nei_grr, format!("DP TIH {nei_dp:.3e} not better than GRR {nei_grr:.3e}"))?;
    ensure(nei_plain < nei_dp, format!("non-DP TIH {nei_plain:.3e} not better than DP {nei_dp:.3e}"))?;
    Ok(format!("Nei non-DP {nei_plain:.3e} < DP {nei_dp:.3e} < GRR {nei_grr:.3e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("forward matches path enumeration", criterion_1),
        ("gradient matches finite differences", criterion_2),
        ("planted-model recovery without DP", criterion_3),
        ("DP training end to end", criterion_4),
        ("accountant anchor and monotonicity", criterion_5),
        ("randomized response statistics", criterion_6),
        ("metric unit anchors", criterion_7),
        ("GWAS sanity", criterion_8),
        ("external-data reproduction", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({why}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
