//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Integer orders use the exact binomial expansion of the order-α moment;
//! fractional orders use the convergent two-sided series with erfc tails.
//! Composition is additive in RDP and the final conversion to (ε, δ) is
//! `ε = min_α RDP(α)·steps + ln(1/δ)/(α − 1)`, minimized over a fixed grid
//! and then refined by golden-section search around the best grid order.

use crate::error::{Error, Result};

const MAX_INTEGER_ORDER: u32 = 64;
const FRACTIONAL_START: f64 = 1.25;
const FRACTIONAL_END: f64 = 10.0;
const FRACTIONAL_STEP: f64 = 0.05;

const SIGMA_BRACKET: (f64, f64) = (0.3, 100.0);
const SIGMA_REL_TOL: f64 = 1e-3;

/// Orders evaluated by [`account`], sorted ascending: the fractional grid
/// 1.25, 1.30, ..., 10.0 merged with the integers 2..=64.
pub fn rdp_orders() -> Vec<f64> {
    let n_frac = ((FRACTIONAL_END - FRACTIONAL_START) / FRACTIONAL_STEP).round() as usize;
    let mut orders: Vec<f64> = (0..=n_frac)
        .map(|i| FRACTIONAL_START + i as f64 * FRACTIONAL_STEP)
        .map(|a| (a * 100.0).round() / 100.0)
        .filter(|a| a.fract() != 0.0)
        .collect();
    orders.extend((2..=MAX_INTEGER_ORDER).map(f64::from));
    orders.sort_by(f64::total_cmp);
    orders
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `ln(erfc(x))`, with an asymptotic expansion once erfc underflows.
fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        return libm::erfc(x).ln();
    }
    let x2 = x * x;
    let series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
    -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    libm::lgamma(f64::from(n) + 1.0) - libm::lgamma(f64::from(k) + 1.0) - libm::lgamma(f64::from(n - k) + 1.0)
}

/// `ln A_α` for integer α ≥ 2.
fn log_a_integer(q: f64, sigma: f64, alpha: u32) -> f64 {
    let (ln_q, ln_1mq) = (q.ln(), (-q).ln_1p());
    (0..=alpha)
        .map(|k| {
            let k_f = f64::from(k);
            ln_binomial(alpha, k)
                + k_f * ln_q
                + f64::from(alpha - k) * ln_1mq
                + (k_f * k_f - k_f) / (2.0 * sigma * sigma)
        })
        .fold(f64::NEG_INFINITY, log_add)
}

/// `ln A_α` for real α > 1, summed until both tails drop below e^-30.
fn log_a_fractional(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let s2 = sigma * sigma;
    let z0 = s2 * (1.0 / q - 1.0).ln() + 0.5;
    let (ln_q, ln_1mq) = (q.ln(), (-q).ln_1p());
    let mut coef = 1.0_f64;
    let mut i = 0u32;
    loop {
        let i_f = f64::from(i);
        if i > 0 {
            coef *= (alpha - i_f + 1.0) / i_f;
        }
        if coef == 0.0 {
            i += 1;
            if i > 1_000_000 {
                break;
            }
            continue;
        }
        let log_coef = coef.abs().ln();
        let j = alpha - i_f;
        let log_t0 = log_coef + i_f * ln_q + j * ln_1mq;
        let log_t1 = log_coef + j * ln_q + i_f * ln_1mq;
        let log_e0 = 0.5_f64.ln() + log_erfc((i_f - z0) / (std::f64::consts::SQRT_2 * sigma));
        let log_e1 = 0.5_f64.ln() + log_erfc((z0 - j) / (std::f64::consts::SQRT_2 * sigma));
        let log_s0 = log_t0 + (i_f * i_f - i_f) / (2.0 * s2) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * s2) + log_e1;
        if coef > 0.0 {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        i += 1;
        if log_s0.max(log_s1) < -30.0 || i > 1_000_000 {
            break;
        }
    }
    log_add(log_a0, log_a1)
}

/// RDP of one step of the Poisson-subsampled Gaussian mechanism at order
/// `alpha` (sampling rate `q`, noise multiplier `sigma`).
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let log_a = if alpha.fract() == 0.0 && alpha <= f64::from(u32::MAX) {
        log_a_integer(q, sigma, alpha as u32)
    } else {
        log_a_fractional(q, sigma, alpha)
    };
    // the exact moment is never below zero; guard the floating point noise
    (log_a / (alpha - 1.0)).max(0.0)
}

fn validate(sigma: f64, q: f64, delta: f64) -> Result<()> {
    if sigma.is_nan() || sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sampling rate must be in (0, 1], got {q}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Epsilon spent at a single order.
fn epsilon_at(alpha: f64, q: f64, sigma: f64, steps: u64, log_inv_delta: f64) -> f64 {
    rdp_subsampled_gaussian(q, sigma, alpha) * steps as f64 + log_inv_delta / (alpha - 1.0)
}

/// (ε, δ) guarantee of `steps` compositions of the subsampled Gaussian.
pub fn account(sigma: f64, q: f64, steps: u64, delta: f64) -> Result<f64> {
    validate(sigma, q, delta)?;
    if steps == 0 {
        return Ok(0.0);
    }
    Ok(account_detailed(sigma, q, steps, delta).epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountantResult {
    pub epsilon: f64,
    pub order: f64,
}

fn account_detailed(sigma: f64, q: f64, steps: u64, delta: f64) -> AccountantResult {
    let log_inv_delta = (1.0 / delta).ln();
    let orders = rdp_orders();
    let eps: Vec<f64> = orders
        .iter()
        .map(|&a| epsilon_at(a, q, sigma, steps, log_inv_delta))
        .collect();
    let (best, &best_eps) = eps
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &f64::INFINITY));
    let mut result = AccountantResult {
        epsilon: best_eps,
        order: orders[best],
    };

    // Any order above 1 yields a valid bound, so refining between the grid
    // neighbours of the best order can only tighten the result.
    let lo = if best > 0 { orders[best - 1] } else { (1.0 + orders[0]) / 2.0 };
    let hi = orders.get(best + 1).copied().unwrap_or(orders[best]);
    if hi > lo {
        let f = |a: f64| epsilon_at(a, q, sigma, steps, log_inv_delta);
        let (a, e) = golden_section(f, lo, hi, 1e-9);
        if e < result.epsilon {
            result = AccountantResult { epsilon: e, order: a };
        }
    }
    result
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Like [`account`], also reporting the optimal order.
pub fn account_with_order(sigma: f64, q: f64, steps: u64, delta: f64) -> Result<AccountantResult> {
    validate(sigma, q, delta)?;
    if steps == 0 {
        return Ok(AccountantResult {
            epsilon: 0.0,
            order: f64::NAN,
        });
    }
    Ok(account_detailed(sigma, q, steps, delta))
}

/// Smallest noise multiplier in [0.3, 100] (to a relative tolerance of 1e-3)
/// whose accounted ε does not exceed `target_epsilon`.
pub fn calibrate_sigma(target_epsilon: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if target_epsilon.is_nan() || target_epsilon <= 0.0 {
        return Err(Error::invalid(format!(
            "target epsilon must be positive, got {target_epsilon}"
        )));
    }
    let (mut lo, mut hi) = SIGMA_BRACKET;
    if account(hi, q, steps, delta)? > target_epsilon {
        return Err(Error::invalid(format!(
            "target epsilon {target_epsilon} unreachable with sigma <= {hi}"
        )));
    }
    if account(lo, q, steps, delta)? <= target_epsilon {
        return Ok(lo);
    }
    // invariant: account(lo) > target >= account(hi)
    while hi > lo * (1.0 + SIGMA_REL_TOL) {
        let mid = (lo * hi).sqrt();
        if account(mid, q, steps, delta)? > target_epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
