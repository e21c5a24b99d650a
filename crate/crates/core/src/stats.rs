//! Scalar statistical primitives used by the certifiers.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};

/// Overall confidence budget `alpha` and per-pixel certification threshold `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceConfig {
    alpha: f64,
    tau: f64,
}

impl SignificanceConfig {
    pub fn new(alpha: f64, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(0.5..1.0).contains(&tau) {
            return Err(Error::domain(format!(
                "tau must lie in [0.5, 1), got {tau}"
            )));
        }
        Ok(Self { alpha, tau })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Outcome of a family-wise multiple-testing correction.
///
/// `reject[i]` is true when hypothesis `i` is rejected, i.e. pixel `i` is
/// certified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HolmDecision {
    pub reject: Vec<bool>,
}

impl HolmDecision {
    pub fn rejected_count(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }

    pub fn len(&self) -> usize {
        self.reject.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reject.is_empty()
    }
}

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation for the normal quantile (relative error
// below 1.15e-9), refined by Halley steps against the erfc-based CDF.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    let (a, b, c, d) = (&ACKLAM_A, &ACKLAM_B, &ACKLAM_C, &ACKLAM_D);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    }
}

/// Inverse of the standard normal CDF.
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "gaussian quantile needs p in (0, 1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = acklam(p);
    for _ in 0..2 {
        // Work on the smaller tail so the residual keeps relative precision.
        let e = if x < 0.0 {
            gaussian_cdf(x) - p
        } else {
            (1.0 - p) - gaussian_cdf(-x)
        };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// `sigma * Φ⁻¹(p)`. Non-positive values mean "no certificate".
pub fn certified_radius(sigma: f64, p: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(sigma * gaussian_quantile(p)?)
}

fn ln_choose(ln_n_fact: f64, n: u64, k: u64) -> f64 {
    ln_n_fact - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `P[Bin(trials, p) >= successes]` for `p` in the closed unit interval.
fn upper_tail(successes: u64, trials: u64, p: f64) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_n_fact = libm::lgamma(trials as f64 + 1.0);
    let log_pmf =
        |j: u64| ln_choose(ln_n_fact, trials, j) + j as f64 * ln_p + (trials - j) as f64 * ln_q;
    // Sum whichever side of the mean is smaller and complement if needed, so
    // tails close to 1 keep full absolute precision.
    if (successes as f64) <= trials as f64 * p {
        1.0 - log_sum_exp((0..successes).map(log_pmf)).min(1.0)
    } else {
        log_sum_exp((successes..=trials).map(log_pmf)).min(1.0)
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return 0.0;
    }
    peak.exp() * terms.iter().map(|&l| (l - peak).exp()).sum::<f64>()
}

/// One-sided p-value for the null `p_i <= tau`: `P[Bin(trials, tau) >= successes]`.
///
/// Terms are formed with log-gamma and summed relative to the largest one, so
/// individual pmf terms never underflow.
pub fn binomial_tail_pvalue(successes: u64, trials: u64, tau: f64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("binomial test needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::domain(format!(
            "successes ({successes}) exceed trials ({trials})"
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    Ok(upper_tail(successes, trials, tau))
}

/// One-sided exact (Clopper-Pearson) lower confidence bound on a binomial
/// proportion at level `1 - alpha`.
///
/// Found by bisection on [`binomial_tail_pvalue`]'s tail: the largest `p` with
/// `P[Bin(trials, p) >= successes] <= alpha`, to within 1e-12.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("confidence bound needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::domain(format!(
            "successes ({successes}) exceed trials ({trials})"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if successes == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if upper_tail(successes, trials, mid) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Holm step-down correction controlling the family-wise error rate at `alpha`.
///
/// Hypotheses are ranked by `(p-value, original index)`; the hypothesis of
/// rank `k` (1-based) is compared against `alpha / (N - k + 1)` and rejection
/// stops at the first failure.
pub fn holm_correct(pvalues: &[f64], alpha: f64) -> Result<HolmDecision> {
    if pvalues.is_empty() {
        return Err(Error::domain("Holm correction needs at least one p-value"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if let Some((i, p)) = pvalues
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::domain(format!("p-value {i} is outside [0, 1]: {p}")));
    }

    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // sort_by is stable, so ties keep index order.
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));

    let mut reject = vec![false; n];
    for (rank, &idx) in order.iter().enumerate() {
        if pvalues[idx] > alpha / (n - rank) as f64 {
            break;
        }
        reject[idx] = true;
    }
    Ok(HolmDecision { reject })
}
