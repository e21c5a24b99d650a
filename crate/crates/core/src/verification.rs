//! Independent oracles and the family-wise error simulation.
//!
//! The oracles here deliberately avoid the code paths they check:
//! [`pvalue_bruteforce`] sums exact binomial coefficients instead of
//! log-gamma terms, and [`holm_bruteforce`] evaluates the step-down rule
//! pairwise without sorting.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};
use crate::models::{OracleChannelModel, OracleChannelSpec};
use crate::seed;
use crate::smoothing::{Engine, SmoothingConfig};
use crate::stats::HolmDecision;

/// Largest `n` accepted by [`pvalue_bruteforce`].
pub const BRUTEFORCE_MAX_TRIALS: u64 = 64;
/// Largest family accepted by [`holm_bruteforce`].
pub const BRUTEFORCE_MAX_HYPOTHESES: usize = 20;

fn binomial_coefficient(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `P[Bin(n, tau) >= k]` by direct summation with exact coefficients and
/// compensated accumulation.
pub fn pvalue_bruteforce(k: u64, n: u64, tau: f64) -> Result<f64> {
    if n > BRUTEFORCE_MAX_TRIALS {
        return Err(Error::domain(format!(
            "brute-force p-values support n <= {BRUTEFORCE_MAX_TRIALS}, got {n}"
        )));
    }
    if k > n || !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!(
            "invalid arguments k = {k}, n = {n}, tau = {tau}"
        )));
    }
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for j in k..=n {
        let term = binomial_coefficient(n, j) as f64
            * tau.powi(j as i32)
            * (1.0 - tau).powi((n - j) as i32);
        // Neumaier summation.
        let t = sum + term;
        if sum.abs() >= term.abs() {
            carry += (sum - t) + term;
        } else {
            carry += (term - t) + sum;
        }
        sum = t;
    }
    Ok((sum + carry).min(1.0))
}

/// Holm's rule evaluated from its definition.
///
/// Hypothesis `i` is rejected iff every hypothesis ranked at or before it
/// (ordering by p-value, then index) satisfies `p <= alpha / (N - rank + 1)`.
pub fn holm_bruteforce(pvalues: &[f64], alpha: f64) -> Result<HolmDecision> {
    let n = pvalues.len();
    if n > BRUTEFORCE_MAX_HYPOTHESES {
        return Err(Error::domain(format!(
            "brute-force Holm supports N <= {BRUTEFORCE_MAX_HYPOTHESES}, got {n}"
        )));
    }
    let precedes =
        |a: usize, b: usize| pvalues[a] < pvalues[b] || (pvalues[a] == pvalues[b] && a < b);
    let rank = |i: usize| 1 + (0..n).filter(|&j| precedes(j, i)).count();
    let passes = |i: usize| pvalues[i] <= alpha / (n - rank(i) + 1) as f64;
    let reject = (0..n)
        .map(|i| passes(i) && (0..n).filter(|&j| precedes(j, i)).all(passes))
        .collect();
    Ok(HolmDecision { reject })
}

/// One family-wise error experiment on a `1 x pixels` oracle channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwerRunSpec {
    pub pixels: usize,
    pub n: usize,
    pub n0: usize,
    pub tau: f64,
    pub alpha: f64,
    pub p_true: f64,
    pub num_classes: usize,
    pub trials: usize,
    pub seed: u64,
}

impl FwerRunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 100 {
            return Err(Error::domain(format!(
                "need at least 100 trials, got {}",
                self.trials
            )));
        }
        if self.pixels == 0 {
            return Err(Error::domain("need at least one pixel"));
        }
        if self.num_classes < 2 {
            return Err(Error::domain("need at least 2 classes"));
        }
        // Every class must satisfy the null, including the wrong ones, which
        // share 1 - p_true evenly.
        let wrong = (1.0 - self.p_true) / (self.num_classes - 1) as f64;
        if !(0.0..=1.0).contains(&self.p_true) || self.p_true > self.tau || wrong > self.tau {
            return Err(Error::domain(format!(
                "p_true = {} with {} classes is not a null configuration for tau = {}",
                self.p_true, self.num_classes, self.tau
            )));
        }
        SmoothingConfig::new(0.0, self.n0, self.n, self.alpha, self.tau)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub certified: usize,
    pub min_pvalue: f64,
}

impl TrialOutcome {
    pub fn is_error(&self) -> bool {
        self.certified > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwerReport {
    pub trials: usize,
    pub errors: usize,
    pub rate: f64,
    /// Binomial standard error of `rate` under the nominal `alpha`.
    pub std_error: f64,
    pub per_trial: Vec<TrialOutcome>,
}

impl FwerReport {
    /// `alpha + 3 * sqrt(alpha (1 - alpha) / trials)`.
    pub fn tolerance(alpha: f64, trials: usize) -> f64 {
        alpha + 3.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt()
    }
}

fn run_trial(spec: &FwerRunSpec, trial: usize) -> Result<TrialOutcome> {
    let gt = LabelMap::filled(1, spec.pixels, Some(0));
    let channel = OracleChannelSpec::uniform(spec.p_true, gt, spec.num_classes)?;
    let trial_seed = seed::derive(spec.seed, &[trial as u64]);
    let model = OracleChannelModel::new(channel, seed::derive(trial_seed, &[0]));
    let config = SmoothingConfig::new(0.0, spec.n0, spec.n, spec.alpha, spec.tau)?
        .with_seed(seed::derive(trial_seed, &[1]));
    let image = Image::filled(1, spec.pixels, 1, 0.5);
    let result = Engine::new(&model)
        .sequential()
        .seg_certify(&image, &config)?;
    Ok(TrialOutcome {
        trial,
        certified: result.labels.len() - result.labels.abstain_count(),
        min_pvalue: result.pvalues.iter().copied().fold(1.0, f64::min),
    })
}

/// Run `trials` independent certifications where no class beats `tau`, and
/// count the trials that certify anything.
pub fn fwer_simulate(spec: &FwerRunSpec) -> Result<FwerReport> {
    spec.validate()?;
    let per_trial = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t))
        .collect::<Result<Vec<_>>>()?;
    let errors = per_trial.iter().filter(|o| o.is_error()).count();
    let trials = spec.trials;
    Ok(FwerReport {
        trials,
        errors,
        rate: errors as f64 / trials as f64,
        std_error: (spec.alpha * (1.0 - spec.alpha) / trials as f64).sqrt(),
        per_trial,
    })
}
