//! Combined estimation functions μ̂(a) = {μ : p(μ) = a}, and the assembly of
//! median estimates, confidence intervals and p-values into an
//! [`AnalysisResult`].
//!
//! Two-trials rule, meta-analysis and Tippett have closed forms for any
//! number of trials. Edgington's median has one for two trials. Everything
//! else is found by Brent's method on the combined p-value function.

use rayon::prelude::*;
use thiserror::Error;

use crate::combine::{self, pooled, CombineError, PValueFunction};
use crate::root::{self, RootError, Tolerance};
use crate::statdist::{raw, DomainError, Probability};
use crate::trial_model::{
    AnalysisRequest, AnalysisResult, Alternative, CombinedMethod, Interval, MethodResult, TrialResult,
    TrialSummary,
};

/// Number of times the initial bracket may be doubled.
pub const MAX_BRACKET_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Combine(#[from] CombineError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("level a must lie strictly inside (0, 1), got {0}")]
    NotInterior(f64),
    #[error("{method}: cannot invert p-value function at a = {a}: {source}")]
    Inversion {
        method: CombinedMethod,
        a: f64,
        #[source]
        source: RootError,
    },
}

/// Solve `p(μ) = a` for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationQuery {
    pub method: CombinedMethod,
    pub a: Probability,
    pub trials: Vec<TrialResult>,
    pub alternative: Alternative,
}

impl EstimationQuery {
    pub fn solve(&self) -> Result<f64, EstimateError> {
        mu_hat(self.method, &self.trials, self.a, self.alternative)
    }
}

fn interior(a: Probability) -> Result<f64, EstimateError> {
    if a.is_interior() {
        Ok(a.value())
    } else {
        Err(EstimateError::NotInterior(a.value()))
    }
}

fn checked(trials: &[TrialResult], a: Probability) -> Result<f64, EstimateError> {
    combine::check_trials(trials)?;
    interior(a)
}

/// Dispatches to the method's estimation function.
pub fn mu_hat(method: CombinedMethod, trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    match method {
        CombinedMethod::TwoTrialsRule => mu_2tr(trials, a, alt),
        CombinedMethod::MetaAnalysis => mu_ma(trials, a, alt),
        CombinedMethod::Tippett => mu_tippett(trials, a, alt),
        CombinedMethod::Fisher => mu_fisher(trials, a, alt),
        CombinedMethod::Pearson => mu_pearson(trials, a, alt),
        CombinedMethod::Edgington => mu_edgington(trials, a, alt),
    }
}

/// `min{θ̂ᵢ + σᵢ z_{a^{1/k}}}` for `greater`, `max{θ̂ᵢ − σᵢ z_{a^{1/k}}}` for
/// `less`. Ties give the same value either way.
pub fn mu_2tr(trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    let a = checked(trials, a)?;
    let z = raw::norm_quantile((a.ln() / trials.len() as f64).exp());
    Ok(shifted_extreme(trials, z, alt, Extreme::Inner))
}

/// `max{θ̂ᵢ − σᵢ z_{(1−a)^{1/k}}}` for `greater`,
/// `min{θ̂ᵢ + σᵢ z_{(1−a)^{1/k}}}` for `less`.
pub fn mu_tippett(trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    let a = checked(trials, a)?;
    let z = raw::norm_quantile(((-a).ln_1p() / trials.len() as f64).exp());
    Ok(shifted_extreme(trials, -z, alt, Extreme::Outer))
}

#[derive(Clone, Copy)]
enum Extreme {
    /// min for `greater`, max for `less`
    Inner,
    /// max for `greater`, min for `less`
    Outer,
}

/// `ext{θ̂ᵢ ± σᵢ z}`, with `+` for `greater` and `−` for `less`.
fn shifted_extreme(trials: &[TrialResult], z: f64, alt: Alternative, ext: Extreme) -> f64 {
    let sign = match alt {
        Alternative::Greater => 1.0,
        Alternative::Less => -1.0,
    };
    let values = trials.iter().map(|t| t.estimate + sign * t.std_err * z);
    let take_min = matches!(
        (ext, alt),
        (Extreme::Inner, Alternative::Greater) | (Extreme::Outer, Alternative::Less)
    );
    if take_min {
        values.fold(f64::INFINITY, f64::min)
    } else {
        values.fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `θ̂_MA + σ_MA z_a` for `greater`, `θ̂_MA − σ_MA z_a` for `less`.
pub fn mu_ma(trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    let a = checked(trials, a)?;
    let (est, se) = pooled(trials);
    let z = raw::norm_quantile(a);
    Ok(match alt {
        Alternative::Greater => est + se * z,
        Alternative::Less => est - se * z,
    })
}

pub fn mu_fisher(trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    checked(trials, a)?;
    invert_pfun(&PValueFunction::new(CombinedMethod::Fisher, trials.to_vec(), alt)?, a)
}

pub fn mu_pearson(trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    checked(trials, a)?;
    invert_pfun(&PValueFunction::new(CombinedMethod::Pearson, trials.to_vec(), alt)?, a)
}

/// The median of two trials is the closed-form `1/σ`-weighted average; all
/// other cases are solved numerically.
pub fn mu_edgington(trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
    checked(trials, a)?;
    if let [t1, t2] = trials {
        if a == Probability::HALF {
            return Ok(edgington_median(t1, t2));
        }
    }
    invert_pfun(&PValueFunction::new(CombinedMethod::Edgington, trials.to_vec(), alt)?, a)
}

/// `(θ̂₁/σ₁ + θ̂₂/σ₂) / (1/σ₁ + 1/σ₂)`
pub fn edgington_median(t1: &TrialResult, t2: &TrialResult) -> f64 {
    let (w1, w2) = (t1.std_err.recip(), t2.std_err.recip());
    (t1.estimate * w1 + t2.estimate * w2) / (w1 + w2)
}

/// Solves `p(μ) = a` by Brent's method. The search starts on
/// `[min θ̂ᵢ − 10 max σᵢ, max θ̂ᵢ + 10 max σᵢ]` and doubles the bracket
/// until the sign changes.
pub fn invert_pfun(pfun: &PValueFunction, a: Probability) -> Result<f64, EstimateError> {
    let a = interior(a)?;
    let trials = pfun.trials();
    let lo = trials.iter().map(|t| t.estimate).fold(f64::INFINITY, f64::min);
    let hi = trials.iter().map(|t| t.estimate).fold(f64::NEG_INFINITY, f64::max);
    let pad = 10.0 * trials.iter().map(|t| t.std_err).fold(0.0, f64::max);
    let mut g = |mu: f64| pfun.residual(mu, a);
    let fail = |source| EstimateError::Inversion { method: pfun.method(), a, source };
    let (lo, hi, g_lo, g_hi) = root::expand_bracket(&mut g, lo - pad, hi + pad, MAX_BRACKET_DOUBLINGS).map_err(fail)?;
    root::brent(&mut g, lo, hi, g_lo, g_hi, Tolerance::default()).map_err(fail)
}

/// The `a` values whose estimates bound a two-sided interval at `level`.
pub fn interval_levels(level: f64) -> (Probability, Probability) {
    (
        Probability::clamped((1.0 - level) / 2.0),
        Probability::clamped((1.0 + level) / 2.0),
    )
}

/// Median estimate, intervals at every level and p-value at `null_value`
/// for one method.
pub fn method_result(
    method: CombinedMethod,
    trials: &[TrialResult],
    alternative: Alternative,
    levels: &[f64],
    null_value: f64,
) -> Result<MethodResult, EstimateError> {
    let median_estimate = mu_hat(method, trials, Probability::HALF, alternative)?;
    let mut intervals = Vec::with_capacity(levels.len());
    for &level in levels {
        let (a_lo, a_hi) = interval_levels(level);
        let x = mu_hat(method, trials, a_lo, alternative)?;
        let y = mu_hat(method, trials, a_hi, alternative)?;
        intervals.push(Interval { level, lower: x.min(y), upper: x.max(y) });
    }
    let p_at_null = PValueFunction::new(method, trials.to_vec(), alternative)?.eval(null_value)?;
    Ok(MethodResult { method, median_estimate, intervals, p_at_null })
}

/// Wald intervals and one-sided p-value for a single trial.
pub fn trial_summary(label: String, trial: &TrialResult, alternative: Alternative, levels: &[f64], null_value: f64) -> Result<TrialSummary, EstimateError> {
    let intervals = levels
        .iter()
        .map(|&level| {
            let z = raw::norm_quantile(interval_levels(level).1.value());
            Interval { level, lower: trial.estimate - z * trial.std_err, upper: trial.estimate + z * trial.std_err }
        })
        .collect();
    Ok(TrialSummary {
        label,
        estimate: trial.estimate,
        std_err: trial.std_err,
        intervals,
        p_at_null: combine::p_one_sided(trial, null_value, alternative)?,
    })
}

/// Runs every method on a validated request.
pub fn analyze(request: &AnalysisRequest) -> Result<AnalysisResult, EstimateError> {
    analyze_methods(request, &CombinedMethod::ALL)
}

/// Runs the given methods on a validated request. Methods are evaluated in
/// parallel; the result order follows `methods`.
pub fn analyze_methods(request: &AnalysisRequest, methods: &[CombinedMethod]) -> Result<AnalysisResult, EstimateError> {
    let AnalysisRequest { trials, null_value, alternative, levels } = request;
    let individual = trials
        .iter()
        .enumerate()
        .map(|(i, t)| trial_summary(format!("Trial {}", i + 1), t, *alternative, levels, *null_value))
        .collect::<Result<Vec<_>, _>>()?;
    let combined = methods
        .par_iter()
        .map(|&m| method_result(m, trials, *alternative, levels, *null_value))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnalysisResult { request: request.clone(), individual, combined })
}

/// Closed-form estimation functions when every trial reports the same
/// estimate `θ̂` and standard error `σ`.
pub mod identical {
    use super::*;

    fn signed(theta: f64, sigma: f64, z: f64, alt: Alternative) -> f64 {
        match alt {
            Alternative::Greater => theta + sigma * z,
            Alternative::Less => theta - sigma * z,
        }
    }

    /// `θ̂ ± σ z_{exp{−χ²_{2k}(1−a)/(2k)}}`, plus for `greater`.
    pub fn fisher(theta: f64, sigma: f64, k: u32, a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
        let a = interior(a)?;
        let df = 2 * k;
        let x = raw::chisq_quantile(1.0 - a, df);
        let z = raw::norm_quantile((-x / df as f64).exp());
        Ok(signed(theta, sigma, z, alt))
    }

    /// `θ̂ ∓ σ z_{exp{−χ²_{2k}(a)/(2k)}}`, minus for `greater`.
    pub fn pearson(theta: f64, sigma: f64, k: u32, a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
        let a = interior(a)?;
        let df = 2 * k;
        let x = raw::chisq_quantile(a, df);
        let z = raw::norm_quantile((-x / df as f64).exp());
        Ok(signed(theta, sigma, -z, alt))
    }

    /// Two trials: `θ̂ + σ z_{√(a/2)}` for `a ≤ 1/2` and
    /// `θ̂ − σ z_{√((1−a)/2)}` above, signs swapped for `less`.
    pub fn edgington(theta: f64, sigma: f64, a: Probability, alt: Alternative) -> Result<f64, EstimateError> {
        let a = interior(a)?;
        let z = if a <= 0.5 {
            raw::norm_quantile((a / 2.0).sqrt())
        } else {
            -raw::norm_quantile(((1.0 - a) / 2.0).sqrt())
        };
        Ok(signed(theta, sigma, z, alt))
    }
}
