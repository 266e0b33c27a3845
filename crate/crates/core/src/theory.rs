//! Sampling theory of the two-trial estimators: exact expectations, limits
//! as the standard errors vanish, and closed-form approximations for
//! well-separated p-value functions.
//!
//! Several estimators are shifted extremes of the trial estimates,
//!
//! ```text
//! Y = max{θ̂₁ − σ₁q, θ̂₂ − σ₂q}      X = min{θ̂₁ + σ₁q, θ̂₂ + σ₂q}
//! ```
//!
//! whose means follow from the moments of the extremes of a bivariate
//! normal vector. [`extreme_for`] gives the `(Y or X, q)` pair for each
//! method.

use thiserror::Error;

use crate::estimate::edgington_median;
use crate::statdist::{raw, Probability};
use crate::trial_model::{Alternative, CombinedMethod, TrialResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("{0}")]
    Unsupported(String),
    #[error("{field} must be {requirement}, got {value}")]
    Invalid { field: &'static str, requirement: &'static str, value: f64 },
}

fn require(field: &'static str, value: f64, ok: bool, requirement: &'static str) -> Result<(), TheoryError> {
    if ok {
        Ok(())
    } else {
        Err(TheoryError::Invalid { field, requirement, value })
    }
}

fn interior(a: Probability) -> Result<f64, TheoryError> {
    require("a", a.value(), a.is_interior(), "strictly inside (0, 1)")?;
    Ok(a.value())
}

/// `c = σ₁²/σ₂²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRatio(f64);

impl VarianceRatio {
    pub fn new(c: f64) -> Result<Self, TheoryError> {
        require("c", c, c > 0.0 && c.is_finite(), "positive and finite")?;
        Ok(VarianceRatio(c))
    }

    pub fn from_std_errs(sigma1: f64, sigma2: f64) -> Result<Self, TheoryError> {
        VarianceRatio::new((sigma1 / sigma2).powi(2))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `θ₁/(1 + c) + θ₂/(1 + 1/c)`, the inverse-variance weighted average.
    pub fn inverse_variance_average(self, theta1: f64, theta2: f64) -> f64 {
        let c = self.0;
        theta1 / (1.0 + c) + theta2 / (1.0 + c.recip())
    }

    /// `θ₁/(1 + √c) + θ₂/(1 + 1/√c)`, the inverse-SE weighted average.
    pub fn inverse_se_average(self, theta1: f64, theta2: f64) -> f64 {
        let r = self.0.sqrt();
        theta1 / (1.0 + r) + theta2 / (1.0 + r.recip())
    }
}

/// Which shifted extreme an estimator is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    /// `max{θ̂ᵢ − σᵢ q}`
    Y,
    /// `min{θ̂ᵢ + σᵢ q}`
    X,
}

/// True effects and standard errors of two trials, with the method, level
/// and orientation of the estimator whose mean is wanted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuery {
    pub method: CombinedMethod,
    pub a: Probability,
    pub alternative: Alternative,
    pub theta1: f64,
    pub theta2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl MomentQuery {
    fn check(&self) -> Result<(), TheoryError> {
        require("theta1", self.theta1, self.theta1.is_finite(), "finite")?;
        require("theta2", self.theta2, self.theta2.is_finite(), "finite")?;
        require("sigma1", self.sigma1, self.sigma1 > 0.0 && self.sigma1.is_finite(), "positive")?;
        require("sigma2", self.sigma2, self.sigma2 > 0.0 && self.sigma2.is_finite(), "positive")?;
        Ok(())
    }
}

/// The extreme and constant `q` representing an estimator. Fisher, Pearson
/// and Edgington (`a ≠ 1/2`) map to their well-separated approximations.
pub fn extreme_for(method: CombinedMethod, a: Probability, alt: Alternative) -> Result<(Extreme, f64), TheoryError> {
    use Alternative::*;
    use Extreme::*;
    let a = interior(a)?;
    let z = raw::norm_quantile;
    let pick = |greater: Extreme| match alt {
        Greater => greater,
        Less => if greater == X { Y } else { X },
    };
    let found = match method {
        CombinedMethod::TwoTrialsRule => (pick(X), z(a.sqrt())),
        CombinedMethod::Tippett => (pick(Y), z((1.0 - a).sqrt())),
        CombinedMethod::Fisher => (pick(Y), -z(fisher_separated_level(a))),
        CombinedMethod::Pearson => (pick(X), -z(pearson_separated_level(a))),
        CombinedMethod::Edgington if a < 0.5 => (pick(X), z((2.0 * a).sqrt())),
        CombinedMethod::Edgington if a > 0.5 => (pick(Y), z((2.0 * (1.0 - a)).sqrt())),
        CombinedMethod::Edgington => {
            return Err(TheoryError::Unsupported(
                "the Edgington median is normal; use expected_estimate_normal".into(),
            ))
        }
        CombinedMethod::MetaAnalysis => {
            return Err(TheoryError::Unsupported(
                "meta-analysis is normal; use expected_estimate_normal".into(),
            ))
        }
    };
    Ok(found)
}

/// `exp{−χ²₄(1 − a)/2}`
fn fisher_separated_level(a: f64) -> f64 {
    (-raw::chisq_quantile(1.0 - a, 4) / 2.0).exp()
}

/// `exp{−χ²₄(a)/2}`
fn pearson_separated_level(a: f64) -> f64 {
    (-raw::chisq_quantile(a, 4) / 2.0).exp()
}

/// Mean of `Y` or `X` when `θ̂ᵢ ~ N(θᵢ, σᵢ²)` independently.
pub fn expected_extreme(ext: Extreme, q: f64, theta1: f64, theta2: f64, sigma1: f64, sigma2: f64) -> f64 {
    let s = sigma1.hypot(sigma2);
    match ext {
        Extreme::Y => {
            let u = (theta1 - theta2 + q * (sigma2 - sigma1)) / s;
            (theta1 - sigma1 * q) * raw::norm_cdf(u) + (theta2 - sigma2 * q) * raw::norm_cdf(-u) + s * raw::norm_pdf(u)
        }
        Extreme::X => {
            let v = (theta2 - theta1 + q * (sigma2 - sigma1)) / s;
            (theta1 + sigma1 * q) * raw::norm_cdf(v) + (theta2 + sigma2 * q) * raw::norm_cdf(-v) - s * raw::norm_pdf(v)
        }
    }
}

/// Expected estimate at level `a`. The Edgington median and meta-analysis
/// are normal and are routed to [`expected_estimate_normal`].
pub fn expected_estimate(query: &MomentQuery) -> Result<f64, TheoryError> {
    query.check()?;
    match query.method {
        CombinedMethod::MetaAnalysis => expected_estimate_normal(
            NormalEstimator::MetaAnalysis,
            query.a,
            query.theta1,
            query.theta2,
            query.sigma1,
            query.sigma2,
            query.alternative,
        ),
        CombinedMethod::Edgington if query.a == Probability::HALF => expected_estimate_normal(
            NormalEstimator::EdgingtonMedian,
            query.a,
            query.theta1,
            query.theta2,
            query.sigma1,
            query.sigma2,
            query.alternative,
        ),
        method => {
            let (ext, q) = extreme_for(method, query.a, query.alternative)?;
            Ok(expected_extreme(ext, q, query.theta1, query.theta2, query.sigma1, query.sigma2))
        }
    }
}

/// Estimators that are linear in the trial estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalEstimator {
    /// `θ̂_MA ± σ_MA z_a`
    MetaAnalysis,
    /// The `1/σ`-weighted average of two trials.
    EdgingtonMedian,
}

/// Mean of a normally distributed estimator: the weighted average of the
/// true effects, shifted by `σ_MA z_a` for meta-analysis (upwards for
/// `greater`). The Edgington median ignores `a` and the orientation.
pub fn expected_estimate_normal(
    method: NormalEstimator,
    a: Probability,
    theta1: f64,
    theta2: f64,
    sigma1: f64,
    sigma2: f64,
    alt: Alternative,
) -> Result<f64, TheoryError> {
    MomentQuery { method: CombinedMethod::MetaAnalysis, a, alternative: alt, theta1, theta2, sigma1, sigma2 }.check()?;
    let c = VarianceRatio::from_std_errs(sigma1, sigma2)?;
    match method {
        NormalEstimator::MetaAnalysis => {
            let a = interior(a)?;
            let se = (sigma1.powi(-2) + sigma2.powi(-2)).sqrt().recip();
            let shift = se * raw::norm_quantile(a);
            let centre = c.inverse_variance_average(theta1, theta2);
            Ok(match alt {
                Alternative::Greater => centre + shift,
                Alternative::Less => centre - shift,
            })
        }
        NormalEstimator::EdgingtonMedian => Ok(c.inverse_se_average(theta1, theta2)),
    }
}

/// Variance of the Edgington median, `2/(1/σ₁ + 1/σ₂)²`.
pub fn edgington_median_variance(sigma1: f64, sigma2: f64) -> f64 {
    2.0 / (sigma1.recip() + sigma2.recip()).powi(2)
}

/// Probability limit of μ̂(a) as both standard errors shrink with their
/// ratio `c` held fixed.
pub fn limiting_mu(
    method: CombinedMethod,
    a: Probability,
    theta1: f64,
    theta2: f64,
    c: VarianceRatio,
    alt: Alternative,
) -> Result<f64, TheoryError> {
    let a = interior(a)?;
    let (lo, hi) = (theta1.min(theta2), theta1.max(theta2));
    // (greater, less)
    let (g, l) = match method {
        CombinedMethod::TwoTrialsRule | CombinedMethod::Pearson => (lo, hi),
        CombinedMethod::Tippett | CombinedMethod::Fisher => (hi, lo),
        CombinedMethod::MetaAnalysis => return Ok(c.inverse_variance_average(theta1, theta2)),
        CombinedMethod::Edgington if a == 0.5 => return Ok(c.inverse_se_average(theta1, theta2)),
        CombinedMethod::Edgington if a < 0.5 => (lo, hi),
        CombinedMethod::Edgington => (hi, lo),
    };
    Ok(match alt {
        Alternative::Greater => g,
        Alternative::Less => l,
    })
}

/// Closed-form approximation to μ̂(a), accurate when one trial's p-value
/// function is near 0 or 1 wherever the other's is changing.
pub fn approx_mu(method: CombinedMethod, trials: &[TrialResult], a: Probability, alt: Alternative) -> Result<f64, TheoryError> {
    let [t1, t2] = trials else {
        return Err(TheoryError::Unsupported(format!(
            "approximations are defined for 2 trials, got {}",
            trials.len()
        )));
    };
    for t in [t1, t2] {
        require("std_err", t.std_err, t.std_err > 0.0 && t.std_err.is_finite(), "positive")?;
        require("estimate", t.estimate, t.estimate.is_finite(), "finite")?;
    }
    if method == CombinedMethod::Edgington && a == Probability::HALF {
        return Ok(edgington_median(t1, t2));
    }
    match method {
        CombinedMethod::Fisher | CombinedMethod::Pearson | CombinedMethod::Edgington => {
            let (ext, q) = extreme_for(method, a, alt)?;
            let value = |t: &TrialResult| match ext {
                Extreme::Y => t.estimate - t.std_err * q,
                Extreme::X => t.estimate + t.std_err * q,
            };
            let (v1, v2) = (value(t1), value(t2));
            Ok(match ext {
                Extreme::Y => v1.max(v2),
                Extreme::X => v1.min(v2),
            })
        }
        other => Err(TheoryError::Unsupported(format!(
            "no well-separated approximation for {other}; its estimation function is exact"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{interval_levels, mu_hat};
    use CombinedMethod::*;

    fn prob(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn t(estimate: f64, std_err: f64) -> TrialResult {
        TrialResult { estimate, std_err }
    }

    fn query(method: CombinedMethod, a: f64, alt: Alternative, th: (f64, f64), s: (f64, f64)) -> MomentQuery {
        MomentQuery { method, a: prob(a), alternative: alt, theta1: th.0, theta2: th.1, sigma1: s.0, sigma2: s.1 }
    }

    #[test]
    fn two_trials_rule_homogeneity_bias() {
        let (theta, sigma) = (0.3, 0.8);
        let e = expected_estimate(&query(TwoTrialsRule, 0.5, Alternative::Greater, (theta, theta), (sigma, sigma))).unwrap();
        let constant = raw::norm_quantile(0.5f64.sqrt()) - std::f64::consts::PI.sqrt().recip();
        assert!(((e - theta) / sigma - constant).abs() < 1e-13);
        assert!((constant - -0.0193).abs() < 1e-4);
        let tip = expected_estimate(&query(Tippett, 0.5, Alternative::Greater, (theta, theta), (sigma, sigma))).unwrap();
        assert!(((tip - theta) / sigma + constant).abs() < 1e-13);
    }

    #[test]
    fn separated_two_trials_rule_follows_smaller_effect() {
        let e = expected_estimate(&query(TwoTrialsRule, 0.5, Alternative::Greater, (0.0, 10.0), (1.0, 1.0))).unwrap();
        assert!((e - 0.544_952_135_617_360_3).abs() < 1e-6, "{e}");
    }

    #[test]
    fn extremes_of_equal_arguments() {
        // Degenerate widths: E max{N(θ,σ²), N(θ,σ²)} = θ + σ/√π.
        let y = expected_extreme(Extreme::Y, 0.0, 1.0, 1.0, 2.0, 2.0);
        assert!((y - (1.0 + 2.0 / std::f64::consts::PI.sqrt())).abs() < 1e-14);
        let x = expected_extreme(Extreme::X, 0.0, 1.0, 1.0, 2.0, 2.0);
        assert!((x - (1.0 - 2.0 / std::f64::consts::PI.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn normal_estimators() {
        let g = Alternative::Greater;
        let m = expected_estimate_normal(NormalEstimator::MetaAnalysis, Probability::HALF, 0.4, 0.4, 0.2, 0.3, g).unwrap();
        assert!((m - 0.4).abs() < 1e-15);
        let e = expected_estimate_normal(NormalEstimator::EdgingtonMedian, Probability::HALF, 0.0, 1.0, 0.3, 0.3, g).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        // c = 2 puts more weight on the second trial.
        let c = VarianceRatio::new(2.0).unwrap();
        assert!(c.inverse_variance_average(0.0, 1.0) > 0.5);
        assert!(c.inverse_se_average(0.0, 1.0) > 0.5);
        // Lower confidence limit for `greater` sits below the centre.
        let lo = expected_estimate_normal(NormalEstimator::MetaAnalysis, prob(0.025), 0.0, 0.0, 1.0, 1.0, g).unwrap();
        assert!((lo - -1.959_963_984_540_054 / 2f64.sqrt()).abs() < 1e-12);
        let lo_less = expected_estimate_normal(NormalEstimator::MetaAnalysis, prob(0.025), 0.0, 0.0, 1.0, 1.0, Alternative::Less).unwrap();
        assert!((lo + lo_less).abs() < 1e-15);
    }

    #[test]
    fn expected_estimate_dispatch() {
        let q = query(Edgington, 0.5, Alternative::Less, (0.0, 1.0), (0.1, 0.2));
        let want = VarianceRatio::from_std_errs(0.1, 0.2).unwrap().inverse_se_average(0.0, 1.0);
        assert!((expected_estimate(&q).unwrap() - want).abs() < 1e-15);
        assert!(expected_estimate(&query(MetaAnalysis, 0.5, Alternative::Less, (0.0, 1.0), (0.1, 0.2))).is_ok());
        let mut bad = query(Fisher, 0.3, Alternative::Less, (0.0, 1.0), (0.1, 0.2));
        bad.sigma2 = 0.0;
        assert!(expected_estimate(&bad).is_err());
        assert!(extreme_for(Edgington, Probability::HALF, Alternative::Less).is_err());
    }

    #[test]
    fn limits() {
        let c = VarianceRatio::new(1.0).unwrap();
        let g = Alternative::Greater;
        let l = Alternative::Less;
        let lim = |m, a, alt| limiting_mu(m, prob(a), 0.0, 1.0, c, alt).unwrap();
        assert_eq!(lim(TwoTrialsRule, 0.5, g), 0.0);
        assert_eq!(lim(TwoTrialsRule, 0.5, l), 1.0);
        assert_eq!(lim(Tippett, 0.5, g), 1.0);
        assert_eq!(lim(Fisher, 0.1, g), 1.0);
        assert_eq!(lim(Pearson, 0.1, g), 0.0);
        assert_eq!(lim(Edgington, 0.025, g), 0.0);
        assert_eq!(lim(Edgington, 0.975, g), 1.0);
        assert_eq!(lim(Edgington, 0.5, g), 0.5);
        assert_eq!(lim(Edgington, 0.025, l), 1.0);
        let c2 = VarianceRatio::new(2.0).unwrap();
        let ma = limiting_mu(MetaAnalysis, prob(0.9), 0.0, 1.0, c2, g).unwrap();
        assert!((ma - 2.0 / 3.0).abs() < 1e-15);
        assert!(VarianceRatio::new(0.0).is_err());
    }

    #[test]
    fn separated_fisher_interval_matches_exact() {
        // Well-separated p-value functions.
        let tr = vec![t(0.3, 0.05), t(0.6, 0.07)];
        let (lo, hi) = interval_levels(0.95);
        for alt in [Alternative::Greater, Alternative::Less] {
            for a in [lo, hi] {
                let approx = approx_mu(Fisher, &tr, a, alt).unwrap();
                let exact = mu_hat(Fisher, &tr, a, alt).unwrap();
                assert!((approx - exact).abs() < 1e-3, "{alt} a={a}: {approx} vs {exact}");
                let approx = approx_mu(Pearson, &tr, a, alt).unwrap();
                let exact = mu_hat(Pearson, &tr, a, alt).unwrap();
                assert!((approx - exact).abs() < 1e-3, "pearson {alt} a={a}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn edgington_approximation() {
        let tr = vec![t(0.3, 0.05), t(0.6, 0.07)];
        let med = approx_mu(Edgington, &tr, Probability::HALF, Alternative::Greater).unwrap();
        assert_eq!(med, edgington_median(&tr[0], &tr[1]));
        let (lo, hi) = interval_levels(0.95);
        for alt in [Alternative::Greater, Alternative::Less] {
            let x = approx_mu(Edgington, &tr, lo, alt).unwrap();
            let y = approx_mu(Edgington, &tr, hi, alt).unwrap();
            let (lower, upper) = (x.min(y), x.max(y));
            assert!(lower < 0.3 && upper > 0.6, "{alt}: ({lower}, {upper})");
            for a in [lo, hi] {
                let exact = mu_hat(Edgington, &tr, a, alt).unwrap();
                assert!((approx_mu(Edgington, &tr, a, alt).unwrap() - exact).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn approximation_improves_as_standard_errors_shrink() {
        let grid: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
        for m in [Fisher, Pearson, Edgington] {
            for alt in [Alternative::Greater, Alternative::Less] {
                let mut prev = f64::INFINITY;
                for scale in [1.0, 0.5, 0.25, 0.125] {
                    let tr = vec![t(0.0, 0.2 * scale), t(1.0, 0.3 * scale)];
                    let worst = grid
                        .iter()
                        .map(|&a| {
                            let a = prob(a);
                            (approx_mu(m, &tr, a, alt).unwrap() - mu_hat(m, &tr, a, alt).unwrap()).abs()
                        })
                        .fold(0.0, f64::max);
                    assert!(worst < prev, "{m} {alt} scale {scale}: {worst} !< {prev}");
                    prev = worst;
                }
            }
        }
    }

    #[test]
    fn approximation_rejects_other_methods() {
        let tr = vec![t(0.3, 0.05), t(0.6, 0.07)];
        assert!(approx_mu(MetaAnalysis, &tr, prob(0.3), Alternative::Greater).is_err());
        assert!(approx_mu(Fisher, &tr[..1], prob(0.3), Alternative::Greater).is_err());
    }
}
