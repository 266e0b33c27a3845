//! One-sided p-value functions of individual trials and the six ways of
//! combining them.
//!
//! Every trial enters through its oriented z-statistic
//! `w = ±(θ̂ − μ)/σ` (plus for `greater`, minus for `less`), so that
//! `p = 1 − Φ(w)` and `1 − p = Φ(w)` in both orientations. Logs of `p` and
//! `1 − p` come straight from the log-survival function, which keeps
//! Fisher and Pearson accurate far into the tails.
//!
//! With two trials the closed forms in [`pair`] are used; otherwise the
//! general-k forms in [`general`].

use thiserror::Error;

use crate::statdist::{check_irwin_hall_k, raw, DomainError, Probability};
use crate::trial_model::{Alternative, CombinedMethod, CurveGrid, CurveSeries, TrialResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CombineError {
    #[error("null value must be finite, got {0}")]
    NonFiniteMu(f64),
    #[error("at least 2 trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("trial {index}: std_err must be positive and estimate finite")]
    InvalidTrial { index: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("grid: {0}")]
    Grid(String),
}

#[inline]
pub(crate) fn oriented_z(trial: &TrialResult, mu: f64, alt: Alternative) -> f64 {
    let z = (trial.estimate - mu) / trial.std_err;
    match alt {
        Alternative::Greater => z,
        Alternative::Less => -z,
    }
}

fn check_mu(mu: f64) -> Result<(), CombineError> {
    if mu.is_finite() {
        Ok(())
    } else {
        Err(CombineError::NonFiniteMu(mu))
    }
}

pub(crate) fn check_trials(trials: &[TrialResult]) -> Result<(), CombineError> {
    if trials.len() < 2 {
        return Err(CombineError::TooFewTrials(trials.len()));
    }
    for (index, t) in trials.iter().enumerate() {
        if !t.estimate.is_finite() || !(t.std_err > 0.0) || !t.std_err.is_finite() {
            return Err(CombineError::InvalidTrial { index });
        }
    }
    Ok(())
}

/// One-sided p-value of a single trial at null value `mu`.
pub fn p_one_sided(trial: &TrialResult, mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    check_mu(mu)?;
    if !trial.estimate.is_finite() || !(trial.std_err > 0.0) || !trial.std_err.is_finite() {
        return Err(CombineError::InvalidTrial { index: 0 });
    }
    Ok(Probability::clamped(raw::norm_sf(oriented_z(trial, mu, alt))))
}

/// Two-sided transform `2·min{p, 1 − p}`.
pub fn centrality(p: Probability) -> Probability {
    let p = p.value();
    Probability::clamped(2.0 * p.min(1.0 - p))
}

/// Two-trials rule: `max(pᵢ)^k`.
pub fn p_2tr(trials: &[TrialResult], mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    eval_checked(CombinedMethod::TwoTrialsRule, trials, mu, alt)
}

/// Fixed-effect meta-analysis, i.e. Stouffer with weights `1/σᵢ`.
pub fn p_ma(trials: &[TrialResult], mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    eval_checked(CombinedMethod::MetaAnalysis, trials, mu, alt)
}

/// Tippett: `1 − (1 − min pᵢ)^k`.
pub fn p_tippett(trials: &[TrialResult], mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    eval_checked(CombinedMethod::Tippett, trials, mu, alt)
}

/// Fisher: upper tail of `−2 Σ log pᵢ` under χ²(2k).
pub fn p_fisher(trials: &[TrialResult], mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    eval_checked(CombinedMethod::Fisher, trials, mu, alt)
}

/// Pearson: lower tail of `−2 Σ log(1 − pᵢ)` under χ²(2k).
pub fn p_pearson(trials: &[TrialResult], mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    eval_checked(CombinedMethod::Pearson, trials, mu, alt)
}

/// Edgington: Irwin–Hall CDF of `Σ pᵢ` with `k` summands.
pub fn p_edgington(trials: &[TrialResult], mu: f64, alt: Alternative) -> Result<Probability, CombineError> {
    eval_checked(CombinedMethod::Edgington, trials, mu, alt)
}

fn eval_checked(
    method: CombinedMethod,
    trials: &[TrialResult],
    mu: f64,
    alt: Alternative,
) -> Result<Probability, CombineError> {
    check_trials(trials)?;
    check_method_k(method, trials.len())?;
    check_mu(mu)?;
    Ok(Probability::clamped(eval_unchecked(method, trials, mu, alt)))
}

fn check_method_k(method: CombinedMethod, k: usize) -> Result<(), CombineError> {
    if method == CombinedMethod::Edgington {
        check_irwin_hall_k(u32::try_from(k).unwrap_or(u32::MAX))?;
    }
    Ok(())
}

pub(crate) fn eval_unchecked(method: CombinedMethod, trials: &[TrialResult], mu: f64, alt: Alternative) -> f64 {
    if let [a, b] = trials {
        let w = [oriented_z(a, mu, alt), oriented_z(b, mu, alt)];
        return pair::combine(method, w, [a.std_err, b.std_err]);
    }
    let w: Vec<f64> = trials.iter().map(|t| oriented_z(t, mu, alt)).collect();
    let se: Vec<f64> = trials.iter().map(|t| t.std_err).collect();
    general::combine(method, &w, &se)
}

/// Inverse-variance pooled estimate and its standard error.
pub fn pooled(trials: &[TrialResult]) -> (f64, f64) {
    let mut sum_w = 0.0;
    let mut sum_wt = 0.0;
    for t in trials {
        let w = 1.0 / (t.std_err * t.std_err);
        sum_w += w;
        sum_wt += w * t.estimate;
    }
    (sum_wt / sum_w, sum_w.sqrt().recip())
}

/// A combined p-value function μ ↦ p(μ) with its trials and orientation
/// fixed. Construction validates the trials once.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueFunction {
    method: CombinedMethod,
    trials: Vec<TrialResult>,
    alternative: Alternative,
}

impl PValueFunction {
    pub fn new(method: CombinedMethod, trials: Vec<TrialResult>, alternative: Alternative) -> Result<Self, CombineError> {
        check_trials(&trials)?;
        check_method_k(method, trials.len())?;
        Ok(PValueFunction { method, trials, alternative })
    }

    pub fn method(&self) -> CombinedMethod {
        self.method
    }

    pub fn trials(&self) -> &[TrialResult] {
        &self.trials
    }

    pub fn alternative(&self) -> Alternative {
        self.alternative
    }

    pub fn eval(&self, mu: f64) -> Result<Probability, CombineError> {
        check_mu(mu)?;
        Ok(Probability::clamped(self.eval_raw(mu)))
    }

    pub(crate) fn eval_raw(&self, mu: f64) -> f64 {
        eval_unchecked(self.method, &self.trials, mu, self.alternative)
    }

    /// A function of μ with the sign of `p(μ) − a` and the same root,
    /// used for inversion. Plain `p(μ) − a` except where `p` is flat in
    /// floating point while the root is still determined.
    pub(crate) fn residual(&self, mu: f64, a: f64) -> f64 {
        if let (CombinedMethod::Edgington, [t1, t2]) = (self.method, self.trials.as_slice()) {
            let w = [oriented_z(t1, mu, self.alternative), oriented_z(t2, mu, self.alternative)];
            if let Some(r) = pair::edgington_residual(w, a) {
                return r;
            }
        }
        self.eval_raw(mu) - a
    }
}

/// Evaluates individual and combined p-value functions on `mu_grid`.
/// Trials are named `trial1`, `trial2`, ...; methods by their key.
pub fn tabulate(
    trials: &[TrialResult],
    alternative: Alternative,
    methods: &[CombinedMethod],
    mu_grid: Vec<f64>,
) -> Result<CurveGrid, CombineError> {
    check_trials(trials)?;
    if mu_grid.is_empty() {
        return Err(CombineError::Grid("grid is empty".into()));
    }
    if let Some(bad) = mu_grid.iter().find(|m| !m.is_finite()) {
        return Err(CombineError::NonFiniteMu(*bad));
    }
    if mu_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CombineError::Grid("grid must be strictly increasing".into()));
    }
    let series_of = |name: String, f: &dyn Fn(f64) -> f64| {
        let p: Vec<f64> = mu_grid.iter().map(|&mu| Probability::clamped(f(mu)).value()).collect();
        let c = p.iter().map(|&x| centrality(Probability::clamped(x)).value()).collect();
        CurveSeries { name, p_one_sided: p, centrality: c }
    };
    let mut series = Vec::new();
    for (i, t) in trials.iter().enumerate() {
        series.push(series_of(format!("trial{}", i + 1), &|mu| raw::norm_sf(oriented_z(t, mu, alternative))));
    }
    for &m in methods {
        let f = PValueFunction::new(m, trials.to_vec(), alternative)?;
        series.push(series_of(m.key().to_string(), &|mu| f.eval_raw(mu)));
    }
    Ok(CurveGrid { mu_grid, alternative, series })
}

/// Closed forms for two trials, written in terms of the oriented
/// z-statistics `w₁, w₂`.
pub mod pair {
    use super::*;

    pub fn combine(method: CombinedMethod, w: [f64; 2], se: [f64; 2]) -> f64 {
        match method {
            CombinedMethod::TwoTrialsRule => two_trials_rule(w),
            CombinedMethod::MetaAnalysis => meta_analysis(w, se),
            CombinedMethod::Tippett => tippett(w),
            CombinedMethod::Fisher => fisher(w),
            CombinedMethod::Pearson => pearson(w),
            CombinedMethod::Edgington => edgington(w),
        }
    }

    /// `max{p₁, p₂}²`
    pub fn two_trials_rule(w: [f64; 2]) -> f64 {
        raw::norm_sf(w[0].min(w[1])).powi(2)
    }

    /// `Z_MA = (w₁/σ₁ + w₂/σ₂)/√(1/σ₁² + 1/σ₂²)`, `p = 1 − Φ(Z_MA)`.
    pub fn meta_analysis(w: [f64; 2], se: [f64; 2]) -> f64 {
        let z = (w[0] / se[0] + w[1] / se[1]) / (se[0].powi(-2) + se[1].powi(-2)).sqrt();
        raw::norm_sf(z)
    }

    /// `1 − (1 − min{p₁, p₂})²`
    pub fn tippett(w: [f64; 2]) -> f64 {
        -(2.0 * raw::log_norm_cdf(w[0].max(w[1]))).exp_m1()
    }

    /// `Pr(χ²₄ > F)` with `F = −2 log(p₁p₂)`, which is `p₁p₂(1 − log p₁p₂)`.
    pub fn fisher(w: [f64; 2]) -> f64 {
        let y = -(raw::log_norm_sf(w[0]) + raw::log_norm_sf(w[1]));
        if y < 0.5 {
            1.0 - gamma2_lower(y)
        } else {
            (-y).exp() * (1.0 + y)
        }
    }

    /// `Pr(χ²₄ ≤ K)` with `K = −2 log{(1 − p₁)(1 − p₂)}`.
    pub fn pearson(w: [f64; 2]) -> f64 {
        let y = -(raw::log_norm_cdf(w[0]) + raw::log_norm_cdf(w[1]));
        gamma2_lower(y)
    }

    /// `E²/2` for `E = p₁ + p₂ ≤ 1`, else `1 − (2 − E)²/2`, with `2 − E`
    /// taken as `(1 − p₁) + (1 − p₂)` to avoid cancellation.
    pub fn edgington(w: [f64; 2]) -> f64 {
        let e = raw::norm_sf(w[0]) + raw::norm_sf(w[1]);
        if e <= 1.0 {
            0.5 * e * e
        } else {
            let r = raw::norm_cdf(w[0]) + raw::norm_cdf(w[1]);
            1.0 - 0.5 * r * r
        }
    }

    /// For `a` near ½, where two separated trials leave `p` stuck at ½
    /// over a whole range of μ. With `E = p₁ + p₂`, `p = a` iff
    /// `E − 1 = δ(a)`, and `E − 1 = (1 − Φ(w₁)) − Φ(w₂)`; the two sides are
    /// compared on the log scale.
    pub(crate) fn edgington_residual(w: [f64; 2], a: f64) -> Option<f64> {
        let delta = (2.0 * a - 1.0) / (1.0 + (2.0 * a.min(1.0 - a)).sqrt());
        if delta.abs() >= 0.25 {
            return None;
        }
        let l1 = raw::log_norm_sf(w[0]);
        let l2 = raw::log_norm_cdf(w[1]);
        Some(if delta >= 0.0 {
            l1 - log_add_exp(l2, delta.ln())
        } else {
            log_add_exp(l1, (-delta).ln()) - l2
        })
    }

    fn log_add_exp(x: f64, y: f64) -> f64 {
        let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
        if lo == f64::NEG_INFINITY {
            return hi;
        }
        hi + (lo - hi).exp().ln_1p()
    }

    /// `1 − e^{−y}(1 + y)`, the χ²₄ CDF at `2y`, accurate for small `y`.
    fn gamma2_lower(y: f64) -> f64 {
        if y >= 0.5 {
            return 1.0 - (-y).exp() * (1.0 + y);
        }
        // Σ_{n≥2} (−1)^n (n − 1) yⁿ / n!
        let mut term = y * y / 2.0;
        let mut sum = term;
        for n in 3..40 {
            let nf = n as f64;
            term *= -y / nf;
            let next = term * (nf - 1.0);
            sum += next;
            if next.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }
}

/// The k-trial generalizations on oriented z-statistics.
pub mod general {
    use super::*;

    pub fn combine(method: CombinedMethod, w: &[f64], se: &[f64]) -> f64 {
        match method {
            CombinedMethod::TwoTrialsRule => two_trials_rule(w),
            CombinedMethod::MetaAnalysis => meta_analysis(w, se),
            CombinedMethod::Tippett => tippett(w),
            CombinedMethod::Fisher => fisher(w),
            CombinedMethod::Pearson => pearson(w),
            CombinedMethod::Edgington => edgington(w),
        }
    }

    fn w_min(w: &[f64]) -> f64 {
        w.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn w_max(w: &[f64]) -> f64 {
        w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max(pᵢ)^k`
    pub fn two_trials_rule(w: &[f64]) -> f64 {
        (w.len() as f64 * raw::log_norm_sf(w_min(w))).exp()
    }

    /// Weighted Stouffer `Σ(wᵢ/σᵢ)/√Σσᵢ⁻²`.
    pub fn meta_analysis(w: &[f64], se: &[f64]) -> f64 {
        let num: f64 = w.iter().zip(se).map(|(w, s)| w / s).sum();
        let den: f64 = se.iter().map(|s| s.powi(-2)).sum();
        raw::norm_sf(num / den.sqrt())
    }

    /// `1 − (1 − min pᵢ)^k`
    pub fn tippett(w: &[f64]) -> f64 {
        -(w.len() as f64 * raw::log_norm_cdf(w_max(w))).exp_m1()
    }

    pub fn fisher(w: &[f64]) -> f64 {
        let x = -2.0 * w.iter().map(|&z| raw::log_norm_sf(z)).sum::<f64>();
        raw::chisq_sf(x, 2 * w.len() as u32)
    }

    pub fn pearson(w: &[f64]) -> f64 {
        let x = -2.0 * w.iter().map(|&z| raw::log_norm_cdf(z)).sum::<f64>();
        raw::chisq_cdf(x, 2 * w.len() as u32)
    }

    pub fn edgington(w: &[f64]) -> f64 {
        let s: f64 = w.iter().map(|&z| raw::norm_sf(z)).sum();
        raw::irwin_hall_cdf(s, w.len() as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use CombinedMethod::*;

    fn t(estimate: f64, std_err: f64) -> TrialResult {
        TrialResult { estimate, std_err }
    }

    fn respire14() -> Vec<TrialResult> {
        vec![t(-0.4942, 0.1833), t(-0.1847, 0.1738)]
    }

    fn p(method: CombinedMethod, trials: &[TrialResult], mu: f64, alt: Alternative) -> f64 {
        eval_checked(method, trials, mu, alt).unwrap().value()
    }

    #[test]
    fn individual_p_values_respire() {
        let tr = respire14();
        let p1 = p_one_sided(&tr[0], 0.0, Alternative::Less).unwrap().value();
        let p2 = p_one_sided(&tr[1], 0.0, Alternative::Less).unwrap().value();
        // The reported values were computed from unrounded inputs.
        assert!((p1 - 0.00351).abs() < 5e-5, "{p1}");
        assert!((p2 - 0.14400).abs() < 5e-5, "{p2}");
        assert_eq!(p_one_sided(&t(0.3, 0.2), 0.3, Alternative::Greater).unwrap().value(), 0.5);
    }

    #[test]
    fn one_sided_matches_definition() {
        let tr = t(0.7, 0.4);
        for mu in [-1.0, 0.0, 0.5, 0.7, 2.0] {
            let z = (0.7 - mu) / 0.4;
            let g = p_one_sided(&tr, mu, Alternative::Greater).unwrap().value();
            let l = p_one_sided(&tr, mu, Alternative::Less).unwrap().value();
            assert!((g - (1.0 - raw::norm_cdf(z))).abs() < 1e-16);
            assert!((l - raw::norm_cdf(z)).abs() < 1e-16);
        }
    }

    #[test]
    fn table2_respire_14_day() {
        let tr = respire14();
        let expected = [
            (TwoTrialsRule, 0.02073),
            (MetaAnalysis, 0.00432),
            (Tippett, 0.00701),
            (Fisher, 0.00434),
            (Pearson, 0.01138),
            (Edgington, 0.01088),
        ];
        for (m, want) in expected {
            let got = p(m, &tr, 0.0, Alternative::Less);
            assert!((got - want).abs() < 5e-5, "{m}: {got} vs {want}");
        }
    }

    #[test]
    fn orbit_primary_meta_analysis() {
        let tr = vec![t(-0.01, 0.66 / 3.92), t(-0.33, 0.60 / 3.92)];
        let got = p(MetaAnalysis, &tr, 0.0, Alternative::Less);
        assert!((got - 0.05305).abs() < 0.1 * 0.05305, "{got}");
    }

    #[test]
    fn trivial_values() {
        let half = vec![t(0.0, 1.0), t(0.0, 2.0)];
        let g = Alternative::Greater;
        assert!((p(TwoTrialsRule, &half, 0.0, g) - 0.25).abs() < 1e-16);
        assert!((p(Tippett, &half, 0.0, g) - 0.75).abs() < 1e-15);
        assert!((p(Edgington, &half, 0.0, g) - 0.5).abs() < 1e-16);
        assert!((p(MetaAnalysis, &half, 0.0, g) - 0.5).abs() < 1e-16);
        // p₁ = p₂ = 1 and p₁ = p₂ = 0 in the limit.
        let far = vec![t(-40.0, 1.0), t(-40.0, 1.0)];
        assert_eq!(p(Fisher, &far, 0.0, g), 1.0);
        let far = vec![t(40.0, 1.0), t(40.0, 1.0)];
        assert_eq!(p(Pearson, &far, 0.0, g), 0.0);
    }

    #[test]
    fn meta_analysis_equal_trials_is_single_trial_with_smaller_se() {
        let tr = vec![t(0.4, 0.3), t(0.4, 0.3)];
        let single = t(0.4, 0.3 / 2f64.sqrt());
        for mu in [-0.5, 0.0, 0.2, 0.4, 1.0] {
            let a = p(MetaAnalysis, &tr, mu, Alternative::Greater);
            let b = p_one_sided(&single, mu, Alternative::Greater).unwrap().value();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn meta_analysis_is_weighted_stouffer() {
        let tr = vec![t(0.1, 0.2), t(0.5, 0.4), t(-0.2, 0.3)];
        for mu in [-0.3, 0.0, 0.4] {
            for alt in [Alternative::Greater, Alternative::Less] {
                let w: Vec<f64> = tr.iter().map(|x| oriented_z(x, mu, alt)).collect();
                let se: Vec<f64> = tr.iter().map(|x| x.std_err).collect();
                let a = general::meta_analysis(&w, &se);
                let b = p(MetaAnalysis, &tr, mu, alt);
                assert!((a - b).abs() < 1e-15, "{a} {b}");
            }
            let w2 = [oriented_z(&tr[0], mu, Alternative::Less), oriented_z(&tr[1], mu, Alternative::Less)];
            let a = pair::meta_analysis(w2, [0.2, 0.4]);
            let b = p(MetaAnalysis, &tr[..2], mu, Alternative::Less);
            assert!((a - b).abs() < 1e-15, "{a} {b}");
        }
    }

    #[test]
    fn meta_analysis_is_wald_test_on_pooled_estimate() {
        let tr = vec![t(0.1, 0.2), t(0.5, 0.4), t(-0.2, 0.3), t(0.3, 0.25)];
        let (est, se) = pooled(&tr);
        for mu in [-0.3, 0.0, 0.1, 0.4] {
            let a = p(MetaAnalysis, &tr, mu, Alternative::Greater);
            let b = raw::norm_sf((est - mu) / se);
            assert!((a - b).abs() < 1e-15, "{a} {b}");
        }
    }

    #[test]
    fn fisher_stays_positive_far_in_the_tail() {
        let tr = vec![t(10.0, 0.5), t(9.0, 0.4)];
        let got = p(Fisher, &tr, 0.0, Alternative::Greater);
        assert!(got > 0.0, "underflow: {got}");
        assert!(got < 1e-190);
        // log p ≈ log p₁ + log p₂ + log(1 − log p₁p₂)
        let l = raw::log_norm_sf(20.0) + raw::log_norm_sf(22.5);
        let want = l + (1.0 - l).ln();
        assert!((got.ln() - want).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        let tr = respire14();
        assert!(matches!(p_ma(&tr, f64::NAN, Alternative::Less), Err(CombineError::NonFiniteMu(_))));
        assert!(matches!(p_fisher(&tr, f64::INFINITY, Alternative::Less), Err(CombineError::NonFiniteMu(_))));
        assert!(matches!(p_2tr(&tr[..1], 0.0, Alternative::Less), Err(CombineError::TooFewTrials(1))));
        let bad = vec![t(0.0, 1.0), t(0.0, 0.0)];
        assert!(matches!(p_tippett(&bad, 0.0, Alternative::Less), Err(CombineError::InvalidTrial { index: 1 })));
        let many = vec![t(0.0, 1.0); 26];
        assert!(p_edgington(&many, 0.0, Alternative::Less).is_err());
        assert!(p_fisher(&many, 0.0, Alternative::Less).is_ok());
    }

    #[test]
    fn centrality_values() {
        let c = |x: f64| centrality(Probability::new(x).unwrap()).value();
        assert_eq!(c(0.5), 1.0);
        assert!((c(0.025) - 0.05).abs() < 1e-16);
        assert!((c(0.975) - 0.05).abs() < 1e-15);
        assert_eq!(c(0.0), 0.0);
        assert_eq!(c(1.0), 0.0);
    }

    #[test]
    fn edgington_pair_is_irwin_hall() {
        let mut w1 = -6.0;
        while w1 <= 6.0 {
            let mut w2 = -6.0;
            while w2 <= 6.0 {
                let e = raw::norm_sf(w1) + raw::norm_sf(w2);
                let a = pair::edgington([w1, w2]);
                assert!((a - raw::irwin_hall_cdf(e, 2)).abs() < 1e-15);
                w2 += 0.37;
            }
            w1 += 0.41;
        }
    }

    #[test]
    fn pearson_pair_small_argument_series() {
        // Both sides of the series/closed-form switch agree.
        let w = [3.2, 2.9];
        let y = -(raw::log_norm_cdf(w[0]) + raw::log_norm_cdf(w[1]));
        assert!(y < 0.5);
        let want = raw::chisq_cdf(2.0 * y, 4);
        let got = pair::pearson(w);
        assert!(((got - want) / want).abs() < 1e-12, "{got} {want}");
    }

    #[test]
    fn tabulate_checks_grid_and_reproduces_points() {
        let tr = respire14();
        let grid = tabulate(&tr, Alternative::Less, &CombinedMethod::ALL, vec![-1.0, 0.0, 0.5]).unwrap();
        assert_eq!(grid.series.len(), 8);
        let fisher = grid.series.iter().find(|s| s.name == "fisher").unwrap();
        assert!((fisher.p_one_sided[1] - 0.00434).abs() < 5e-6);
        assert!(tabulate(&tr, Alternative::Less, &[], vec![]).is_err());
        assert!(tabulate(&tr, Alternative::Less, &[], vec![0.0, 0.0]).is_err());
        assert!(tabulate(&tr, Alternative::Less, &[], vec![1.0, 0.0]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn trials(k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<TrialResult>> {
            prop::collection::vec((-2.0f64..2.0, 0.05f64..1.0), k)
                .prop_map(|v| v.into_iter().map(|(e, s)| t(e, s)).collect())
        }

        fn alt() -> impl Strategy<Value = Alternative> {
            prop_oneof![Just(Alternative::Greater), Just(Alternative::Less)]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(512))]

            #[test]
            fn duality(tr in trials(2..6), mu in -4.0f64..4.0) {
                let tg = p(Tippett, &tr, mu, Alternative::Greater);
                let tl = p(TwoTrialsRule, &tr, mu, Alternative::Less);
                prop_assert!((tg - (1.0 - tl)).abs() <= 1e-12);
                let pg = p(Pearson, &tr, mu, Alternative::Greater);
                let fl = p(Fisher, &tr, mu, Alternative::Less);
                prop_assert!((pg - (1.0 - fl)).abs() <= 1e-12);
            }

            #[test]
            fn pair_agrees_with_general(tr in trials(2..3), mu in -4.0f64..4.0, alt in alt()) {
                let w: Vec<f64> = tr.iter().map(|x| oriented_z(x, mu, alt)).collect();
                let w2 = [w[0], w[1]];
                let se = [tr[0].std_err, tr[1].std_err];
                for m in CombinedMethod::ALL {
                    let a = pair::combine(m, w2, se);
                    let b = general::combine(m, &w, &se);
                    prop_assert!((a - b).abs() <= 1e-14, "{} {} {}", m, a, b);
                }
                let a = pair::meta_analysis(w2, se);
                let c = p(MetaAnalysis, &tr, mu, alt);
                prop_assert!((a - c).abs() <= 1e-14);
            }

            #[test]
            fn monotone_in_mu(tr in trials(2..5), alt in alt()) {
                for m in CombinedMethod::ALL {
                    let f = PValueFunction::new(m, tr.clone(), alt).unwrap();
                    let mut prev = f.eval(-6.0).unwrap().value();
                    for i in 1..=600 {
                        let mu = -6.0 + i as f64 * 0.02;
                        let cur = f.eval(mu).unwrap().value();
                        match alt {
                            Alternative::Greater => prop_assert!(cur >= prev, "{} at {}: {} < {}", m, mu, cur, prev),
                            Alternative::Less => prop_assert!(cur <= prev, "{} at {}: {} > {}", m, mu, cur, prev),
                        }
                        prev = cur;
                    }
                }
            }

            #[test]
            fn probabilities_stay_in_unit_interval(tr in trials(2..8), mu in -50.0f64..50.0, alt in alt()) {
                for m in CombinedMethod::ALL {
                    let v = p(m, &tr, mu, alt);
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }

            #[test]
            fn flipping_orientation_reflects(tr in trials(2..5), mu in -3.0f64..3.0) {
                // Reflecting estimates and μ through 0 swaps the orientation.
                let refl: Vec<_> = tr.iter().map(|x| t(-x.estimate, x.std_err)).collect();
                for m in CombinedMethod::ALL {
                    let a = p(m, &tr, mu, Alternative::Greater);
                    let b = p(m, &refl, -mu, Alternative::Less);
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }
    }
}
