//! Monte Carlo operating characteristics for two trials drawn as
//! `θ̂ᵢ ~ N(θᵢ, σᵢ²)`.
//!
//! Replicate `r` draws from its own ChaCha8 stream (key from the seed,
//! stream id `r`), results are collected in replicate order and summed with
//! compensated summation. Output is therefore bit-identical for any number
//! of worker threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combine::PValueFunction;
use crate::estimate::{method_result, EstimateError};
use crate::statdist::{raw, Probability};
use crate::theory::{limiting_mu, TheoryError, VarianceRatio};
use crate::trial_model::{Alternative, CombinedMethod, TrialResult};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Invalid(String),
    #[error("replicate {replicate}: {source}")]
    Estimate {
        replicate: u64,
        #[source]
        source: EstimateError,
    },
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// The quantity estimates and intervals are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetEstimand {
    /// A fixed value.
    Value(f64),
    Min,
    Max,
    /// `θ₁/(1 + c) + θ₂/(1 + 1/c)`
    InverseVarianceAverage,
    /// `θ₁/(1 + √c) + θ₂/(1 + 1/√c)`
    InverseSeAverage,
    /// Each method's own limit of the median estimate as σ → 0.
    #[default]
    MethodLimit,
}

fn default_methods() -> Vec<CombinedMethod> {
    CombinedMethod::ALL.to_vec()
}

fn default_levels() -> Vec<f64> {
    vec![0.95]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub theta1: f64,
    pub theta2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alternative: Alternative,
    #[serde(default = "default_methods")]
    pub methods: Vec<CombinedMethod>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target: TargetEstimand,
}

impl SimScenario {
    /// Both trials centred on `theta` with standard error `sigma`.
    pub fn homogeneous(theta: f64, sigma: f64, replicates: u64, seed: u64) -> Self {
        SimScenario {
            theta1: theta,
            theta2: theta,
            sigma1: sigma,
            sigma2: sigma,
            alternative: Alternative::Greater,
            methods: default_methods(),
            levels: default_levels(),
            replicates,
            seed,
            target: TargetEstimand::Value(theta),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        for (name, v) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        for (name, v) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return bad(format!("levels must lie strictly inside (0, 1), got {l}"));
        }
        if let TargetEstimand::Value(v) = self.target {
            if !v.is_finite() {
                return bad("target value must be finite".into());
            }
        }
        Ok(())
    }

    fn variance_ratio(&self) -> Result<VarianceRatio, SimError> {
        Ok(VarianceRatio::from_std_errs(self.sigma1, self.sigma2)?)
    }

    /// The target value for `method` under this scenario.
    pub fn target_for(&self, method: CombinedMethod) -> Result<f64, SimError> {
        let (t1, t2) = (self.theta1, self.theta2);
        Ok(match self.target {
            TargetEstimand::Value(v) => v,
            TargetEstimand::Min => t1.min(t2),
            TargetEstimand::Max => t1.max(t2),
            TargetEstimand::InverseVarianceAverage => self.variance_ratio()?.inverse_variance_average(t1, t2),
            TargetEstimand::InverseSeAverage => self.variance_ratio()?.inverse_se_average(t1, t2),
            TargetEstimand::MethodLimit => {
                limiting_mu(method, Probability::HALF, t1, t2, self.variance_ratio()?, self.alternative)?
            }
        })
    }
}

/// Random stream of replicate `r`.
pub struct ReplicateRng(ChaCha8Rng);

impl ReplicateRng {
    pub fn new(seed: u64, replicate: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        ReplicateRng(rng)
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    pub fn normal(&mut self) -> f64 {
        raw::norm_quantile(self.uniform())
    }
}

/// Draws the two trial results of replicate `r`.
pub fn draw_trials(scenario: &SimScenario, replicate: u64) -> [TrialResult; 2] {
    let mut rng = ReplicateRng::new(scenario.seed, replicate);
    let e1 = scenario.theta1 + scenario.sigma1 * rng.normal();
    let e2 = scenario.theta2 + scenario.sigma2 * rng.normal();
    [
        TrialResult { estimate: e1, std_err: scenario.sigma1 },
        TrialResult { estimate: e2, std_err: scenario.sigma2 },
    ]
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and Monte Carlo standard error, accumulated in a fixed order.
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: u64,
    s1: Sum,
    s2: Sum,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.n += 1;
        self.s1.add(x);
        self.s2.add(x * x);
    }

    fn estimate(&self) -> Estimate {
        let n = self.n as f64;
        let mean = self.s1.value() / n;
        let std_err = (self.n > 1).then(|| {
            let var = ((self.s2.value() - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        });
        Estimate { mean, std_err }
    }
}

/// A Monte Carlo mean and its standard error (absent for one replicate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    /// Fraction of intervals containing the target.
    pub coverage: Estimate,
    pub width: Estimate,
    /// Fraction of intervals containing both θ₁ and θ₂.
    pub contains_both: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: CombinedMethod,
    pub target: f64,
    pub median_estimate: Estimate,
    /// Median estimate minus target.
    pub bias: Estimate,
    /// Fraction of median estimates above the target.
    pub above_target: Estimate,
    /// Median across replicates of the median estimate.
    pub median_of_medians: f64,
    pub levels: Vec<LevelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub scenario: SimScenario,
    pub methods: Vec<MethodSummary>,
}

impl SimSummary {
    pub fn method(&self, method: CombinedMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// One row per method and level.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method", "target", "mean_median", "mean_median_se", "bias", "bias_se", "above_target",
            "above_target_se", "median_of_medians", "level", "coverage", "coverage_se", "mean_width",
            "mean_width_se", "contains_both", "contains_both_se",
        ])?;
        let f = |x: f64| format!("{x:?}");
        let se = |e: &Estimate| e.std_err.map(f).unwrap_or_default();
        for m in &self.methods {
            for l in &m.levels {
                w.write_record([
                    m.method.key().to_string(),
                    f(m.target),
                    f(m.median_estimate.mean),
                    se(&m.median_estimate),
                    f(m.bias.mean),
                    se(&m.bias),
                    f(m.above_target.mean),
                    se(&m.above_target),
                    f(m.median_of_medians),
                    f(l.level),
                    f(l.coverage.mean),
                    se(&l.coverage),
                    f(l.width.mean),
                    se(&l.width),
                    f(l.contains_both.mean),
                    se(&l.contains_both),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per replicate and method: median, then `(lower, upper)` per level.
type ReplicateOutcome = Vec<(f64, Vec<(f64, f64)>)>;

fn run_replicate(scenario: &SimScenario, r: u64) -> Result<ReplicateOutcome, SimError> {
    let trials = draw_trials(scenario, r);
    scenario
        .methods
        .iter()
        .map(|&m| {
            let res = method_result(m, &trials, scenario.alternative, &scenario.levels, 0.0)
                .map_err(|source| SimError::Estimate { replicate: r, source })?;
            Ok((res.median_estimate, res.intervals.iter().map(|iv| (iv.lower, iv.upper)).collect()))
        })
        .collect()
}

/// Runs the scenario on the global rayon pool.
pub fn run_simulation(scenario: &SimScenario) -> Result<SimSummary, SimError> {
    scenario.validate()?;
    let outcomes = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(scenario, &outcomes)
}

/// Runs the scenario on a dedicated pool of `workers` threads. The result
/// does not depend on `workers`.
pub fn run_simulation_with_workers(scenario: &SimScenario, workers: usize) -> Result<SimSummary, SimError> {
    in_pool(workers, || run_simulation(scenario))
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> Result<T, SimError> + Send) -> Result<T, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    pool.install(job)
}

fn summarize(scenario: &SimScenario, outcomes: &[ReplicateOutcome]) -> Result<SimSummary, SimError> {
    let (t_lo, t_hi) = (scenario.theta1.min(scenario.theta2), scenario.theta1.max(scenario.theta2));
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let mut methods = Vec::with_capacity(scenario.methods.len());
    for (j, &method) in scenario.methods.iter().enumerate() {
        let target = scenario.target_for(method)?;
        let mut median = Moments::default();
        let mut bias = Moments::default();
        let mut above = Moments::default();
        let mut per_level = vec![[Moments::default(); 3]; scenario.levels.len()];
        let mut medians = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let (m, ref ivs) = outcome[j];
            median.add(m);
            bias.add(m - target);
            above.add(indicator(m > target));
            medians.push(m);
            for (acc, &(lo, hi)) in per_level.iter_mut().zip(ivs) {
                acc[0].add(indicator(lo <= target && target <= hi));
                acc[1].add(hi - lo);
                acc[2].add(indicator(lo <= t_lo && t_hi <= hi));
            }
        }
        medians.sort_by(f64::total_cmp);
        let n = medians.len();
        let median_of_medians = if n % 2 == 1 { medians[n / 2] } else { 0.5 * (medians[n / 2 - 1] + medians[n / 2]) };
        let levels = scenario
            .levels
            .iter()
            .zip(&per_level)
            .map(|(&level, acc)| LevelSummary {
                level,
                coverage: acc[0].estimate(),
                width: acc[1].estimate(),
                contains_both: acc[2].estimate(),
            })
            .collect();
        methods.push(MethodSummary {
            method,
            target,
            median_estimate: median.estimate(),
            bias: bias.estimate(),
            above_target: above.estimate(),
            median_of_medians,
            levels,
        });
    }
    Ok(SimSummary { scenario: scenario.clone(), methods })
}

/// Kolmogorov–Smirnov comparison of the combined p-values at the common
/// true effect with Uniform(0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityResult {
    pub method: CombinedMethod,
    pub ks_statistic: f64,
    pub p_value: f64,
}

/// Requires `theta1 == theta2` and at least two replicates.
pub fn null_uniformity(scenario: &SimScenario) -> Result<Vec<UniformityResult>, SimError> {
    scenario.validate()?;
    if scenario.theta1 != scenario.theta2 {
        return Err(SimError::Invalid("null uniformity needs theta1 == theta2".into()));
    }
    if scenario.replicates < 2 {
        return Err(SimError::Invalid("the KS test needs at least 2 replicates".into()));
    }
    let mu0 = scenario.theta1;
    let ps: Vec<Vec<f64>> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| {
            let trials = draw_trials(scenario, r).to_vec();
            scenario
                .methods
                .iter()
                .map(|&m| {
                    PValueFunction::new(m, trials.clone(), scenario.alternative)
                        .and_then(|f| f.eval(mu0))
                        .map(Probability::value)
                        .map_err(|e| SimError::Estimate { replicate: r, source: e.into() })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scenario
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let mut sample: Vec<f64> = ps.iter().map(|row| row[j]).collect();
            let d = ks_uniform_statistic(&mut sample);
            UniformityResult { method, ks_statistic: d, p_value: ks_p_value(d, sample.len()) }
        })
        .collect())
}

/// `sup |F_n(x) − x|` for a sample on [0, 1]. Sorts `sample`.
pub fn ks_uniform_statistic(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / n - x).max(x - i / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value with the small-sample correction
/// `λ = (√n + 0.12 + 0.11/√n) D`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    kolmogorov_sf(lambda)
}

/// `Q(λ) = 2 Σ (−1)^{j−1} exp(−2j²λ²)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (a * jf * jf).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimScenario {
        let mut s = SimScenario::homogeneous(0.0, 1.0, 400, seed);
        s.levels = vec![0.9, 0.95];
        s
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<f64> = (0..4).map(|_| ReplicateRng::new(7, 3).uniform()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut r3 = ReplicateRng::new(7, 3);
        let mut r4 = ReplicateRng::new(7, 4);
        assert_ne!(r3.uniform(), r4.uniform());
        let mut s = ReplicateRng::new(8, 3);
        assert_ne!(ReplicateRng::new(7, 3).uniform(), s.uniform());
    }

    #[test]
    fn uniforms_stay_open() {
        let mut rng = ReplicateRng::new(1, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn normals_have_unit_moments() {
        let n = 200_000;
        let mut m = Moments::default();
        for r in 0..n {
            m.add(ReplicateRng::new(11, r).normal());
        }
        let e = m.estimate();
        assert!(e.mean.abs() < 4.0 / (n as f64).sqrt());
        let var = m.s2.value() / n as f64;
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let s = small(42);
        let one = serde_json::to_string(&run_simulation_with_workers(&s, 1).unwrap()).unwrap();
        let four = serde_json::to_string(&run_simulation_with_workers(&s, 4).unwrap()).unwrap();
        let again = serde_json::to_string(&run_simulation(&s).unwrap()).unwrap();
        assert_eq!(one, four);
        assert_eq!(one, again);
        let other = serde_json::to_string(&run_simulation(&small(43)).unwrap()).unwrap();
        assert_ne!(one, other);
    }

    #[test]
    fn summary_shape_and_ranges() {
        let summary = run_simulation(&small(5)).unwrap();
        assert_eq!(summary.methods.len(), 6);
        for m in &summary.methods {
            assert!((0.0..=1.0).contains(&m.above_target.mean));
            assert!(m.bias.std_err.unwrap() > 0.0);
            assert_eq!(m.levels.len(), 2);
            assert!(m.levels[0].width.mean < m.levels[1].width.mean);
            for l in &m.levels {
                assert!((0.0..=1.0).contains(&l.coverage.mean));
                assert!((0.0..=1.0).contains(&l.contains_both.mean));
            }
        }
        let mut csv = Vec::new();
        summary.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 12);
    }

    #[test]
    fn single_replicate_has_no_standard_error() {
        let s = SimScenario::homogeneous(0.0, 1.0, 1, 3);
        let summary = run_simulation(&s).unwrap();
        assert!(summary.methods[0].bias.std_err.is_none());
        assert!(null_uniformity(&s).is_err());
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let mut s = small(1);
        s.sigma2 = 0.0;
        assert!(run_simulation(&s).is_err());
        let mut s = small(1);
        s.replicates = 0;
        assert!(run_simulation(&s).is_err());
        let mut s = small(1);
        s.levels = vec![1.0];
        assert!(run_simulation(&s).is_err());
        let mut s = small(1);
        s.theta2 = 1.0;
        assert!(null_uniformity(&s).is_err());
    }

    #[test]
    fn targets() {
        let mut s = small(1);
        s.theta1 = 0.0;
        s.theta2 = 1.0;
        s.sigma1 = 0.1;
        s.sigma2 = 0.1;
        s.target = TargetEstimand::Min;
        assert_eq!(s.target_for(CombinedMethod::Fisher).unwrap(), 0.0);
        s.target = TargetEstimand::MethodLimit;
        assert_eq!(s.target_for(CombinedMethod::Fisher).unwrap(), 1.0);
        assert_eq!(s.target_for(CombinedMethod::TwoTrialsRule).unwrap(), 0.0);
        assert_eq!(s.target_for(CombinedMethod::Edgington).unwrap(), 0.5);
        let json = r#"{"theta1":0,"theta2":1,"sigma1":0.1,"sigma2":0.1,"alternative":"greater","replicates":10,"target":{"value":0.25}}"#;
        let parsed: SimScenario = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.target, TargetEstimand::Value(0.25));
        assert_eq!(parsed.methods.len(), 6);
        let json = r#"{"theta1":0,"theta2":1,"sigma1":0.1,"sigma2":0.1,"alternative":"less","replicates":10,"target":"inverse_se_average"}"#;
        assert!(serde_json::from_str::<SimScenario>(json).is_ok());
    }

    #[test]
    fn ks_statistic_and_p_value() {
        let mut grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_uniform_statistic(&mut grid);
        assert!((d - 0.0005).abs() < 1e-12);
        assert!(ks_p_value(d, 1000) > 0.99);
        let mut skewed: Vec<f64> = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0).powi(2)).collect();
        assert!(ks_p_value(ks_uniform_statistic(&mut skewed), 1000) < 1e-10);
        // Q(1.3581) ≈ 0.05
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn compensated_sum_is_exact_on_cancellation() {
        let mut s = Sum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
