//! Trial summaries, analysis requests and results, plus their CSV and JSON
//! forms.
//!
//! Estimates are taken on the analysis scale (log rate ratio, log hazard
//! ratio, mean difference, ...). Nothing here transforms them.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statdist::Probability;

/// Confidence levels reported when a request does not name any:
/// 95% and the 99.875% level matching a one-sided 0.025² threshold.
pub const DEFAULT_LEVELS: [f64; 2] = [0.95, 0.99875];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("CSV input: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON input: {0}")]
    Json(#[from] serde_json::Error),
}

impl ModelError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Invalid { field: field.into(), message: message.into() }
    }
}

/// One trial's effect estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub estimate: f64,
    pub std_err: f64,
}

impl TrialResult {
    pub fn new(estimate: f64, std_err: f64) -> Result<Self, ModelError> {
        let trial = TrialResult { estimate, std_err };
        trial.check("trial")?;
        Ok(trial)
    }

    /// Reconstructs a trial from a reported normal-theory 95% interval:
    /// the standard error is the interval width over 2·1.96.
    pub fn from_ci95(estimate: f64, lower: f64, upper: f64) -> Result<Self, ModelError> {
        TrialResult::new(estimate, (upper - lower) / (2.0 * 1.96))
    }

    fn check(&self, field: &str) -> Result<(), ModelError> {
        if !self.estimate.is_finite() {
            return Err(ModelError::invalid(format!("{field}.estimate"), "estimate must be finite"));
        }
        if !(self.std_err > 0.0) || !self.std_err.is_finite() {
            return Err(ModelError::invalid(
                format!("{field}.std_err"),
                "std_err must be positive",
            ));
        }
        Ok(())
    }
}

/// Direction of the one-sided alternative hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    Greater,
    Less,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::Greater => Alternative::Less,
            Alternative::Less => Alternative::Greater,
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alternative::Greater => "greater",
            Alternative::Less => "less",
        })
    }
}

impl FromStr for Alternative {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            other => Err(ModelError::invalid(
                "alternative",
                format!("expected 'greater' or 'less', got '{other}'"),
            )),
        }
    }
}

/// The six combination rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinedMethod {
    TwoTrialsRule,
    MetaAnalysis,
    Tippett,
    Fisher,
    Pearson,
    Edgington,
}

impl CombinedMethod {
    pub const ALL: [CombinedMethod; 6] = [
        CombinedMethod::TwoTrialsRule,
        CombinedMethod::MetaAnalysis,
        CombinedMethod::Tippett,
        CombinedMethod::Fisher,
        CombinedMethod::Pearson,
        CombinedMethod::Edgington,
    ];

    /// Machine name, as used in JSON, CSV headers and `--methods`.
    pub fn key(self) -> &'static str {
        match self {
            CombinedMethod::TwoTrialsRule => "two_trials_rule",
            CombinedMethod::MetaAnalysis => "meta_analysis",
            CombinedMethod::Tippett => "tippett",
            CombinedMethod::Fisher => "fisher",
            CombinedMethod::Pearson => "pearson",
            CombinedMethod::Edgington => "edgington",
        }
    }

    /// Display name for tables.
    pub fn label(self) -> &'static str {
        match self {
            CombinedMethod::TwoTrialsRule => "Two-trials rule",
            CombinedMethod::MetaAnalysis => "Meta-analysis",
            CombinedMethod::Tippett => "Tippett",
            CombinedMethod::Fisher => "Fisher",
            CombinedMethod::Pearson => "Pearson",
            CombinedMethod::Edgington => "Edgington",
        }
    }
}

impl fmt::Display for CombinedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for CombinedMethod {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let method = match norm.as_str() {
            "two_trials_rule" | "2tr" | "twotrials" => CombinedMethod::TwoTrialsRule,
            "meta_analysis" | "ma" | "meta" | "stouffer" => CombinedMethod::MetaAnalysis,
            "tippett" => CombinedMethod::Tippett,
            "fisher" => CombinedMethod::Fisher,
            "pearson" => CombinedMethod::Pearson,
            "edgington" => CombinedMethod::Edgington,
            _ => return Err(ModelError::invalid("methods", format!("unknown method '{s}'"))),
        };
        Ok(method)
    }
}

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

/// Everything needed to run an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub trials: Vec<TrialResult>,
    /// Null value at which combined p-values are reported.
    #[serde(default)]
    pub null_value: f64,
    pub alternative: Alternative,
    /// Confidence levels in (0, 1).
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
}

impl AnalysisRequest {
    pub fn new(trials: Vec<TrialResult>, null_value: f64, alternative: Alternative) -> Self {
        AnalysisRequest { trials, null_value, alternative, levels: default_levels() }
    }

    pub fn with_levels(mut self, levels: Vec<f64>) -> Self {
        self.levels = levels;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let request: AnalysisRequest = serde_json::from_str(text)?;
        validate(request)
    }
}

/// Checks a request and returns it normalized: levels sorted ascending and
/// deduplicated. Errors name the offending field.
pub fn validate(mut request: AnalysisRequest) -> Result<AnalysisRequest, ModelError> {
    if request.trials.len() < 2 {
        return Err(ModelError::invalid(
            "trials",
            format!("at least 2 trials are required, got {}", request.trials.len()),
        ));
    }
    for (i, trial) in request.trials.iter().enumerate() {
        trial.check(&format!("trials[{i}]"))?;
    }
    if !request.null_value.is_finite() {
        return Err(ModelError::invalid("null_value", "null value must be finite"));
    }
    for (i, &level) in request.levels.iter().enumerate() {
        if !(level > 0.0 && level < 1.0) {
            return Err(ModelError::invalid(
                format!("levels[{i}]"),
                format!("confidence level must lie strictly inside (0, 1), got {level}"),
            ));
        }
    }
    request.levels.sort_by(f64::total_cmp);
    request.levels.dedup();
    Ok(request)
}

/// A two-sided interval at one confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Inference from one combined p-value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: CombinedMethod,
    pub median_estimate: f64,
    /// One interval per requested level, ascending by level.
    pub intervals: Vec<Interval>,
    /// One-sided combined p-value at the request's null value.
    pub p_at_null: Probability,
}

impl MethodResult {
    pub fn interval(&self, level: f64) -> Option<&Interval> {
        self.intervals.iter().find(|iv| iv.level == level)
    }
}

/// Inference from a single trial: its estimate, Wald intervals and
/// one-sided p-value at the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub label: String,
    pub estimate: f64,
    pub std_err: f64,
    pub intervals: Vec<Interval>,
    pub p_at_null: Probability,
}

impl TrialSummary {
    pub fn interval(&self, level: f64) -> Option<&Interval> {
        self.intervals.iter().find(|iv| iv.level == level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub request: AnalysisRequest,
    pub individual: Vec<TrialSummary>,
    pub combined: Vec<MethodResult>,
}

impl AnalysisResult {
    pub fn method(&self, method: CombinedMethod) -> Option<&MethodResult> {
        self.combined.iter().find(|m| m.method == method)
    }
}

/// Tabulated p-value functions over a grid of null values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveGrid {
    pub mu_grid: Vec<f64>,
    pub alternative: Alternative,
    pub series: Vec<CurveSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    /// `trial1`, `trial2`, ... or a method key.
    pub name: String,
    pub p_one_sided: Vec<f64>,
    pub centrality: Vec<f64>,
}

impl CurveGrid {
    /// Writes one row per grid point: `mu`, then `<name>_p` and
    /// `<name>_centrality` for every series.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["mu".to_string()];
        for s in &self.series {
            header.push(format!("{}_p", s.name));
            header.push(format!("{}_centrality", s.name));
        }
        writer.write_record(&header)?;
        for (i, mu) in self.mu_grid.iter().enumerate() {
            let mut row = vec![fmt_full(*mu)];
            for s in &self.series {
                row.push(fmt_full(s.p_one_sided[i]));
                row.push(fmt_full(s.centrality[i]));
            }
            writer.write_record(&row)?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Shortest representation that round-trips exactly.
pub fn fmt_full(x: f64) -> String {
    format!("{x:?}")
}

/// A trial row from CSV input, keeping the user's label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrial {
    pub trial: String,
    pub estimate: f64,
    pub std_err: f64,
}

impl NamedTrial {
    pub fn result(&self) -> TrialResult {
        TrialResult { estimate: self.estimate, std_err: self.std_err }
    }
}

/// Reads `trial,estimate,std_err` rows. Every row is validated.
pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<NamedTrial>, ModelError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let expected = ["trial", "estimate", "std_err"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ModelError::invalid(
            "header",
            format!("expected 'trial,estimate,std_err', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<NamedTrial>().enumerate() {
        let row = record?;
        row.result().check(&format!("row {}", i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_trials_csv<W: Write>(trials: &[NamedTrial], out: W) -> Result<(), ModelError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["trial", "estimate", "std_err"])?;
    for t in trials {
        writer.write_record([t.trial.clone(), fmt_full(t.estimate), fmt_full(t.std_err)])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
