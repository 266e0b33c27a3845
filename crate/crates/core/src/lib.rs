//! Combined p-value functions for evidence from two or more trials.
//!
//! Each trial contributes a normal one-sided p-value function of the null
//! value μ. Six combination rules (two-trials rule, fixed-effect
//! meta-analysis, Tippett, Fisher, Pearson, Edgington) turn those into a
//! single p-value function whose inverse gives median estimates and
//! confidence intervals that are compatible with the combined p-value at
//! every level.

pub mod combine;
pub mod estimate;
mod root;
pub mod simulate;
pub mod statdist;
pub mod theory;
pub mod trial_model;

pub use combine::{centrality, PValueFunction};
pub use estimate::{analyze, invert_pfun};
pub use statdist::Probability;
pub use trial_model::{
    AnalysisRequest, AnalysisResult, Alternative, CombinedMethod, CurveGrid, Interval, MethodResult,
    TrialResult,
};
