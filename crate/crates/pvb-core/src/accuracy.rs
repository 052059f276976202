//! Shared result types for the accuracy estimators.

use serde::Serialize;

use crate::scalar::{s, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cca,
    Bg,
    Ebg,
    Mi,
    Em,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::Cca => "cca",
            Method::Bg => "bg",
            Method::Ebg => "ebg",
            Method::Mi => "mi",
            Method::Em => "em",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Sensitivity,
    Specificity,
    Ppv,
    Npv,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::Sensitivity,
        Measure::Specificity,
        Measure::Ppv,
        Measure::Npv,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Measure::Sensitivity => "sensitivity",
            Measure::Specificity => "specificity",
            Measure::Ppv => "ppv",
            Measure::Npv => "npv",
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiKind {
    Wald,
    Bca,
    /// Percentile interval used where the BCa correction was degenerate.
    Percentile,
    Rubin,
}

/// Two-sided confidence interval. The raw bounds may leave [0, 1] (Wald
/// bounds for proportions near the boundary do); the clipped pair is what
/// a report should print.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ci<S> {
    pub lower: S,
    pub upper: S,
    pub lower_clipped: S,
    pub upper_clipped: S,
    pub kind: CiKind,
}

impl<S: Scalar> Ci<S> {
    pub fn new(lower: S, upper: S, kind: CiKind) -> Self {
        let one = S::one();
        Ci {
            lower,
            upper,
            lower_clipped: lower.max(S::zero()).min(one),
            upper_clipped: upper.max(S::zero()).min(one),
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<S> {
    pub point: S,
    pub se: Option<S>,
    pub ci: Option<Ci<S>>,
}

impl<S: Scalar> Estimate<S> {
    pub fn point_only(point: S) -> Self {
        Estimate {
            point,
            se: None,
            ci: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyResult<S> {
    pub method: Method,
    pub sensitivity: Estimate<S>,
    pub specificity: Estimate<S>,
    pub ppv: Estimate<S>,
    pub npv: Estimate<S>,
    /// Two-sided error rate of the reported intervals.
    pub alpha: S,
    pub warnings: Vec<String>,
}

impl<S: Scalar> AccuracyResult<S> {
    pub fn points(method: Method, points: [S; 4], alpha: S) -> Self {
        AccuracyResult {
            method,
            sensitivity: Estimate::point_only(points[0]),
            specificity: Estimate::point_only(points[1]),
            ppv: Estimate::point_only(points[2]),
            npv: Estimate::point_only(points[3]),
            alpha,
            warnings: Vec::new(),
        }
    }

    pub fn measure(&self, m: Measure) -> &Estimate<S> {
        match m {
            Measure::Sensitivity => &self.sensitivity,
            Measure::Specificity => &self.specificity,
            Measure::Ppv => &self.ppv,
            Measure::Npv => &self.npv,
        }
    }

    pub fn measure_mut(&mut self, m: Measure) -> &mut Estimate<S> {
        match m {
            Measure::Sensitivity => &mut self.sensitivity,
            Measure::Specificity => &mut self.specificity,
            Measure::Ppv => &mut self.ppv,
            Measure::Npv => &mut self.npv,
        }
    }

    pub fn point(&self, m: Measure) -> S {
        self.measure(m).point
    }
}

/// Default two-sided error rate for confidence intervals.
pub fn default_alpha<S: Scalar>() -> S {
    s(0.05)
}
