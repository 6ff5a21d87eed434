//! Structured run reports. Every report is self-describing: it carries
//! the tool version and the fully resolved configuration, and contains no
//! timestamps or machine identifiers, so a rerun of the same inputs
//! produces byte-identical output.

use serde::Serialize;

use secan_core::{Estimate, ReplicateSummary, SimConfig, Z_975};

use crate::config::AnalysisConfig;
use crate::ingest::IngestReport;

pub const TOOL_NAME: &str = "secan";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Report written by `fit`.
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: AnalysisConfig,
    pub ingestion: IngestReport,
    pub results: Vec<MethodReport>,
}

/// Report written by `simulate` alongside the summary table.
#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: SimConfig,
    pub methods: Vec<String>,
    /// Worker-pool size: a number when pinned by flag, otherwise "auto".
    pub workers: String,
    pub summary: ReplicateSummary,
}

/// One method's block in a fit report.
#[derive(Debug, Serialize)]
pub struct MethodReport {
    pub method: &'static str,
    /// False when the method errored before producing estimates.
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub converged: Option<bool>,
    pub loglik: Option<f64>,
    /// The covariate effects of interest (a subset of `estimates`).
    pub effects: Vec<EstimateOut>,
    /// Every parameter the method estimates.
    pub estimates: Vec<EstimateOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<f64>,
    /// Estimated per-stratum disease rates (the estimated-rates method).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered_rates: Option<Vec<RecoveredRate>>,
}

impl MethodReport {
    /// A block for a method that failed outright.
    pub fn failed(method: &'static str, error: String) -> Self {
        MethodReport {
            method,
            ok: false,
            error: Some(error),
            note: None,
            converged: None,
            loglik: None,
            effects: Vec::new(),
            estimates: Vec::new(),
            iterations: None,
            gradient_norm: None,
            recovered_rates: None,
        }
    }
}

/// One reported parameter.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateOut {
    pub label: String,
    pub value: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

impl EstimateOut {
    /// From a coefficient and the diagonal of a covariance matrix; the
    /// interval is the usual two-sided 95% Wald interval.
    pub fn from_coefficient(label: String, value: f64, variance: Option<f64>) -> Self {
        let se = variance.map(f64::sqrt).filter(|s| s.is_finite());
        EstimateOut {
            label,
            value,
            se,
            ci_lower: se.map(|s| value - Z_975 * s),
            ci_upper: se.map(|s| value + Z_975 * s),
        }
    }
}

impl From<&Estimate> for EstimateOut {
    fn from(e: &Estimate) -> Self {
        EstimateOut {
            label: e.label.clone(),
            value: e.value,
            se: e.se,
            ci_lower: e.ci_lower,
            ci_upper: e.ci_upper,
        }
    }
}

/// One estimated stratum disease rate, on the natural scale.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveredRate {
    pub stratum: usize,
    pub rate: f64,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}
