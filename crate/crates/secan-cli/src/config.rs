//! Analysis configuration: the TOML schema, path resolution, and
//! validation that does not need the data.
//!
//! The schema is the contract; unknown keys are rejected so typos fail
//! loudly. One file can carry both an analysis mapping (for `fit`) and a
//! `[simulate]` scenario; each subcommand reads the parts it needs.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use secan_core::SimConfig;

/// Environment variable naming the directory searched for configuration
/// files given by bare relative paths that do not exist locally.
pub const CONFIG_DIR_ENV: &str = "SECAN_CONFIG_DIR";

/// Top-level configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// CSV file to analyze (fit).
    pub input: Option<PathBuf>,
    /// Where the fit report goes; stdout when absent.
    pub output: Option<PathBuf>,
    /// Column mapping; required by `fit`.
    pub columns: Option<Columns>,
    /// Derived binary columns, by name. A derived name can be used
    /// anywhere a column name is expected (except as another rule's
    /// source).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub derive: BTreeMap<String, DeriveRule>,
    /// Method selection and method inputs for `fit`.
    #[serde(default)]
    pub fit: FitSection,
    /// Full simulation scenario for `simulate`; when absent the built-in
    /// two-stratum benchmark is the base and flags override it.
    pub simulate: Option<SimConfig>,
}

/// Column mapping from CSV headers (or derived names) to model roles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Columns {
    /// Binary disease (case/control) status, values 0 or 1.
    pub disease: String,
    /// Binary secondary outcome, values 0 or 1.
    pub outcome: String,
    /// Numeric covariates, in model order.
    pub covariates: Vec<String>,
    /// Matching factors to cross-classify into strata. Exclusive with
    /// `stratum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<String>>,
    /// Pre-assigned stratum labels, 1..K. Exclusive with `factors`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

/// A rule deriving a binary column from a raw one. Exactly one of the
/// rule fields must be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveRule {
    /// Raw CSV column the rule reads.
    pub source: String,
    /// Numeric `value > threshold` becomes 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greater_than: Option<f64>,
    /// Numeric `value >= threshold` becomes 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_least: Option<f64>,
    /// String membership in this set becomes 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_of: Option<Vec<String>>,
}

impl DeriveRule {
    /// Checks that exactly one rule field is present and that thresholds
    /// are finite. `name` is only for the error message.
    pub fn validate(&self, name: &str) -> Result<()> {
        let set = usize::from(self.greater_than.is_some())
            + usize::from(self.at_least.is_some())
            + usize::from(self.one_of.is_some());
        if set != 1 {
            bail!(
                "derived column `{name}` must set exactly one of \
                 `greater_than`, `at_least`, or `one_of` (found {set})"
            );
        }
        for t in [self.greater_than, self.at_least].into_iter().flatten() {
            if !t.is_finite() {
                bail!("derived column `{name}` has a non-finite threshold");
            }
        }
        Ok(())
    }
}

/// The `[fit]` section: which methods to run and their extra inputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Methods to run; a default set needing no extra inputs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<FitMethod>>,
    /// Per-stratum disease rates, required by the known-rates method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
}

/// Every estimator the `fit` command can run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    /// Conditional logistic regression on (stratum, disease) cells.
    Conditional,
    /// Unconditional logistic regression, covariates only.
    Unadjusted,
    /// Unconditional regression plus stratum indicators.
    Adjusted1,
    /// Unconditional regression plus stratum indicators and disease.
    Adjusted2,
    /// Unconditional regression with matching-factor main effects, their
    /// pairwise interactions, and disease. Needs at least two factors.
    Adjusted3,
    /// Profile likelihood assuming a rare disease.
    Pm1,
    /// Profile likelihood with known per-stratum disease rates.
    Pm2,
    /// Profile likelihood estimating the per-stratum disease rates.
    Pm3,
}

impl FitMethod {
    pub const ALL: [FitMethod; 8] = [
        FitMethod::Conditional,
        FitMethod::Unadjusted,
        FitMethod::Adjusted1,
        FitMethod::Adjusted2,
        FitMethod::Adjusted3,
        FitMethod::Pm1,
        FitMethod::Pm2,
        FitMethod::Pm3,
    ];

    /// Methods run when no selection is configured: everything that needs
    /// no extra inputs (the known-rates method needs `rates`, the
    /// factor-interaction adjustment needs two matching factors).
    pub const DEFAULT: [FitMethod; 6] = [
        FitMethod::Conditional,
        FitMethod::Unadjusted,
        FitMethod::Adjusted1,
        FitMethod::Adjusted2,
        FitMethod::Pm1,
        FitMethod::Pm3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Conditional => "conditional",
            FitMethod::Unadjusted => "unadjusted",
            FitMethod::Adjusted1 => "adjusted1",
            FitMethod::Adjusted2 => "adjusted2",
            FitMethod::Adjusted3 => "adjusted3",
            FitMethod::Pm1 => "pm1",
            FitMethod::Pm2 => "pm2",
            FitMethod::Pm3 => "pm3",
        }
    }
}

impl AnalysisConfig {
    /// Structural validation that needs no data: the column roles are
    /// coherent and every derive rule is well formed. Existence of the
    /// columns in the file is checked at ingestion.
    pub fn validate(&self) -> Result<()> {
        for (name, rule) in &self.derive {
            rule.validate(name)?;
        }
        if let Some(columns) = &self.columns {
            if columns.covariates.is_empty() {
                bail!("`columns.covariates` must name at least one column");
            }
            match (&columns.factors, &columns.stratum) {
                (Some(_), Some(_)) => {
                    bail!("`columns.factors` and `columns.stratum` are mutually exclusive")
                }
                (None, None) => {
                    bail!("one of `columns.factors` or `columns.stratum` is required")
                }
                (Some(f), None) if f.is_empty() => {
                    bail!("`columns.factors` must name at least one column")
                }
                _ => {}
            }
            for rule in self.derive.values() {
                if self.derive.contains_key(&rule.source) {
                    bail!(
                        "derived column sources must be raw CSV columns; \
                         `{}` is itself derived",
                        rule.source
                    );
                }
            }
        }
        if let Some(rates) = &self.fit.rates {
            if rates.iter().any(|r| !(r.is_finite() && *r > 0.0 && *r < 1.0)) {
                bail!("`fit.rates` must lie strictly between 0 and 1");
            }
        }
        Ok(())
    }
}

/// Finds a configuration file: the path as given, else (for bare relative
/// paths) inside the directory named by `SECAN_CONFIG_DIR`.
pub fn resolve_config_path(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(dir) = env::var(CONFIG_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
            bail!(
                "config file `{}` not found (also tried `{}`)",
                path.display(),
                candidate.display()
            );
        }
    }
    bail!("config file `{}` not found", path.display())
}

/// Loads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<AnalysisConfig> {
    let resolved = resolve_config_path(path)?;
    let text = fs::read_to_string(&resolved)
        .with_context(|| format!("reading config file `{}`", resolved.display()))?;
    let config: AnalysisConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config file `{}`", resolved.display()))?;
    config.validate()?;
    Ok(config)
}
