//! The `fit` subcommand: ingest a CSV dataset and run the selected
//! estimators, writing one JSON report with a result block per method.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use secan_core::naive::{self, Adjustment};
use secan_core::{fit, FitOptions, KnownRates, StratifiedDataset, Variant};

use crate::commands::{emit, CommandOutcome};
use crate::config::{load_config, FitMethod};
use crate::report::{EstimateOut, FitReport, MethodReport, RecoveredRate, TOOL_NAME, TOOL_VERSION};

/// Fit estimators to a CSV dataset described by an analysis config.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Analysis config (TOML); bare relative names are also looked up in
    /// $SECAN_CONFIG_DIR.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Input CSV, overriding the config's `input`.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Report path, overriding the config's `output`; stdout when neither
    /// is set.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Methods to run, overriding the config's `fit.methods`.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub methods: Option<Vec<FitMethod>>,
    /// Per-stratum disease rates for the known-rates method, overriding
    /// the config's `fit.rates`.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub rates: Option<Vec<f64>>,
}

pub fn run(args: &FitArgs) -> Result<CommandOutcome> {
    let mut config = load_config(&args.config)?;
    if let Some(input) = &args.input {
        config.input = Some(input.clone());
    }
    if let Some(output) = &args.output {
        config.output = Some(output.clone());
    }
    if let Some(methods) = &args.methods {
        config.fit.methods = Some(methods.clone());
    }
    if let Some(rates) = &args.rates {
        config.fit.rates = Some(rates.clone());
    }
    config.validate()?;

    let input = config
        .input
        .clone()
        .context("no input file: set `input` in the config or pass --input")?;
    let (data, ingestion) = crate::ingest::ingest_csv(&input, &config)?;

    let methods: Vec<FitMethod> = config
        .fit
        .methods
        .clone()
        .unwrap_or_else(|| FitMethod::DEFAULT.to_vec());
    if methods.is_empty() {
        bail!("no methods selected");
    }

    let known_rates = if methods.contains(&FitMethod::Pm2) {
        let rates = config.fit.rates.clone().with_context(|| {
            format!(
                "the known-rates method needs `fit.rates` with one disease \
                 rate per stratum (expected {})",
                data.k()
            )
        })?;
        if rates.len() != data.k() {
            bail!(
                "the known-rates method needs one disease rate per stratum: \
                 got {} rate(s), expected {}",
                rates.len(),
                data.k()
            );
        }
        Some(KnownRates::new(rates).map_err(|e| anyhow!("invalid `fit.rates`: {e}"))?)
    } else {
        None
    };
    if methods.contains(&FitMethod::Adjusted3) {
        let enough = config
            .columns
            .as_ref()
            .and_then(|c| c.factors.as_ref())
            .is_some_and(|f| f.len() >= 2);
        if !enough {
            bail!(
                "the factor-interaction adjustment needs at least two \
                 matching factors in `columns.factors`"
            );
        }
    }

    let mut results = Vec::with_capacity(methods.len());
    let mut trouble = false;
    for &method in &methods {
        let block = run_method(method, &data, known_rates.as_ref());
        trouble |= !block.ok || block.converged == Some(false);
        results.push(block);
    }

    let output = config.output.clone();
    let report = FitReport {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        command: "fit",
        config,
        ingestion,
        results,
    };
    let mut json = serde_json::to_string_pretty(&report).context("serializing the report")?;
    json.push('\n');
    emit(output.as_deref(), &json)?;

    Ok(if trouble { CommandOutcome::NonConvergence } else { CommandOutcome::Success })
}

fn run_method(
    method: FitMethod,
    data: &StratifiedDataset,
    rates: Option<&KnownRates>,
) -> MethodReport {
    match method {
        FitMethod::Pm1 => run_profile(Variant::Pm1, method, data, None),
        FitMethod::Pm2 => run_profile(Variant::Pm2, method, data, rates),
        FitMethod::Pm3 => run_profile(Variant::Pm3, method, data, None),
        FitMethod::Conditional => run_conditional(data),
        FitMethod::Unadjusted => run_unconditional(method, data, Adjustment::None),
        FitMethod::Adjusted1 => run_unconditional(method, data, Adjustment::Stratum),
        FitMethod::Adjusted2 => run_unconditional(method, data, Adjustment::StratumDisease),
        FitMethod::Adjusted3 => {
            run_unconditional(method, data, Adjustment::FactorInteractionDisease)
        }
    }
}

fn run_profile(
    variant: Variant,
    method: FitMethod,
    data: &StratifiedDataset,
    rates: Option<&KnownRates>,
) -> MethodReport {
    let result = match fit(variant, data, rates, &FitOptions::default()) {
        Ok(r) => r,
        Err(e) => return MethodReport::failed(method.name(), e.to_string()),
    };
    let estimates: Vec<EstimateOut> = result.estimates.iter().map(EstimateOut::from).collect();
    let effects = estimates
        .iter()
        .filter(|e| e.label.starts_with("beta1["))
        .cloned()
        .collect();
    let recovered_rates = (variant == Variant::Pm3).then(|| {
        estimates
            .iter()
            .filter(|e| e.label.starts_with("xi["))
            .enumerate()
            .map(|(i, e)| RecoveredRate {
                stratum: i + 1,
                rate: e.value,
                se: e.se,
                ci_lower: e.ci_lower,
                ci_upper: e.ci_upper,
            })
            .collect::<Vec<_>>()
    });
    let mut note = None;
    if !result.converged {
        note = Some("the optimizer did not converge".to_string());
    } else if estimates.iter().any(|e| e.se.is_none()) {
        note = Some(
            "the curvature matrix is numerically singular; estimates are \
             reported without uncertainty"
                .to_string(),
        );
    }
    MethodReport {
        method: method.name(),
        ok: true,
        error: None,
        note,
        converged: Some(result.converged),
        loglik: Some(result.loglik),
        effects,
        estimates,
        iterations: Some(result.diagnostics.iterations),
        gradient_norm: Some(result.diagnostics.gradient_norm),
        recovered_rates,
    }
}

fn run_conditional(data: &StratifiedDataset) -> MethodReport {
    let method = FitMethod::Conditional.name();
    let out = match naive::fit_conditional(data, &Default::default()) {
        Ok(o) => o,
        Err(e) => return MethodReport::failed(method, e.to_string()),
    };
    let q = data.q();
    let cond = out.fit;
    let estimates: Vec<EstimateOut> = (0..q)
        .map(|j| {
            EstimateOut::from_coefficient(
                format!("x[{}]", j + 1),
                cond.coefficients[j],
                cond.covariance.as_ref().map(|c| c[j * q + j]),
            )
        })
        .collect();
    let mut note = None;
    if cond.size_limited {
        note = Some(
            "an informative cell exceeds the exact-denominator size limit; \
             nothing was fitted"
                .to_string(),
        );
    } else if cond.skipped_cells > 0 {
        note = Some(format!(
            "{} concordant cell(s) carried no information and were skipped",
            cond.skipped_cells
        ));
    }
    MethodReport {
        method,
        ok: true,
        error: None,
        note,
        converged: Some(cond.converged),
        loglik: Some(cond.loglik),
        effects: estimates.clone(),
        estimates,
        iterations: Some(cond.iterations),
        gradient_norm: None,
        recovered_rates: None,
    }
}

fn run_unconditional(
    method: FitMethod,
    data: &StratifiedDataset,
    adjustment: Adjustment,
) -> MethodReport {
    let out = match naive::fit_unconditional(data, adjustment) {
        Ok(o) => o,
        Err(e) => return MethodReport::failed(method.name(), e.to_string()),
    };
    let p = out.labels.len();
    let glm = out.fit;
    let estimates: Vec<EstimateOut> = out
        .labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            EstimateOut::from_coefficient(
                label.clone(),
                glm.coefficients[j],
                glm.covariance.as_ref().map(|c| c[j * p + j]),
            )
        })
        .collect();
    let effects = estimates[out.x_cols.clone()].to_vec();
    // Quasi-separation means the reported maximum is a boundary artifact;
    // treat it as non-convergence for the exit code.
    let converged = glm.converged && !glm.separation;
    let note = glm
        .separation
        .then(|| "quasi-separation detected: a fitted probability reached 0 or 1".to_string());
    MethodReport {
        method: method.name(),
        ok: true,
        error: None,
        note,
        converged: Some(converged),
        loglik: Some(glm.loglik),
        effects,
        estimates,
        iterations: Some(glm.iterations),
        gradient_norm: None,
        recovered_rates: None,
    }
}
