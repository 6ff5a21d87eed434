//! Naive comparator fits: unconditional logistic regressions of the
//! secondary outcome on covariates under several adjustment sets, and
//! conditional logistic regression that conditions on (stratum, disease)
//! cells. These ignore the retrospective sampling wholly or partly and are
//! the baselines against which the profile-likelihood estimators are
//! judged; the adjusted unconditional fits also provide warm starts for
//! those estimators.

pub mod clogit;
pub mod glm;

use std::ops::Range;

use thiserror::Error;

pub use clogit::{
    cell_log_denominator, conditional_logistic_fit, CellData, ClogitError, CondLogitFit,
    CondLogitOptions,
};
pub use glm::{logistic_fit, GlmError, GlmFit};

use crate::data::StratifiedDataset;

/// Covariate-adjustment set for the unconditional logistic regression of
/// the outcome on the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustment {
    /// Intercept and covariates only.
    None,
    /// Adds stratum indicator terms.
    Stratum,
    /// Adds stratum indicators and the disease indicator.
    StratumDisease,
    /// Adds matching-factor main effects, their pairwise interactions, and
    /// the disease indicator. Requires factor metadata on the dataset with
    /// at least two factors.
    FactorInteractionDisease,
}

impl Adjustment {
    pub fn name(self) -> &'static str {
        match self {
            Adjustment::None => "unadjusted",
            Adjustment::Stratum => "adjusted1",
            Adjustment::StratumDisease => "adjusted2",
            Adjustment::FactorInteractionDisease => "adjusted3",
        }
    }
}

#[derive(Debug, Error)]
pub enum NaiveError {
    #[error("the factor-interaction adjustment needs at least two matching factors on the dataset")]
    FactorsRequired,
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Clogit(#[from] ClogitError),
}

/// A regression design: response, row-major matrix, and column metadata.
#[derive(Debug, Clone)]
pub struct Design {
    pub response: Vec<u8>,
    pub matrix: Vec<f64>,
    pub p: usize,
    pub labels: Vec<String>,
    /// Columns holding the covariate effects of interest.
    pub x_cols: Range<usize>,
}

/// Builds the outcome-on-covariates design for the requested adjustment.
/// Columns are ordered intercept, covariates, then adjusters, so the
/// covariate block sits at `1..1+q` for every adjustment.
pub fn secondary_design(
    data: &StratifiedDataset,
    adjustment: Adjustment,
) -> Result<Design, NaiveError> {
    let q = data.q();
    let k_total = data.k();
    let mut labels = vec!["(intercept)".to_string()];
    labels.extend((1..=q).map(|j| format!("x[{j}]")));

    // Per-subject adjuster values are produced by closures so the row loop
    // below stays uniform across adjustments.
    let mut factor_columns: Vec<(String, Vec<f64>)> = Vec::new();
    match adjustment {
        Adjustment::None => {}
        Adjustment::Stratum | Adjustment::StratumDisease => {
            for k in 2..=k_total {
                factor_columns.push((
                    format!("z[{k}]"),
                    stratum_indicator(data, k - 1),
                ));
            }
        }
        Adjustment::FactorInteractionDisease => {
            let levels = data.factor_levels().ok_or(NaiveError::FactorsRequired)?;
            let f_count = levels.first().map_or(0, |l| l.len());
            if f_count < 2 {
                return Err(NaiveError::FactorsRequired);
            }
            let mut mains: Vec<Vec<(usize, String, Vec<f64>)>> = Vec::new();
            for f in 0..f_count {
                let mut observed: Vec<usize> = levels.iter().map(|l| l[f]).collect();
                observed.sort_unstable();
                observed.dedup();
                let mut cols = Vec::new();
                for &level in observed.iter().skip(1) {
                    cols.push((level, format!("f{}[{}]", f + 1, level), factor_indicator(data, levels, f, level)));
                }
                mains.push(cols);
            }
            for cols in &mains {
                for (_, label, col) in cols {
                    factor_columns.push((label.clone(), col.clone()));
                }
            }
            for f in 0..f_count {
                for g in (f + 1)..f_count {
                    for (la, label_a, col_a) in &mains[f] {
                        for (lb, label_b, col_b) in &mains[g] {
                            let _ = (la, lb);
                            let product: Vec<f64> =
                                col_a.iter().zip(col_b).map(|(a, b)| a * b).collect();
                            factor_columns.push((format!("{label_a}*{label_b}"), product));
                        }
                    }
                }
            }
        }
    }
    let disease_column = matches!(
        adjustment,
        Adjustment::StratumDisease | Adjustment::FactorInteractionDisease
    );

    let p = 1 + q + factor_columns.len() + usize::from(disease_column);
    for (label, _) in &factor_columns {
        labels.push(label.clone());
    }
    if disease_column {
        labels.push("d".to_string());
    }

    let n = data.n_total();
    let mut matrix = Vec::with_capacity(n * p);
    let mut response = Vec::with_capacity(n);
    let mut row_index = 0;
    for stratum in data.strata() {
        for i in 0..stratum.n() {
            response.push(stratum.outcome(i));
            matrix.push(1.0);
            matrix.extend_from_slice(stratum.covariates(i));
            for (_, col) in &factor_columns {
                matrix.push(col[row_index]);
            }
            if disease_column {
                matrix.push(f64::from(stratum.disease(i)));
            }
            row_index += 1;
        }
    }
    Ok(Design { response, matrix, p, labels, x_cols: 1..1 + q })
}

fn stratum_indicator(data: &StratifiedDataset, stratum_idx: usize) -> Vec<f64> {
    let mut col = Vec::with_capacity(data.n_total());
    for (k, stratum) in data.strata().iter().enumerate() {
        let v = if k == stratum_idx { 1.0 } else { 0.0 };
        col.extend(std::iter::repeat_n(v, stratum.n()));
    }
    col
}

fn factor_indicator(
    data: &StratifiedDataset,
    levels: &[Vec<usize>],
    factor: usize,
    level: usize,
) -> Vec<f64> {
    let mut col = Vec::with_capacity(data.n_total());
    for (k, stratum) in data.strata().iter().enumerate() {
        let v = if levels[k][factor] == level { 1.0 } else { 0.0 };
        col.extend(std::iter::repeat_n(v, stratum.n()));
    }
    col
}

/// Builds the disease-model design used for warm starts: per-stratum
/// intercept indicators (no global intercept), the covariates, and the
/// outcome. The response is the disease indicator.
pub fn disease_design(data: &StratifiedDataset) -> Design {
    let q = data.q();
    let k_total = data.k();
    let p = k_total + q + 1;
    let mut labels: Vec<String> = (1..=k_total).map(|k| format!("z[{k}]")).collect();
    labels.extend((1..=q).map(|j| format!("x[{j}]")));
    labels.push("y".to_string());

    let n = data.n_total();
    let mut matrix = Vec::with_capacity(n * p);
    let mut response = Vec::with_capacity(n);
    for (k, stratum) in data.strata().iter().enumerate() {
        for i in 0..stratum.n() {
            response.push(stratum.disease(i));
            for kk in 0..k_total {
                matrix.push(if kk == k { 1.0 } else { 0.0 });
            }
            matrix.extend_from_slice(stratum.covariates(i));
            matrix.push(f64::from(stratum.outcome(i)));
        }
    }
    Design { response, matrix, p, labels, x_cols: k_total..k_total + q }
}

/// An unconditional logistic fit plus the design metadata needed to read
/// its coefficients.
#[derive(Debug, Clone)]
pub struct UnconditionalFit {
    pub adjustment: Adjustment,
    pub labels: Vec<String>,
    pub x_cols: Range<usize>,
    pub fit: GlmFit,
}

/// Fits the unconditional logistic regression of the outcome on covariates
/// under the given adjustment set.
pub fn fit_unconditional(
    data: &StratifiedDataset,
    adjustment: Adjustment,
) -> Result<UnconditionalFit, NaiveError> {
    let design = secondary_design(data, adjustment)?;
    let fit = logistic_fit(&design.response, &design.matrix, design.response.len(), design.p)?;
    Ok(UnconditionalFit { adjustment, labels: design.labels, x_cols: design.x_cols, fit })
}

/// Splits the dataset into the 2K (stratum, disease) cells, in stratum
/// order with the control cell first. Returns the cells and their
/// (1-based stratum label, disease) identifiers.
pub fn outcome_cells(data: &StratifiedDataset) -> (Vec<CellData>, Vec<(usize, u8)>) {
    let q = data.q();
    let mut cells = Vec::with_capacity(2 * data.k());
    let mut cell_labels = Vec::with_capacity(2 * data.k());
    for (k, stratum) in data.strata().iter().enumerate() {
        for d in [0u8, 1u8] {
            let mut x = Vec::new();
            let mut events = Vec::new();
            for i in 0..stratum.n() {
                if stratum.disease(i) == d {
                    x.extend_from_slice(stratum.covariates(i));
                    events.push(stratum.outcome(i));
                }
            }
            debug_assert_eq!(x.len(), events.len() * q);
            cells.push(CellData { x, events });
            cell_labels.push((k + 1, d));
        }
    }
    (cells, cell_labels)
}

/// A conditional logistic fit plus the identifiers of its cells.
#[derive(Debug, Clone)]
pub struct ConditionalFit {
    /// (1-based stratum label, disease) per input cell.
    pub cell_labels: Vec<(usize, u8)>,
    pub fit: CondLogitFit,
}

/// Fits the conditional logistic regression of the outcome on covariates,
/// conditioning on the (stratum, disease) cells.
pub fn fit_conditional(
    data: &StratifiedDataset,
    options: &CondLogitOptions,
) -> Result<ConditionalFit, NaiveError> {
    let (cells, cell_labels) = outcome_cells(data);
    let fit = conditional_logistic_fit(&cells, data.q(), options)?;
    Ok(ConditionalFit { cell_labels, fit })
}
