//! CSV ingestion: reads a comma-delimited, headered, UTF-8 file, applies
//! derived-column rules, drops rows with missing values in mapped columns,
//! cross-classifies matching factors into strata, and builds the core
//! dataset plus an ingestion report.
//!
//! Missing values are the empty field and the literal token `NA` (after
//! trimming). Any other unparseable value in a mapped column is an error,
//! not a silent drop.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use secan_core::{Observation, StratifiedDataset};

use crate::config::{AnalysisConfig, DeriveRule};

/// What happened during ingestion; embedded in fit reports.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    /// Data rows in the file (header excluded).
    pub rows_read: usize,
    /// Rows dropped because a mapped column was missing (`""` or `NA`).
    pub rows_dropped_missing: usize,
    /// Rows that entered the dataset.
    pub rows_retained: usize,
    /// Per-stratum composition, in stratum-index order.
    pub strata: Vec<StratumReport>,
}

/// One stratum's composition.
#[derive(Debug, Clone, Serialize)]
pub struct StratumReport {
    /// 1-based stratum index.
    pub index: usize,
    /// Human-readable identity: the matching-factor levels that define the
    /// stratum, or the raw label when a stratum column was mapped.
    pub label: String,
    pub n: usize,
    pub cases: usize,
    pub controls: usize,
}

/// Where a mapped column's values come from.
enum Source<'a> {
    /// A raw CSV column, by header index.
    Real(usize),
    /// A derived binary column: rule applied to a raw column.
    Derived { source: usize, rule: &'a DeriveRule },
}

/// How strata are determined.
enum Grouping<'a> {
    /// Cross-classify these factor columns.
    Factors(Vec<(String, Source<'a>)>),
    /// Use this column's 1..K labels directly.
    Stratum(Source<'a>),
}

/// Reads `path` per `config` and returns the dataset plus the report.
pub fn ingest_csv(
    path: &Path,
    config: &AnalysisConfig,
) -> Result<(StratifiedDataset, IngestReport)> {
    config.validate()?;
    let columns = config
        .columns
        .as_ref()
        .context("the config needs a `columns` section to ingest data")?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening input file `{}`", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("reading the header row of `{}`", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    for name in config.derive.keys() {
        if headers.iter().any(|h| h == name) {
            bail!("derived column `{name}` shadows an input column of the same name");
        }
    }

    let index_of = |name: &str| -> Result<usize> {
        let mut hits = headers.iter().enumerate().filter(|(_, h)| h.as_str() == name);
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            (Some(_), Some(_)) => bail!("column `{name}` appears more than once in the header"),
            (None, _) => bail!(
                "unknown column `{name}`; the file has columns: {}",
                headers.join(", ")
            ),
        }
    };
    let resolve = |name: &str| -> Result<Source<'_>> {
        if let Some(rule) = config.derive.get(name) {
            let source = index_of(&rule.source).with_context(|| {
                format!("resolving the source of derived column `{name}`")
            })?;
            Ok(Source::Derived { source, rule })
        } else {
            Ok(Source::Real(index_of(name)?))
        }
    };

    let disease_src = resolve(&columns.disease)?;
    let outcome_src = resolve(&columns.outcome)?;
    let covariate_srcs: Vec<(String, Source)> = columns
        .covariates
        .iter()
        .map(|name| Ok((name.clone(), resolve(name)?)))
        .collect::<Result<_>>()?;
    let grouping = match (&columns.factors, &columns.stratum) {
        (Some(factors), None) => Grouping::Factors(
            factors
                .iter()
                .map(|name| Ok((name.clone(), resolve(name)?)))
                .collect::<Result<_>>()?,
        ),
        (None, Some(stratum)) => Grouping::Stratum(resolve(stratum)?),
        _ => unreachable!("config validation enforces exactly one grouping"),
    };

    // d, y, covariates, and either factor levels or a raw stratum label.
    struct Row {
        disease: u8,
        outcome: u8,
        covariates: Vec<f64>,
        levels: Vec<String>,
        stratum: usize,
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut rows_read = 0usize;
    let mut dropped = 0usize;
    'rows: for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.with_context(|| format!("row {row_no} is malformed"))?;
        rows_read += 1;

        let raw = |src: &Source| -> &str {
            let idx = match src {
                Source::Real(i) | Source::Derived { source: i, .. } => *i,
            };
            record.get(idx).unwrap_or("").trim()
        };
        let needed: Vec<&Source> = std::iter::once(&disease_src)
            .chain(std::iter::once(&outcome_src))
            .chain(covariate_srcs.iter().map(|(_, s)| s))
            .chain(match &grouping {
                Grouping::Factors(f) => {
                    Box::new(f.iter().map(|(_, s)| s)) as Box<dyn Iterator<Item = &Source>>
                }
                Grouping::Stratum(s) => Box::new(std::iter::once(s)),
            })
            .collect();
        for src in needed {
            let value = raw(src);
            if value.is_empty() || value == "NA" {
                dropped += 1;
                continue 'rows;
            }
        }

        let disease = binary_value(raw(&disease_src), &disease_src, &columns.disease, row_no)?;
        let outcome = binary_value(raw(&outcome_src), &outcome_src, &columns.outcome, row_no)?;
        let covariates = covariate_srcs
            .iter()
            .map(|(name, src)| match src {
                Source::Real(_) => numeric_value(raw(src), name, row_no),
                Source::Derived { rule, .. } => {
                    Ok(f64::from(apply_rule(raw(src), rule, name, row_no)?))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let (levels, stratum) = match &grouping {
            Grouping::Factors(factors) => {
                let levels = factors
                    .iter()
                    .map(|(name, src)| match src {
                        Source::Real(_) => Ok(raw(src).to_string()),
                        Source::Derived { rule, .. } => {
                            Ok(apply_rule(raw(src), rule, name, row_no)?.to_string())
                        }
                    })
                    .collect::<Result<Vec<String>>>()?;
                (levels, 0)
            }
            Grouping::Stratum(src) => {
                let value = raw(src);
                let label: usize = value.parse().ok().filter(|l| *l >= 1).with_context(|| {
                    format!(
                        "column `{}`, row {row_no}: stratum labels must be \
                         positive integers, found `{value}`",
                        columns.stratum.as_deref().unwrap_or_default()
                    )
                })?;
                (Vec::new(), label)
            }
        };
        rows.push(Row { disease, outcome, covariates, levels, stratum });
    }

    if rows.is_empty() {
        bail!(
            "no usable rows in `{}`: read {rows_read}, dropped {dropped} with missing values",
            path.display()
        );
    }

    // Assign stratum indices and build labels and factor metadata.
    let (indices, labels, factor_meta): (Vec<usize>, Vec<String>, Option<Vec<Vec<usize>>>) =
        match &grouping {
            Grouping::Factors(factors) => {
                let combos: BTreeSet<Vec<String>> =
                    rows.iter().map(|r| r.levels.clone()).collect();
                let combos: Vec<Vec<String>> = combos.into_iter().collect();
                let index_by_combo: BTreeMap<&[String], usize> = combos
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.as_slice(), i + 1))
                    .collect();
                let f_count = factors.len();
                let per_factor_levels: Vec<Vec<String>> = (0..f_count)
                    .map(|f| {
                        let set: BTreeSet<String> =
                            combos.iter().map(|c| c[f].clone()).collect();
                        set.into_iter().collect()
                    })
                    .collect();
                let meta: Vec<Vec<usize>> = combos
                    .iter()
                    .map(|c| {
                        (0..f_count)
                            .map(|f| {
                                per_factor_levels[f]
                                    .iter()
                                    .position(|l| *l == c[f])
                                    .expect("every combo level was collected")
                            })
                            .collect()
                    })
                    .collect();
                let labels = combos
                    .iter()
                    .map(|c| {
                        factors
                            .iter()
                            .zip(c)
                            .map(|((name, _), level)| format!("{name}={level}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    })
                    .collect();
                let indices = rows
                    .iter()
                    .map(|r| index_by_combo[r.levels.as_slice()])
                    .collect();
                (indices, labels, Some(meta))
            }
            Grouping::Stratum(_) => {
                let k = rows.iter().map(|r| r.stratum).max().unwrap_or(0);
                let seen: BTreeSet<usize> = rows.iter().map(|r| r.stratum).collect();
                let gaps: Vec<String> = (1..=k)
                    .filter(|label| !seen.contains(label))
                    .map(|label| label.to_string())
                    .collect();
                if !gaps.is_empty() {
                    bail!(
                        "stratum labels must be contiguous 1..{k}; no rows carry \
                         label(s) {}",
                        gaps.join(", ")
                    );
                }
                let labels = (1..=k).map(|label| format!("stratum {label}")).collect();
                (rows.iter().map(|r| r.stratum).collect(), labels, None)
            }
        };

    // Listing every degenerate stratum beats the first-failure error the
    // dataset constructor would raise.
    let k = labels.len();
    let mut cases = vec![0usize; k];
    let mut controls = vec![0usize; k];
    for (row, &idx) in rows.iter().zip(&indices) {
        if row.disease == 1 {
            cases[idx - 1] += 1;
        } else {
            controls[idx - 1] += 1;
        }
    }
    let offenders: Vec<String> = (0..k)
        .filter(|&i| cases[i] == 0 || controls[i] == 0)
        .map(|i| {
            format!(
                "stratum {} ({}) has {} case(s) and {} control(s)",
                i + 1,
                labels[i],
                cases[i],
                controls[i]
            )
        })
        .collect();
    if !offenders.is_empty() {
        bail!(
            "every stratum needs at least one case and one control: {}",
            offenders.join("; ")
        );
    }

    let observations: Vec<Observation> = rows
        .iter()
        .zip(&indices)
        .map(|(row, &idx)| Observation {
            disease: row.disease,
            stratum: idx,
            outcome: row.outcome,
            covariates: row.covariates.clone(),
        })
        .collect();
    let mut data = StratifiedDataset::from_observations(&observations)
        .context("constructing the stratified dataset")?;
    if let Some(meta) = factor_meta {
        data = data
            .with_factor_levels(meta)
            .context("attaching matching-factor metadata")?;
    }

    let strata = (0..k)
        .map(|i| StratumReport {
            index: i + 1,
            label: labels[i].clone(),
            n: cases[i] + controls[i],
            cases: cases[i],
            controls: controls[i],
        })
        .collect();
    let report = IngestReport {
        rows_read,
        rows_dropped_missing: dropped,
        rows_retained: rows.len(),
        strata,
    };
    Ok((data, report))
}

/// Parses a 0/1 field, applying the derive rule when the source is
/// derived.
fn binary_value(raw: &str, src: &Source, name: &str, row_no: usize) -> Result<u8> {
    match src {
        Source::Real(_) => match raw {
            "0" => Ok(0),
            "1" => Ok(1),
            other => bail!("column `{name}`, row {row_no}: expected 0 or 1, found `{other}`"),
        },
        Source::Derived { rule, .. } => apply_rule(raw, rule, name, row_no),
    }
}

/// Parses a numeric covariate field.
fn numeric_value(raw: &str, name: &str, row_no: usize) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| {
        anyhow::anyhow!("column `{name}`, row {row_no}: expected a number, found `{raw}`")
    })?;
    if !value.is_finite() {
        bail!("column `{name}`, row {row_no}: non-finite value `{raw}`");
    }
    Ok(value)
}

/// Applies a derive rule to a raw value, yielding 0 or 1.
fn apply_rule(raw: &str, rule: &DeriveRule, name: &str, row_no: usize) -> Result<u8> {
    if let Some(t) = rule.greater_than {
        let v = numeric_value(raw, &rule.source, row_no)
            .with_context(|| format!("evaluating derived column `{name}`"))?;
        return Ok(u8::from(v > t));
    }
    if let Some(t) = rule.at_least {
        let v = numeric_value(raw, &rule.source, row_no)
            .with_context(|| format!("evaluating derived column `{name}`"))?;
        return Ok(u8::from(v >= t));
    }
    if let Some(set) = &rule.one_of {
        return Ok(u8::from(set.iter().any(|s| s == raw)));
    }
    unreachable!("rule validation enforces exactly one rule field")
}
