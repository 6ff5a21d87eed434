//! The `summarize` subcommand: re-aggregate a per-replicate dump (as
//! written by `simulate --dump`) into the summary table. Uses the same
//! aggregation as the study itself, so summarizing a study's own dump
//! reproduces its summary byte-for-byte.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use secan_core::{summarize_records, Method, MethodRecord, SummaryRow};

use crate::commands::{emit, CommandOutcome};
use crate::table::{summary_csv, DUMP_HEADER};

/// Aggregate per-replicate estimates into the summary table.
#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Long-format CSV of per-replicate estimates.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// The true covariate effect the estimates target.
    #[arg(long = "true-effect", value_name = "FLOAT", allow_hyphen_values = true)]
    pub true_effect: f64,
    /// Summary CSV path; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn run(args: &SummarizeArgs) -> Result<CommandOutcome> {
    if !args.true_effect.is_finite() {
        bail!("--true-effect must be finite");
    }
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading dump file `{}`", args.input.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == DUMP_HEADER => {}
        Some(other) => bail!("unexpected dump header `{other}`; expected `{DUMP_HEADER}`"),
        None => bail!("dump file `{}` is empty", args.input.display()),
    }

    // Methods in first-appearance order, each with its records in file
    // order (the dump writes replicates in order, so this is replicate
    // order).
    let mut methods: Vec<Method> = Vec::new();
    let mut records: Vec<Vec<Option<MethodRecord>>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("line {line_no}: expected 5 fields, found {}", fields.len());
        }
        let method = Method::from_name(fields[1])
            .with_context(|| format!("line {line_no}: unknown method `{}`", fields[1]))?;
        let record = parse_record(&fields, line_no)?;
        match methods.iter().position(|m| *m == method) {
            Some(j) => records[j].push(record),
            None => {
                methods.push(method);
                records.push(vec![record]);
            }
        }
    }
    if methods.is_empty() {
        bail!("dump file `{}` has no data rows", args.input.display());
    }

    let rows: Vec<SummaryRow> = methods
        .iter()
        .zip(&records)
        .map(|(&m, recs)| summarize_records(m, recs, args.true_effect))
        .collect();
    emit(args.out.as_deref(), &summary_csv(&rows))
        .map(|()| CommandOutcome::Success)
}

/// Parses the estimate/se/covered triple: all `NA` is a failed replicate,
/// anything mixed is malformed.
fn parse_record(fields: &[&str], line_no: usize) -> Result<Option<MethodRecord>> {
    let nas = fields[2..5].iter().filter(|f| **f == "NA").count();
    if nas == 3 {
        return Ok(None);
    }
    if nas != 0 {
        bail!("line {line_no}: estimate, se, and covered must all be NA or all be values");
    }
    let estimate: f64 = fields[2]
        .parse()
        .with_context(|| format!("line {line_no}: bad estimate `{}`", fields[2]))?;
    let se: f64 = fields[3]
        .parse()
        .with_context(|| format!("line {line_no}: bad se `{}`", fields[3]))?;
    let covered = match fields[4] {
        "1" => true,
        "0" => false,
        other => bail!("line {line_no}: covered must be 0 or 1, found `{other}`"),
    };
    Ok(Some(MethodRecord { estimate, se, covered }))
}
