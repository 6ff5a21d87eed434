//! The summary CSV table: one row per method, fixed column order, `NA`
//! for undefined entries. Shared by `simulate` and `summarize` so the
//! two always agree on format.

use secan_core::{MethodRecord, SummaryRow};

/// Fixed header of the summary table.
pub const SUMMARY_HEADER: &str = "method,bias,rb,mean_se,emp_sd,mse_x100,cp,n_fail";

/// Renders summary rows as CSV, deterministic byte-for-byte.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.method.name(),
            fmt(row.bias),
            fmt(row.relative_bias),
            fmt(row.mean_se),
            fmt(row.emp_sd),
            fmt(row.mse_x100),
            fmt(row.coverage),
            row.n_fail,
        ));
    }
    out
}

/// Six decimal places, or the `NA` token.
fn fmt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => "NA".to_string(),
    }
}

/// Fixed header of the per-replicate audit dump.
pub const DUMP_HEADER: &str = "replicate,method,estimate,se,covered";

/// Renders the per-replicate records as a long-format CSV. Estimates and
/// standard errors are written with full round-trip precision so the dump
/// can be re-summarized to the identical table.
pub fn dump_csv(methods: &[&str], records: &[Vec<Option<MethodRecord>>]) -> String {
    let mut out = String::from(DUMP_HEADER);
    out.push('\n');
    for (r, row) in records.iter().enumerate() {
        for (name, record) in methods.iter().zip(row) {
            match record {
                Some(rec) => out.push_str(&format!(
                    "{r},{name},{},{},{}\n",
                    rec.estimate,
                    rec.se,
                    u8::from(rec.covered)
                )),
                None => out.push_str(&format!("{r},{name},NA,NA,NA\n")),
            }
        }
    }
    out
}
