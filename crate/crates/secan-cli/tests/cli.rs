//! End-to-end tests of the `secan` binary plus ingestion-level checks.
//! Each test works in its own scratch directory under the system temp
//! directory; files are left behind for post-mortem inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use secan_core::sim::population::{generate_population, sample_matched_cc};
use secan_core::sim::{stream, StreamKind};
use secan_core::{fit, naive, FitOptions, RateSpec, SimConfig, Variant};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_secan")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("secan-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("the binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal termination")
}

/// The 16-row clinical-style fixture: two derivable factors, one derivable
/// covariate and outcome, two rows with missing values.
const CLINICAL_CSV: &str = "\
id,readmit,stay_days,n_diag,age_years,sex
1,1,5,6,62,F
2,0,2,1,45,M
3,0,7,4,51,F
4,1,1,2,,M
5,0,4,5,70,M
6,1,6,2,39,F
7,0,3,3,44,F
8,1,2,8,58,M
9,0,8,2,66,M
10,1,4,NA,52,F
11,0,1,1,41,M
12,1,9,7,73,F
13,1,5,2,48,M
14,0,2,4,55,F
15,1,3,3,61,M
16,0,6,5,37,F
";

const CLINICAL_TOML: &str = r#"
input = "data.csv"

[columns]
disease = "readmit"
outcome = "long_stay"
covariates = ["many_diag"]
factors = ["age50", "sex"]

[derive.long_stay]
source = "stay_days"
greater_than = 3.0

[derive.many_diag]
source = "n_diag"
greater_than = 3.0

[derive.age50]
source = "age_years"
at_least = 50.0

[fit]
methods = ["unadjusted"]
"#;

#[test]
fn version_and_usage_follow_the_exit_contract() {
    let dir = workdir("version");
    let ok = run_in(&dir, &["--version"]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("secan"));

    let usage = run_in(&dir, &["fit"]); // missing required --config
    assert_eq!(code(&usage), 1, "usage problems are input errors");

    let unknown = run_in(&dir, &["frobnicate"]);
    assert_eq!(code(&unknown), 1);
}

#[test]
fn ingestion_derives_columns_drops_missing_rows_and_orders_strata() {
    let dir = workdir("ingest");
    fs::write(dir.join("data.csv"), CLINICAL_CSV).unwrap();
    fs::write(dir.join("analysis.toml"), CLINICAL_TOML).unwrap();

    let out = run_in(
        &dir,
        &["fit", "--config", "analysis.toml", "--output", "report.json"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tool"], "secan");
    assert!(report["version"].as_str().unwrap().contains('.'));
    assert_eq!(report["config"]["columns"]["disease"], "readmit");

    let ingestion = &report["ingestion"];
    assert_eq!(ingestion["rows_read"], 16);
    assert_eq!(ingestion["rows_dropped_missing"], 2);
    assert_eq!(ingestion["rows_retained"], 14);

    // Cross-classification is lexicographic in (age50, sex) level order.
    let strata = ingestion["strata"].as_array().unwrap();
    let labels: Vec<&str> = strata.iter().map(|s| s["label"].as_str().unwrap()).collect();
    assert_eq!(
        labels,
        vec![
            "age50=0, sex=F",
            "age50=0, sex=M",
            "age50=1, sex=F",
            "age50=1, sex=M"
        ]
    );
    let sizes: Vec<u64> = strata.iter().map(|s| s["n"].as_u64().unwrap()).collect();
    assert_eq!(sizes.iter().sum::<u64>(), 14);
    for s in strata {
        assert!(s["cases"].as_u64().unwrap() >= 1);
        assert!(s["controls"].as_u64().unwrap() >= 1);
    }

    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["method"], "unadjusted");
    assert_eq!(results[0]["ok"], true);
}

#[test]
fn input_problems_name_the_culprit_and_exit_one() {
    let dir = workdir("input-errors");
    fs::write(dir.join("data.csv"), CLINICAL_CSV).unwrap();

    // A config referencing a column the file does not have.
    let bad_column = CLINICAL_TOML.replace("source = \"stay_days\"", "source = \"stay_dayz\"");
    fs::write(dir.join("bad-column.toml"), bad_column).unwrap();
    let out = run_in(&dir, &["fit", "--config", "bad-column.toml"]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("stay_dayz"),
        "the error should name the unknown column: {}",
        stderr(&out)
    );

    // The known-rates method with a wrong-length rates vector: the message
    // names the expected stratum count (K = 4 here).
    fs::write(dir.join("analysis.toml"), CLINICAL_TOML).unwrap();
    let out = run_in(
        &dir,
        &[
            "fit",
            "--config",
            "analysis.toml",
            "--methods",
            "pm2",
            "--rates",
            "0.1,0.2",
        ],
    );
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(
        msg.contains("expected 4"),
        "the error should name the expected stratum count: {msg}"
    );

    // A missing config file.
    let out = run_in(&dir, &["fit", "--config", "no-such.toml"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no-such.toml"));

    // A stratum with no cases: row 13 is the only case of (age50=0, M).
    let degenerate = CLINICAL_CSV.replace("13,1,5,2,48,M", "13,0,5,2,48,M");
    fs::write(dir.join("degenerate.csv"), degenerate).unwrap();
    let out = run_in(
        &dir,
        &["fit", "--config", "analysis.toml", "--input", "degenerate.csv"],
    );
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(
        msg.contains("age50=0, sex=M") && msg.contains("0 case(s)"),
        "the error should list the offending stratum: {msg}"
    );
}

/// Writes a four-stratum dataset drawn from the simulation generator as a
/// CSV with two explicit binary factor columns, so every method including
/// the factor-interaction adjustment is applicable. Returns the realized
/// per-stratum disease rates for the known-rates method.
fn write_four_stratum_fixture(dir: &Path) -> Vec<f64> {
    let mut config = SimConfig::two_stratum_benchmark(0.15, 60);
    config.stratum_shares = vec![0.25, 0.25, 0.25, 0.25];
    config.beta0 = vec![-1.0, -0.2, -0.6, -0.4];
    config.rate = RateSpec::Target(0.15);
    config.n_population = 8000;
    config.seed = 4242;
    let mut pop_rng = stream(config.seed, StreamKind::Population);
    let population = generate_population(&config, &mut pop_rng).unwrap();
    let mut rep_rng = stream(config.seed, StreamKind::Replicate(0));
    let data =
        sample_matched_cc(&population, config.n_cases, config.n_controls, &mut rep_rng).unwrap();

    let mut csv = String::from("d,f1,f2,y,x1\n");
    for obs in data.to_observations() {
        let f1 = (obs.stratum - 1) / 2;
        let f2 = (obs.stratum - 1) % 2;
        csv.push_str(&format!(
            "{},{f1},{f2},{},{}\n",
            obs.disease, obs.outcome, obs.covariates[0]
        ));
    }
    fs::write(dir.join("four.csv"), csv).unwrap();

    fs::write(
        dir.join("four.toml"),
        r#"
input = "four.csv"

[columns]
disease = "d"
outcome = "y"
covariates = ["x1"]
factors = ["f1", "f2"]
"#,
    )
    .unwrap();
    population.stratum_rates()
}

#[test]
fn all_eight_methods_emit_eight_result_blocks() {
    let dir = workdir("all8");
    let rates = write_four_stratum_fixture(&dir);
    let rates_arg = rates
        .iter()
        .map(|r| format!("{r}"))
        .collect::<Vec<_>>()
        .join(",");

    let out = run_in(
        &dir,
        &[
            "fit",
            "--config",
            "four.toml",
            "--methods",
            "conditional,unadjusted,adjusted1,adjusted2,adjusted3,pm1,pm2,pm3",
            "--rates",
            &rates_arg,
            "--output",
            "report.json",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 8, "one result block per requested method");
    let names: Vec<&str> = results.iter().map(|b| b["method"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        vec![
            "conditional",
            "unadjusted",
            "adjusted1",
            "adjusted2",
            "adjusted3",
            "pm1",
            "pm2",
            "pm3"
        ]
    );
    for block in results {
        assert_eq!(block["ok"], true, "{}: {block}", block["method"]);
        assert_eq!(block["converged"], true, "{}: {block}", block["method"]);
        assert!(
            block["effects"][0]["se"].as_f64().is_some(),
            "{} should report an effect SE",
            block["method"]
        );
    }

    // The factor-interaction design names its interaction column.
    let adjusted3 = &results[4];
    let labels: Vec<&str> = adjusted3["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["label"].as_str().unwrap())
        .collect();
    assert!(
        labels.iter().any(|l| l.contains('*')),
        "interaction term missing from {labels:?}"
    );

    // The estimated-rates method reports a rate per stratum, inside (0,1).
    let recovered = results[7]["recovered_rates"].as_array().unwrap();
    assert_eq!(recovered.len(), 4);
    for r in recovered {
        let rate = r["rate"].as_f64().unwrap();
        assert!(rate > 0.0 && rate < 1.0);
    }
}

#[test]
fn written_dataset_round_trips_through_fit() {
    let dir = workdir("roundtrip");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--rate",
            "0.2",
            "--population",
            "6000",
            "--n-per-group",
            "40",
            "--replicates",
            "1",
            "--seed",
            "909",
            "--methods",
            "pm1,adjusted2",
            "--out",
            "summary.csv",
            "--write-dataset",
            "sample.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // A single replicate leaves the sampling spread undefined.
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let pm1_row = summary
        .lines()
        .find(|l| l.starts_with("pm1,"))
        .expect("summary should have a pm1 row");
    let fields: Vec<&str> = pm1_row.split(',').collect();
    assert_eq!(fields[4], "NA", "emp_sd must be NA at one replicate: {pm1_row}");

    fs::write(
        dir.join("rt.toml"),
        r#"
input = "sample.csv"

[columns]
disease = "d"
outcome = "y"
covariates = ["x1"]
stratum = "stratum"

[fit]
methods = ["pm1", "adjusted2"]
"#,
    )
    .unwrap();
    let out = run_in(&dir, &["fit", "--config", "rt.toml", "--output", "rt.json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("rt.json")).unwrap()).unwrap();

    // The same draw, fitted in process.
    let mut config = SimConfig::two_stratum_benchmark(0.2, 40);
    config.n_population = 6000;
    config.n_replicates = 1;
    config.seed = 909;
    let mut pop_rng = stream(config.seed, StreamKind::Population);
    let population = generate_population(&config, &mut pop_rng).unwrap();
    let mut rep_rng = stream(config.seed, StreamKind::Replicate(0));
    let data =
        sample_matched_cc(&population, config.n_cases, config.n_controls, &mut rep_rng).unwrap();
    let pm1 = fit(Variant::Pm1, &data, None, &FitOptions::default()).unwrap();
    let expected_pm1 = pm1.estimate("beta1[1]").unwrap().value;
    let adj2 = naive::fit_unconditional(&data, naive::Adjustment::StratumDisease).unwrap();
    let expected_adj2 = adj2.fit.coefficients[adj2.x_cols.start];

    let results = report["results"].as_array().unwrap();
    let cli_pm1 = results[0]["effects"][0]["value"].as_f64().unwrap();
    let cli_adj2 = results[1]["effects"][0]["value"].as_f64().unwrap();
    assert!(
        (cli_pm1 - expected_pm1).abs() <= 1e-10,
        "pm1 round trip: {cli_pm1} vs {expected_pm1}"
    );
    assert!(
        (cli_adj2 - expected_adj2).abs() <= 1e-10,
        "adjusted2 round trip: {cli_adj2} vs {expected_adj2}"
    );
}

#[test]
fn summaries_are_deterministic_whatever_the_worker_count() {
    let dir = workdir("workers");
    let base = [
        "simulate",
        "--rate",
        "0.2",
        "--population",
        "6000",
        "--n-per-group",
        "40",
        "--replicates",
        "6",
        "--seed",
        "777",
        "--methods",
        "unadjusted,adjusted2",
    ];
    for (tag, workers) in [("a", "1"), ("b", "3"), ("c", "3")] {
        let summary = format!("summary-{tag}.csv");
        let dump = format!("dump-{tag}.csv");
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--workers", workers, "--out", &summary, "--dump", &dump]);
        let out = run_in(&dir, &args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let summary_a = fs::read(dir.join("summary-a.csv")).unwrap();
    let summary_b = fs::read(dir.join("summary-b.csv")).unwrap();
    let summary_c = fs::read(dir.join("summary-c.csv")).unwrap();
    assert_eq!(summary_a, summary_b, "one worker vs three");
    assert_eq!(summary_b, summary_c, "rerun at three workers");
    let dump_a = fs::read(dir.join("dump-a.csv")).unwrap();
    let dump_b = fs::read(dir.join("dump-b.csv")).unwrap();
    assert_eq!(dump_a, dump_b, "per-replicate dumps");
}

#[test]
fn summarize_reproduces_the_study_summary_and_counts_failures() {
    let dir = workdir("summarize");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--rate",
            "0.2",
            "--population",
            "6000",
            "--n-per-group",
            "40",
            "--replicates",
            "6",
            "--seed",
            "777",
            "--methods",
            "unadjusted,pm1",
            "--out",
            "summary.csv",
            "--dump",
            "dump.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out = run_in(
        &dir,
        &[
            "summarize",
            "--input",
            "dump.csv",
            "--true-effect",
            "0.6931471805599453",
            "--out",
            "again.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(
        fs::read(dir.join("summary.csv")).unwrap(),
        fs::read(dir.join("again.csv")).unwrap(),
        "re-aggregating the dump must reproduce the summary byte-for-byte"
    );

    // Failed replicates (all-NA rows) count as failures, and the moments
    // are computed over the used replicates only.
    fs::write(
        dir.join("hand.csv"),
        "replicate,method,estimate,se,covered\n\
         0,pm1,0.8,0.2,1\n\
         1,pm1,NA,NA,NA\n\
         2,pm1,0.6,0.25,0\n",
    )
    .unwrap();
    let out = run_in(
        &dir,
        &["summarize", "--input", "hand.csv", "--true-effect", "0.7"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    // bias = mean(0.8, 0.6) - 0.7 = 0; cp = 1/2; n_fail = 1.
    assert_eq!(
        row, "pm1,0.000000,0.000000,0.225000,0.141421,1.000000,0.500000,1",
        "full table: {text}"
    );
}

#[test]
fn bare_config_names_resolve_through_the_environment_directory() {
    let dir = workdir("config-dir");
    let cfg_dir = dir.join("configs");
    fs::create_dir_all(&cfg_dir).unwrap();
    fs::write(dir.join("data.csv"), CLINICAL_CSV).unwrap();
    fs::write(cfg_dir.join("analysis.toml"), CLINICAL_TOML).unwrap();

    let out = Command::new(bin())
        .args(["fit", "--config", "analysis.toml", "--output", "report.json"])
        .current_dir(&dir)
        .env("SECAN_CONFIG_DIR", &cfg_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(dir.join("report.json").exists());
}

#[test]
fn benchmark_run_ranks_the_known_rates_method_first() {
    let dir = workdir("benchmark");
    let out = run_in(
        &dir,
        &[
            "simulate",
            "--rate",
            "0.10",
            "--n-per-group",
            "500",
            "--population",
            "200000",
            "--replicates",
            "100",
            "--seed",
            "20260816",
            "--out",
            "summary.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut biases: Vec<(String, f64)> = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        biases.push((fields[0].to_string(), fields[1].parse::<f64>().unwrap().abs()));
    }
    assert_eq!(biases.len(), 7, "all seven methods run by default: {text}");
    let (best, _) = biases
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .clone();
    assert_eq!(
        best, "pm2",
        "the known-rates method should have the smallest |bias| when the \
         disease is not rare: {text}"
    );
}

#[test]
fn retained_rows_survive_ingestion_exactly() {
    let dir = workdir("lossless");
    let gnarly = [0.1_f64 + 0.2, 1.0 / 3.0, -2.918905063702543, 6.02e23, -1.6e-19];
    let mut csv = String::from("d,stratum,y,x1\n");
    for (i, v) in gnarly.iter().enumerate() {
        let d = u8::from(i % 2 == 0);
        let y = u8::from(i % 3 == 0);
        csv.push_str(&format!("{d},1,{y},{v}\n"));
    }
    // A second stratum so the dataset is valid, plus a dropped row.
    csv.push_str("1,2,1,0.5\n0,2,0,-0.25\n0,2,NA,1.0\n");
    let path = dir.join("data.csv");
    fs::write(&path, &csv).unwrap();

    let config = secan_cli::config::AnalysisConfig {
        input: Some(path.clone()),
        columns: Some(secan_cli::config::Columns {
            disease: "d".into(),
            outcome: "y".into(),
            covariates: vec!["x1".into()],
            factors: None,
            stratum: Some("stratum".into()),
        }),
        ..Default::default()
    };
    let (data, report) = secan_cli::ingest::ingest_csv(&path, &config).unwrap();
    assert_eq!(report.rows_read, 8);
    assert_eq!(report.rows_dropped_missing, 1);
    assert_eq!(report.rows_retained, 7);

    let obs = data.to_observations();
    for (i, v) in gnarly.iter().enumerate() {
        assert_eq!(
            obs[i].covariates[0].to_bits(),
            v.to_bits(),
            "covariate {i} must round-trip bit-exactly"
        );
    }
}

#[test]
fn derive_rules_honor_their_boundaries() {
    let dir = workdir("rules");
    let csv = "\
d,k,age,status,score
1,1,50,old,3
0,1,49.999,new,3.0001
1,2,50.001,<30,2.9999
0,2,0,NO,4
";
    fs::write(dir.join("data.csv"), csv).unwrap();
    let toml = r#"
input = "data.csv"

[columns]
disease = "d"
outcome = "senior"
covariates = ["high_score"]
stratum = "k"

[derive.senior]
source = "age"
at_least = 50.0

[derive.high_score]
source = "score"
greater_than = 3.0
"#;
    fs::write(dir.join("rules.toml"), toml).unwrap();

    let config: secan_cli::config::AnalysisConfig =
        toml::from_str(&fs::read_to_string(dir.join("rules.toml")).unwrap()).unwrap();
    let (data, _) = secan_cli::ingest::ingest_csv(&dir.join("data.csv"), &config).unwrap();
    let obs = data.to_observations();
    // at_least: 50 -> 1 (boundary included), 49.999 -> 0.
    assert_eq!(obs[0].outcome, 1);
    assert_eq!(obs[1].outcome, 0);
    // greater_than: 3 -> 0 (boundary excluded), 3.0001 -> 1.
    assert_eq!(obs[0].covariates[0], 0.0);
    assert_eq!(obs[1].covariates[0], 1.0);

    // one_of membership on strings.
    let toml2 = r#"
input = "data.csv"

[columns]
disease = "d"
outcome = "readmitted"
covariates = ["high_score"]
stratum = "k"

[derive.readmitted]
source = "status"
one_of = ["<30", "old"]

[derive.high_score]
source = "score"
greater_than = 3.0
"#;
    let config2: secan_cli::config::AnalysisConfig = toml::from_str(toml2).unwrap();
    let (data2, _) = secan_cli::ingest::ingest_csv(&dir.join("data.csv"), &config2).unwrap();
    let obs2 = data2.to_observations();
    assert_eq!(obs2.iter().map(|o| o.outcome).collect::<Vec<_>>(), vec![1, 0, 1, 0]);
}
