use std::path::Path;
use std::process::Command;

use dana_cli::runner::{csv_name, SUMMARY_FILE};
use dana_cli::{
    emit_config, parse_config, parse_speedup_config, run_experiment, speedup_table, RunOptions,
};
use dana_core::exectime::{Environment, Paradigm};
use dana_core::Algorithm;

fn options(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        jobs: Some(2),
        seed_offset: 0,
    }
}

fn dana() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dana"))
}

const SWEEP: &str = r#"
algorithm = ["dana_slim", "nag_asgd"]
workers = [1, 8, 16]
seeds = [0, 1, 2]
batch_size = 64
epochs = 2
objective = "logistic"
"#;

#[test]
fn unsupported_algorithm_is_rejected() {
    let err = parse_config("algorithm = \"yellowfin\"\nworkers = 4\nobjective = \"quadratic\"\n")
        .unwrap_err();
    assert!(err.to_string().contains("unsupported algorithm"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_or_invalid_fields_are_reported_by_key() {
    let cases = [
        ("algorithm = \"asgd\"\nworkers = 4\n", "objective"),
        ("algorithm = \"asgd\"\nworkers = 0\nobjective = \"quadratic\"\n", "workers"),
        ("algorithm = \"sequential_nag\"\nworkers = [1, 2]\nobjective = \"quadratic\"\n", "sequential_nag"),
        ("algorithm = \"asgd\"\nworkers = 4\nobjective = \"quadratic\"\nmomentum = 0.5\n", "momentum"),
        ("algorithm = \"asgd\"\nworkers = 4\nobjective = \"quadratic\"\ngamma = 1.0\n", "gamma"),
        ("algorithm = \"asgd\"\nworkers = 4\nobjective = \"resnet\"\n", "unsupported objective"),
        ("algorithm = \"asgd\"\nworkers = 4\nobjective = \"quadratic\"\n[schedule]\nwarmup = 5\n", "warmup"),
    ];
    for (text, needle) in cases {
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains(needle), "{needle}: {err}");
    }
}

#[test]
fn emitted_config_parses_to_the_same_config() {
    for text in [
        SWEEP,
        "algorithm = \"dc_asgd\"\nworkers = 4\nlambda = 0.5\n[objective]\nkind = \"quadratic\"\ncurvature = [1.0, 0.5]\ndim = 2\n[exec_model]\nenvironment = \"round_robin\"\nperiod = 3.5\n",
        "algorithm = \"dana_dc\"\nworkers = [2]\n[objective]\nkind = \"mlp\"\nhidden = 8\n[exec_model]\nenvironment = \"heterogeneous\"\nv_mach = 0.5\ntask_template = \"per_task\"\n[schedule]\ndecay_epochs = [3.0]\n",
    ] {
        let parsed = parse_config(text).unwrap();
        let emitted = emit_config(&parsed);
        assert_eq!(parse_config(&emitted).unwrap(), parsed, "{emitted}");
    }
}

#[test]
fn sweep_writes_one_csv_per_run_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(SWEEP).unwrap();
    let report = run_experiment(&config, &options(dir.path())).unwrap();
    assert_eq!(report.runs.len(), 18);
    let csvs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "csv")
        })
        .count();
    assert_eq!(csvs, 18);
    assert!(dir.path().join(SUMMARY_FILE).exists());
    assert_eq!(report.exit_code(), 0);

    for run in &report.runs {
        let text = std::fs::read_to_string(dir.path().join(&run.csv)).unwrap();
        let rows = text.lines().count() - 1;
        // Every master update plus one evaluation row per epoch.
        assert_eq!(rows as u64, run.summary.updates + 2, "{}", run.csv);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap())
            .unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 18);
    assert!(summary["generated_at_unix_ms"].as_u64().unwrap() > 0);
    assert!(summary["runs"][0]["final_eval_loss"].is_f64());
    assert!(summary["runs"][0]["throughput_speedup"].is_f64());
}

#[test]
fn single_worker_dana_zero_matches_sequential_nag_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let run = |algorithm: &str| {
        let text = format!("algorithm = \"{algorithm}\"\nworkers = 1\nepochs = 3\nbatch_size = 32\nobjective = \"logistic\"\n");
        let report = run_experiment(&parse_config(&text).unwrap(), &options(dir.path())).unwrap();
        report.runs[0].summary.final_eval_loss.unwrap()
    };
    let (zero, nag) = (run("dana_zero"), run("sequential_nag"));
    assert!((zero - nag).abs() <= 1e-9, "{zero} vs {nag}");
}

#[test]
fn seed_offset_shifts_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config("algorithm = \"asgd\"\nworkers = 2\nseeds = [0, 1]\nepochs = 1\nobjective = \"quadratic\"\n").unwrap();
    let report = run_experiment(
        &config,
        &RunOptions {
            seed_offset: 10,
            ..options(dir.path())
        },
    )
    .unwrap();
    let seeds: Vec<u64> = report.runs.iter().map(|r| r.summary.seed).collect();
    assert_eq!(seeds, vec![10, 11]);
    assert!(dir.path().join(csv_name(Algorithm::Asgd, 2, 11)).exists());
}

#[test]
fn divergence_in_every_seed_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(
        "algorithm = [\"asgd\", \"nag_asgd\"]\nworkers = 8\nseeds = [0, 1]\neta = 1e6\nepochs = 50\nobjective = \"quadratic\"\n[schedule]\nwarmup_epochs = 0\n",
    )
    .unwrap();
    let report = run_experiment(&config, &options(dir.path())).unwrap();
    assert!(!report.fully_diverged().is_empty());
    assert_eq!(report.exit_code(), 1);
    let run = report.runs.iter().find(|r| r.summary.diverged).unwrap();
    let text = std::fs::read_to_string(dir.path().join(&run.csv)).unwrap();
    assert!(text.trim_end().ends_with(",1"));
}

#[test]
fn speedup_table_rows() {
    let config =
        parse_speedup_config("[speedup]\nworkers = [1, 4, 64]\niterations = 20000\n").unwrap();
    let rows = speedup_table(&config).unwrap();
    assert_eq!(rows.len(), 12);
    for row in &rows {
        if row.workers == 1 {
            assert_eq!(row.speedup, 1.0);
        }
        if row.paradigm == Paradigm::Async {
            assert!((row.speedup / row.workers as f64 - 1.0).abs() < 0.02);
        }
    }
    let at = |mode, paradigm| {
        rows.iter()
            .find(|r| r.workers == 64 && r.mode == mode && r.paradigm == paradigm)
            .unwrap()
            .speedup
    };
    assert!(
        at(Environment::Heterogeneous, Paradigm::Sync)
            <= at(Environment::Heterogeneous, Paradigm::Async) / 3.0
    );
}

#[test]
fn binary_run_uses_env_out_dir_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "algorithm = \"dana_slim\"\nworkers = 3\nepochs = 1\nobjective = \"quadratic\"\n",
    )
    .unwrap();
    let out = dir.path().join("results");
    let status = dana()
        .arg("run")
        .arg(&config)
        .env("DANA_OUT_DIR", &out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert!(out.join("dana_slim_n3_seed0.csv").exists());
    assert!(out.join(SUMMARY_FILE).exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "algorithm = \"yellowfin\"\nworkers = 3\nobjective = \"quadratic\"\n",
    )
    .unwrap();
    let output = dana()
        .arg("run")
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unsupported algorithm"));

    let missing = dana()
        .arg("run")
        .arg(dir.path().join("nope.toml"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn binary_speedup_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("speedup.toml");
    std::fs::write(
        &config,
        "[speedup]\nworkers = [1, 2]\niterations = 1000\nenvironments = [\"homogeneous\"]\n",
    )
    .unwrap();
    let out = dir.path().join("speedup.csv");
    let status = dana()
        .arg("speedup")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "workers,paradigm,mode,speedup");
    assert_eq!(lines[1], "1,async,homogeneous,1.0");
    assert_eq!(lines.len(), 5);
}
