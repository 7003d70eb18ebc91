use std::path::Path;
use std::process::Command;

use codat_cli::fec::{compute, FecArgs};
use codat_cli::oracle::{sweep as oracle_sweep, OracleArgs};
use codat_cli::run_from;
use codat_core::train::TrainHistory;
use codat_core::{Checkpoint, EvalReport};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/published_tables.csv");

fn codat(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_codat"))
        .args(args)
        .env_remove("CODAT_OUT_DIR")
        .output()
        .unwrap()
}

fn small(out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = ["codat", "train", "--epochs", "3", "--set", "hidden=16", "--out-dir"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.push(out.display().to_string());
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn report(path: &Path) -> EvalReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    run_from(small(dir.path(), &["--method", "codat", "--eta", "0.3", "--seed", "0"])).unwrap();
    let run = dir.path().join("codat_toy3_eta0.3_seed0");
    for f in [
        "checkpoint.json",
        "history.jsonl",
        "config.txt",
        "eval_natural.json",
        "eval_robust.json",
        "confusion_natural.csv",
        "confusion_robust.csv",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let history = TrainHistory::read_jsonl(&run.join("history.jsonl")).unwrap();
    assert_eq!(history.records.len(), 3);
    assert_eq!(history.config.seed, 0);
    let robust = report(&run.join("eval_robust.json"));
    assert_eq!(robust.config["method"], "codat");
    assert_eq!(robust.config["seed"], "0");
    assert!(robust.attack.starts_with("pgd-20"));
    let confusion = std::fs::read_to_string(run.join("confusion_robust.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 3);
    let ckpt = Checkpoint::load(&run.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.layer_dims, vec![2, 16, 3]);
}

#[test]
fn eta_above_the_dirac_distance_is_rejected_before_work() {
    let out = codat(&[
        "train",
        "--preset",
        "paper-cifar",
        "--eta",
        "9.5",
        "--out-dir",
        "/nonexistent",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eta < K - 1 = 9") && err.contains("K = 10"), "{err}");
}

#[test]
fn codat_at_zero_radius_writes_the_standard_at_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    run_from(small(dir.path(), &["--method", "codat", "--eta", "0", "--seed", "1"])).unwrap();
    run_from(small(
        dir.path(),
        &["--method", "standard_at", "--eta", "0", "--seed", "1"],
    ))
    .unwrap();
    let a = std::fs::read(dir.path().join("codat_toy3_eta0_seed1/checkpoint.json")).unwrap();
    let b = std::fs::read(dir.path().join("standard_at_toy3_eta0_seed1/checkpoint.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn evaluate_is_deterministic_and_attacks_never_help() {
    let dir = tempfile::tempdir().unwrap();
    run_from(small(dir.path(), &["--method", "standard_at"])).unwrap();
    let run = dir.path().join("standard_at_toy3_eta0.3_seed0");
    let ckpt = run.join("checkpoint.json").display().to_string();
    let eval = |attack: &str, out: &str| {
        let out = dir.path().join(out);
        run_from([
            "codat",
            "evaluate",
            "--checkpoint",
            &ckpt,
            "--attack",
            attack,
            "--steps",
            "20",
            "--output",
            out.to_str().unwrap(),
        ])
        .unwrap();
        out
    };
    let a = eval("pgd", "a");
    let b = eval("pgd", "b");
    let first = std::fs::read(a.join("evaluate_test_pgd20.json")).unwrap();
    assert_eq!(first, std::fs::read(b.join("evaluate_test_pgd20.json")).unwrap());
    let robust = report(&a.join("evaluate_test_pgd20.json"));
    let natural = report(&eval("none", "a").join("evaluate_test_none.json"));
    assert!(robust.average_accuracy <= natural.average_accuracy);
    assert_eq!(robust.config["eval_steps"], "20");
    assert_eq!(natural.attack, "none");
    assert!(a.join("evaluate_test_pgd20_confusion.csv").is_file());
}

#[test]
fn missing_checkpoint_is_a_clean_error() {
    let out = codat(&["evaluate", "--checkpoint", "/no/such/checkpoint.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: loading checkpoint"), "{err}");
    assert!(!err.contains("panicked"));
}

#[test]
fn checkpoint_and_data_dimensions_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    run_from(small(dir.path(), &["--method", "standard_at"])).unwrap();
    let ckpt = dir.path().join("standard_at_toy3_eta0.3_seed0/checkpoint.json");
    let err = run_from([
        "codat",
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--set",
        "mixture_means=0,0,0;1,0,0;2,0,0",
    ])
    .unwrap_err();
    assert!(err.to_string().contains("checkpoint expects 2 features"), "{err}");
}

#[test]
fn attack_csv_rows_stay_in_the_ball() {
    let dir = tempfile::tempdir().unwrap();
    run_from(small(dir.path(), &["--method", "standard_at"])).unwrap();
    let ckpt = dir.path().join("standard_at_toy3_eta0.3_seed0/checkpoint.json");
    let out = dir.path().join("adv.csv");
    run_from([
        "codat",
        "attack",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--limit",
        "50",
        "--output",
        out.to_str().unwrap(),
    ])
    .unwrap();
    let mut reader = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "index",
            "label",
            "clean_loss",
            "adv_loss",
            "loss_delta",
            "linf",
            "x0",
            "x1"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 50);
    for r in &rows {
        let linf: f64 = r[5].parse().unwrap();
        assert!(linf <= 0.03);
        let (clean, adv, delta): (f64, f64, f64) =
            (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert_eq!(delta, adv - clean);
    }
    assert!(dir.path().join("adv.csv.config.txt").is_file());
}

fn fec_args(baseline: &str) -> FecArgs {
    FecArgs {
        table: Some(FIXTURE.into()),
        group_by: vec!["table".into(), "attack".into()],
        baseline: baseline.into(),
        ..FecArgs::default()
    }
}

#[test]
fn fec_reproduces_the_published_pgd_column() {
    let groups = compute(&fec_args("AT")).unwrap();
    assert_eq!(groups.len(), 20);
    let t1 = groups
        .iter()
        .find(|g| g.group["table"] == "1" && g.group["attack"] == "pgd100")
        .unwrap();
    let printed = [1.00, 1.43, 1.45, 1.17, 1.53, 1.92, 2.05];
    for (row, want) in t1.rows.iter().zip(printed) {
        assert!((row.fec - want).abs() <= 0.01, "{}: {} vs {want}", row.method, row.fec);
    }
    let t3 = groups
        .iter()
        .find(|g| g.group["table"] == "3" && g.group["attack"] == "pgd100")
        .unwrap();
    let codat = t3.rows.iter().find(|r| r.method == "CODAT").unwrap();
    assert!((codat.fec - 1.41).abs() <= 0.01);
}

#[test]
fn fec_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    std::fs::write(&table, "method,avg,wst,note\nAT,49.57,22.0,x\n").unwrap();
    let args = FecArgs {
        table: Some(table.clone()),
        baseline: "AT".into(),
        ..FecArgs::default()
    };
    let groups = compute(&args).unwrap();
    assert_eq!(groups[0].rows.len(), 1);
    assert_eq!(groups[0].rows[0].fec, 1.0);

    let err = compute(&fec_args("ERM")).unwrap_err().to_string();
    assert!(err.contains("ERM"), "{err}");

    let csv_out = dir.path().join("out.csv");
    let json_out = dir.path().join("out.json");
    run_from([
        "codat",
        "fec",
        "--table",
        table.to_str().unwrap(),
        "--baseline",
        "AT",
        "--csv",
        csv_out.to_str().unwrap(),
        "--json",
        json_out.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(
        std::fs::read_to_string(&csv_out).unwrap(),
        "method,avg,wst,fec\nAT,49.57,22,1.00\n"
    );
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(json[0]["rows"][0]["fec"], 1.0);
}

#[test]
fn oracle_defaults_and_small_ball() {
    let report = oracle_sweep(&OracleArgs::default()).unwrap();
    assert_eq!(report.trials, 200);
    assert!(report.valid > 0);
    assert!(report.max_gap <= 1e-3 && report.max_linf <= 1e-3);
    let tiny = oracle_sweep(&OracleArgs {
        eta: Some(1e-4),
        ..OracleArgs::default()
    })
    .unwrap();
    assert_eq!(tiny.invalid, 0);
    assert!(tiny.max_gap <= 1e-6);
    let out = codat(&["oracle", "--trials", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn sweep_table_shape_and_fec_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = [
        "codat",
        "sweep",
        "--epochs",
        "2",
        "--set",
        "hidden=16",
        "--out-dir",
        out,
    ];
    run_from(common.iter().copied().chain(["--etas", "0.1,0.3,0.6", "--jobs", "2"])).unwrap();
    let path = dir.path().join("sweep_toy3_seed0/sweep.csv");
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["method", "eta", "avg", "wst", "var", "wall_time_s", "elapsed_s"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let elapsed: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(elapsed.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(&rows[1][0], "codat_eta0.3");

    let err = run_from(common.iter().copied().chain(["--etas", "0.1,0.3,0.1"])).unwrap_err();
    assert!(err.to_string().contains("duplicate"));

    run_from(common.iter().copied().chain(["--etas", "0,0.3"])).unwrap();
    let groups = compute(&FecArgs {
        table: Some(path),
        baseline: "codat_eta0".into(),
        ..FecArgs::default()
    })
    .unwrap();
    assert_eq!(groups[0].rows.len(), 2);
    assert_eq!(groups[0].rows[0].fec, 1.0);
}

#[test]
fn sweep_names_the_failing_eta() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_from([
        "codat",
        "sweep",
        "--epochs",
        "2",
        "--set",
        "lr=1e300",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--etas",
        "0.2",
    ])
    .unwrap_err();
    assert!(format!("{err:#}").contains("eta = 0.2"), "{err:#}");
}

#[test]
fn divergence_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = codat(&[
        "train",
        "--epochs",
        "2",
        "--set",
        "lr=1e300",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn printed_config_is_exact_and_reloadable() {
    let out = codat(&[
        "train",
        "--print-config",
        "--eta",
        "0.25",
        "--set",
        "hidden=32",
        "--seed",
        "4",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("eta = 0.25\n") && text.contains("hidden = 32\n") && text.contains("out_dir = runs\n"));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.txt");
    std::fs::write(&file, &text).unwrap();
    let again = codat(&["train", "--print-config", "--config", file.to_str().unwrap()]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn incomplete_preset_prints_but_does_not_train() {
    let out = codat(&["train", "--preset", "paper-cifar", "--print-config"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("data = idx\n") && text.contains("lr_milestones = 75,90\n"));
    let out = codat(&["train", "--preset", "paper-cifar"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_images"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_codat"))
        .args(["train", "--epochs", "1", "--set", "hidden=8", "--method", "standard_at"])
        .env("CODAT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir
        .path()
        .join("standard_at_toy3_eta0.3_seed0/checkpoint.json")
        .is_file());
}

#[test]
fn config_errors_name_the_field() {
    let out = codat(&["train", "--set", "batch_size=0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_size"));
    let out = codat(&["train", "--set", "data=idx"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train_images"));
}
