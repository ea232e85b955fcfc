//! End-to-end checks of the command-line surface: output files, CSV
//! shapes, and the documented exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpinn"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("cpinn_cli_tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn grid_dump_writes_csv_and_json_mirror() {
    let out = tmp("sites.csv");
    let status = bin()
        .args(["grid", "dump", "--k", "0", "--kp", "0", "--r", "2", "--rp", "2", "--d", "2"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "site_class,x1,x2,t");
    assert_eq!(lines.len(), 1 + 8 + 8 + 4);
    let json = std::fs::read_to_string(out.with_extension("json")).unwrap();
    assert!(json.contains("\"m_tilde\":4"));
}

#[test]
fn validation_errors_exit_with_code_2() {
    let status = bin()
        .args(["grid", "dump", "--r", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin()
        .args(["train", "--problem", "nope", "--iters", "1", "--n", "4"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_3() {
    let status = bin()
        .args([
            "train", "--problem", "u1", "--loss", "pinn", "--n", "5", "--width", "6",
            "--depth", "3", "--iters", "400", "--eta", "2.0",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn train_writes_history_and_report() {
    let out = tmp("train.csv");
    let status = bin()
        .args([
            "train", "--problem", "u1", "--loss", "cpinn", "--n", "4", "--width", "3",
            "--depth", "2", "--iters", "30", "--seed", "9",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("iter,loss\n"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["loss_kind"], "cpinn");
    assert!(report["rel_l2_error_percent"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let cfg = tmp("run.cfg");
    std::fs::write(&cfg, "width = 3\ndepth = 2\niterations = 5\nn = 4\nseed = 33\n").unwrap();
    let out = tmp("cfgrun.csv");
    let status = bin()
        .args(["train", "--problem", "u1", "--loss", "pinn", "--iters", "7"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
            .unwrap();
    // --iters beats the config; seed comes from the config
    assert_eq!(report["history"].as_array().unwrap().last().unwrap()[0], 7);
    assert_eq!(report["seed"], 33);
}

#[test]
fn norm_check_and_rates_emit_expected_headers() {
    let out = tmp("nc.csv");
    assert!(bin()
        .args(["norm-check", "--which", "mixed", "--kmin", "1", "--kmax", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("k,kp,discrete,quadrature,ratio\n"));
    assert_eq!(csv.lines().count(), 4);

    let out = tmp("rates.csv");
    assert!(bin()
        .args(["rates", "interp", "--f", "sinprod", "--norm", "l2l2", "--kmin", "1", "--kmax", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("k,kp,error,fitted_slope,predicted_slope\n"));

    let out = tmp("recovery.csv");
    assert!(bin()
        .args(["rates", "recovery", "--s", "2", "--p", "inf", "--kmax", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("fixture,k,kp,error,fitted_slope,predicted_slope\n"));
}

#[test]
fn reproduce_table_has_rows_and_summary() {
    let out = tmp("table.csv");
    assert!(bin()
        .args([
            "reproduce-table1", "--problem", "u1", "--sizes", "4,5", "--seeds", "1,2",
            "--width", "3", "--depth", "2", "--iters", "8",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("n,seed,pinn_rel_err_percent"));
    assert!(csv.contains("median_pinn_err"));
    // 4 data rows + summary block
    assert_eq!(csv.lines().filter(|l| !l.is_empty()).count(), 1 + 4 + 1 + 2);
}

#[test]
fn figure1_grid_rows() {
    let out = tmp("fig.csv");
    assert!(bin()
        .args([
            "figure1", "--problem", "u1", "--times", "0,1", "--res", "5", "--n", "4",
            "--width", "3", "--depth", "2", "--iters", "5",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("time,x,y,exact,pinn,cpinn\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 25);
}
