use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--set", "grid.momentum_points=513", "--set", "grid.work_points=1025"];

fn qwork(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qwork")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn data_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect()).collect();
    (columns, rows)
}

fn trapezoid(rows: &[Vec<f64>]) -> f64 {
    rows.windows(2).map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1])).sum()
}

#[test]
fn analytic_writes_distributions_and_relations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = qwork(&["analytic", "--out", out]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let dist = dir.path().join("analytic_distribution.csv");
    let text = fs::read_to_string(&dist).unwrap();
    assert!(text.contains("# units = hbar = kappa = 1"));
    assert!(text.contains("# t_m = 4\n"));
    let (columns, rows) = data_rows(&dist);
    assert_eq!(columns, ["W_over_kappa", "density"]);
    assert!((trapezoid(&rows) - 1.0).abs() < 1e-8);
    assert!(rows.iter().all(|r| r[1] >= 0.0));

    let (columns, rows) = data_rows(&dir.path().join("analytic_relations.csv"));
    assert_eq!(columns[3], "jarzynski_closed");
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r[5] < 1e-8, "jarzynski gap {}", r[5]);
    }
    for beta in ["0.1", "1", "5"] {
        assert!(dir.path().join(format!("analytic_crooks_beta_{beta}.csv")).exists());
        assert!(dir.path().join(format!("analytic_thermal_beta_{beta}.csv")).exists());
    }

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("analytic.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "analytic");
    assert_eq!(meta["config"]["schedule"]["delta"], 0.2);
    assert_eq!(meta["resolved"]["mass"], 4000.0);
    assert_eq!(meta["outputs"].as_array().unwrap().len(), 9);
}

#[test]
fn qubit_reruns_from_metadata_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec!["qubit", "--out", a.path().to_str().unwrap(), "--set", "system.thetas=[0.0, 1.5707963267948966]"];
    args.extend_from_slice(SMALL);
    let first = qwork(&args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));

    let meta = a.path().join("qubit.json");
    let second = qwork(&["qubit", "--config", meta.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(code(&second), 0, "{}", stderr(&second));
    for file in ["qubit_theta_0.0000.csv", "qubit_theta_1.5708.csv", "qubit_ledger.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file} differs");
    }

    let (columns, rows) = data_rows(&a.path().join("qubit_ledger.csv"));
    assert_eq!(columns[9..], ["dW_int", "dW_povm", "dQ_int"]);
    assert_eq!(rows[0][0], 0.0);
    let (_, dist) = data_rows(&a.path().join("qubit_theta_1.5708.csv"));
    assert!((trapezoid(&dist) - 1.0).abs() < 1e-4);
}

#[test]
fn sweep_writes_theta_table_and_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--out", dir.path().to_str().unwrap(), "--set", "sweep.thetas=[0.0, 0.7853981633974483]"];
    args.extend_from_slice(SMALL);
    let run = qwork(&args);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let (columns, rows) = data_rows(&dir.path().join("sweep.csv"));
    assert_eq!(columns, ["theta", "dW_int", "dW_povm", "dQ_int"]);
    assert_eq!(rows.len(), 2);
    assert!(rows[0][1..].iter().all(|v| v.abs() < 1e-8), "theta = 0 corrections {:?}", rows[0]);
    assert!(rows[1][2].abs() > 1e-3);

    let text = fs::read_to_string(dir.path().join("ideal_limit.csv")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 1 + 3 * 3);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    for trend in meta["diagnostics"]["ladder_trends"].as_array().unwrap() {
        assert_eq!(trend["jarzynski_decreasing"], true);
    }
}

#[test]
fn verify_passes_on_defaults_with_small_grids() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["verify", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let run = qwork(&args);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(code(&run), 0, "{stdout}{}", stderr(&run));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS ")).count(), 7, "{stdout}");
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for set in ["schedule.t_i=10", "schedule.dleta=0.1", "apparatus.sigma_p=-1", "engine.kind=analytic", "thermal.betas=[-1.0]"] {
        let run = qwork(&["qubit", "--out", out, "--set", set]);
        assert_eq!(code(&run), 2, "{set}: {}", stderr(&run));
        assert!(stderr(&run).starts_with("error: config error"), "{set}: {}", stderr(&run));
    }
    let run = qwork(&["analytic", "--out", out, "--set", "no_equals_sign"]);
    assert_eq!(code(&run), 2);
    let run = qwork(&["analytic", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&run), 2);
    let run = qwork(&["analytic", "--out", out, "--set", "system.levels=[[0.0, 1.0], [0.0, -1.0], [1.0]]"]);
    assert_eq!(code(&run), 2, "three levels need populations: {}", stderr(&run));
    assert!(stderr(&run).contains("[state]"));
}

#[test]
fn truncated_work_grid_exits_with_3_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let run = qwork(&["analytic", "--out", dir.path().to_str().unwrap(), "--set", "grid.work_min=-0.5", "--set", "grid.work_max=0.5"]);
    assert_eq!(code(&run), 3, "{}", stderr(&run));
    assert!(stderr(&run).contains("mass"));
    assert!(!dir.path().join("analytic_distribution.csv").exists());
    assert!(!dir.path().join("analytic.json").exists());
}

#[test]
fn toml_config_and_printed_config_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "[schedule]\ndelta = 0.1\n\n[system]\nlevels = [[0.0, 1.0, 0.2], [1.0, -1.0], [0.0]]\n\n[state]\npopulations = [0.2, 0.3, 0.5]\n\n[thermal]\nbetas = [1]\n",
    )
    .unwrap();
    let printed = qwork(&["config", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&printed), 0, "{}", stderr(&printed));
    let text = String::from_utf8(printed.stdout).unwrap();
    assert!(text.contains("delta = 0.1"));
    let again = dir.path().join("again.toml");
    fs::write(&again, &text).unwrap();
    let reprinted = qwork(&["config", "--config", again.to_str().unwrap()]);
    assert_eq!(String::from_utf8(reprinted.stdout).unwrap(), text);

    let out = dir.path().join("out");
    let run = qwork(&["analytic", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let header = fs::read_to_string(out.join("analytic_distribution.csv")).unwrap();
    assert!(header.contains("# populations = 0.2 0.3 0.5\n"));
    assert!(header.contains("# delta = 0.1\n"));
}
