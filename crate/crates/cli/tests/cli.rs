use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use starlab_cli::config::{ExperimentConfig, InitialState, SweepAxis};
use starlab_cli::report::{emit_report, read_meta};
use starlab_cli::sweep::run_sweep;
use tempfile::TempDir;

fn starlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_sweep(dir: &Path, axes: Vec<SweepAxis>, workers: usize) -> ExperimentConfig {
    ExperimentConfig {
        axes,
        initial: InitialState::Lx,
        t_max_us: 20.0,
        dt_us: 0.1,
        out_dir: dir.to_path_buf(),
        workers,
        ..ExperimentConfig::default()
    }
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn sweep_output_is_identical_for_one_and_eight_workers() {
    let tmp = TempDir::new().unwrap();
    let axes = vec![
        SweepAxis::linear("nu0_mhz", 3.0, 8.0, 3),
        SweepAxis::list("t1_us", &[20.0, 60.0]),
    ];
    let mut bytes = Vec::new();
    for workers in [1, 8] {
        let dir = tmp.path().join(format!("w{workers}"));
        let cfg = short_sweep(&dir, axes.clone(), workers);
        let res = run_sweep(&cfg).unwrap();
        emit_report(&dir, &cfg, &res, serde_json::Value::Null).unwrap();
        bytes.push(fs::read(dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn five_by_five_grid_gives_25_ordered_rows_and_round_trips_meta() {
    let tmp = TempDir::new().unwrap();
    let cfg = short_sweep(
        tmp.path(),
        vec![
            SweepAxis::linear("omega_mhz", 0.3, 1.5, 5),
            SweepAxis::log("kappa_mhz", 0.2, 2.0, 5),
        ],
        0,
    );
    let res = run_sweep(&cfg).unwrap();
    assert_eq!(res.rows.len(), 25);
    assert!(res.rows.iter().enumerate().all(|(i, r)| r.index == i));
    let written = emit_report(tmp.path(), &cfg, &res, serde_json::Value::Null).unwrap();
    assert_eq!(written.len(), 2, "no trajectories requested");
    assert_eq!(csv_rows(&tmp.path().join("sweep.csv")), 25);
    let meta = read_meta(&tmp.path().join("meta.json")).unwrap();
    assert_eq!(meta.config, cfg);
    assert_eq!(meta.n_points, 25);
}

#[test]
fn single_point_sweep_stores_its_trajectory() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = short_sweep(tmp.path(), vec![SweepAxis::list("t1_us", &[40.0])], 1);
    cfg.store_trajectories = true;
    let res = run_sweep(&cfg).unwrap();
    assert_eq!(res.rows.len(), 1);
    assert!(res.rows[0].summary.fit.is_some());
    emit_report(tmp.path(), &cfg, &res, serde_json::Value::Null).unwrap();
    let traj = tmp.path().join("trajectories").join("point_0000.csv");
    assert_eq!(csv_rows(&traj), 201);
}

#[test]
fn simulate_writes_trajectory_and_point_summary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = starlab(&[
        "simulate", "--initial", "Lx", "--t-max-us", "30", "--dt-us", "0.1", "--set", "t1_us=20", "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("T_L ="));
    let header = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(header.starts_with("time_us,"));
    let point: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("point.json")).unwrap()).unwrap();
    assert!(point["fit"]["t_l"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_subcommand_writes_csv_and_meta() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = starlab(&[
        "sweep", "--axis", "w_mhz:5:10:2", "--axis", "omega_mhz=0.5,1", "--tie", "optimal_detuning", "--tie",
        "kappa_equals_omega", "--t-max-us", "20", "--dt-us", "0.1", "--workers", "2", "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&tmp.path().join("sweep.csv")), 4);
    let meta = read_meta(&tmp.path().join("meta.json")).unwrap();
    assert_eq!(meta.config.axes.len(), 2);
    assert_eq!(meta.config_sha256.len(), 64);
}

#[test]
fn rates_and_klcheck_report_json() {
    let o = starlab(&["rates", "--set", "t1_us=60"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (tx, tz) = (v["t_x"].as_f64().unwrap(), v["t_z"].as_f64().unwrap());
    assert!((tx / tz - 4.0 / 3.0).abs() < 1e-12);

    let o = starlab(&["klcheck"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn fit_subcommand_recovers_a_lifetime() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("trace.csv");
    let mut text = String::from("time_us,signal\n");
    for k in 0..200 {
        let t = k as f64 * 0.5;
        text.push_str(&format!("{t},{}\n", 0.8 * (-t / 25.0).exp() + 0.1));
    }
    fs::write(&path, text).unwrap();
    let o = starlab(&["fit", "--input", path.to_str().unwrap(), "--column", "signal"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["t_l"].as_f64().unwrap() - 25.0).abs() < 1e-6);
}

#[test]
fn bad_input_is_reported() {
    let o = starlab(&["reproduce", "fig9"]);
    assert!(!o.status.success());

    let o = starlab(&["simulate", "--t-max-us", "1", "--dt-us", "2", "--burn-in-us", "5"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("dt_us") && err.contains("burn-in"), "{err}");

    let o = starlab(&["rates", "--set", "no_such_key=1"]);
    assert!(!o.status.success());
}

#[test]
fn reproduce_fig_a2_writes_traces() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = starlab(&["reproduce", "figA2", "--t-max-us", "50", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("figA2").join("traces.csv").exists());
    assert!(tmp.path().join("figA2").join("fits.json").exists());
}
