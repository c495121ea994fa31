use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridloss_core::io::write_series;
use gridloss_core::market::{Generator, Interconnector, LineKind, LossModel, MarketInstance, Zone};

fn mini_nordic() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/mini_nordic/manifest.toml")
}

fn gridloss(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridloss"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GRIDLOSS_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn two_zone(demand_b: f64, gb_max: f64, atc: f64) -> MarketInstance {
    let gen = |id: &str, zone: &str, cost: f64, p_max: f64| Generator { id: id.into(), zone: zone.into(), cost, p_min: 0.0, p_max };
    MarketInstance {
        timestamp: 0,
        zones: vec![Zone::new("A", 0.0, 0.0), Zone::new("B", demand_b, 0.0)],
        generators: vec![gen("gA", "A", 10.0, 1000.0), gen("gB", "B", 50.0, gb_max)],
        interconnectors: vec![Interconnector {
            id: "AB".into(),
            kind: LineKind::Hvdc,
            from_zone: "A".into(),
            to_zone: "B".into(),
            atc_fwd: atc,
            atc_rev: atc,
            rated_capacity: 600.0,
            loss_model: Some(LossModel::quadratic(2.5e-5, 0.0, 1.759)),
        }],
    }
}

#[test]
fn validate_accepts_the_bundled_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gridloss(&["validate", mini_nordic().to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("24 hours, 0 invalid"));
}

#[test]
fn validate_reports_violations_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut inst = two_zone(100.0, 500.0, 600.0);
    inst.generators[1].p_min = 10.0;
    inst.generators[1].p_max = 5.0;
    let manifest = write_series(tmp.path(), &[inst], &[]).unwrap();
    let o = gridloss(&["validate", manifest.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("p_min>p_max"), "{}", stdout(&o));
}

#[test]
fn missing_manifest_and_bad_arguments_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(gridloss(&["validate", "nope.toml"], tmp.path()).status.code(), Some(1));
    assert_eq!(gridloss(&["frobnicate"], tmp.path()).status.code(), Some(1));
    let m = mini_nordic();
    let o = gridloss(&["clear", m.to_str().unwrap(), "--hour", "0", "--scenario", "S9"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = gridloss(&["calibrate", m.to_str().unwrap(), "--segment-mw", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(gridloss(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn calibrate_writes_factor_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gridloss(&["calibrate", mini_nordic().to_str().unwrap(), "--segment-mw", "300", "--out", "f.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = std::fs::read_to_string(tmp.path().join("f.csv")).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("line,k,lo,hi,alpha,beta"));
    assert!(rows.any(|r| r.contains(",1,0,300,")));
}

#[test]
fn clear_honours_the_output_directory_override() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("outputs");
    let o = Command::new(env!("CARGO_BIN_EXE_gridloss"))
        .args(["clear", mini_nordic().to_str().unwrap(), "--hour", "5", "--scenario", "S2", "--out", "hour5.json"])
        .current_dir(tmp.path())
        .env("GRIDLOSS_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("hour5.json")).unwrap()).unwrap();
    assert_eq!(json["timestamp"], 5);
    assert!(json["dispatch"]["zonal_price"].as_object().unwrap().len() == 11);
}

#[test]
fn infeasible_hour_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    // Enough capacity in total, but B cannot import what it lacks.
    let manifest = write_series(tmp.path(), &[two_zone(500.0, 100.0, 100.0)], &[]).unwrap();
    let o = gridloss(&["clear", manifest.to_str().unwrap(), "--hour", "0", "--scenario", "S1"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn study_with_config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("study.toml"), "scenarios = [\"S1\", \"S2\", \"S4\"]\nsegment_mw = 150.0\nworkers = 2\n").unwrap();
    let o = gridloss(
        &["study", mini_nordic().to_str().unwrap(), "--config", "study.toml", "--scenarios", "S1,S2", "--out", "rep"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let summary = std::fs::read_to_string(tmp.path().join("rep/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "{summary}");
    for f in ["hourly.csv", "tso_loss_costs.csv", "report.json"] {
        assert!(tmp.path().join("rep").join(f).exists(), "{f}");
    }
}

#[test]
fn rmse_table_lists_linear_then_segments() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gridloss(
        &["rmse", mini_nordic().to_str().unwrap(), "--segment-mw", "600,150", "--hours", "2", "--out", "rmse.csv"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = std::fs::read_to_string(tmp.path().join("rmse.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["linear", "600 MW", "150 MW"]);
    let rmse: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(rmse[0] > rmse[1] && rmse[1] > rmse[2], "{rmse:?}");
}
