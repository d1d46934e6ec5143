use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn swsysid(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swsysid"));
    cmd.args(args).env_remove("SWSYSID_OUT");
    if let Some(dir) = env_out {
        cmd.env("SWSYSID_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn example(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
        .display()
        .to_string()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn simulate_then_fit_recovers_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().display().to_string();
    let config = write_config(
        tmp.path(),
        r#"{
            "system": {"modes": [[[0.5, 0.1], [0.0, 0.3]], [[-0.4, 0.0], [0.2, 0.6]]],
                       "switch_pmf": [0.6, 0.4]},
            "horizon": 5000,
            "master_seed": 3
        }"#,
    );
    let sim = swsysid(&["simulate", "--config", &config, "--out", &out], None);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,s_t,x_1,x_2,w_1,w_2"));

    let input = tmp.path().join("trajectory.csv").display().to_string();
    let fit = swsysid(&["fit", "--input", &input, "--config", &config, "--out", &out], None);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("estimates.json")).unwrap()).unwrap();
    let modes = report["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 2);
    for m in modes {
        assert_eq!(m["status"], "identified");
        assert!(m["error_inf"].as_f64().unwrap() < 0.1);
    }
}

#[test]
fn fit_without_config_infers_mode_count() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("traj.csv");
    fs::write(&input, "t,s_t,x_1\n0,1,0\n1,2,1\n2,1,-0.5\n3,,1.75\n").unwrap();
    let out = tmp.path().display().to_string();
    let fit = swsysid(&["fit", "--input", &input.display().to_string(), "--out", &out], None);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("estimates.json")).unwrap()).unwrap();
    assert_eq!(report["modes"].as_array().unwrap().len(), 2);
    assert_eq!(report["horizon"], 3);
}

#[test]
fn stability_classifies_examples() {
    let out = swsysid(&["stability", "--config", &example("example2.json")], None);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["quadrant"], "mss-only");
    assert_eq!(report["mss_holds"], true);
    assert_eq!(report["assumption2_holds"], false);

    let out = swsysid(&["stability", "--config", &example("example1.json")], None);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["quadrant"], "average-only");
}

#[test]
fn selftest_passes() {
    let out = swsysid(&["selftest"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn montecarlo_writes_artifacts_to_env_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"system": {"modes": [[[0.5]]], "switch_pmf": [1.0]}, "horizon": 512, "runs": 4}"#,
    );
    let dir = tmp.path().join("from-env");
    let out = swsysid(&["montecarlo", "--config", &config, "--workers", "2"], Some(&dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["curves.csv", "fig1_data.csv", "summary.json", "plot_fig1.py"] {
        assert!(dir.join(file).is_file(), "{file} missing");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), 4);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().display().to_string();

    let bad_pmf = write_config(
        tmp.path(),
        r#"{"system": {"modes": [[[0.5]], [[0.2]]], "switch_pmf": [0.5, 0.6]}, "horizon": 10}"#,
    );
    assert_eq!(swsysid(&["stability", "--config", &bad_pmf], None).status.code(), Some(1));

    let missing = tmp.path().join("missing.json").display().to_string();
    assert_eq!(swsysid(&["stability", "--config", &missing], None).status.code(), Some(3));

    let explosive = write_config(
        tmp.path(),
        r#"{"system": {"modes": [[[3.0]]], "switch_pmf": [1.0]}, "horizon": 1000, "runs": 3}"#,
    );
    let run = swsysid(&["montecarlo", "--config", &explosive, "--out", &out], None);
    assert_eq!(run.status.code(), Some(2));

    assert_eq!(swsysid(&["simulate"], None).status.code(), Some(1));
}
