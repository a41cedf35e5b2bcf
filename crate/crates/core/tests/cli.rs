//! End-to-end runs of the `tisdyn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tisdyn::pipeline::{sha256_file, Manifest};
use tisdyn::scenario::ScenarioSpec;

fn configs() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn tisdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tisdyn")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo_config() -> PathBuf {
    configs().join("demo.toml")
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn check_digests(dir: &Path, manifest: &Manifest) {
    assert!(!manifest.outputs.is_empty());
    for (name, digest) in &manifest.outputs {
        assert_eq!(&sha256_file(&dir.join(name)).unwrap(), digest, "{name}");
    }
}

#[test]
fn simulate_writes_outputs_and_a_matching_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    assert_ok(&tisdyn(&["simulate", "--config", path(&demo_config()), "--out", path(&out)]));
    for f in ["trajectory.csv", "parameters.csv", "modes.csv", "emissions.csv", "sales.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for f in ["behavior.csv", "mode_timeline.csv", "dimensions.csv", "ghg.csv"] {
        assert!(out.join("plots").join(f).is_file(), "plots/{f}");
    }
    let manifest = Manifest::read(&out).unwrap();
    assert_eq!(manifest.status, "ok");
    assert_eq!(manifest.scenario.as_deref(), Some("baseline"));
    assert!(manifest.inputs.values().any(|d| *d == sha256_file(&demo_config()).unwrap()));
    check_digests(&out, &manifest);
}

#[test]
fn scenario_flag_overrides_the_configured_scenario() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    assert_ok(&tisdyn(&["simulate", "--config", path(&demo_config()), "--scenario", "predator-prey", "--out", path(&out)]));
    let emissions = fs::read_to_string(out.join("emissions.csv")).unwrap();
    assert!(emissions.lines().skip(1).all(|l| l.starts_with("predator-prey,")));
}

#[test]
fn scenarios_runs_all_seven_deterministically() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&tisdyn(&["scenarios", "--config", path(&demo_config()), "--out", path(&a)]));
    assert_ok(&tisdyn(&["scenarios", "--config", path(&demo_config()), "--out", path(&b)]));
    for name in ScenarioSpec::NAMES {
        assert!(a.join(name).join("trajectory.csv").is_file(), "{name}");
    }
    let (ma, mb) = (Manifest::read(&a).unwrap(), Manifest::read(&b).unwrap());
    check_digests(&a, &ma);
    assert_eq!(ma.outputs, mb.outputs);
    assert!(ma.outputs.contains_key("comparison.csv"));
    assert!(!ma.interventions["sociotechnical-transition"].is_empty());
}

#[test]
fn emissions_recomputes_the_same_table_from_sales() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    assert_ok(&tisdyn(&["simulate", "--config", path(&demo_config()), "--out", path(&out)]));
    let before = fs::read(out.join("emissions.csv")).unwrap();
    fs::remove_file(out.join("emissions.csv")).unwrap();
    assert_ok(&tisdyn(&["emissions", "--run", path(&out)]));
    assert_eq!(fs::read(out.join("emissions.csv")).unwrap(), before);
    check_digests(&out, &Manifest::read(&out).unwrap());
}

#[test]
fn modes_reads_a_parameter_table() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let modes = tmp.path().join("modes");
    assert_ok(&tisdyn(&["simulate", "--config", path(&demo_config()), "--out", path(&sim)]));
    assert_ok(&tisdyn(&["modes", "--params", path(&sim.join("parameters.csv")), "--out", path(&modes)]));
    let text = fs::read_to_string(modes.join("modes.csv")).unwrap();
    assert!(text.starts_with("window_start,window_end,pair,scope,mode,beneficiary,victim\n"));
    assert!(text.lines().count() > 1);
}

#[test]
fn calibrate_fits_the_demo_history() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("cal");
    let data = configs().join("observed_demo.csv");
    assert_ok(&tisdyn(&["calibrate", "--config", path(&demo_config()), "--data", path(&data), "--out", path(&out)]));
    for f in ["parameters.csv", "goodness.csv", "modes.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    check_digests(&out, &Manifest::read(&out).unwrap());
}

#[test]
fn invalid_config_exits_with_status_2_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = fs::read_to_string(demo_config()).unwrap().replace("[simulation]", "[simulaton]");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let res = tisdyn(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("did you mean `simulation`"));
    assert!(!out.exists());
}

#[test]
fn missing_config_exits_with_status_4() {
    let tmp = TempDir::new().unwrap();
    let res = tisdyn(&["simulate", "--config", path(&tmp.path().join("none.toml"))]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn blow_up_exits_with_status_3_and_removes_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    assert_ok(&tisdyn(&["simulate", "--config", path(&demo_config()), "--out", path(&sim)]));

    // Unchecked exponential growth overruns the blow-up bound.
    let table = fs::read_to_string(sim.join("parameters.csv")).unwrap();
    let mut lines = table.lines();
    let header = lines.next().unwrap();
    let col = |name: &str| header.split(',').position(|c| c == name).unwrap();
    let (a_col, b_col) = (col("a"), col("b"));
    let mut edited = vec![header.to_string()];
    for line in lines {
        let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
        cells[a_col] = "5".into();
        cells[b_col] = "0".into();
        edited.push(cells.join(","));
    }
    let params = tmp.path().join("explosive.csv");
    fs::write(&params, edited.join("\n") + "\n").unwrap();
    let text = fs::read_to_string(demo_config())
        .unwrap()
        .replace("[parameters]\nsource = \"demo\"", &format!("[parameters]\nfile = {:?}", path(&params)));
    let cfg = tmp.path().join("explosive.toml");
    fs::write(&cfg, text).unwrap();

    let out = tmp.path().join("out");
    let res = tisdyn(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let manifest = Manifest::read(&out).unwrap();
    assert_eq!(manifest.status, "failed");
    assert_eq!(manifest.failed_stage.as_deref(), Some("simulate"));
    assert!(manifest.outputs.is_empty());
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("manifest.json")]);
}
