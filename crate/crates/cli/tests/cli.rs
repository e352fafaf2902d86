use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cmperiodic::reproduction::r0_time_averaged;
use cmperiodic_cli::{parse_config, to_toml};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs_dir().join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmperiodic")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value_of(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn read_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_configs_round_trip() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg, "{}", path.display());
    }
}

#[test]
fn r0_of_autonomous_config_matches_closed_form() {
    let o = run(&["r0", "--config", &config("autonomous.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let printed = value_of(&text, "r0");
    let closed = value_of(&text, "r0_closed_form");
    assert!((closed - 0.003 / 7.56e-5).abs() < 1e-9);
    assert!((printed - closed).abs() < 1e-6, "{printed} vs {closed}");
    assert!(value_of(&text, "bracket_lo") <= printed && printed <= value_of(&text, "bracket_hi"));
}

#[test]
fn r0_writes_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r0.json");
    let o = run(&["r0", "--config", &config("endemic.toml"), "--json", json.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert!(v["r0"].as_f64().unwrap() > 1.0);
    assert!(v["rho_at_one"].as_f64().unwrap() > 1.0);
    assert_eq!(v["method"], "periodic-bisection");
}

#[test]
fn validate_passes_on_shipped_configs() {
    for name in ["baseline.toml", "endemic.toml", "extinction.toml", "autonomous.toml"] {
        let o = run(&["validate", "--config", &config(name)]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("positivity_violations=0"));
    }
}

#[test]
fn config_errors_exit_two_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("endemic.toml"))
        .unwrap()
        .replace("amplitude = 0.005", "amplitude = 0.01");
    let path = write_config(dir.path(), &text);
    let o = run(&["r0", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: category=config-validation"), "{err}");
    assert!(err.contains("d.amplitude"), "{err}");

    let path = write_config(dir.path(), "");
    assert_eq!(run(&["r0", "--config", &path]).status.code(), Some(2));
    let path = write_config(dir.path(), "[mu\nmean = 1");
    let o = run(&["r0", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("category=config-parse"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = run(&["r0", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: category=io"));
}

#[test]
fn orbit_below_threshold_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("orbit.csv");
    let o = run(&["orbit", "--config", &config("extinction.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("category=numerical"));
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["sweep", "--config", &config("endemic.toml"), "--param", "gamma", "--values", "1", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--config", &config("endemic.toml")]);
    assert_eq!(o.status.code(), Some(2), "--out is required without run.output_dir");
    let o = run(&["simulate", "--config", &config("endemic.toml"), "--ic", "9", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn single_trajectory_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one.csv");
    let o = run(&[
        "simulate", "--config", &config("endemic.toml"), "--t-end", "240", "--ic", "0", "--grid-step", "0.5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_rows(&out);
    assert_eq!(header, "t,T,E,I,V");
    assert_eq!(rows.len(), 481);
    assert_eq!(rows[0], ["0", "10", "1", "1", "1"]);
    assert_eq!(rows[480][0], "240");
    let raw = std::fs::read(&out).unwrap();
    assert!(!raw.contains(&b'\r'));
}

#[test]
fn output_dir_supplies_default_paths() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("endemic.toml")).unwrap()
        + &format!("output_dir = {:?}\n", dir.path().join("out").to_string_lossy());
    let path = write_config(dir.path(), &text);
    let o = run(&["simulate", "--config", &path, "--t-end", "24"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/simulate.csv").exists());
}

#[test]
fn sweep_of_transmission_scales_r0_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep", "--config", &config("autonomous.toml"), "--param", "beta.mean", "--values", "0.3,0.003,0.03", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_rows(&out);
    assert_eq!(header, "value,r0,rho_at_one,regime,error");
    let values: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(values, [0.003, 0.03, 0.3]);
    let base = parse_config(&std::fs::read_to_string(configs_dir().join("autonomous.toml")).unwrap()).unwrap();
    for row in &rows {
        let beta: f64 = row[0].parse().unwrap();
        let r0: f64 = row[1].parse().unwrap();
        let closed = r0_time_averaged(&base.model) * beta / 0.3;
        assert!((r0 - closed).abs() <= 1e-6 * closed, "{r0} vs {closed}");
    }
}

#[test]
fn sweep_regime_follows_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep", "--config", &config("baseline.toml"), "--param", "c", "--values", "1,3,5,20,40,80", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_rows(&out);
    let (mut ext, mut per) = (0, 0);
    for row in &rows {
        let r0: f64 = row[1].parse().unwrap();
        match row[3].as_str() {
            "extinction" => {
                ext += 1;
                assert!(r0 <= 1.0 + 1e-6, "{row:?}");
            }
            "persistence" => {
                per += 1;
                assert!(r0 >= 1.0 - 1e-6, "{row:?}");
            }
            other => assert_eq!(other, "indeterminate"),
        }
    }
    assert!(ext >= 1 && per >= 1, "{rows:?}");
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.csv");
    let o = run(&["sweep", "--config", &config("endemic.toml"), "--param", "c", "--values", "", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let (_, rows) = read_rows(&out);
    assert!(rows.is_empty());

    let out = dir.path().join("invalid.csv");
    let o = run(&[
        "sweep", "--config", &config("endemic.toml"), "--param", "d.amplitude", "--values", "0.002,0.02", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_rows(&out);
    assert_eq!(rows[0][3], "persistence");
    assert_eq!(rows[1][3], "invalid");
    assert!(rows[1][4].contains("d.amplitude"));
}

#[test]
fn classify_reports_regimes() {
    let o = run(&["classify", "--config", &config("extinction.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("regime=extinction"));
    let o = run(&["classify", "--config", &config("endemic.toml")]);
    assert!(stdout(&o).starts_with("regime=persistence"));
    assert!(value_of(&stdout(&o), "persistence_eta") > 0.0);
}

#[test]
fn orbit_outputs_multipliers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lc.csv");
    let o = run(&["orbit", "--config", &config("endemic.toml"), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(value_of(&stdout(&o), "newton_residual") < 1e-10);
    let (header, rows) = read_rows(&dir.path().join("lc_multipliers.csv"));
    assert_eq!(header, "index,re,im,modulus");
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() < 1.0));
}
