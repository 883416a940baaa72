use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[scenario]
rows = 3
cols = 4
users = [
    { rows = [1, 2], cols = [1, 2] },
    { rows = [2, 2], cols = [2, 3] },
]

[scenario.ladder]
levels = [1, 2, 3]
rates_bps = [666000.0, 1618000.0, 2429000.0]
psnr_db = [15.82, 25.24, 32.86]

[resources]
frame_s = 0.05
bandwidth_hz = 4e5
energy_j = 1e-4
gains = [1e-3, 2e-3]
"#;

fn tilecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilecast")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn section<'a>(report: &'a str, name: &str) -> Vec<&'a str> {
    let start = report.find(&format!("[{name}]")).expect("section present");
    report[start..].lines().skip(2).take_while(|l| !l.is_empty()).collect()
}

#[test]
fn solve_reports_a_feasible_binary_selection() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("report.txt");
    let run = tilecast(&["solve", "--config", &config, "--method", "dc", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = fs::read_to_string(out).unwrap();
    assert!(report.starts_with("# tilecast="));
    assert!(report.contains("# seed=0\n"));
    let summary = section(&report, "summary");
    assert!(summary[0].starts_with("dc,") && summary[0].contains(",true,"), "{}", summary[0]);
    assert_eq!(section(&report, "selection").len(), 5);
    assert_eq!(section(&report, "allocation").len(), 3);
}

#[test]
fn zero_smoothness_budget_gives_uniform_levels() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "flat.toml", &SMALL.replace("cols = 4", "cols = 4\nsmoothness = 0").replace("4e5", "2e7"));
    let run = tilecast(&["solve", "--config", &config, "--method", "cr"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = String::from_utf8(run.stdout).unwrap();
    let levels: Vec<&str> = section(&report, "selection").iter().map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(levels.len(), 5);
    assert!(levels.iter().all(|l| *l == levels[0]), "{levels:?}");
}

#[test]
fn oracle_holds_on_small_instances_and_refuses_large_ones() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "small.toml", SMALL);
    let run = tilecast(&["oracle", "--config", &config]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report = String::from_utf8(run.stdout).unwrap();
    assert!(section(&report, "checks").iter().all(|l| l.ends_with(",true")));

    let run = tilecast(&["oracle", "--preset", "desk"]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[sweep]\nparam = \"energy_j\"\nvalues = [5e-5, 1e-4, 2e-4]\nrealizations = 4\n\n[output]\nrecord_time = false\n");
    let config = write(dir.path(), "sweep.toml", &text);
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        let run = tilecast(&["sweep", "--config", &config, "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let a = fs::read(&paths[0]).unwrap();
    assert_eq!(a, fs::read(&paths[1]).unwrap());
    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("method,param_name,param_value"));
    assert_eq!(rows.len(), 1 + 7 * 3);
    assert!(!dir.path().read_dir().unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with(".tmp")));
}

#[test]
fn configuration_errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "key.toml", &SMALL.replace("energy_j", "energy"));
    let bad_value = write(dir.path(), "value.toml", &SMALL.replace("frame_s = 0.05", "frame_s = -1.0"));
    for config in [bad_key.as_str(), bad_value.as_str(), "/nonexistent/config.toml"] {
        let run = tilecast(&["solve", "--config", config]);
        assert_eq!(run.status.code(), Some(1), "{config}");
        assert!(String::from_utf8_lossy(&run.stderr).starts_with("error:"));
    }
    let good = write(dir.path(), "good.toml", SMALL);
    assert_eq!(tilecast(&["solve", "--config", &good, "--method", "nope"]).status.code(), Some(1));
}

#[test]
fn infeasible_instances_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "starved.toml", &SMALL.replace("4e5", "1e3"));
    let run = tilecast(&["solve", "--config", &config, "--method", "cr"]);
    assert_eq!(run.status.code(), Some(2), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn generated_scenarios_load_back() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["paper", "desk"] {
        let path = dir.path().join(format!("{preset}.toml"));
        let path = path.to_str().unwrap();
        let run = tilecast(&["gen-scenario", "--preset", preset, "--seed", "11", "--out", path]);
        assert!(run.status.success());
        let from_file = tilecast(&["solve", "--config", path, "--method", "cr"]);
        let from_preset = tilecast(&["solve", "--preset", preset, "--seed", "11", "--method", "cr"]);
        assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
        let strip = |o: &Output| {
            let text = String::from_utf8(o.stdout.clone()).unwrap();
            text.lines().filter(|l| !l.starts_with('#')).map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string()).collect::<Vec<_>>()
        };
        assert_eq!(strip(&from_file), strip(&from_preset));
    }
}
