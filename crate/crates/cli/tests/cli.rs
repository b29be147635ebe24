use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CORNER: &str = r#"
seed = 11

[model]
kind = "gaussian-corner"

[[parameters]]
name = "x1"
std_dev = 1.0

[[parameters]]
name = "x2"
std_dev = 1.0

[algorithm]
variant = "basic"
runs = 3
q = 1001
q_stable = 0

[uncertainty]
moments = ["x1:mean"]

[[uncertainty.perturbations]]
param = "x1"
moment = "mean"
by = 0.1
"#;

/// Calm-air aircraft case over (eps_h, t_r) with a crisp search.
const AIRCRAFT: &str = r#"
seed = 5

[model]
kind = "aircraft"

[scenario]
turbulence = false

[[parameters]]
name = "eps_h_ft"
std_dev = 100.0
lower = -2000.0
upper = 2000.0

[[parameters]]
name = "t_r_s"
distribution = "exponential"
mean = 30.0

[algorithm]
variant = "basic"
q = 301
q_stable = 0

[uncertainty]
moments = ["eps_h_ft:mean"]

[[uncertainty.perturbations]]
param = "eps_h_ft"
moment = "mean"
by = 10.0
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn dips(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dips"))
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const DETERMINISTIC: [&str; 5] =
    ["basic_runs.csv", "basic_records.csv", "basic_trace.csv", "basic_diagnostics.csv", "basic_partition_r2.txt"];

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", CORNER);
    let (a, b) = (ws.out("a"), ws.out("b"));
    assert!(dips(&cfg, &a, &["--workers", "1", "estimate-basic"]).status.success());
    assert!(dips(&cfg, &b, &["--workers", "3", "estimate-basic"]).status.success());
    for f in DETERMINISTIC {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs");
    }
}

#[test]
fn every_artifact_declares_its_provenance() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", CORNER);
    let out = ws.out("o");
    assert!(dips(&cfg, &out, &["--seed", "99", "--format", "csv+svg", "estimate-basic"]).status.success());
    assert!(dips(&cfg, &out, &["--seed", "99", "reweight"]).status.success());
    assert!(dips(&cfg, &out, &["--seed", "99", "--format", "csv+svg", "report"]).status.success());
    let hash = {
        use sha2::Digest;
        sha2::Sha256::digest(CORNER.as_bytes()).iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    let mut csvs = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                csvs += 1;
                let first = text.lines().next().unwrap();
                assert!(first.starts_with("# dips schema="), "{}: {first}", path.display());
                assert!(first.ends_with(&format!("config_sha256={hash} seed=99")), "{}: {first}", path.display());
            }
            Some("txt") => {
                assert!(text.contains(&format!("# config-hash {hash}\n# seed 99\n")), "{}", path.display());
            }
            Some("svg") => assert!(text.starts_with("<svg")),
            _ => panic!("unexpected artifact {}", path.display()),
        }
    }
    assert_eq!(csvs, 10, "{csvs} csv files");
    assert!(out.join("basic_convergence.svg").exists() && out.join("basic_stages.svg").exists());
}

#[test]
fn report_clamps_upper_quantiles_and_does_not_rerun() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", CORNER);
    let out = ws.out("o");
    std::fs::create_dir_all(&out).unwrap();
    // hand-made runs: the second stage's raw upper limit exceeds the first
    let mut runs = String::from("# dips schema=runs-v1 config_sha256=00 seed=0\nrun,stage,threshold,probability\n");
    let stages = [[1e-3, 9e-4], [2e-3, 1e-3], [1.5e-3, 1e-4], [1e-3, 1e-5]];
    for (r, s) in stages.iter().enumerate() {
        runs.push_str(&format!("{r},1,1e1,{:e}\n{r},2,0e0,{:e}\n", s[0], s[1]));
    }
    std::fs::write(out.join("basic_runs.csv"), runs).unwrap();
    let o = dips(&cfg, &out, &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&read(&out, "basic_intervals.csv"));
    let upper: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert_eq!(upper.len(), 2);
    assert!(upper[1] <= upper[0]);
    assert_eq!(upper[1], upper[0], "second stage should be clamped to the first");
    assert!(!out.join("basic_records.csv").exists());
}

#[test]
fn zero_deviation_is_a_validation_error_naming_the_key() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", &CORNER.replacen("std_dev = 1.0", "std_dev = 0.0", 1));
    let o = dips(&cfg, &ws.out("o"), &["estimate-basic"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("parameters[0].std_dev"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_reported_with_their_path() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", &format!("{CORNER}\n[output]\nfromat = \"csv\"\n").replace("q_stable = 0", "q_stable = 0\nsteps = 4"));
    let o = dips(&cfg, &ws.out("o"), &["estimate-basic"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("output.fromat: unknown key"), "{err}");
    assert!(err.contains("algorithm.steps: unknown key"), "{err}");
}

#[test]
fn exit_codes_separate_validation_from_runtime() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", CORNER);
    let missing = dips(&ws.out("nope.toml"), &ws.out("o"), &["estimate-basic"]);
    assert_eq!(missing.status.code(), Some(1));
    let bad_flag = dips(&cfg, &ws.out("o"), &["estimate-ips"]);
    assert_eq!(bad_flag.status.code(), Some(1), "--fixed or --adaptive is required");
    let no_partitions = dips(&cfg, &ws.out("empty"), &["reweight"]);
    assert_eq!(no_partitions.status.code(), Some(2), "{}", stderr(&no_partitions));
    let not_aircraft = dips(&cfg, &ws.out("o"), &["simulate"]);
    assert_eq!(not_aircraft.status.code(), Some(1));
}

#[test]
fn no_target_exits_cleanly_with_a_flag() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", &CORNER.replace("kind = \"gaussian-corner\"", "kind = \"gaussian-corner\"\ncorner = 40.0"));
    let out = ws.out("o");
    let o = dips(&cfg, &out, &["estimate-basic"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for row in data_rows(&read(&out, "basic_records.csv")) {
        assert_eq!(row[5].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[6], "no-target-found");
    }
}

#[test]
fn aircraft_mean_shift_of_altimetry_error_lowers_the_probability() {
    let ws = Workspace::new();
    let cfg = ws.config("a.toml", AIRCRAFT);
    let out = ws.out("o");
    let o = dips(&cfg, &out, &["estimate-basic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dips(&cfg, &out, &["reweight"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = &data_rows(&read(&out, "basic_reweight.csv"))[0];
    let (stored, shifted): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
    assert!(stored > 0.0, "the crisp search found no terrain contact");
    assert!(shifted < stored, "{shifted:e} vs {stored:e}");
    let rate: f64 = data_rows(&read(&out, "basic_sensitivity.csv"))[0][7].parse().unwrap();
    assert!(rate < 0.0);
}

#[test]
fn simulate_writes_the_trajectory() {
    let ws = Workspace::new();
    let cfg = ws.config("a.toml", AIRCRAFT);
    let out = ws.out("o");
    let o = dips(&cfg, &out, &["--format", "csv+svg", "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read(&out, "trajectory_summary.csv");
    assert!(summary.contains("termination,route-complete"), "{summary}");
    assert!(data_rows(&read(&out, "trajectory.csv")).len() > 100);
    assert!(out.join("trajectory.svg").exists());
    let o = dips(&cfg, &out, &["simulate", "--eps-h-ft", "-2000", "--t-r-s", "100000"]);
    assert!(o.status.success());
    assert!(read(&out, "trajectory_summary.csv").contains("termination,terrain-hit"));
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            dips_cli::config::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
