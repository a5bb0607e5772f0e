use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_mfmarket");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_cmd(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("diagnostic line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {text}"))
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match std::fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

/// Overrides that keep the heavier bundled configs quick.
fn quick(cmd: &str) -> &'static [&'static str] {
    match cmd {
        "simulate" => &["--set", "sim.steps=2000", "--set", "sim.N=200"],
        "mckean-vlasov" => &["--set", "t_end=2.0"],
        _ => &[],
    }
}

const COMMANDS: [&str; 10] = [
    "potential",
    "selfconsist",
    "free-energy",
    "bifurcate",
    "phase-diagnostics",
    "hetero",
    "simulate",
    "mckean-vlasov",
    "calibrate",
    "price",
];

#[test]
fn every_bundled_config_runs_and_carries_metadata() {
    for cmd in COMMANDS {
        let dir = tempfile::tempdir().unwrap();
        let out = run_cmd(cmd, &config(cmd), dir.path(), quick(cmd));
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let names = files(dir.path());
        assert!(names.contains(&format!("{cmd}.json")), "{cmd}: {names:?}");
        let doc = read_json(&dir.path().join(format!("{cmd}.json")));
        let meta = &doc["metadata"];
        assert_eq!(meta["command"], cmd);
        assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
        assert!(meta["config"].is_object());
        for name in names.iter().filter(|n| n.ends_with(".csv")) {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            let first = text.lines().next().unwrap();
            assert!(first.starts_with("# mfmarket ") && first.contains(meta["config_sha256"].as_str().unwrap()), "{name}");
        }
        assert!(!names.iter().any(|n| n.contains(".tmp")), "{names:?}");
    }
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let cases: [(&str, &[&str]); 2] = [
        ("simulate", &["--set", "sim.steps=300", "--set", "sim.N=5000"]),
        ("calibrate", &[]),
    ];
    for (cmd, extra) in cases {
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        let threads = [None, Some("1"), Some("4")];
        for (dir, t) in dirs.iter().zip(threads) {
            let mut args = extra.to_vec();
            if let Some(t) = t {
                args.extend(["--threads", t]);
            }
            let out = run_cmd(cmd, &config(cmd), dir.path(), &args);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let names = files(dirs[0].path());
        for name in &names {
            let a = std::fs::read(dirs[0].path().join(name)).unwrap();
            for d in &dirs[1..] {
                assert_eq!(a, std::fs::read(d.path().join(name)).unwrap(), "{cmd}/{name}");
            }
        }
    }
}

#[test]
fn seed_flag_changes_simulation_and_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let extra = ["--set", "sim.steps=500", "--set", "sim.N=50"];
    assert_eq!(run_cmd("simulate", &config("simulate"), a.path(), &extra).status.code(), Some(0));
    let mut with_seed = extra.to_vec();
    with_seed.extend(["--seed", "77"]);
    assert_eq!(run_cmd("simulate", &config("simulate"), b.path(), &with_seed).status.code(), Some(0));
    let (ja, jb) = (read_json(&a.path().join("simulate.json")), read_json(&b.path().join("simulate.json")));
    assert_eq!(jb["metadata"]["config"]["sim"]["seed"], 77);
    assert_ne!(ja["metadata"]["config_sha256"], jb["metadata"]["config_sha256"]);
    assert_ne!(ja["result"], jb["result"]);
}

#[test]
fn bifurcation_branch_count_changes_at_critical_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("bifurcate", &config("bifurcate"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let h_c = read_json(&dir.path().join("bifurcate.json"))["result"]["h_c"].as_f64().unwrap();
    assert!((h_c - 0.249).abs() < 1e-3);

    let text = std::fs::read_to_string(dir.path().join("bifurcate.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["h", "branches", "root_index", "m", "stability", "free_energy"]);
    let mut per_h: Vec<(f64, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (h, n): (f64, usize) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        if per_h.last().map(|x| x.0) != Some(h) {
            per_h.push((h, n));
        }
    }
    assert_eq!(per_h.len(), 351);
    let below = per_h.iter().filter(|x| x.0 < h_c).last().unwrap();
    let above = per_h.iter().find(|x| x.0 > h_c).unwrap();
    assert_eq!((below.1, above.1), (3, 1), "{below:?} {above:?}");
    assert!(per_h.iter().all(|&(h, n)| if h < h_c { n == 3 } else { n == 1 }));
}

#[test]
fn calibrate_bundled_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("calibrate", &config("calibrate"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &read_json(&dir.path().join("calibrate.json"))["result"];
    assert!(r["mape"].as_f64().unwrap() < 0.1, "{r}");
    assert_eq!(r["quotes"], 20);
    assert!(r["m"].as_f64().unwrap().is_finite());
    let text = std::fs::read_to_string(dir.path().join("calibrate.csv")).unwrap();
    assert!(text.lines().nth(1) == Some("y,V_eff"));
}

#[test]
fn missing_inputs_exit_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run_cmd("selfconsist", &dir.path().join("absent.json"), &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["exit_code"], 2);
    assert!(files(&out_dir).is_empty());

    let cfg = dir.path().join("cal.json");
    std::fs::write(&cfg, r#"{ "quotes": "nope.csv", "side": "puts", "calibration": { "h": 0.4 } }"#).unwrap();
    let out = run_cmd("calibrate", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(files(&out_dir).is_empty());
}

#[test]
fn bad_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("selfconsist", &config("selfconsist"), dir.path(), &["--set", "surprise=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"], "InvalidConfig");

    let out = run_cmd("selfconsist", &config("selfconsist"), dir.path(), &["--set", "params.a=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"], "InvalidParams");

    let out = run_cmd("potential", &config("potential"), dir.path(), &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run_cmd("potential", &config("potential"), dir.path(), &["--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    assert_eq!(run_cmd("price", &broken, dir.path(), &[]).status.code(), Some(2));
    assert!(files(dir.path()).iter().all(|f| f == "broken.json"));
}

#[test]
fn numerical_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd("simulate", &config("simulate"), dir.path(), &["--set", "sim.init.y=100", "--set", "sim.steps=10"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_error(&out)["error"], "UnstableStep");

    let out = run_cmd("phase-diagnostics", &config("phase-diagnostics"), dir.path(), &["--set", "chi_h=0.2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_error(&out)["error"], "OrderedPhase");
    assert!(files(dir.path()).is_empty());
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let out = run(&["potential"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in COMMANDS {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}
