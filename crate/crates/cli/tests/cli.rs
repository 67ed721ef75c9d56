use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const SMOKE: &str = "seed = 4\n[env]\ndims = [16, 16, 1]\n[episode]\nmax_steps = 40\n";

fn ssmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn env_hash_line(csv: &str) -> &str {
    csv.lines()
        .find(|l| l.starts_with("# env-hash:"))
        .expect("env-hash line")
}

#[test]
fn missing_config_is_usage_error() {
    let o = ssmi(&["explore", "--config", "/no/such/dir/run.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/dir/run.toml"));
}

#[test]
fn unknown_selector_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = ssmi(&["explore", "--selector", "greedy", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown selector `greedy`"));
}

#[test]
fn smoke_explore_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("run");
    let t0 = Instant::now();
    let o = ssmi(&["explore", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(t0.elapsed() < Duration::from_secs(10));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[env]") && stdout.contains("dims = [16, 16, 1]"));
    for f in [
        "metrics.csv",
        "timing.csv",
        "precision.csv",
        "plan_log.csv",
        "final_map.ssmigrid",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# config-hash: "));
    assert!(metrics.lines().count() > 3);
    let inspect = ssmi(&["map", "inspect", out.join("final_map.ssmigrid").to_str().unwrap()]);
    assert_eq!(code(&inspect), 0);
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("dims: 16x16x1"));
}

#[test]
fn selectors_differ_on_the_same_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let mut csvs = Vec::new();
    for sel in ["frontier", "ssmi"] {
        let out = dir.path().join(sel);
        let o = ssmi(&[
            "explore",
            "--config",
            &cfg,
            "--selector",
            sel,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        csvs.push(fs::read_to_string(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(env_hash_line(&csvs[0]), env_hash_line(&csvs[1]));
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn octree_mapper_and_map_conversion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("oct");
    let o = ssmi(&[
        "explore",
        "--config",
        &cfg,
        "--mapper",
        "octree",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let tree = out.join("final_map.ssmioct");
    let grid = dir.path().join("m.ssmigrid");
    let c = ssmi(&[
        "map",
        "convert",
        tree.to_str().unwrap(),
        grid.to_str().unwrap(),
        "--to",
        "grid",
    ]);
    assert_eq!(code(&c), 0, "{}", String::from_utf8_lossy(&c.stderr));
    let json = dir.path().join("m.json");
    let c = ssmi(&[
        "map",
        "convert",
        grid.to_str().unwrap(),
        json.to_str().unwrap(),
        "--to",
        "json",
    ]);
    assert_eq!(code(&c), 0);
    let a = String::from_utf8(ssmi(&["map", "inspect", tree.to_str().unwrap()]).stdout).unwrap();
    let b = String::from_utf8(ssmi(&["map", "inspect", json.to_str().unwrap()]).stdout).unwrap();
    let known = |s: &str| s.lines().find(|l| l.starts_with("known_cells")).unwrap().to_string();
    assert_eq!(known(&a), known(&b));
    let e = ssmi(&["mi-eval", "--map", grid.to_str().unwrap(), "--x", "8", "--y", "8"]);
    assert_eq!(code(&e), 0);
    assert!(String::from_utf8_lossy(&e.stdout).contains("mi_nats:"));
}

#[test]
fn oracle_check_exit_codes_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&ssmi(&["oracle-check", "--trials", "0", "--out", d])), 2);
    let ok = ssmi(&["oracle-check", "--trials", "50", "--seed", "3", "--out", d]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let summary = fs::read_to_string(dir.path().join("oracle_check.csv")).unwrap();
    assert!(summary.starts_with("# config-hash: "));

    let breach = ssmi(&[
        "oracle-check",
        "--trials",
        "50",
        "--seed",
        "3",
        "--tolerance",
        "0",
        "--out",
        d,
    ]);
    assert_eq!(code(&breach), 1);
    let saved = dir.path().join("oracle_failure.json");
    assert!(saved.exists());
    let replay = ssmi(&["oracle-check", "--replay", saved.to_str().unwrap()]);
    assert_eq!(code(&replay), 1);
    let relaxed = ssmi(&[
        "oracle-check",
        "--replay",
        saved.to_str().unwrap(),
        "--tolerance",
        "1e-10",
    ]);
    assert_eq!(code(&relaxed), 0);
}

#[test]
fn mi_surface_scene_and_empty_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("surface.csv");
    let o = ssmi(&["mi-surface", "--scene", "two-wall", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# config-hash: "));
    assert!(text.lines().any(|l| l == "x,y,mi_nats"));

    let json = dir.path().join("empty.json");
    let prior = "[0.0,0.0,0.0]";
    let cells: Vec<String> = (0..24 * 24).map(|_| prior.to_string()).collect();
    fs::write(
        &json,
        format!(
            "{{\"dims\":[24,24,1],\"resolution\":1.0,\"origin\":[0.0,0.0,0.0],\"prior\":{prior},\"cells\":[{}]}}",
            cells.join(",")
        ),
    )
    .unwrap();
    let out = dir.path().join("empty.csv");
    let o = ssmi(&[
        "mi-surface",
        "--map",
        json.to_str().unwrap(),
        "--range",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let interior: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let (x, y): (i64, i64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
            ((6..18).contains(&x) && (6..18).contains(&y)).then_some(f[2])
        })
        .collect();
    assert_eq!(interior.len(), 144);
    assert!(interior.iter().all(|v| *v == interior[0]));
}

#[test]
fn srle_study_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\nresolutions = [1.0, 2.0]\niterations = 1\n");
    let out = dir.path().join("study.csv");
    let o = ssmi(&["srle-study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
}
