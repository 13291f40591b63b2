use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn botdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_botdr"))
        .args(args)
        .env_remove("BOTDR_SEED")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    serde_json::from_str(line).expect("error record is JSON")
}

const SHORT_FIBER: &str = "[[fiber.segments]]\nlength_m = 2000.0\ntemperature_c = 21.0\n";

#[test]
fn simulate_is_byte_identical_across_runs_and_execution_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("seed = 1\n{SHORT_FIBER}"));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (out, extra) in [(&a, None), (&b, None), (&c, Some("--serial"))] {
        let mut args = vec!["simulate", "--config", path(&cfg), "--out", path(out)];
        args.extend(extra);
        assert!(botdr(&args).status.success());
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert_eq!(a, std::fs::read(c).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# schema: botdr-histogram/1\n# config_hash: "));
    assert!(text.contains("\n# seed: 1\n"));
}

#[test]
fn seed_environment_variable_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("seed = 1\n{SHORT_FIBER}"));
    let out = dir.path().join("h.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_botdr"))
        .args(["simulate", "--config", path(&cfg), "--out", path(&out)])
        .env("BOTDR_SEED", "77")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(std::fs::read_to_string(&out).unwrap().contains("\n# seed: 77\n"));
}

#[test]
fn empty_config_runs_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "");
    let out = dir.path().join("up.csv");
    let res = botdr(&["trace", "--config", path(&cfg), "--branch", "up", "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("# schema: botdr-trace/1\n# branch: up\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 20_001);
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[instrument]\npulse_duration_ns = -300.0\n");
    let res = botdr(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("h.csv"))]);
    assert_eq!(res.status.code(), Some(2));
    let rec = error_record(&res);
    assert_eq!(rec["error"], "ValidationError");
    assert!(rec["message"].as_str().unwrap().contains("pulse_duration"));

    let cfg = write_config(dir.path(), "broken.toml", "[instrument\n");
    let res = botdr(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("h.csv"))]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_record(&res)["error"], "ParseError");
}

#[test]
fn staged_pipeline_and_branch_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.toml", SHORT_FIBER);
    let down_cfg = write_config(d, "down.toml", &format!("[schedule]\nbranch = \"down\"\n{SHORT_FIBER}"));
    let map = d.join("map.toml");

    for branch in ["up", "down"] {
        let trace = d.join(format!("{branch}.csv"));
        assert!(botdr(&["trace", "--config", path(&cfg), "--branch", branch, "--out", path(&trace)])
            .status
            .success());
        if branch == "up" {
            let up_only = d.join("up_only.toml");
            let res = botdr(&["calibrate", "--trace", path(&trace), "--branch", "up", "--out", path(&up_only)]);
            assert!(res.status.success());
            assert!(String::from_utf8_lossy(&res.stdout).contains("up branch: 7 peaks"));
        }
        let res = botdr(&["calibrate", "--trace", path(&trace), "--branch", branch, "--out", path(&map), "--merge"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let map_text = std::fs::read_to_string(&map).unwrap();
    assert!(map_text.starts_with("# schema: botdr-hysteresis/1\n"));
    assert!(map_text.contains("[up") && map_text.contains("[down"));

    // A down-branch scan retrieved with an up-only calibration.
    let hist = d.join("down_hist.csv");
    assert!(botdr(&["simulate", "--config", path(&down_cfg), "--out", path(&hist), "--cal", path(&map)])
        .status
        .success());
    let res = botdr(&[
        "retrieve",
        "--hist",
        path(&hist),
        "--cal",
        path(&d.join("up_only.toml")),
        "--config",
        path(&down_cfg),
        "--out",
        path(&d.join("p.csv")),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert_eq!(error_record(&res)["error"], "BranchMismatch");

    // The full calibration handles it.
    let profile = d.join("profile.csv");
    let res = botdr(&[
        "retrieve",
        "--hist",
        path(&hist),
        "--cal",
        path(&map),
        "--config",
        path(&down_cfg),
        "--out",
        path(&profile),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&profile).unwrap();
    assert!(text.contains(
        "bin_index,range_m,amplitude,nu_b_mhz,sigma_nu_mhz,omega_b_mhz,sigma_omega_mhz,temperature_c,sigma_t_c,strain_ue,sigma_strain_ue,flags\n"
    ));
    assert!(!text.contains("NaN"));

    let plots = d.join("plots");
    let res = botdr(&[
        "report",
        "--profile",
        path(&profile),
        "--out",
        path(&plots),
        "--hist",
        path(&hist),
        "--cal",
        path(&map),
        "--config",
        path(&down_cfg),
        "--bins",
        "10,20",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["temperature.svg", "strain.svg", "brillouin_shift.svg", "spectrum_bin_0010.svg", "spectrum_bin_0020.svg"] {
        let svg = std::fs::read_to_string(plots.join(name)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("config_hash: "), "{name}");
    }
}

#[test]
fn roundtrip_on_the_two_temperature_scenario() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/two_temperature.toml");
    let dir = tempfile::tempdir().unwrap();
    let res = botdr(&["roundtrip", "--config", path(&cfg), "--out-dir", path(dir.path())]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    let segments = summary["segments"].as_array().unwrap();
    assert!((segments[0]["mean_temperature_c"].as_f64().unwrap() - 19.7).abs() < 1.0);
    assert!((segments[1]["mean_temperature_c"].as_f64().unwrap() - 24.4).abs() < 1.0);
    let boundary = summary["boundaries"][0]["located_m"].as_f64().unwrap();
    assert!((boundary - 3000.0).abs() <= 30.0, "boundary at {boundary} m");

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    let config_bytes = std::fs::read(dir.path().join("config.toml")).unwrap();
    assert_eq!(botdr_core::io::hash_bytes(&config_bytes), hash);
    for file in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(file.as_str().unwrap()).exists());
    }
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile.contains(&format!("# config_hash: {hash}\n# seed: 4\n")));
}
