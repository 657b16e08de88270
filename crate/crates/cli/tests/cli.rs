use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_markerloc"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("MARKERLOC_CONFIG_DIR").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "one-line error expected: {text}");
    serde_json::from_str(text.trim()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_same_file_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("noiseless.toml");
    ok(&["simulate", "-c", s(&cfg), "-o", s(dir.path())]);
    let truth = dir.path().join("spiral-eight/truth.csv");
    let report: serde_json::Value = serde_json::from_str(&ok(&["evaluate", s(&truth), s(&truth)])).unwrap();
    assert_eq!(report["hausdorff"], 0.0);
    assert_eq!(report["frechet"], 0.0);
    assert_eq!(report["n_a"], 900);
}

#[test]
fn cutoff_above_nyquist_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    std::fs::write(&raw, "t,x,y,z,theta,rms,n_markers,converged,cause\n0,1,2,3,0,0,8,1,\n").unwrap();
    let out_file = dir.path().join("filtered.csv");
    let out = run(&["filter", s(&raw), "--cutoff", "100", "--sample-rate", "30", "-o", s(&out_file)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "invalid-spec");
    assert!(err["message"].as_str().unwrap().contains("Nyquist"));
    assert!(!out_file.exists());
}

#[test]
fn bad_input_exits_two_and_missing_flags_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,x,y,z,theta,rms,n_markers,converged,cause\n0,abc,2,3,0,0,8,1,\n").unwrap();
    let out = run(&["filter", s(&bad), "--cutoff", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "parse");

    let out = run(&["filter", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = run(&["estimate", "--detections", "missing.jsonl", "--map", "m.json", "--intrinsics", "k.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_short_signal_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let mut text = String::from("t,x,y,z,theta,rms,n_markers,converged,cause\n");
    for k in 0..8 {
        text.push_str(&format!("{},{},0,1,1.57,0,8,1,\n", k as f64 / 30.0, k));
    }
    std::fs::write(&raw, text).unwrap();
    let out = run(&["filter", s(&raw), "--auto-cutoff", "0.95"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["stage"], "filter");
}

#[test]
fn bench_prints_table_for_both_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let table = ok(&["bench", "-c", s(&configs().join("default.toml")), "-o", s(dir.path()), "--svg"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 6, "{table}");
    let header: Vec<&str> = lines[0].split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
    assert_eq!(header, ["Method", "Hausdorff (m)", "Fréchet (m)", "Runtime (FPS)"]);
    let methods: Vec<&str> = lines[2..].iter().map(|l| l.split('|').nth(1).unwrap().trim()).collect();
    assert_eq!(
        methods,
        ["spiral-eight raw", "spiral-eight filtered", "rectangular-eight raw", "rectangular-eight filtered"]
    );
    for row in &lines[2..] {
        let cells: Vec<&str> = row.split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
        assert!(cells[1].parse::<f64>().unwrap() >= 0.0);
        assert!(cells[2].parse::<f64>().unwrap() >= cells[1].parse::<f64>().unwrap());
        assert!(cells[3].contains('±'));
    }
    assert!(dir.path().join("timing.json").exists());
    assert!(dir.path().join("spiral-eight/trajectories.svg").exists());
}

#[test]
fn pipe_composition_equals_monolith() {
    let cfg = configs().join("default.toml");
    let mono = tempfile::tempdir().unwrap();
    let pipe = tempfile::tempdir().unwrap();
    ok(&["bench", "-c", s(&cfg), "-o", s(mono.path())]);
    let digest = ok(&["simulate", "-c", s(&cfg), "-o", s(pipe.path())]).trim().to_string();
    assert_eq!(json(&mono.path().join("manifest.json"))["config_digest"], digest.as_str());

    let (map, k) = (pipe.path().join("map.json"), pipe.path().join("intrinsics.json"));
    for profile in ["spiral-eight", "rectangular-eight"] {
        let d = pipe.path().join(profile);
        for name in ["truth.csv", "detections.jsonl"] {
            let a = std::fs::read(d.join(name)).unwrap();
            let b = std::fs::read(mono.path().join(profile).join(name)).unwrap();
            assert!(a == b, "{profile}/{name}");
        }
        let (raw, filtered) = (d.join("raw.csv"), d.join("filtered.csv"));
        ok(&[
            "estimate",
            "--detections",
            s(&d.join("detections.jsonl")),
            "--map",
            s(&map),
            "--intrinsics",
            s(&k),
            "--frames",
            "900",
            "-o",
            s(&raw),
        ]);
        ok(&["filter", s(&raw), "--auto-cutoff", "0.95", "--margin", "20", "-o", s(&filtered)]);
        assert_eq!(std::fs::read(&raw).unwrap(), std::fs::read(mono.path().join(profile).join("raw.csv")).unwrap());

        let truth = d.join("truth.csv");
        for (est, report) in [(&raw, "report_raw.json"), (&filtered, "report_filtered.json")] {
            let piped: serde_json::Value =
                serde_json::from_str(&ok(&["evaluate", s(est), s(&truth), "--config-digest", &digest])).unwrap();
            let whole = json(&mono.path().join(profile).join(report));
            for key in ["hausdorff", "frechet"] {
                let (a, b) = (piped[key].as_f64().unwrap(), whole[key].as_f64().unwrap());
                assert!((a - b).abs() <= 1e-6 * b.max(1e-9), "{profile} {report} {key}: {a} vs {b}");
            }
            for key in ["n_a", "n_b", "config_digest", "fps"] {
                assert_eq!(piped[key], whole[key], "{profile} {report} {key}");
            }
        }
    }
}

#[test]
fn manifest_reruns_byte_identically() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    ok(&["simulate", "-c", s(&configs().join("default.toml")), "-o", s(first.path())]);
    ok(&["simulate", "-c", s(&first.path().join("manifest.json")), "-o", s(second.path())]);
    for name in ["manifest.json", "map.json", "spiral-eight/detections.jsonl", "rectangular-eight/truth.csv"] {
        let a = std::fs::read(first.path().join(name)).unwrap();
        let b = std::fs::read(second.path().join(name)).unwrap();
        assert!(a == b, "{name}");
    }
}

#[test]
fn config_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "-c", "noiseless.toml", "-o", s(dir.path())])
        .env("MARKERLOC_CONFIG_DIR", configs())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("spiral-eight/truth.csv").exists());
}

#[test]
fn bode_spectrum_and_map_gen() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("bode.svg");
    let csv = ok(&[
        "bode",
        "--order",
        "2",
        "--cutoff",
        "1",
        "--omega-min",
        "0.1",
        "--omega-max",
        "10",
        "--points",
        "3",
        "--svg",
        s(&svg),
    ]);
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!((rows[1][1] + 3.0103).abs() < 1e-3);
    assert!((rows[1][2] + 90.0).abs() < 1e-9);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<path"));

    let signal = dir.path().join("signal.csv");
    let mut text = String::from("t,value\n");
    for k in 0..600 {
        let t = k as f64 / 30.0;
        text.push_str(&format!("{t},{}\n", (2.0 * t).sin()));
    }
    std::fs::write(&signal, text).unwrap();
    let spec = ok(&["spectrum", s(&signal), "--column", "value"]);
    assert!(spec.starts_with("omega_rad_s,amplitude\n"));
    let peak = spec
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').map(|(w, a)| (w.parse::<f64>().unwrap(), a.parse::<f64>().unwrap())).unwrap())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    // Bin spacing is 2π·30/600 ≈ 0.314 rad/s.
    assert!((peak.0 - 2.0).abs() < 0.16, "{peak:?}");

    let map: serde_json::Value = serde_json::from_str(&ok(&["map-gen", "--count", "4"])).unwrap();
    assert_eq!(map["markers"].as_array().unwrap().len(), 4);
}
