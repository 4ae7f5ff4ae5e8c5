use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn modcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = modcast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// simulate → ensemble → track → forecast, returning the tracked file and
/// the forecast file.
fn build_chain(dir: &TempDir, extra_sim: &[&str], extra_fc: &[&str]) -> (PathBuf, PathBuf) {
    let sim = path(dir, "sim.jsonl");
    let ens = path(dir, "ens.jsonl");
    let trk = path(dir, "trk.jsonl");
    let fc = path(dir, "fc.jsonl");
    let mut a = vec!["simulate", "--seed", "7", "--output", s(&sim)];
    a.extend(extra_sim);
    ok(&a);
    ok(&["ensemble", "--input", s(&sim), "--output", s(&ens)]);
    ok(&["track", "--input", s(&ens), "--output", s(&trk)]);
    let mut a = vec!["forecast", "--input", s(&trk), "--output", s(&fc)];
    a.extend(extra_fc);
    ok(&a);
    (trk, fc)
}

#[test]
fn every_subcommand_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let (trk, fc) = build_chain(&dir, &[], &[]);
    let sim = path(&dir, "sim.jsonl");
    let runs: Vec<Vec<&str>> = vec![
        vec!["simulate", "--seed", "7"],
        vec!["ensemble", "--input", s(&sim)],
        vec!["track", "--input", s(&sim)],
        vec!["match", "--input", s(&trk), "--seed", "7"],
        vec!["forecast", "--input", s(&trk)],
        vec!["evaluate", "--input", s(&fc), "--seed", "7"],
        vec!["pipeline", "--seed", "7"],
        vec!["render", "--input", s(&fc)],
    ];
    for args in runs {
        let a = ok(&args).stdout;
        let b = ok(&args).stdout;
        assert!(!a.is_empty(), "{args:?} wrote nothing");
        assert_eq!(a, b, "{args:?} is not reproducible");
    }
}

#[test]
fn pipeline_report_is_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    ok(&["pipeline", "--seed", "7", "--output", s(&a)]);
    ok(&["pipeline", "--seed", "7", "--output", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(report(&a)["seed"], 7);
}

#[test]
fn evaluate_on_oracle_artifacts_scores_one() {
    let dir = TempDir::new().unwrap();
    let (_, fc) = build_chain(&dir, &["--noiseless"], &["--forecaster", "oracle", "--no-post-process"]);
    let out = path(&dir, "report.json");
    ok(&["evaluate", "--input", s(&fc), "--output", s(&out)]);
    let r = report(&out);
    for key in ["mapf", "hota", "mota", "amota"] {
        assert!((r[key].as_f64().unwrap() - 1.0).abs() < 1e-9, "{key}: {}", r[key]);
    }
    assert_eq!(r["ade"].as_f64().unwrap(), 0.0);
}

#[test]
fn many_to_one_yields_at_least_as_many_pairs() {
    let dir = TempDir::new().unwrap();
    let (trk, _) = build_chain(&dir, &["--p-fn", "0.3", "--fp-rate", "3"], &[]);
    let count = |assignment: &str, distance: &str| {
        let out = path(&dir, &format!("pairs-{assignment}-{distance}.jsonl"));
        ok(&[
            "match",
            "--input",
            s(&trk),
            "--assignment",
            assignment,
            "--distance",
            distance,
            "--output",
            s(&out),
        ]);
        std::fs::read_to_string(&out)
            .unwrap()
            .lines()
            .filter(|l| l.contains(r#""kind":"pair""#))
            .count()
    };
    let many = count("many-one", "all");
    let one = count("one-one", "t0");
    assert!(one > 0);
    assert!(many >= one, "many {many} < one {one}");
}

#[test]
fn config_file_layers_under_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "cfg.toml");
    std::fs::write(&cfg, "n_models = 1\n[noise]\np_fn = 1.0\nfp_rate = 0.0\n").unwrap();
    let dets = |extra: &[&str]| {
        let mut a = vec!["simulate", "--config", s(&cfg)];
        a.extend(extra);
        String::from_utf8(ok(&a).stdout)
            .unwrap()
            .lines()
            .filter(|l| l.contains(r#""kind":"det""#))
            .count()
    };
    assert_eq!(dets(&[]), 0);
    assert!(dets(&["--p-fn", "0"]) > 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(modcast(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(modcast(&["bogus"]).status.code(), Some(1));
    assert_eq!(modcast(&["track"]).status.code(), Some(1));
    assert_eq!(modcast(&["match", "--assignment", "greedy"]).status.code(), Some(1));
    assert_eq!(modcast(&["simulate", "--n-agents", "0"]).status.code(), Some(1));
    assert_eq!(modcast(&["--help"]).status.code(), Some(0));
    assert_eq!(modcast(&["--version"]).status.code(), Some(0));

    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bad.toml");
    std::fs::write(&cfg, "n_models = \"many\"\n").unwrap();
    assert_eq!(modcast(&["simulate", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_with_line_number() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("no-header.jsonl", "{\"kind\":\"det\",\"frame\":0}\n", "line 1"),
        (
            "bad-frame.jsonl",
            concat!(
                "{\"kind\":\"header\",\"scene_id\":\"x\",\"hz\":10,\"frames\":2}\n",
                "{\"kind\":\"gt\",\"frame\":9,\"id\":1,\"class\":\"BUS\",\"cx\":0,\"cy\":0,\"cz\":0,\"yaw\":0,\"l\":1,\"w\":1,\"h\":1}\n"
            ),
            "line 2",
        ),
        (
            "garbage.jsonl",
            "{\"kind\":\"header\",\"scene_id\":\"x\",\"hz\":10,\"frames\":2}\n\n{oops\n",
            "line 3",
        ),
    ];
    for (name, text, needle) in cases {
        let p = path(&dir, name);
        std::fs::write(&p, text).unwrap();
        let out = modcast(&["track", "--input", s(&p)]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let missing = modcast(&["track", "--input", s(&path(&dir, "absent.jsonl"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn render_writes_svg() {
    let dir = TempDir::new().unwrap();
    let (_, fc) = build_chain(&dir, &[], &[]);
    let out = path(&dir, "scene.svg");
    ok(&["render", "--input", s(&fc), "--frame", "30", "--output", s(&out)]);
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(r#"class="agent gt""#));
    assert!(svg.contains(r#"class="agent track""#));
}
