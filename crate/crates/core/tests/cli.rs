use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoloss::io;
use tempfile::TempDir;

fn geoloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, scene: &str) -> PathBuf {
    let out = dir.path().join(scene.replace('/', "_"));
    let run = geoloss(&["synth", "--scene", scene, "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    out
}

fn metrics(path: &Path) -> Vec<(String, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',');
    let values = lines.next().unwrap().split(',').map(|v| v.parse().unwrap());
    header.map(str::to_owned).zip(values).collect()
}

fn metric(m: &[(String, f64)], name: &str) -> f64 {
    m.iter().find(|(n, _)| n == name).unwrap().1
}

#[test]
fn synth_writes_the_instance_contract() {
    let dir = TempDir::new().unwrap();
    let out = synth(&dir, "wall");
    for f in [
        io::LEFT,
        io::RIGHT,
        io::PREV_LEFT,
        io::PREV_RIGHT,
        io::DINV,
        io::NORMAL,
        io::POSE,
        io::CALIB,
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let seq = io::read_instance(&out).unwrap();
    assert_eq!(seq.dims(), (128, 96));
    let pose = io::read_pose(&out.join(io::POSE)).unwrap();
    assert!((pose.translation().z - 0.5).abs() < 1e-12);
}

#[test]
fn synth_is_deterministic_and_seeded() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let r = geoloss(&[
            "synth",
            "--scene",
            "ground",
            "--out",
            s(&out),
            "--seed",
            seed,
        ]);
        assert_eq!(code(&r), 0);
        fs::read(out.join(io::LEFT)).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}

#[test]
fn synth_rejects_unknown_scene() {
    let dir = TempDir::new().unwrap();
    let r = geoloss(&["synth", "--scene", "cathedral", "--out", s(dir.path())]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("unknown scene"));
}

#[test]
fn synth_accepts_a_scene_file() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("box.scene");
    fs::write(
        &spec,
        "name = box\nseed = 2\nwidth = 48\nheight = 32\nfocal = 40\n\
         plane0 = 0 0 -1 -5 0.1 0.3\nplane1 = 0 -1 0 -1.2 0.05 0.2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let r = geoloss(&["synth", "--scene", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(io::read_instance(&out).unwrap().dims(), (48, 32));
}

#[test]
fn solve_writes_solution_and_trace() {
    let dir = TempDir::new().unwrap();
    let scene = synth(&dir, "wall");
    let out = dir.path().join("sol");
    let r = geoloss(&[
        "solve",
        s(&scene),
        "--out",
        s(&out),
        "--iters",
        "30",
        "--levels",
        "1",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stdout(&r).contains("30 iterations"));
    let (dinv, normals) = io::read_geometry(&out).unwrap();
    assert_eq!((dinv.dims(), normals.dims()), ((128, 96), (128, 96)));
    io::read_pose(&out.join(io::POSE)).unwrap();
    let trace = fs::read_to_string(out.join(io::TRACE)).unwrap();
    assert_eq!(trace.lines().count(), 31);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let scene = synth(&dir, "wall");
    let config = dir.path().join("solve.cfg");
    fs::write(&config, "# short run\niters = 5\nlevels = 1\n").unwrap();
    let trace_len = |extra: &[&str]| {
        let out = dir.path().join("sol");
        let mut args = vec!["solve", s(&scene), "--out", s(&out), "--config", s(&config)];
        args.extend_from_slice(extra);
        let r = geoloss(&args);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        fs::read_to_string(out.join(io::TRACE))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    assert_eq!(trace_len(&[]), 5);
    assert_eq!(trace_len(&["--iters", "3"]), 3);
}

#[test]
fn unknown_config_key_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let scene = synth(&dir, "wall");
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "iters = 5\nlamda2 = 3\n").unwrap();
    let out = dir.path().join("sol");
    let r = geoloss(&["solve", s(&scene), "--out", s(&out), "--config", s(&config)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("lamda2"));
}

#[test]
fn solve_rejects_missing_instance() {
    let dir = TempDir::new().unwrap();
    let r = geoloss(&["solve", s(&dir.path().join("nope")), "--out", s(dir.path())]);
    assert_eq!(code(&r), 2);
}

#[test]
fn gradcheck_reports_every_loss() {
    let r = geoloss(&["gradcheck"]);
    assert_eq!(code(&r), 0, "{}", stdout(&r));
    let text = stdout(&r);
    assert_eq!(text.lines().filter(|l| l.contains("PASS")).count(), 6);
    for name in ["L_P", "L_DN", "L_N", "L_NS", "L_DC", "L_NC"] {
        assert!(text
            .lines()
            .any(|l| l.split_whitespace().next() == Some(name)));
    }
}

#[test]
fn gradcheck_fails_an_impossible_tolerance() {
    let r = geoloss(&["gradcheck", "--tolerance", "1e-12"]);
    assert_eq!(code(&r), 1);
    assert!(stdout(&r).contains("FAIL"));
}

#[test]
fn eval_of_ground_truth_against_itself_is_exact() {
    let dir = TempDir::new().unwrap();
    let scene = synth(&dir, "ground");
    let out = dir.path().join("metrics");
    let r = geoloss(&["eval", s(&scene), s(&scene), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let m = metrics(&out.join("metrics.csv"));
    for name in [
        "abs_rel",
        "sq_rel",
        "rmse",
        "rmse_log",
        "mean_deg",
        "median_deg",
    ] {
        assert_eq!(metric(&m, name), 0.0, "{name}");
    }
    for name in [
        "delta1",
        "delta2",
        "delta3",
        "pct_11_25",
        "pct_22_5",
        "pct_30",
    ] {
        assert_eq!(metric(&m, name), 1.0, "{name}");
    }
}

#[test]
fn eval_cap_excluding_everything_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let scene = synth(&dir, "wall");
    let r = geoloss(&["eval", s(&scene), s(&scene), "--cap", "1"]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("no pixels"));
}

#[test]
fn corridor_round_trip_through_files_is_accurate() {
    let dir = TempDir::new().unwrap();
    let scene = synth(&dir, "corridor");
    let out = dir.path().join("sol");
    let r = geoloss(&["solve", s(&scene), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = geoloss(&["eval", s(&out), s(&scene)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let m = metrics(&out.join("metrics.csv"));
    assert!(metric(&m, "abs_rel") < 0.02, "{m:?}");
}
