//! End-to-end tests of the command-line interface against the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

static DIR_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn temp_dir(tag: &str) -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!(
        "offnav-cli-test-{}-{}-{}",
        std::process::id(),
        tag,
        n
    ));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn offnav(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offnav"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Strip `#` comment lines (they carry the invoking command line, which
/// legitimately differs between runs).
fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn gen_world_is_byte_deterministic() {
    let dir = temp_dir("gen");
    assert_ok(&offnav(
        &dir,
        &["gen-world", "--seed", "7", "--out", "a.world"],
    ));
    assert_ok(&offnav(
        &dir,
        &["gen-world", "--seed", "7", "--out", "b.world"],
    ));
    let a = body(&dir.join("a.world"));
    let b = body(&dir.join("b.world"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(dir.join("manifest.txt").exists());
}

#[test]
fn rejects_unknown_config_keys() {
    let dir = temp_dir("cfg");
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "definitely_not_a_key = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_offnav"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .args(["gen-world", "--seed", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

#[test]
fn grad_check_passes_quickly() {
    let dir = temp_dir("grad");
    let out = offnav(&dir, &["grad-check", "--seeds", "5"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max relative error"), "{stdout}");
}

#[test]
fn pipeline_chain_and_eval_phi_equivalence() {
    let dir = temp_dir("chain");
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    // Small but complete chain through the documented recipe. Inputs are
    // ordinary paths; outputs land under --out-dir.
    assert_ok(&offnav(
        &dir,
        &["gen-world", "--seed", "11", "--out", "w.world"],
    ));
    assert_ok(&offnav(
        &dir,
        &[
            "collect",
            "--world",
            &p("w.world"),
            "--steps",
            "6000",
            "--seed",
            "3",
            "--out",
            "c.log",
        ],
    ));
    assert_ok(&offnav(
        &dir,
        &["make-dataset", "--log", &p("c.log"), "--out", "d.ds"],
    ));
    assert_ok(&offnav(
        &dir,
        &[
            "train",
            "--dataset",
            &p("d.ds"),
            "--epochs",
            "1",
            "--seed",
            "5",
            "--out",
            "m.ckpt",
        ],
    ));
    assert_ok(&offnav(
        &dir,
        &[
            "build-library",
            "--dataset",
            &p("d.ds"),
            "--k",
            "12",
            "--seed",
            "9",
            "--out",
            "lib.bin",
        ],
    ));

    // costmap and plan artifacts from the same world.
    assert_ok(&offnav(
        &dir,
        &[
            "costmap",
            "--world",
            &p("w.world"),
            "--pose",
            "0,0,0",
            "--out",
            "map.pgm",
        ],
    ));
    let pgm = fs::read_to_string(dir.join("map.pgm")).unwrap();
    assert!(pgm.starts_with("P2"));
    assert_ok(&offnav(
        &dir,
        &[
            "plan",
            "--world",
            &p("w.world"),
            "--pose",
            "0,0,0",
            "--goal",
            "12,0",
            "--model",
            &p("m.ckpt"),
            "--library",
            &p("lib.bin"),
            "--noise-seed",
            "4",
            "--out",
            "plan.csv",
        ],
    ));
    let plan_csv = body(&dir.join("plan.csv"));
    assert!(plan_csv.starts_with("candidate,"));
    assert_eq!(plan_csv.lines().count(), 13, "{plan_csv}");
    assert_eq!(
        plan_csv.lines().filter(|l| l.ends_with(",1")).count(),
        1,
        "exactly one chosen candidate"
    );

    // eval: hybrid at phi=1 must equal costmap_only on the same seeds.
    for (name, args) in [
        ("r1.csv", vec!["--method", "hybrid", "--phi", "1.0"]),
        ("r2.csv", vec!["--method", "costmap_only"]),
    ] {
        let model = p("m.ckpt");
        let lib = p("lib.bin");
        let world = p("w.world");
        let mut full = vec![
            "eval",
            "--model",
            model.as_str(),
            "--library",
            lib.as_str(),
            "--world",
            world.as_str(),
            "--episodes",
            "4",
            "--seed",
            "21",
            "--out",
            name,
        ];
        full.extend(args);
        assert_ok(&offnav(&dir, &full));
    }
    let r1 = body(&dir.join("r1.csv"));
    let r2 = body(&dir.join("r2.csv"));
    // Identical except the method/phi label columns.
    let strip = |s: &str| -> Vec<String> {
        s.lines()
            .skip(1)
            .map(|l| l.split(',').skip(2).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(strip(&r1), strip(&r2), "r1:\n{r1}\nr2:\n{r2}");

    // Reports are reproducible byte-for-byte.
    assert_ok(&offnav(
        &dir,
        &[
            "eval",
            "--method",
            "costmap_only",
            "--model",
            &p("m.ckpt"),
            "--library",
            &p("lib.bin"),
            "--world",
            &p("w.world"),
            "--episodes",
            "4",
            "--seed",
            "21",
            "--out",
            "r3.csv",
        ],
    ));
    assert_eq!(body(&dir.join("r2.csv")), body(&dir.join("r3.csv")));
}

#[test]
fn plot_renders_sweep_points_faithfully() {
    let dir = temp_dir("plot");
    let csv = "phi,raw_rate,normalized_rate,ci_half_width\n0,0.2,0.2,0.1\n0.5,0.9,0.9,0.05\n1,0.55,0.55,0.08\n";
    fs::write(dir.join("sweep.csv"), csv).unwrap();
    assert_ok(&offnav(
        &dir,
        &["plot", "--input", dir.join("sweep.csv").to_str().unwrap(), "--out", "sweep.svg"],
    ));
    let svg = fs::read_to_string(dir.join("sweep.svg")).unwrap();
    // The chart mapping is linear: x = 56 + phi * (480 - 56 - 16),
    // y = 320 - 48 - rate * (320 - 24 - 48).
    for (phi, rate) in [(0.0, 0.2), (0.5, 0.9), (1.0, 0.55)] {
        let x = 56.0 + phi * (480.0 - 56.0 - 16.0);
        let y = 320.0 - 48.0 - rate * (320.0 - 24.0 - 48.0);
        let needle = format!("<circle cx=\"{x}\" cy=\"{y}\"");
        assert!(svg.contains(&needle), "missing {needle} in\n{svg}");
    }

    // Report CSVs render as bars carrying their rates.
    let report = "method,phi,environment,episodes,successes,stuck,trapped,timeouts,raw_rate,oracle_rate,normalized_rate,ci_half_width\nhybrid,0.75,in_distribution,4,3,1,0,0,0.75,1,0.75,0.1\n";
    fs::write(dir.join("report.csv"), report).unwrap();
    assert_ok(&offnav(
        &dir,
        &["plot", "--input", dir.join("report.csv").to_str().unwrap(), "--out", "bars.svg"],
    ));
    let bars = fs::read_to_string(dir.join("bars.svg")).unwrap();
    assert!(bars.contains("data-rate=\"0.75\""));
}
