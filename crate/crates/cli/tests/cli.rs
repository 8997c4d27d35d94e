use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inear-resp"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn report_value(text: &str, key: &str) -> f64 {
    let t: toml::Table = text.parse().unwrap();
    t[key].as_float().unwrap()
}

#[test]
fn synth_denoise_estimate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "--seed",
            "11",
            "synth",
            "--rate",
            "18",
            "--snr",
            "-10",
            "--noise",
            "band-limited",
            "--out",
            "s",
        ],
        d,
    );
    for f in [
        "left_iem.wav",
        "right_oem.wav",
        "belt.wav",
        "truth.csv",
        "session.toml",
    ] {
        assert!(d.join("s").join(f).is_file(), "{f}");
    }
    ok(
        &["denoise", "--manifest", "s/session.toml", "--out", "clean"],
        d,
    );
    let nr = std::fs::read_to_string(d.join("clean/denoise_report.toml")).unwrap();
    assert!(report_value(&nr, "left_nr_db") < 0.0);

    // Cleaned audio estimated separately, ground truth from the belt.
    ok(
        &[
            "estimate",
            "--left",
            "clean/left_clean.wav",
            "--right",
            "clean/right_clean.wav",
            "--belt",
            "s/belt.wav",
            "--out",
            "rec.csv",
        ],
        d,
    );
    ok(
        &[
            "evaluate",
            "--records",
            "rec.csv",
            "--belt",
            "s/belt.wav",
            "--cleaned",
            "clean/left_clean.wav",
            "--out",
            "report.toml",
        ],
        d,
    );
    let report = std::fs::read_to_string(d.join("report.toml")).unwrap();
    let mae = report_value(&report, "mae_cpm");
    assert!(mae <= 1.0, "mae {mae}");
    assert!(report_value(&report, "ri") > 0.0);
    assert_eq!(report_value(&report, "retained_fraction"), 1.0);

    // The one-shot manifest path agrees on window count.
    ok(
        &[
            "estimate",
            "--manifest",
            "s/session.toml",
            "--out",
            "rec2.csv",
        ],
        d,
    );
    let a = std::fs::read_to_string(d.join("rec.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("rec2.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
}

#[test]
fn short_input_names_the_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["synth", "--rate", "12", "--duration", "10", "--out", "s"],
        d,
    );
    let out = run(
        &["estimate", "--manifest", "s/session.toml", "--out", "r.csv"],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("160000"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["estimate", "--no-such-flag"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["synth"], dir.path()).status.code(), Some(2));
    assert_eq!(
        run(&["--mode", "wiener", "config"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.toml"),
        "[fusion]\ntau_cpm = 2.0\n[lms]\ntaps = 64\n",
    )
    .unwrap();
    let text = ok(
        &[
            "--config",
            "c.toml",
            "--tau",
            "0.3",
            "--window-s",
            "30",
            "config",
        ],
        d,
    );
    let t: toml::Table = text.parse().unwrap();
    assert_eq!(t["fusion"]["tau_cpm"].as_float(), Some(0.3));
    assert_eq!(t["lms"]["taps"].as_integer(), Some(64));
    assert_eq!(t["estimator"]["window_s"].as_float(), Some(30.0));
    assert_eq!(t["ground_truth"]["window_s"].as_float(), Some(30.0));

    std::fs::write(d.join("bad.toml"), "[fusion]\ntau = 1\n").unwrap();
    assert_eq!(
        run(&["--config", "bad.toml", "config"], d).status.code(),
        Some(1)
    );
}

#[test]
fn sweep_retention_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from(
        "window_index,start_s,rr_left,rr_right,rr_fused,discrepancy,accepted,gt_cpm,gt_valid\n",
    );
    for i in 0..40 {
        let l = 15.0 + (i % 7) as f64 * 0.1;
        let r = l + (i % 5) as f64 * 0.4;
        csv += &format!(
            "{i},{:.4},{l:.4},{r:.4},{:.4},{:.4},true,15.0000,true\n",
            i as f64 * 10.0,
            (l + r) / 2.0,
            r - l
        );
    }
    std::fs::write(d.join("r.csv"), csv).unwrap();
    let text = ok(&["sweep", "--records", "r.csv", "--tau", "0:0.1:3"], d);
    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 31);
    let kept: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(kept.windows(2).all(|w| w[0] <= w[1]), "{kept:?}");
    assert_eq!(kept[30], 1.0);
}
