use std::fs;
use std::process::{Command, Output};

fn beamsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsplit"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_reports_and_prints_tally() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = beamsplit(&[
        "run",
        "--preset",
        "table1-block1",
        "--set",
        "model=phase-basis",
        "--set",
        "seed=5",
        "--set",
        "acquisition_s=0.1",
        "--set",
        &format!("output_dir={}", out_dir.display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.starts_with("counter,count,acquisition_s,rate_per_s\n"));
    assert_eq!(text, fs::read_to_string(out_dir.join("tally.csv")).unwrap());
    assert!(out_dir.join("analysis.csv").exists() && out_dir.join("run.json").exists());
    // Progress goes to stderr only.
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulating"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    fs::write(&cfg, "# test\npreset = table1-block1\nmodel = bunching\nseed = 3\nacquisition_s = 0.05\ndark_rate = 0\n").unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["run", "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        stdout(&beamsplit(&args))
    };
    let base = run(&[]);
    assert!(base.contains("pairs:A'B',0,"));
    let longer = run(&["--set", "acquisition_s=0.1"]);
    assert!(longer.contains(",0.1,"));
    assert_ne!(base, longer);
}

#[test]
fn exit_codes() {
    let bad = beamsplit(&[
        "run",
        "--set",
        "model=classical",
        "--set",
        "mean_photon_number=-1",
        "--set",
        "seed=1",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("mean_photon_number"));
    assert!(bad.stdout.is_empty());

    assert_eq!(beamsplit(&["run", "--set", "bogus"]).status.code(), Some(1));
    assert_eq!(beamsplit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(beamsplit(&["--help"]).status.code(), Some(0));

    // A file where the output directory should go is a runtime failure.
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("taken");
    fs::write(&blocker, "").unwrap();
    let out = beamsplit(&[
        "run",
        "--set",
        "model=classical",
        "--set",
        "mean_photon_number=0.01",
        "--set",
        "seed=1",
        "--set",
        "acquisition_s=0.001",
        "--set",
        &format!("output_dir={}", blocker.join("sub").display()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_and_calibrate() {
    let out = beamsplit(&[
        "predict",
        "--preset",
        "table1-block1",
        "--set",
        "model=phase-basis",
        "--set",
        "seed=0",
        "--order",
        "leading",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 15);
    let triple: f64 = text
        .lines()
        .find(|l| l.starts_with("triples:A'A''B',"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((triple - 2.6).abs() < 0.05);

    let out = beamsplit(&["calibrate", "--block", "1"]);
    assert!(out.status.success());
    let cal: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((cal["efficiency"].as_f64().unwrap() - 0.586).abs() < 0.001);
    assert_eq!(cal["residuals"].as_array().unwrap().len(), 12);
    assert_eq!(
        beamsplit(&["calibrate", "--model", "nope"]).status.code(),
        Some(1)
    );
}

#[test]
fn compare_prints_side_by_side() {
    let out = beamsplit(&[
        "compare",
        "--preset",
        "table1-block1",
        "--set",
        "model=classical",
        "--set",
        "seed=9",
        "--set",
        "acquisition_s=0.1",
        "--models",
        "classical,bunching",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.starts_with("quantity,classical,bunching,z_bunching_vs_classical\n"));
    assert!(text.contains("\nbunching_fraction,"));
    assert_eq!(
        beamsplit(&[
            "compare",
            "--set",
            "model=classical",
            "--set",
            "mean_photon_number=0.01",
            "--set",
            "seed=1",
            "--models",
            "classical"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn count_recounts_a_text_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("events.txt");
    fs::write(
        &dump,
        "# hand-made\nA' 1000\nB' 3000\nA'' 3500\nB'' 20000\n",
    )
    .unwrap();
    let out = beamsplit(&[
        "count",
        dump.to_str().unwrap(),
        "--format",
        "text",
        "--acquisition-s",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("pairs:A'B',1,"));
    assert!(text.contains("pairs:A''B',1,"));
    assert!(text.contains("triples:A'A''B',1,"));
    assert!(text.contains("pairs:A'B'',0,"));

    fs::write(&dump, "A' 5000\nA' 1000\n").unwrap();
    let out = beamsplit(&[
        "count",
        dump.to_str().unwrap(),
        "--format",
        "text",
        "--acquisition-s",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
