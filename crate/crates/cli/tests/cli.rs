use std::path::Path;
use std::process::{Command, Output};

fn hfpoll(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfpoll"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    text.trim_end().to_string()
}

#[test]
fn synth_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = hfpoll(&["synth", "--kind", "lognormal-ar1", "--n", "500", "--seed", "7", "--out", name], dir.path());
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with(b"epoch_s,ppm\n0,"));
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 501);

    let other = hfpoll(&["synth", "--kind", "lognormal-ar1", "--n", "500", "--seed", "8"], dir.path());
    assert_ne!(other.stdout, a);
}

#[test]
fn synth_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"kind": "ar1", "phi": 0.5, "sigma": 1.0, "n": 64, "rate_hz": 1.0, "seed": 1, "start_t": 1000}"#,
    )
    .unwrap();
    let out = hfpoll(&["synth", "--spec", "spec.json"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1000,"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn analyze_twice_gives_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(hfpoll(&["synth", "--n", "3600", "--seed", "4", "--out", "in.csv"], dir.path()).status.success());
    for out in ["r1", "r2"] {
        let o = hfpoll(&["analyze", "--input", "in.csv", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("r1/report.json")).unwrap();
    let b = std::fs::read(dir.path().join("r2/report.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_rerenders_saved_json() {
    let dir = tempfile::tempdir().unwrap();
    assert!(hfpoll(&["synth", "--n", "3600", "--seed", "5", "--out", "in.csv"], dir.path()).status.success());
    assert!(hfpoll(&["analyze", "--input", "in.csv", "--out", "r"], dir.path()).status.success());
    let out = hfpoll(&["report", "--input", "r/report.json", "--format", "svg", "--out", "plots"], dir.path());
    assert!(out.status.success());
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().count(), 6);
    for plot in ["timeseries", "histogram", "correlogram", "drm", "psd", "track"] {
        assert!(dir.path().join(format!("plots/seg0_{plot}.svg")).exists(), "{plot}");
    }
}

#[test]
fn ingest_calibrates_raw_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut raw = String::from("epoch_s,adc\n");
    for t in 0..20 {
        if t != 7 {
            raw.push_str(&format!("{t},{}\n", 100 + t));
        }
    }
    std::fs::write(dir.path().join("raw.csv"), raw).unwrap();
    std::fs::write(
        dir.path().join("cal.json"),
        r#"{"device_id": "co-3", "coeffs": [-1.0, 0.5], "temp_coeff": null}"#,
    )
    .unwrap();
    let out = hfpoll(&["ingest", "--input", "raw.csv", "--calib", "cal.json", "--out", "seg"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("seg/seg0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 21);
    assert_eq!(lines[1], "0,49");
    assert_eq!(lines[8], "7,52.5");
}

#[test]
fn exit_codes_and_error_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "when,what\n1,2\n").unwrap();
    std::fs::write(dir.path().join("ok.csv"), "epoch_s,ppm\n0,1\n1,2\n").unwrap();

    let cases: [(&[&str], i32, &str); 6] = [
        (&["analyze", "--input", "missing.csv"], 4, "E_IO: "),
        (&["analyze", "--input", "bad.csv"], 3, "E_DATA: "),
        (&["analyze", "--input", "ok.csv", "--format", "pdf"], 2, "E_CONFIG: "),
        (&["analyze", "--input", "ok.csv", "--decimate-mode", "median"], 2, "E_CONFIG: "),
        (&["analyze", "--input", "ok.csv", "--rate", "-1"], 2, "E_CONFIG: "),
        (&["frobnicate"], 2, "E_CONFIG: "),
    ];
    for (args, code, prefix) in cases {
        let out = hfpoll(args, dir.path());
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        assert!(stderr_line(&out).starts_with(prefix), "{args:?}");
    }
}

#[test]
fn synth_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfpoll(&["synth", "--kind", "ar1", "--phi", "1.2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("E_CONFIG: synth: "));
}
