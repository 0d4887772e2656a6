use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use focus360::bench::synthetic_frame;
use focus360::geom::RasterDims;
use focus360::media::{write_frame, VideoMeta};

fn focus360(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focus360")).args(args).env_remove("FOCUS360_SIDECAR_URL").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sequence(dir: &Path, n: usize) -> String {
    let input = dir.join("input");
    fs::create_dir_all(&input).unwrap();
    let dims = RasterDims::new(32, 16).unwrap();
    let meta = VideoMeta {
        width: 32,
        height: 16,
        fps: 10.0,
        frame_count: n,
        frame_pattern: "f_%04d.ppm".into(),
        base_dir: input.clone(),
    };
    for k in 0..n {
        write_frame(&synthetic_frame(dims, k as u64), &meta.frame_path(k)).unwrap();
    }
    let manifest = input.join("manifest.txt");
    fs::write(&manifest, meta.to_manifest_text()).unwrap();
    manifest.to_string_lossy().into_owned()
}

#[test]
fn parse_script_prints_canonical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("roadmap.txt");
    fs::write(&p, "0:12-0:25: the farthest turtle\n").unwrap();
    let o = focus360(&["parse-script", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "start_seconds,end_seconds,description\n12.0,25.0,the farthest turtle\n");
}

#[test]
fn parse_script_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.txt");
    fs::write(&p, "0:12 0:25 the farthest turtle\n").unwrap();
    let o = focus360(&["parse-script", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1, column 6"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn parse_script_rejects_empty_file() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("empty.txt");
    fs::write(&p, "").unwrap();
    let o = focus360(&["parse-script", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no entries"), "{}", stderr(&o));
}

#[test]
fn render_exit_codes_and_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = sequence(tmp.path(), 6);
    let script = tmp.path().join("s.txt");
    fs::write(&script, "0 - 0.5 : disc lon=0 lat=0 r=0.4\n0.1 - 0.3 : the turtle\n").unwrap();
    let script = script.to_str().unwrap();

    let out = tmp.path().join("out");
    let o = focus360(&[
        "render",
        "--manifest",
        &manifest,
        "--script",
        script,
        "--output",
        out.to_str().unwrap(),
        "--provider",
        "synthetic",
        "--threads",
        "2",
        "--dump-field",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("entry 0 [0..5)") && text.contains("tracked (detected=5 held=0 dropped=0)"), "{text}");
    assert!(text.contains("skipped"), "{text}");
    assert!(text.contains("6 frames ("), "{text}");
    assert!(out.join("f_0003.ppm").is_file() && out.join("field_000003.pgm").is_file());

    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("manifest = {manifest}\nscript = {script}\noutput = out2\nprovider = file\nmask_dir = masks\n"),
    )
    .unwrap();
    // flags win over the config file
    let o = focus360(&["render", "--config", cfg.to_str().unwrap(), "--provider", "synthetic", "--set", "k_halo=0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(tmp.path().join("out2").join("f_0000.ppm").is_file());

    let o = focus360(&["render", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("no mask file"), "{}", stdout(&o));

    let o = focus360(&["render", "--config", cfg.to_str().unwrap(), "--provider", "remote"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sidecar URL"), "{}", stderr(&o));

    let o = focus360(&["render", "--manifest", "/nonexistent/m.txt", "--script", script, "--output", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn render_without_targets_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = sequence(tmp.path(), 3);
    let script = tmp.path().join("s.csv");
    fs::write(&script, "start_seconds,end_seconds,description\n10.0,20.0,later\n").unwrap();
    let out = tmp.path().join("out");
    let o = focus360(&[
        "render",
        "--manifest",
        &manifest,
        "--script",
        script.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--provider",
        "synthetic",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for k in 0..3 {
        let name = format!("f_{k:04}.ppm");
        assert_eq!(fs::read(out.join(&name)).unwrap(), fs::read(tmp.path().join("input").join(&name)).unwrap());
    }
}

#[test]
fn remote_provider_picks_up_env_url() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = sequence(tmp.path(), 2);
    let script = tmp.path().join("s.txt");
    fs::write(&script, "0 - 1 : disc lon=0 lat=0 r=0.4\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_focus360"))
        .args(["render", "--manifest", &manifest, "--script", script.to_str().unwrap(), "--output"])
        .arg(tmp.path().join("out"))
        .args(["--provider", "remote", "--set", "sidecar_timeout_ms=500"])
        .env("FOCUS360_SIDECAR_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    // the URL is accepted; the unreachable sidecar makes the entry skip
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("sidecar unreachable"), "{}", stdout(&o));
}

#[test]
fn bench_reports_identical_outputs() {
    let o = focus360(&[
        "bench",
        "--width",
        "128",
        "--height",
        "64",
        "--frames",
        "4",
        "--threads",
        "2",
        "--repetitions",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("identical output: yes"), "{text}");
    assert!(text.contains("speedup:"), "{text}");
}
