use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ncp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncp")).args(args).current_dir(dir).output().unwrap()
}

fn golden(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name).to_string_lossy().into_owned()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn compile_run_and_disasm() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ncp(&["compile", &golden("small.json"), "-o", "p.ncp1", "-w", "w.ncpw", "--report"], d);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("on-chip total"));

    let out = ncp(&["disasm", "p.ncp1", "-o", "p.s"], d);
    assert!(out.status.success());
    let out = ncp(&["asm", "p.s", "-o", "q.ncp1"], d);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(std::fs::read(d.join("p.ncp1")).unwrap(), std::fs::read(d.join("q.ncp1")).unwrap());
    let again = ncp(&["disasm", "q.ncp1"], d);
    assert_eq!(text(&again.stdout), std::fs::read_to_string(d.join("p.s")).unwrap());

    // a 32x32 image for the 32x32 graph
    let mut ppm = b"P6\n32 32\n255\n".to_vec();
    ppm.extend((0..32 * 32 * 3).map(|i| (i % 251) as u8));
    std::fs::write(d.join("img.ppm"), ppm).unwrap();
    let out = ncp(&["run", "p.ncp1", "w.ncpw", "img.ppm", "--trace", "--stats", "--save", "out.ncpt"], d);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.contains("output 1x1x64"), "{s}");
    assert!(s.contains("\"status\": \"ended\""));
    assert!(s.lines().any(|l| l.contains(" end ")));
    assert!(d.join("out.ncpt").exists());

    // wrong input size
    let out = ncp(&["run", "p.ncp1", "w.ncpw", &golden("gradient.ppm")], d);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("expects"));
}

#[test]
fn check_reports_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncp(&["check", &golden("small.json"), "--seeds", "3"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).trim(), "3/3 bit-exact");
}

#[test]
fn over_capacity_names_bank() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncp(&["compile", &golden("over_capacity.json"), "-o", "p.ncp1", "-w", "w.ncpw"], dir.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("b3"), "{}", text(&out.stderr));
    assert!(!dir.path().join("p.ncp1").exists());
}

#[test]
fn bench_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncp(&["bench", &golden("small.json"), "--bus", "spi", "--json"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bus = v["bus_fps"].as_f64().unwrap();
    assert!((bus - 100e6 / (32.0 * 32.0 * 24.0)).abs() < 1e-6);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.s"), "conv src=b0:0:p\n").unwrap();
    let out = ncp(&["asm", "bad.s", "-o", "x.ncp1"], d);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("line 1"), "{}", text(&out.stderr));
    std::fs::write(d.join("junk.ncp1"), b"NCP2junk").unwrap();
    assert!(!ncp(&["disasm", "junk.ncp1"], d).status.success());
    assert!(!ncp(&["check", "missing.json"], d).status.success());
}
