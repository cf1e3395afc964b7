use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heckefam"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("heckefam-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn help_exits_zero() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn usage_error_exits_64() {
    assert_eq!(bin().args(["family", "frobnicate"]).output().unwrap().status.code(), Some(64));
}

#[test]
fn validation_error_exits_2() {
    let out = scratch("bad-beta");
    let st = bin().args(["--out", out.to_str().unwrap(), "nonvanish", "run", "--beta", "1.5"]).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
}

#[test]
fn quick_selftest_passes() {
    let out = scratch("selftest");
    let o = bin().args(["--out", out.to_str().unwrap(), "selftest", "--quick"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn family_report_is_deterministic() {
    let run = |tag: &str| {
        let out = scratch(tag);
        let o = bin()
            .args(["--out", out.to_str().unwrap(), "family", "build", "--field", "q5", "--T", "100"])
            .output()
            .unwrap();
        assert!(o.status.success());
        let mut files: Vec<PathBuf> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        assert!(!files.is_empty());
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn report_dir_from_environment() {
    let out = scratch("env");
    let st = bin().env("HECKEFAM_REPORT_DIR", &out).args(["field", "--field", "qi"]).output().unwrap().status;
    assert!(st.success());
    assert!(std::fs::read_dir(&out).unwrap().count() > 0);
}
