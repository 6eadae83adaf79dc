use std::path::Path;
use std::process::Command;

fn imtk(out: &Path, args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_imtk"))
        .env_remove("IMTK_OUT")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gap_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = imtk(
        dir.path(),
        &["gap", "--N", "8", "--j", "2", "--lambda-lip", "1"],
    );
    assert_eq!(code, 0);
    let report = read_json(&dir.path().join("gap.json"));
    assert_eq!(report["pass"], true);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "gap");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["pass"], true);
}

#[test]
fn failing_check_exits_two_and_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = imtk(
        dir.path(),
        &[
            "check-freq",
            "--system",
            "SYS-SCALAR",
            "--nu0",
            "0",
            "--lambda-lip",
            "5",
        ],
    );
    assert_eq!(code, 2);
    let (code, err) = imtk(dir.path(), &["check-freq", "--system", "SYS-NOPE"]);
    assert_eq!(code, 1);
    assert!(err.contains("error"));
}

#[test]
fn small_delay_threshold_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = imtk(
        dir.path(),
        &[
            "small-delay",
            "--tau",
            "0.1",
            "--nu0",
            "1",
            "--lambda-lip",
            "1",
        ],
    );
    assert!(code == 0 || code == 2);
    let text = std::fs::read_to_string(dir.path().join("small-delay.json")).unwrap();
    assert!(text.contains("3.67879441171442"));
}
