use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stokes-lab"))
}

fn scratch(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("stokes-lab-it-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn malformed_family_exits_with_parse_error() {
    let dir = scratch("bad");
    let f = dir.join("bad.txt");
    std::fs::write(&f, "n = 2\nlambda_1 = 1,0\nthis is not a key\n").unwrap();
    let out = bin()
        .args(["monodromy", "--family"])
        .arg(&f)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().any(|l| l.starts_with("ParseError:3")), "{err}");
}

#[test]
fn invalid_config_exits_2() {
    let dir = scratch("cfg");
    let out = bin()
        .args(["monodromy", "--family", "euler", "--ratio", "1.5", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("InvalidArgument:"));
}

#[test]
fn selftest_on_euler_passes() {
    let dir = scratch("selftest");
    let out = bin()
        .args(["selftest", "--family", "euler", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["selftest.csv", "selftest.svg", "selftest_slope.txt"] {
        assert!(dir.join(f).exists());
    }
}

#[test]
fn monodromy_csv_is_byte_identical() {
    let run = |tag: &str| {
        let dir = scratch(tag);
        let out = bin()
            .args(["monodromy", "--family", "t3", "--count", "2", "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(dir.join("monodromy.csv")).unwrap()
    };
    let a = run("det-a");
    assert_eq!(a, run("det-b"));
    assert!(String::from_utf8_lossy(&a).starts_with("eps,re_log_l01"));
}
