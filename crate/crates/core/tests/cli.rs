mod common;

use std::process::Command;

fn fmsurvival() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fmsurvival"))
}

#[test]
fn prepare_prints_corpus_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsurvival()
        .args(["prepare", "-c"])
        .arg(common::toy_config())
        .arg("-o")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let (ds, _, _) = common::toy_corpus();
    let stats = ds.stats();
    assert!(stdout.contains(&format!("ml100k\t{}\t{}\t{}", stats.users, stats.items, stats.interactions)), "{stdout}");
    for name in ["gender", "age", "occupation", "state"] {
        assert!(stdout.contains(&format!("{name}\t")), "{stdout}");
    }
    assert!(stdout.contains("(built)"));

    let again = fmsurvival()
        .args(["prepare", "-c"])
        .arg(common::toy_config())
        .arg("-o")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(String::from_utf8(again.stdout).unwrap().contains("(cached)"));
}

#[test]
fn missing_inputs_fail_with_message() {
    let out = fmsurvival().args(["prepare", "--dataset", "ml100k"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data-path"));

    let out = fmsurvival()
        .args(["prepare", "--dataset", "ml100k", "--data-path", "/nonexistent/u.data"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/u.data"));
}
