use std::process::Command;

use ctdg_poison::ctdg::load_interactions;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctdg-poison"))
}

#[test]
fn synth_train_and_report_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.csv");
    let small = [
        "--benchmark",
        "--set",
        "synth.sources=12",
        "--set",
        "synth.destinations=4",
        "--set",
        "synth.edges=200",
        "--set",
        "model.memory_dim=8",
        "--set",
        "model.time_dim=4",
        "--set",
        "train.epochs=2",
        "--set",
        "eval.negatives=5",
    ];
    let out = bin().args(small).args(["synth", "--out"]).arg(&graph).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_interactions(&graph, None).unwrap().len(), 200);

    let run = dir.path().join("run");
    let out = bin()
        .args(small)
        .args(["--set", &format!("output.dir={}", run.display()), "run"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("test MRR"));

    let out = bin().arg("report").arg(&run).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("none"));
}

#[test]
fn bad_overrides_fail_with_a_message() {
    let out = bin().args(["--set", "model.heads", "run"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("KEY=VALUE"));
    let out = bin().args(["--set", "model.nope=1", "run"]).output().unwrap();
    assert!(!out.status.success());
}
