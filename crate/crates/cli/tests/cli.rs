use std::path::Path;
use std::process::{Command, Output};

fn wirepinn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wirepinn"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("WIREPINN_SEED")
        .env_remove("WIREPINN_CHECK_FAULT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn prepare(dir: &Path) {
    let g = wirepinn(dir, &["generate"]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let f = wirepinn(dir, &["fit-lr"]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
}

#[test]
fn pipeline_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    for name in ["sweep.txt", "oracle_probe.csv", "lr.wpnn", "lr_scatter.csv", "lr_summary.csv"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }

    let s = wirepinn(dir, &["solve", "--vg", "0.75", "--epochs", "50", "--epoch-study", "20,40"]);
    assert_eq!(code(&s), 0, "{}", stderr(&s));
    let run = dir.join("vg_0.7500");
    let history = std::fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 51);
    assert!(history.starts_with("step,lr,loss_boundary,loss_fd,loss_total"));
    let study = std::fs::read_to_string(run.join("epoch_study.csv")).unwrap();
    assert_eq!(study.lines().count(), 3);
    for name in ["prediction.csv", "network.wpnn", "report.txt", "oracle.csv"] {
        assert!(run.join(name).exists(), "{name} missing");
    }

    let r = wirepinn(
        dir,
        &[
            "report",
            "--prediction",
            run.join("prediction.csv").to_str().unwrap(),
            "--vg",
            "0.75",
            "--out",
            dir.join("again.txt").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let a = std::fs::read_to_string(run.join("report.txt")).unwrap();
    let b = std::fs::read_to_string(dir.join("again.txt")).unwrap();
    let max_line = |t: &str| t.lines().find(|l| l.contains("max_phi_err_pct")).map(str::to_owned);
    assert_eq!(max_line(&a), max_line(&b));

    let sw = wirepinn(dir, &["sweep", "--biases", "0.3,0.75", "--epochs", "20", "--jobs", "2"]);
    assert_eq!(code(&sw), 0, "{}", stderr(&sw));
    let probe = std::fs::read_to_string(dir.join("probe.csv")).unwrap();
    assert_eq!(probe.lines().count(), 3);
    let scatter = std::fs::read_to_string(dir.join("sweep_scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + 2 * 2193);
}

#[test]
fn same_seed_gives_identical_history() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path());
    let mut runs = Vec::new();
    for sub in ["a", "b"] {
        let dir = tmp.path().join(sub);
        std::fs::create_dir_all(&dir).unwrap();
        let s = wirepinn(
            &dir,
            &[
                "solve",
                "--vg",
                "0.6",
                "--epochs",
                "30",
                "--surrogate",
                tmp.path().join("lr.wpnn").to_str().unwrap(),
                "--sweep",
                tmp.path().join("sweep.txt").to_str().unwrap(),
            ],
        );
        assert_eq!(code(&s), 0, "{}", stderr(&s));
        runs.push(std::fs::read(dir.join("vg_0.6000/loss_history.csv")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);

    let out = wirepinn(dir, &["fit-lr", "--cutoff", "0"]);
    assert_eq!(code(&out), 1);
    let out = wirepinn(dir, &["fit-lr", "--cutoff", "102"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("cutoff"));

    let out = wirepinn(dir, &["fit-lr", "--cutoff", "1", "--out", dir.join("lr1.wpnn").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning"));

    let out = wirepinn(dir, &["solve", "--vg", "1.5", "--epochs", "5"]);
    assert_eq!(code(&out), 1);

    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[pinn]\nepochz = 3\n").unwrap();
    let out = wirepinn(dir, &["--config", cfg.to_str().unwrap(), "check"]);
    assert_eq!(code(&out), 1);

    std::fs::write(dir.join("broken.txt"), "# wirepinn sweep\n# version 1\n").unwrap();
    let out = wirepinn(dir, &["fit-lr", "--sweep", dir.join("broken.txt").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn divergence_exits_three_and_keeps_history() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let cfg = dir.join("nan.toml");
    std::fs::write(&cfg, format!("output_dir = {:?}\n[pinn]\nw_boundary = nan\n", dir.to_str().unwrap())).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wirepinn"))
        .args(["--config", cfg.to_str().unwrap(), "solve", "--vg", "0.5", "--epochs", "10"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(dir.join("vg_0.5000/loss_history.csv").exists());
}

#[test]
fn check_passes_and_catches_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = wirepinn(tmp.path(), &["check"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));

    let bad = Command::new(env!("CARGO_BIN_EXE_wirepinn"))
        .arg("check")
        .env("WIREPINN_CHECK_FAULT", "fermi-derivative")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 4);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL fermi_derivative_rel_err"));
}
