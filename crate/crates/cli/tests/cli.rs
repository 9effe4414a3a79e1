use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_labelshift"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn estimate_batch_prints_pi_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let dump = write(dir.path(), "d.csv", "labels=true\n0.7,0.3,0\n0.2,0.8,1\n0.6,0.4,0\n");
    let out = run(&["estimate-batch", "--input", &dump, "--train-prior", "0.5,0.5"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "class,pi,alpha");
    assert_eq!(lines.len(), 3);
    let pi0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((pi0 - 0.5).abs() < 1e-9);

    let ga = run(&["estimate-batch", "--input", &dump, "--train-prior", "0.5,0.5", "--alpha-mode", "ga"]);
    assert!(ga.status.success());
}

#[test]
fn train_prior_can_come_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let dump = write(dir.path(), "d.csv", "0.7,0.2,0.1\n0.1,0.8,0.1\n");
    let prior = write(dir.path(), "eps.csv", "0.2,0.3,0.5\n");
    let out = run(&["estimate-batch", "--input", &dump, "--train-prior", &prior]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 4);
}

#[test]
fn estimate_online_reads_stdin() {
    let mut child = bin()
        .args(["estimate-online", "--input", "-", "--train-prior", "0.5,0.5", "--gamma", "0.5"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"0.8,0.2\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let pi0: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((pi0 - 0.65).abs() < 1e-12, "{text}");
}

#[test]
fn crb_prints_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let dump = write(dir.path(), "d.csv", "0.5,0.5\n");
    let out = run(&["crb", "--input", &dump, "--train-prior", "0.5,0.5", "--pi", "0.5,0.5", "--alpha", "1,1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "class,crb\n0,0.25\n");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.csv", "0.5,0.5\n");
    let bad = write(dir.path(), "bad.csv", "0.5,0.5\n0.5,0.6\n");

    let out = run(&["estimate-batch", "--input", &bad, "--train-prior", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    let out = run(&["estimate-online", "--input", &bad, "--train-prior", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["estimate-batch", "--input", &good, "--train-prior", "0.5,0.5,0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["crb", "--input", &good, "--train-prior", "0.5,0.5", "--pi", "0.5,0.5", "--alpha", "0.5,1"]);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&["estimate-batch", "--input", "/nonexistent/dump.csv", "--train-prior", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(run(&["estimate-batch"]).status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write(dir.path(), "run.cfg", "scenario.k = 4\nscenario.n_total = 200\ntrials = 3\nestimator.t_max = 20\n");
    let a = run(&["simulate", "--config", &cfg]);
    let b = run(&["simulate", "--config", &cfg]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("method,scenario,k,n_total,rho,alpha_test,mean_kl,std_kl,mean_acc,std_acc,trials\n"));
    assert_eq!(text.lines().count(), 5);

    let c = run(&["simulate", "--config", &cfg, "--trials", "5", "--methods=MLLS"]);
    assert!(c.status.success(), "{c:?}");
    let text = stdout(&c);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("MLLS,") && text.trim_end().ends_with(",5"));

    let out_path = dir.path().join("report.csv");
    let d = run(&["simulate", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert!(d.status.success());
    assert_eq!(std::fs::read(&out_path).unwrap(), a.stdout);

    assert_eq!(run(&["simulate", "--config", &cfg, "--no.such.key", "1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--config", &cfg, "--trials"]).status.code(), Some(2));
}

#[test]
fn simulate_on_a_posterior_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = write(
        dir.path(),
        "d.csv",
        "labels=true\n0.8,0.1,0.1,0\n0.6,0.3,0.1,0\n0.1,0.8,0.1,1\n0.2,0.7,0.1,1\n0.1,0.2,0.7,2\n0.2,0.1,0.7,2\n",
    );
    let cfg = write(
        dir.path(),
        "run.cfg",
        &format!("scenario.k = 3\nscenario.n_total = 300\ntrials = 2\nclassifier.dump = {dump}\n"),
    );
    let out = run(&["simulate", "--config", &cfg]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).lines().count(), 5);
}

#[test]
fn trace_starts_at_the_uniform_prior() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "scenario.k = 4\nscenario.n_total = 300\n");
    let out = run(&["trace", "--config", &cfg, "--method", "OnlineFMAPLS"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("iteration,kl"));
    assert_eq!(text.lines().count(), 302);
}
