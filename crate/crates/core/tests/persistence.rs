//! Run determinism, checkpoint round trips and resume.

use std::fs;
use std::path::Path;

use mnm::harness::checkpoint::Checkpoint;
use mnm::harness::config::RunConfig;
use mnm::harness::run::{run_experiment, DIAGNOSTIC_FILE, METRICS_FILE, METRICS_HEADER, TIMING_FILE};
use mnm::Error;

fn tiny(variant: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::parse(&format!(
        "variant = {variant}\n\
         task = dictionary\nk = 2\nl = 1\n\
         d_i = 5\nd_h = 6\nd_o = 5\nd_k = 4\nd_v = 4\nmem_hidden = 5\nmem_layers = 2\n\
         batch = 4\niterations = 6\neval_interval = 2\neval_episodes = 8\nseed = 17\n"
    ))
    .unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn same_seed_gives_identical_metric_files() {
    for variant in ["mnm-g", "mnm-p", "lstm", "lstm-salu"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&tiny(variant, a.path())).unwrap();
        run_experiment(&tiny(variant, b.path())).unwrap();
        let (ma, mb) = (read(&a.path().join(METRICS_FILE)), read(&b.path().join(METRICS_FILE)));
        assert_eq!(ma, mb, "{variant}");
        assert_eq!(ma.lines().count(), 1 + 4, "header plus evaluations at 0, 2, 4, 6");
        let ca = fs::read(a.path().join("checkpoint.bin")).unwrap();
        let cb = Checkpoint::load(&b.path().join("checkpoint.bin")).unwrap();
        assert_eq!(Checkpoint::from_bytes(&ca).unwrap().params, cb.params);
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&tiny("mnm-p", a.path())).unwrap();
    let mut other = tiny("mnm-p", b.path());
    other.seed = Some(18);
    run_experiment(&other).unwrap();
    assert_ne!(read(&a.path().join(METRICS_FILE)), read(&b.path().join(METRICS_FILE)));
}

#[test]
fn zero_iterations_emit_initial_metrics_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("mnm-g", dir.path());
    cfg.iterations = 0;
    let s = run_experiment(&cfg).unwrap();
    assert_eq!(s.iterations, 0);
    let metrics = read(&dir.path().join(METRICS_FILE));
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRICS_HEADER);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(read(&dir.path().join(TIMING_FILE)).lines().count(), 2);
}

#[test]
fn resumed_run_reproduces_uninterrupted_run() {
    for variant in ["mnm-g", "mnm-p", "lstm-salu"] {
        let full = tempfile::tempdir().unwrap();
        let mut cfg = tiny(variant, full.path());
        cfg.checkpoint_interval = 3;
        let uninterrupted = run_experiment(&cfg).unwrap();

        // A second directory holding what an interrupted run had written by
        // iteration 3: its metric rows and that iteration's checkpoint.
        let part = tempfile::tempdir().unwrap();
        let metrics = read(&full.path().join(METRICS_FILE));
        let upto3: String = metrics
            .lines()
            .filter(|l| l.split(',').next().unwrap().parse::<u64>().map_or(true, |it| it <= 3))
            .map(|l| format!("{l}\n"))
            .collect();
        fs::write(part.path().join(METRICS_FILE), upto3).unwrap();
        let ck = part.path().join("resume.bin");
        fs::copy(full.path().join("checkpoint-3.bin"), &ck).unwrap();
        assert_eq!(Checkpoint::load(&ck).unwrap().iteration, 3);

        let mut resumed = tiny(variant, part.path());
        resumed.checkpoint_interval = 3;
        resumed.resume = Some(ck);
        let s = run_experiment(&resumed).unwrap();
        assert_eq!(s.iterations, 6);
        assert_eq!(s.last, uninterrupted.last, "{variant}");
        assert_eq!(read(&part.path().join(METRICS_FILE)), metrics, "{variant}");
        let (a, b) = (
            Checkpoint::load(&full.path().join("checkpoint.bin")).unwrap(),
            Checkpoint::load(&part.path().join("checkpoint.bin")).unwrap(),
        );
        assert_eq!(a.params, b.params);
        assert_eq!(a.rng, b.rng);
        assert_eq!(a.step, b.step);
    }
}

#[test]
fn checkpoint_file_round_trip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&tiny("mnm-p", dir.path())).unwrap();
    let path = dir.path().join("checkpoint.bin");
    let bytes = fs::read(&path).unwrap();
    let again = dir.path().join("again.bin");
    Checkpoint::load(&path).unwrap().save(&again).unwrap();
    assert_eq!(fs::read(&again).unwrap(), bytes);
}

#[test]
fn corrupt_checkpoint_is_rejected_before_any_state_is_written() {
    let src = tempfile::tempdir().unwrap();
    run_experiment(&tiny("lstm", src.path())).unwrap();
    let bytes = fs::read(src.path().join("checkpoint.bin")).unwrap();
    for (name, broken) in [
        ("truncated", bytes[..bytes.len() / 3].to_vec()),
        ("flipped", {
            let mut b = bytes.clone();
            let mid = b.len() / 2;
            b[mid] ^= 0x40;
            b
        }),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("bad.bin");
        fs::write(&ck, broken).unwrap();
        let mut cfg = tiny("lstm", dir.path());
        cfg.resume = Some(ck);
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{name}: {err}");
        assert!(!dir.path().join(METRICS_FILE).exists(), "{name}");
        assert!(!dir.path().join("checkpoint.bin").exists(), "{name}");
    }
}

#[test]
fn resume_rejects_a_different_model() {
    let src = tempfile::tempdir().unwrap();
    run_experiment(&tiny("mnm-g", src.path())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("mnm-g", dir.path());
    cfg.d_h = 7;
    cfg.resume = Some(src.path().join("checkpoint.bin"));
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    let src = tempfile::tempdir().unwrap();
    run_experiment(&tiny("mnm-p", src.path())).unwrap();
    let mut ck = Checkpoint::load(&src.path().join("checkpoint.bin")).unwrap();
    let p = ck.params.iter_mut().find(|p| p.name == "ctrl.cls.b").unwrap();
    p.value[0] = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nan.bin");
    ck.save(&path).unwrap();
    let mut cfg = tiny("mnm-p", dir.path());
    cfg.resume = Some(path);
    cfg.iterations = 12;
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    let diag = read(&dir.path().join(DIAGNOSTIC_FILE));
    assert!(diag.contains("iteration = 7"), "{diag}");
    assert!(diag.contains("task_loss = NaN"), "{diag}");
}
