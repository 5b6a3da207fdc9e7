use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_configs_report_their_rates() {
    let dir = tempfile::tempdir().unwrap();
    for (cfg, rate) in [("ae63.cfg", "R = 2.0"), ("ae39.cfg", "R = 0.3333")] {
        let model = dir.path().join(cfg).with_extension("model");
        let o = dime(&[
            "train-ae",
            "--config",
            path_str(&config(cfg)),
            "--set",
            "training.iterations=3",
            "--set",
            "training.batch=32",
            "--out",
            path_str(&model),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).lines().any(|l| l == rate), "{}", stdout(&o));
        assert!(model.exists());
    }
}

#[test]
fn negative_gamma_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        "[system]\nM = 4\nn = 2\n[estimator]\nkind = \"gamma-dime\"\ngamma = -0.5\n",
    )
    .unwrap();
    let o = dime(&[
        "train-ae",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("estimator.gamma"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[system]\nM = 4\nn = 2\nrate = 1\n").unwrap();
    let o = dime(&[
        "train-ae",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rate"), "{}", stderr(&o));
}

#[test]
fn landscape_needs_gammas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.csv");
    let o = dime(&["landscape", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = dime(&["landscape", "--gamma", "0", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists() || std::fs::metadata(&out).unwrap().len() == 0);
}

#[test]
fn landscape_reports_maximizers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.csv");
    let o = dime(&[
        "landscape",
        "--gamma",
        "1",
        "--ratio",
        "1",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("maximizer D=1 "), "{}", stdout(&o));
    let o = dime(&[
        "landscape",
        "--gamma",
        "2",
        "--ratio",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert!(stdout(&o).contains("maximizer D=2 "), "{}", stdout(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("gamma,d,value\n"));
    assert_eq!(text.lines().count(), 3001);
}

#[test]
fn gradcheck_passes_and_names_injected_fault() {
    let o = dime(&["gradcheck", "--seed", "5"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("max relative error"));

    let o = dime(&["gradcheck", "--seed", "5", "--inject-fault", "softplus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("op:softplus"), "{}", stderr(&o));

    let o = dime(&["gradcheck", "--inject-fault", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_rejects_mismatched_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    let o = dime(&[
        "train-ae",
        "--config",
        path_str(&config("ae39.cfg")),
        "--set",
        "training.iterations=2",
        "--set",
        "training.batch=16",
        "--out",
        path_str(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dime(&[
        "eval",
        "--config",
        path_str(&config("ae63.cfg")),
        "--model",
        path_str(&model),
        "--out",
        path_str(&dir.path().join("b.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("system.M"), "{}", stderr(&o));

    let o = dime(&[
        "eval",
        "--model",
        path_str(&dir.path().join("missing")),
        "--out",
        "x.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_mi_four_rows_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "seed = 3\n[system]\nM = 4\nn = 1\n[training]\niterations = 5\nbatch = 32\n\
         [eval]\nebn0_db = [0.0, 10.0]\nmi_estimators = [\"mine\", \"gamma-dime:0.5\", \"gamma-dime:1\", \"gamma-dime:2\"]\n\
         mi_iterations = 5\nmi_batch = 32\n",
    )
    .unwrap();
    let o = dime(&[
        "train-ae",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("mi.csv");
    let run = || {
        let o = dime(&[
            "eval",
            "--config",
            path_str(&cfg),
            "--model",
            path_str(&model),
            "--mode",
            "mi",
            "--out",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(&out).unwrap()
    };
    let first = run();
    let text = String::from_utf8(first.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("estimator,ebn0_db,mi_nats,mi_bits,capacity_bits,rate_bits,seed")
    );
    assert_eq!(lines.count(), 8);
    assert_eq!(first, run());
}

#[test]
fn eval_bler_one_row_per_grid_point_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "[system]\nM = 4\nn = 2\n[loss]\nbeta = 0.0\n[training]\niterations = 50\nbatch = 64\n\
         [eval]\nebn0_start = 0.0\nebn0_stop = 6.0\nebn0_step = 3.0\nmin_errors = 20\nmax_blocks = 20000\n",
    )
    .unwrap();
    let o = dime(&[
        "train-ae",
        "--config",
        path_str(&cfg),
        "--seed",
        "9",
        "--out",
        path_str(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("b.csv");
    let run = |seed: &str| {
        let o = dime(&[
            "eval",
            "--config",
            path_str(&cfg),
            "--model",
            path_str(&model),
            "--seed",
            seed,
            "--out",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(&out).unwrap()
    };
    let a = run("4");
    assert!(a.starts_with("ebn0_db,blocks,errors,bler,seed\n"));
    assert_eq!(a.lines().count(), 4);
    assert!(a.lines().nth(1).unwrap().ends_with(",4"));
    assert_eq!(a, run("4"));
    assert_ne!(a, run("5"));
}

#[test]
fn bench_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = dime(&[
        "bench-estimators",
        "--config",
        path_str(&config("bench.cfg")),
        "--set",
        "bench.dims=[1]",
        "--set",
        "bench.rhos=[0.8]",
        "--set",
        "bench.iterations=5",
        "--set",
        "bench.batch=32",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 8);
    let oracle: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!((oracle - 0.5108).abs() < 5e-5, "{oracle}");
}
