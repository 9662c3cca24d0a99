use std::path::Path;
use std::process::{Command, Output};

fn zcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zcs"))
        .args(args)
        .env_remove("ZCS_FLOAT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut rd = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .unwrap();
    let header = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd.records().map(|r| r.unwrap()).collect();
    (header, rows)
}

const TINY: &[&str] = &[
    "--m",
    "2",
    "--n",
    "16",
    "--n-boundary",
    "4",
    "--n-initial",
    "4",
    "--num-funcs",
    "4",
    "--num-val-funcs",
    "2",
    "--width",
    "8",
    "--latent",
    "4",
    "--sensors",
    "8",
];

fn train_args<'a>(problem: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--problem", problem];
    v.extend_from_slice(TINY);
    v.extend_from_slice(extra);
    v
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = zcs(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_flag_exit_2() {
    assert_eq!(zcs(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(zcs(&["info", "--colour"]).status.code(), Some(2));
    assert_eq!(zcs(&["train", "--problem", "heat"]).status.code(), Some(2));
    let o = zcs(&["train", "--batches", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--problem"));
}

#[test]
fn info_lists_primitives() {
    let o = zcs(&["info"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("primitives (26)"));
    assert!(out.contains("matmul"));
    assert!(out.contains("float: f64"));
}

#[test]
fn zero_batches_report_initial_loss_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("loss.csv");
    let ckpt = dir.path().join("net.zcsm");
    let o = zcs(&train_args(
        "burgers",
        &[
            "--batches",
            "0",
            "--out",
            csv_path.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ],
    ));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = read_csv(&csv_path);
    assert_eq!(header[..2], ["batch", "loss"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "0");
    assert_eq!(&std::fs::read(&ckpt).unwrap()[..4], b"ZCSM");
}

#[test]
fn identical_invocations_give_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = zcs(&train_args(
            "reaction_diffusion",
            &["--batches", "3", "--out", path.to_str().unwrap()],
        ));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let (header, rows) = read_csv(&path);
        // timing columns are measurements, everything else is deterministic
        let keep: Vec<usize> = (0..header.len())
            .filter(|&i| !header[i].starts_with("time_"))
            .collect();
        rows.iter()
            .map(|r| keep.iter().map(|&i| r[i].to_string()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let a = run("a.csv");
    assert_eq!(a.len(), 4);
    assert_eq!(a, run("b.csv"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("loss.csv");
    std::fs::write(
        &cfg,
        format!(
            "# tiny run\nproblem = kirchhoff\nmodes = 2\nbatches = 3\nm = 2\nn = 16\nn-boundary = 4\nnum_funcs = 4\nwidth = 8\nlatent = 4\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = zcs(&["train", "--config", cfg.to_str().unwrap(), "--batches", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(rows.len(), 2);
    assert!(header.contains(&"bottom".to_string()));

    std::fs::write(&cfg, "problem = kirchhoff\nbatchez = 3\n").unwrap();
    let o = zcs(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batchez"));
}

#[test]
fn single_point_bench_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = zcs(&[
        "bench",
        "--grid",
        "strategies=zcs; m=2; n=32; p=2",
        "--out",
        out.to_str().unwrap(),
        "--width",
        "8",
        "--latent",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = read_csv(&out);
    assert_eq!(
        header,
        [
            "strategy",
            "M",
            "N",
            "P",
            "time_ms",
            "nodes",
            "retained_bytes",
            "status"
        ]
    );
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "zcs");
    assert_eq!(&rows[0][7], "ok");
    assert_eq!(
        zcs(&["bench", "--grid", "m=", "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn equivalence_suite_passes() {
    let o = zcs(&["check", "--suite", "equivalence"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 40);
    assert!(!out.contains("FAIL"));
}

#[test]
fn identity_and_gradient_suites_pass() {
    for suite in ["identities", "gradcheck"] {
        let o = zcs(&["check", "--suite", suite]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stdout(&o));
    }
    assert_eq!(zcs(&["check"]).status.code(), Some(2));
    assert_eq!(zcs(&["check", "--suite", "speed"]).status.code(), Some(2));
}

#[test]
fn derive_prints_statistics() {
    let o = zcs(&[
        "derive",
        "--problem",
        "stokes",
        "--m",
        "2",
        "--n",
        "16",
        "--width",
        "8",
        "--latent",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("stokes zcs M=2 N=16"));
    assert!(out.contains("pde_div"));
    assert!(out.contains("retained bytes"));
}

#[test]
fn precision_selection() {
    let run = |value: &str| {
        Command::new(env!("CARGO_BIN_EXE_zcs"))
            .args([
                "derive",
                "--problem",
                "burgers",
                "--m",
                "2",
                "--n",
                "8",
                "--width",
                "8",
                "--latent",
                "4",
            ])
            .env("ZCS_FLOAT", value)
            .output()
            .unwrap()
    };
    let o = run("32");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("(f32)"));
    assert_eq!(run("16").status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let o = zcs(&train_args(
        "burgers",
        &[
            "--batches",
            "0",
            "--checkpoint",
            "/nonexistent/dir/net.zcsm",
        ],
    ));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}
