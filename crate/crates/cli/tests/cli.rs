use std::path::Path;
use std::process::{Command, Output};

fn hsbm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsbm"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn csv_column(text: &str, col: usize) -> Vec<f64> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn simulate_fig3_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&hsbm(
            &["simulate", "--preset", "fig3", "--seed", "7", "--out", "a"],
            d
        )),
        0
    );
    assert_eq!(
        code(&hsbm(
            &["simulate", "--preset", "fig3", "--seed", "7", "--out", "b"],
            d
        )),
        0
    );
    for f in ["network.txt", "truth.csv", "truth_super.csv", "spec.json"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f}");
    }
    let truth = read(d.join("a/truth.csv"));
    assert_eq!(truth.lines().count(), 141);
    let labels: std::collections::BTreeSet<&str> = truth
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(labels.len(), 7);
    let super_text = read(d.join("a/truth_super.csv"));
    let supers: std::collections::BTreeSet<&str> = super_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(supers.len(), 2);
    assert!(read(d.join("a/network.txt")).starts_with("# vertices: 140"));
}

#[test]
fn simulate_flat_has_one_supercommunity() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&hsbm(
            &["simulate", "--flat", "--seed", "3", "--out", "f"],
            dir.path()
        )),
        0
    );
    let supers = read(dir.path().join("f/truth_super.csv"));
    assert!(supers.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn manifest_mismatch_refused() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&hsbm(&["simulate", "--seed", "1", "--out", "o"], d)),
        0
    );
    let before = read(d.join("o/network.txt"));
    let o = hsbm(&["simulate", "--seed", "2", "--out", "o"], d);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("refusing"));
    assert_eq!(read(d.join("o/network.txt")), before);
    assert_eq!(
        code(&hsbm(&["simulate", "--seed", "1", "--out", "o"], d)),
        0
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&hsbm(&["fit", "--bogus"], d)), 1);
    assert_eq!(
        code(&hsbm(&["simulate", "--preset", "nope", "--out", "x"], d)),
        1
    );
    assert_eq!(
        code(&hsbm(&["fit", "--network", "missing.txt", "--out", "y"], d)),
        2
    );
    std::fs::write(d.join("loop.txt"), "1 2\n2 2\n").unwrap();
    assert_eq!(
        code(&hsbm(&["fit", "--network", "loop.txt", "--out", "z"], d)),
        2
    );
    std::fs::write(d.join("ok.txt"), "1 2\n2 3\n3 4\n").unwrap();
    let o = hsbm(
        &[
            "fit",
            "--network",
            "ok.txt",
            "--iters",
            "10",
            "--burnin",
            "20",
            "--out",
            "w",
        ],
        d,
    );
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&hsbm(&["--help"], d)), 0);
}

fn small_network(d: &Path) {
    assert_eq!(
        code(&hsbm(
            &["simulate", "--preset", "fig3", "--seed", "2", "--out", "sim"],
            d
        )),
        0
    );
}

#[test]
fn mcmc_fit_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_network(d);
    let args = |out: &'static str| {
        vec![
            "fit",
            "--engine",
            "mcmc",
            "--network",
            "sim/network.txt",
            "--restarts",
            "2",
            "--iters",
            "300",
            "--thin",
            "3",
            "--seed",
            "5",
            "--threads",
            "2",
            "--out",
            out,
        ]
    };
    assert_eq!(code(&hsbm(&args("m1"), d)), 0);
    assert_eq!(code(&hsbm(&args("m2"), d)), 0);
    for f in [
        "best.json",
        "runs.csv",
        "mcmc_community.csv",
        "mcmc_supercommunity_partition.csv",
        "runs/run_001/trace.csv",
    ] {
        assert_eq!(
            read(d.join("m1").join(f)),
            read(d.join("m2").join(f)),
            "{f}"
        );
    }
    // rerunning into a finished directory reuses the chains
    let before = read(d.join("m1/runs/run_000/trace.ndjson"));
    assert_eq!(code(&hsbm(&args("m1"), d)), 0);
    assert_eq!(read(d.join("m1/runs/run_000/trace.ndjson")), before);
    let cm = read(d.join("m1/mcmc_community.csv"));
    assert_eq!(cm.lines().count(), 140);
    for (i, row) in cm.lines().enumerate() {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 140);
        assert_eq!(v[i], 1.0);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    let pgm = std::fs::read(d.join("m1/mcmc_community.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n140 140\n255\n"));
}

#[test]
fn vb_fit_writes_monotone_history_and_config_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_network(d);
    std::fs::write(
        d.join("cfg.json"),
        r#"{"hyperparams": {"k": 12}, "vb": {"max_sweeps": 40, "restarts": 9}}"#,
    )
    .unwrap();
    let o = hsbm(
        &[
            "fit",
            "--engine",
            "vb",
            "--network",
            "sim/network.txt",
            "--config",
            "cfg.json",
            "--restarts",
            "3",
            "--out",
            "v",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg: serde_json::Value = serde_json::from_str(&read(d.join("v/config.json"))).unwrap();
    assert_eq!(cfg["hyperparams"]["k"], 12);
    assert_eq!(cfg["vb"]["max_sweeps"], 40);
    assert_eq!(cfg["vb"]["restarts"], 3);
    assert_eq!(read(d.join("v/runs.csv")).lines().count(), 4);
    let elbo = csv_column(&read(d.join("v/elbo.csv")), 2);
    assert!(!elbo.is_empty() && elbo.len() <= 40);
    for w in elbo.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
    let best: serde_json::Value = serde_json::from_str(&read(d.join("v/best.json"))).unwrap();
    assert_eq!(best["engine"], "vb");
}

#[test]
fn summarize_with_and_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_network(d);
    let fit = |engine: &str, out: &str| {
        let o = hsbm(
            &[
                "fit",
                "--engine",
                engine,
                "--network",
                "sim/network.txt",
                "--restarts",
                "2",
                "--iters",
                "400",
                "--out",
                out,
            ],
            d,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    fit("mcmc", "m");
    fit("vb", "v");
    let o = hsbm(
        &[
            "summarize",
            "--mcmc",
            "m",
            "--vb",
            "v",
            "--network",
            "sim/network.txt",
            "--truth",
            "sim/truth.csv",
            "--truth-super",
            "sim/truth_super.csv",
            "--out",
            "s",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ari = read(d.join("s/ari.csv"));
    assert_eq!(ari.lines().count(), 7);
    assert!(ari.contains("mcmc,community,truth,"));
    for f in [
        "order.csv",
        "adjacency_ordered.pgm",
        "network_ordered.txt",
        "overlay_vb_on_mcmc_community.csv",
        "vb_supercommunity_ordered.pgm",
    ] {
        assert!(d.join("s").join(f).exists(), "{f}");
    }
    let positions = csv_column(&read(d.join("s/order.csv")), 1);
    let mut sorted: Vec<usize> = positions.iter().map(|&v| v as usize).collect();
    sorted.sort_unstable();
    assert_eq!(sorted, (1..=140).collect::<Vec<_>>());

    let o = hsbm(
        &[
            "summarize",
            "--vb",
            "v",
            "--network",
            "sim/network.txt",
            "--out",
            "s2",
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    assert!(!d.join("s2/ari.csv").exists());
    assert!(d.join("s2/vb_community_partition.csv").exists());
    assert!(!d.join("s2/overlay_vb_on_mcmc_community.csv").exists());

    assert_eq!(
        code(&hsbm(
            &[
                "summarize",
                "--mcmc",
                "v",
                "--network",
                "sim/network.txt",
                "--out",
                "s3"
            ],
            d
        )),
        1
    );
    assert_eq!(
        code(&hsbm(
            &["summarize", "--network", "sim/network.txt", "--out", "s4"],
            d
        )),
        1
    );
}

#[test]
fn prior_diag_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = hsbm(
        &[
            "prior-diag",
            "--replicates",
            "3000",
            "--betas",
            "1",
            "--out",
            "p",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for a in ["1", "3", "5", "10"] {
        let cdf = csv_column(&read(d.join(format!("p/k_star_alpha_{a}.csv"))), 1);
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!((cdf.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(d.join(format!("p/r_star_alpha_{a}_beta_1.csv")).exists());
    }
    let table = read(d.join("p/analytic.csv"));
    let first = csv_column(&table, 3)[0];
    assert!((first - 5.187377517639621).abs() < 1e-9, "{first}");

    let o = hsbm(
        &[
            "prior-diag",
            "--alphas",
            "1e-9",
            "--single-level",
            "--replicates",
            "200",
            "--out",
            "q",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let point_mass = csv_column(&read(d.join("q/k_star_alpha_0.000000001.csv")), 1);
    assert_eq!(point_mass[0], 1.0);
    assert_eq!(
        code(&hsbm(&["prior-diag", "--alphas", "-1", "--out", "r"], d)),
        1
    );
}
