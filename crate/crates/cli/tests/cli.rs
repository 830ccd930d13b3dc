use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "synthetic.num_nodes=80",
    "--set",
    "synthetic.num_noise_relations=2",
    "--set",
    "synthetic.edges_per_noise_relation=120",
    "--set",
    "synthetic.informative_relation_edges=60",
    "--set",
    "synthetic.target_relation_edges=30",
    "--set",
    "hidden_dim=4",
    "--set",
    "batch_size=8",
    "--set",
    "max_epochs=2",
    "--set",
    "patience=2",
    "--set",
    "timing=off",
    "--set",
    "inference=full",
];

fn relsamp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relsamp"))
        .args(args)
        .arg("--run-dir")
        .arg(dir)
        .env_remove("RELSAMP_THREADS")
        .output()
        .expect("binary runs")
}

fn with_small<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(relsamp(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(relsamp(&["train", "--seed", "x"], dir.path()).status.code(), Some(1));
    assert_eq!(relsamp(&["train", "--set", "no_such_key=1"], dir.path()).status.code(), Some(1));
    assert_eq!(relsamp(&["train", "--config", "/nonexistent/cfg"], dir.path()).status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = relsamp(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sample-stats"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_relsamp"))
        .args(["verify", "--set", "verify.level=frequency"])
        .env("RELSAMP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_synthetic_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = relsamp(
        &with_small("gen-synthetic", &["--set", "synthetic.target_relation_edges=100000"]),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_synthetic_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = relsamp(&with_small("gen-synthetic", &["--seed", "11"]), d.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["synthetic.tsv", "manifest.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn train_eval_and_sample_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = relsamp(&with_small("train", &["--seed", "5"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["history.csv", "best.ckpt", "config.resolved", "final.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let final_json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("final.json")).unwrap()).unwrap();
    for key in ["pr_auc", "roc_auc", "wall_clock"] {
        assert!(final_json[key].is_number(), "{key}");
    }

    let out = relsamp(&with_small("eval", &[]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (got, stored) = (
        eval["val_pr_auc"].as_f64().unwrap(),
        eval["checkpoint_val_pr_auc"].as_f64().unwrap(),
    );
    assert!((got - stored).abs() <= 1e-12, "{got} vs {stored}");

    let out = relsamp(&with_small("sample-stats", &["--set", "stats.batches=2"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("relation_id,candidate_count,sampled_count,fraction\n"));
}

#[test]
fn config_file_and_seed_flag_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny run\nhidden_dim = 4\nseed = 1\n").unwrap();
    let out = relsamp(
        &with_small("train", &["--config", cfg.to_str().unwrap(), "--seed", "9"]),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = std::fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(resolved.lines().any(|l| l.replace(' ', "") == "seed=9"), "{resolved}");
    assert!(resolved.lines().any(|l| l.replace(' ', "") == "hidden_dim=4"), "{resolved}");
}

#[test]
fn verify_frequency_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = relsamp(&["verify", "--set", "verify.level=frequency", "--seed", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS uniform-chi-square"), "{text}");
    assert!(text.contains("0 failed"));
}

#[test]
fn bench_writes_csv_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = relsamp(
        &[
            "bench",
            "--set",
            "bench.num_nodes=150",
            "--set",
            "bench.mean_degree=12",
            "--set",
            "bench.repetitions=1",
            "--set",
            "hidden_dim=4",
            "--set",
            "batch_size=10",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("variant,phase,ms_mean,ms_std,speedup_vs_full"));
    for line in lines.filter(|l| !l.starts_with("full")) {
        let cells: Vec<&str> = line.split(',').collect();
        let touches: Vec<usize> = cells[5].split(';').map(|x| x.parse().unwrap()).collect();
        let budget: Vec<usize> = cells[6].split(';').map(|x| x.parse().unwrap()).collect();
        assert_eq!(budget, vec![70, 30]);
        assert!(touches.iter().zip(&budget).all(|(t, c)| t <= c), "{line}");
    }
}
