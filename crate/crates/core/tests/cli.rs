//! End-to-end tests of the `shardecon` binary: flags, exit codes, emitted
//! files, and reproduction from the manifest.

use std::path::Path;
use std::process::{Command, Output};

fn shardecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shardecon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL_CONFIG: &str = "population = 40\nintervals = 60\nseed = 11\nmint_initial = 20000\nmint_decay = subtract\nqmax = 300\nm_min = 5\navq_initial = 2000\nagents.demand = uniform(200, 600)\nagents.balance = uniform(15000, 40000)\nagents.fear_line = uniform(500, 2000)\noplog = true\n";

#[test]
fn security_jury_row_matches_the_headline_claim() {
    let out = shardecon(&[
        "security",
        "--n",
        "2000",
        "--t",
        "1000",
        "--s-range",
        "10",
        "--threshold-frac",
        "0.7",
        "--model",
        "jury",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text
        .lines()
        .find(|l| l.starts_with("10\t"))
        .expect("row for s = 10");
    let fields: Vec<&str> = row.split('\t').collect();
    assert_eq!(fields[1], "200", "m = n/s");
    assert_eq!(fields[2], "140", "T = ceil(0.7 * 200)");
    let log10: f64 = fields[3].parse().unwrap();
    assert!(
        log10 <= -20.0,
        "jury failure must be below 1e-20, got 1e{log10}"
    );
}

#[test]
fn security_zero_adversaries_gives_zero_probability_rows() {
    let out = shardecon(&[
        "security",
        "--n",
        "2000",
        "--t",
        "0",
        "--s-range",
        "4",
        "--model",
        "jury",
        "--exact",
    ]);
    assert!(out.status.success());
    for line in stdout(&out).lines().skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[3], "-inf");
        assert!(fields[4].starts_with("0/"));
    }
}

#[test]
fn security_classic_matches_library_enumeration_case() {
    // n=10, t=5, two shards: m=5, majority threshold 3.
    let out = shardecon(&[
        "security",
        "--n",
        "10",
        "--t",
        "5",
        "--s-range",
        "2..2",
        "--model",
        "classic",
        "--exact",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().find(|l| l.starts_with("2\t")).unwrap();
    let exact = row.split('\t').nth(4).unwrap();
    let expected = shardecon::security::hypergeom_tail(10, 5, 5, 3).unwrap();
    assert_eq!(
        exact,
        format!("{}/{}", expected.exact().numer(), expected.exact().denom())
    );
}

#[test]
fn security_rejects_bad_flags_with_exit_2() {
    let cases: &[&[&str]] = &[
        &[
            "security",
            "--n",
            "10",
            "--t",
            "11",
            "--s-range",
            "2",
            "--model",
            "jury",
        ],
        &[
            "security",
            "--n",
            "10",
            "--t",
            "5",
            "--s-range",
            "0",
            "--model",
            "jury",
        ],
        &[
            "security",
            "--n",
            "10",
            "--t",
            "5",
            "--s-range",
            "2",
            "--model",
            "jury",
            "--threshold-frac",
            "0.4",
        ],
        &[
            "security",
            "--n",
            "10",
            "--t",
            "5",
            "--s-range",
            "2",
            "--model",
            "submarine",
        ],
    ];
    for args in cases {
        let out = shardecon(args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
    }
}

#[test]
fn run_emits_manifest_csv_and_oplog() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.cfg");
    std::fs::write(&config_path, SMALL_CONFIG).unwrap();
    let out_dir = dir.path().join("out");

    let out = shardecon(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = std::fs::read_to_string(out_dir.join("intervals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "height,M0,M1,M2,ratio,Q,P,R,GPL,GN,I,s,capacity,pending,registrations,maturations,confiscations,maintainers"
    );
    assert_eq!(lines.count(), 60, "one row per interval");
    assert!(out_dir.join("manifest").exists());
    let oplog = std::fs::read_to_string(out_dir.join("oplog.tsv")).unwrap();
    let first = oplog.lines().next().unwrap();
    assert!(first.starts_with("0\tcreate-account"), "got `{first}`");
}

/// The manifest alone reproduces the run byte-for-byte, and a different
/// seed produces a different CSV.
#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.cfg");
    std::fs::write(&config_path, SMALL_CONFIG).unwrap();

    let first = dir.path().join("first");
    let out = shardecon(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let second = dir.path().join("second");
    let manifest = first.join("manifest");
    let out = shardecon(&[
        "run",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let csv_a = std::fs::read(first.join("intervals.csv")).unwrap();
    let csv_b = std::fs::read(second.join("intervals.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "manifest-driven rerun must be byte-identical");

    let third = dir.path().join("third");
    let out = shardecon(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        third.to_str().unwrap(),
        "--seed",
        "999",
    ]);
    assert!(out.status.success());
    let csv_c = std::fs::read(third.join("intervals.csv")).unwrap();
    assert_ne!(csv_a, csv_c, "seed override must change the run");
}

#[test]
fn run_exit_codes_distinguish_config_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();

    // Missing config file.
    let out = shardecon(&[
        "run",
        "--config",
        "/nonexistent/x.cfg",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Invalid config contents.
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "population = banana\n").unwrap();
    let out = shardecon(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Unwritable output location (a file where a directory is needed).
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "population = 1\nintervals = 1\nseed = 1\n").unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = shardecon(&[
        "run",
        "--config",
        good.to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let _ = Path::new("unused");
}

#[test]
fn zero_population_run_has_all_zero_monetary_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.cfg");
    std::fs::write(&config_path, "population = 0\nintervals = 5\nseed = 3\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = shardecon(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("intervals.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(&fields[1..4], &["0", "0", "0"], "M0, M1, M2 must be zero");
        assert_eq!(fields[5], "0", "Q must be zero");
    }
}
