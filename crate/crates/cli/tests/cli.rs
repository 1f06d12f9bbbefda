use std::path::Path;

use gwgls_cli::{run_from, CSV_HEADER};

struct Run {
    code: i32,
    out: String,
    err: String,
}

impl Run {
    fn value(&self, key: &str) -> Option<&str> {
        self.out.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
    }

    fn last_line(&self) -> &str {
        self.out.lines().last().unwrap_or("")
    }
}

fn gwgls(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gwgls").chain(args.iter().copied());
    let code = run_from(argv, &mut out, &mut err);
    let run = Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    };
    assert!(run.last_line().starts_with("status="), "last line: {:?}", run.last_line());
    run
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: usize, m: usize, t: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    let r = gwgls(&[
        "generate", "--n", &n.to_string(), "--p", "3", "--m", &m.to_string(), "--t", &t.to_string(), "--seed", "7",
        "--out", s(&data),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    data
}

#[test]
fn generate_writes_dataset_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec!["generate", "--n", "64", "--p", "4", "--m", "100", "--t", "50", "--seed", "7", "--out", out]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let argv = args(s(d));
        let r = gwgls(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(r.code, 0);
        assert_eq!(r.last_line(), "status=ok");
        assert!(Path::new(r.value("manifest").unwrap()).exists());
    }
    for f in ["kinship.gwg", "covariates.gwg", "snps.gwg", "traits.gwg", "manifest.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let r = gwgls(&["generate", "--n", "64", "--p", "4", "--m", "100", "--t", "50"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.last_line(), "status=usage_error");
    assert_eq!(gwgls(&["solve", "--data", "x", "--out", "y", "--scheduler", "zz"]).code, 2);
    assert_eq!(gwgls(&["frobnicate"]).code, 2);
    assert_eq!(gwgls(&["--help"]).code, 0);
}

fn profile_file(dir: &Path, bandwidth: &str) -> std::path::PathBuf {
    let path = dir.join(format!("profile-{bandwidth}.txt"));
    std::fs::write(
        &path,
        format!("flops_per_sec_preloop=240e9\nflops_per_sec_loops=25e9\nio_bandwidth={bandwidth}\ndatatype_size=8\n"),
    )
    .unwrap();
    path
}

#[test]
fn tune_with_injected_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let paper = profile_file(dir.path(), "2e9");
    let report = dir.path().join("report.txt");
    let r = gwgls(&["tune", "--profile", s(&paper), "--n", "1000", "--p", "4", "--report", s(&report)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.value("tb_min"), Some("11"));
    assert_eq!(r.value("nb_overlap_satisfied"), Some("true"));
    assert!(std::fs::read_to_string(&report).unwrap().contains("tb_min=11\n"));

    let unbounded = profile_file(dir.path(), "inf");
    let r = gwgls(&["tune", "--profile", s(&unbounded), "--n", "1000", "--p", "4"]);
    assert_eq!(r.value("tb_min"), Some("1"));

    let r = gwgls(&["tune", "--profile", s(&paper), "--n", "1000", "--p", "4", "--memory-budget", "1K"]);
    assert_eq!(r.code, 1);
    assert!(r.value("error").unwrap().contains("budget"));
}

#[test]
fn solve_verify_and_scheduler_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 24, 30, 12);
    let ct = dir.path().join("ct.gwg");
    let it = dir.path().join("it.gwg");
    let naive = dir.path().join("naive.gwg");
    let csv = dir.path().join("runs.csv");
    let tiles = ["--mb", "8", "--tb", "5", "--mbb", "4", "--tbb", "2", "--nb", "7"];
    let mut args = vec!["--threads", "2", "solve", "--data", s(&data), "--out", s(&ct), "--csv", s(&csv)];
    args.extend(tiles);
    let r = gwgls(&args);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.value("context_builds"), Some("3"));
    assert_eq!(r.value("workers"), Some("2"));

    let mut args = vec!["--threads", "3", "solve", "--scheduler", "it", "--data", s(&data), "--out", s(&it), "--csv", s(&csv)];
    args.extend(tiles);
    assert_eq!(gwgls(&args).code, 0);
    assert_eq!(std::fs::read(&ct).unwrap(), std::fs::read(&it).unwrap());

    let r = gwgls(&["solve", "--scheduler", "naive", "--data", s(&data), "--out", s(&naive), "--mb", "3"]);
    assert_eq!(r.code, 0);
    assert!(r.err.contains("ignores"));

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = csv_text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,ct,"));
    assert!(lines[2].starts_with("3,it,"));

    for result in [&ct, &naive] {
        let r = gwgls(&["verify", "--data", s(&data), "--result", s(result), "--samples", "50"]);
        assert_eq!(r.code, 0, "{}", r.out);
        assert_eq!(r.value("cells_checked"), Some("50"));
        let err: f64 = r.value("max_relative_error").unwrap().parse().unwrap();
        assert!(err <= 1e-9);
    }
}

#[test]
fn exhaustive_verify_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 16, 20, 10);
    let out = dir.path().join("b.gwg");
    assert_eq!(gwgls(&["solve", "--data", s(&data), "--out", s(&out)]).code, 0);
    let r = gwgls(&["verify", "--data", s(&data), "--result", s(&out), "--exhaustive"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.value("cells_checked"), Some("200"));

    // corrupt the last coefficient of cell (snp 7, trait 4)
    let p = 3;
    let offset = 64 + ((4 * 20 + 7) * p + 2) * 8;
    let mut bytes = std::fs::read(&out).unwrap();
    bytes[offset..offset + 8].copy_from_slice(&1234.5f64.to_le_bytes());
    std::fs::write(&out, bytes).unwrap();
    let r = gwgls(&["verify", "--data", s(&data), "--result", s(&out), "--exhaustive"]);
    assert_eq!(r.code, 3);
    assert_eq!(r.last_line(), "status=verify_failed");
    assert_eq!(r.value("worst_snp"), Some("7"));
    assert_eq!(r.value("worst_trait"), Some("4"));
}

#[test]
fn infeasible_budget_and_math_failure_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 16, 12, 6);
    let out = dir.path().join("b.gwg");
    let r = gwgls(&["solve", "--data", s(&data), "--out", s(&out), "--memory-budget", "2K"]);
    assert_eq!(r.code, 1);
    assert_eq!(r.last_line(), "status=error");

    // SNP 5 equal to the intercept column
    let snps = data.join("snps.gwg");
    let mut bytes = std::fs::read(&snps).unwrap();
    for k in 0..16 {
        let at = 64 + (5 * 16 + k) * 8;
        bytes[at..at + 8].copy_from_slice(&1.0f64.to_le_bytes());
    }
    std::fs::write(&snps, bytes).unwrap();
    let r = gwgls(&["solve", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(r.code, 1);
    let msg = r.value("error").unwrap();
    assert!(msg.contains("snp 5") && msg.contains("trait 0"), "{msg}");
}

#[test]
fn bench_emits_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 16, 40, 20);
    let csv = dir.path().join("bench.csv");
    let r = gwgls(&[
        "bench", "--data", s(&data), "--workers", "1,2", "--schedulers", "ct,it,naive", "--mb", "10", "--tb", "5",
        "--mbb", "5", "--tbb", "5", "--csv", s(&csv),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.value("outputs_identical"), Some("true"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 6);
    for (row, expected) in lines[1..].iter().zip(["1,ct", "2,ct", "1,it", "2,it", "1,naive", "2,naive"]) {
        assert!(row.starts_with(expected), "{row}");
        assert_eq!(row.split(',').count(), 5);
    }
    assert!(r.value("speedup_ct_2").is_some());
}

#[test]
fn binary_reports_status_last() {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_gwgls"))
        .args(["tune", "--n", "10"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(stdout.lines().last(), Some("status=usage_error"));
}
