use std::process::{Command, Output};

fn craf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_craf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &["solve", "--n", "200", "--m", "600", "--k", "4", "--seed", "3"];

#[test]
fn solve_recovers_a_small_instance() {
    let o = craf(SMALL);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("success=true"));
}

#[test]
fn solve_rejects_oversized_support() {
    let o = craf(&["solve", "--n", "20", "--m", "50", "--k", "11", "--B", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn untruncated_baseline_runs() {
    let mut args = SMALL.to_vec();
    args.extend(["--alg", "sparta", "--tau-g", "0"]);
    let o = craf(&args);
    assert!(matches!(o.status.code(), Some(0 | 2)));
    assert!(stdout(&o).contains("algorithm=sparta"));
}

#[test]
fn negative_lower_weight_flag_parses() {
    let mut args = SMALL.to_vec();
    args.extend(["--lambda-minus", "-2.5"]);
    assert!(matches!(craf(&args).status.code(), Some(0 | 2)));
}

#[test]
fn saved_instance_reproduces_the_solve() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("inst.bin");
    let csv = dir.path().join("inst.csv");
    let trace = dir.path().join("trace.csv");
    let mut args = SMALL.to_vec();
    let (bin_s, csv_s, trace_s) = (bin.to_str().unwrap(), csv.to_str().unwrap(), trace.to_str().unwrap());
    args.extend(["--save-instance", bin_s, "--instance-csv", csv_s, "--out", trace_s]);
    let first = craf(&args);
    assert_eq!(first.status.code(), Some(0));

    let again = craf(&["solve", "--instance", bin_s]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&again));

    let header = std::fs::read_to_string(&trace).unwrap();
    assert!(header.starts_with("iter,rel_error,loss,floored_weight_count\n"));
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("series,index,value\n"));
}

#[test]
fn instance_flag_conflicts_with_generation_flags() {
    let o = craf(&["solve", "--instance", "x.bin", "--n", "100"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment_reads_config_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, "# tiny sweep\nn = 200\nk = 4\ngrid = 300\ntrials = 2\nalgorithms = craf\n").unwrap();
    let out = dir.path().join("summary.csv");
    let o =
        craf(&["success-curve", "--config", cfg.to_str().unwrap(), "--trials", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(craf::harness::SUMMARY_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], ["success_curve", "craf", "200", "300"]);
    assert_eq!(row[8], "3");
    assert!(lines.next().is_none());
}

#[test]
fn experiment_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "trails = 3\n").unwrap();
    let o = craf(&["noise-curve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));
}

#[test]
fn verify_subchecks_pass() {
    for check in [
        vec!["verify", "--check", "gradient"],
        vec!["verify", "--check", "hkb", "--nb", "5", "--k", "2", "--cases", "20"],
        vec!["verify", "--check", "lemma1", "--tau", "1", "--draws", "200000"],
    ] {
        let o = craf(&check);
        assert_eq!(o.status.code(), Some(0), "{check:?}: {}", stdout(&o));
        assert!(stdout(&o).contains("PASS"));
    }
}

#[test]
fn help_and_bad_arguments() {
    assert_eq!(craf(&["--help"]).status.code(), Some(0));
    assert_eq!(craf(&["solve", "--bogus"]).status.code(), Some(1));
}
