use std::process::{Command, Output};

fn eastkcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eastkcm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(out: &str, name: &str) -> Vec<String> {
    let mut lines = out.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn header_line_names_version_subcommand_and_seed() {
    let o = eastkcm(&["--seed", "42", "gap", "--n", "3", "--p", "0.5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with(&format!("# eastkcm {} gap ", env!("CARGO_PKG_VERSION"))), "{first}");
    assert!(first.ends_with("seed=42"));
}

#[test]
fn single_site_gap_is_one() {
    let text = stdout(&eastkcm(&["gap", "--n", "1", "--p", "0.37"]));
    let gap: f64 = column(&text, "gap")[0].parse().unwrap();
    assert!((gap - 1.0).abs() < 1e-12);
}

#[test]
fn compare_reports_path_length() {
    let text = stdout(&eastkcm(&["compare", "--m", "2", "--p", "0.5"]));
    let l: f64 = column(&text, "L")[0].parse().unwrap();
    assert_eq!(l.round(), 18.0);
}

#[test]
fn lm_path_rows_are_legal() {
    let text = stdout(&eastkcm(&["lm-path", "--m", "2"]));
    let legal = column(&text, "legal");
    assert_eq!(legal.len(), 10);
    assert!(legal.iter().all(|v| v == "true"));
}

#[test]
fn exit_codes() {
    assert_eq!(eastkcm(&["gap", "--n", "3", "--p", "1.5"]).status.code(), Some(1));
    assert_eq!(eastkcm(&["gap", "--p", "0.5"]).status.code(), Some(1));
    assert_eq!(eastkcm(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(eastkcm(&["--threads", "0", "bounds"]).status.code(), Some(1));
    assert_eq!(eastkcm(&["--help"]).status.code(), Some(0));
    assert_eq!(eastkcm(&["--version"]).status.code(), Some(0));
}

#[test]
fn out_flag_writes_file_and_human_format_aligns() {
    let dir = std::env::temp_dir().join(format!("eastkcm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bounds.csv");
    let o = eastkcm(&["--out", path.to_str().unwrap(), "bounds", "--p-grid", "0.01"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(column(&text, "p").len(), 1);
    std::fs::remove_dir_all(&dir).unwrap();

    let human = stdout(&eastkcm(&["--format", "human", "bounds", "--p-grid", "0.01,0.001"]));
    let widths: Vec<usize> = human.lines().skip(1).map(str::len).collect();
    assert!(widths.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn same_seed_same_trajectory() {
    let args = ["--seed", "9", "sim-east", "--p", "0.4", "--n", "6", "--horizon", "30", "--stationary"];
    assert_eq!(stdout(&eastkcm(&args)), stdout(&eastkcm(&args)));
    let other = ["--seed", "10", "sim-east", "--p", "0.4", "--n", "6", "--horizon", "30", "--stationary"];
    assert_ne!(stdout(&eastkcm(&args)), stdout(&eastkcm(&other)));
}
