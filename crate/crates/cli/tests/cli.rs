use std::path::PathBuf;
use std::process::{Command, Output};

fn permcodes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permcodes")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("permcodes-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn count_semi_pandiagonal() {
    let out = permcodes(&["count", "--structure", "semi-pandiagonal", "--q", "5"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "360");
    let capped = permcodes(&["count", "--structure", "latin", "--q", "6", "--limit", "1000"]);
    assert!(stdout(&capped).trim().starts_with(">="));
}

#[test]
fn combinatorial_rate_of_sudoku() {
    let out = permcodes(&["analyze", "rates", "--q", "9", "--count", "6670903752021072936960", "--n", "81"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let r: f64 = row[6].parse().unwrap();
    assert!((r - 0.2824).abs() < 1e-4);
}

#[test]
fn sample_validate_and_decode() {
    let grid = scratch("sample.txt");
    let out = permcodes(&["sample", "--structure", "sudoku", "--q", "9", "--seed", "3", "--out", grid.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(permcodes(&["validate", "--structure", "sudoku", "--q", "9", grid.to_str().unwrap()]).status.success());

    let text = std::fs::read_to_string(&grid).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let erased: Vec<String> = lines
        .enumerate()
        .map(|(i, l)| if i % 3 == 0 { l.split(' ').enumerate().map(|(j, t)| if j % 4 == 0 { "0" } else { t }).collect::<Vec<_>>().join(" ") } else { l.to_string() })
        .collect();
    let damaged = scratch("erased.txt");
    std::fs::write(&damaged, format!("{header}\n{}\n", erased.join("\n"))).unwrap();
    let decoded = scratch("decoded.txt");
    let out = permcodes(&["decode-erasure", "--structure", "sudoku", "--q", "9", damaged.to_str().unwrap(), "--out", decoded.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&decoded).unwrap(), text);
}

#[test]
fn encode_then_recover() {
    let words = scratch("words.txt");
    let out = permcodes(&["encode", "--structure", "sudoku", "--q", "4", "--seed", "3", "--count", "3", "--out", words.to_str().unwrap()]);
    assert!(out.status.success());
    let consumed: usize = String::from_utf8(out.stderr)
        .unwrap()
        .lines()
        .filter_map(|l| l.split("bits_consumed=").nth(1))
        .map(|s| s.split(' ').next().unwrap().parse::<usize>().unwrap())
        .sum();
    let out = permcodes(&["recover", "--structure", "sudoku", "--q", "4", words.to_str().unwrap()]);
    assert!(out.status.success());
    let bits = stdout(&out).lines().last().unwrap().trim().to_string();
    assert_eq!(bits.len(), consumed);

    let source = scratch("bits.txt");
    std::fs::write(&source, &bits).unwrap();
    let again = scratch("again.txt");
    let out = permcodes(&["encode", "--structure", "sudoku", "--q", "4", "--input", source.to_str().unwrap(), "--count", "3", "--out", again.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&again).unwrap(), std::fs::read_to_string(&words).unwrap());
}

#[test]
fn permanent_and_cofactors() {
    let m = scratch("m.txt");
    std::fs::write(&m, "1 1\n1 1\n").unwrap();
    assert_eq!(stdout(&permcodes(&["permanent", m.to_str().unwrap()])).trim(), "2");
    std::fs::write(&m, "1 2\n3 4\n").unwrap();
    let cof = stdout(&permcodes(&["permanent", "--cofactors", m.to_str().unwrap()]));
    assert_eq!(cof.trim(), "4 3\n2 1");
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate", "--structure", "sudoku", "--q", "4", "--eps", "0.4,0.6", "--seed", "2", "--min-codewords", "8",
        "--min-block-errors", "10", "--patterns", "10", "--no-time",
    ];
    let a = permcodes(&args);
    let b = permcodes(&[&args[..], &["--workers", "2"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("eps,trials,block_errors,bler"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(permcodes(&["bogus"]).status.code(), Some(2));
    assert_eq!(permcodes(&["count", "--structure", "sudoku", "--q", "5"]).status.code(), Some(2));
    assert_eq!(permcodes(&["sample", "--structure", "semi-pandiagonal", "--q", "4", "--seed", "0"]).status.code(), Some(3));

    let stalled = scratch("stalled.txt");
    std::fs::write(&stalled, "4 16\n1 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    assert_eq!(permcodes(&["decode-erasure", "--structure", "sudoku", "--q", "4", stalled.to_str().unwrap()]).status.code(), Some(6));

    let clash = scratch("clash.txt");
    std::fs::write(&clash, "4 16\n1 1 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    assert_eq!(permcodes(&["decode-erasure", "--structure", "sudoku", "--q", "4", clash.to_str().unwrap()]).status.code(), Some(4));

    let missing = scratch("does-not-exist.txt");
    assert_eq!(permcodes(&["validate", "--structure", "latin", "--q", "3", missing.to_str().unwrap()]).status.code(), Some(1));
}
