#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use xdeepfm::cli::{run_with_hooks, Hooks};

/// Runs the CLI in-process; returns the exit code and captured stdout.
pub fn run_cli(args: &[&str]) -> (i32, String) {
    run_cli_with(args, Hooks::default())
}

pub fn run_cli_with(args: &[&str], hooks: Hooks) -> (i32, String) {
    let mut out = Vec::new();
    let argv: Vec<String> = std::iter::once("xdeepfm")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    let code = run_with_hooks(argv, hooks, &mut out);
    (code, String::from_utf8(out).expect("utf-8 stdout"))
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a synthetic spec and generates its CSV through the CLI.
pub fn synthesize_csv(dir: &Path, name: &str, rows: usize, terms: &str, seed: u64) -> PathBuf {
    let spec = dir.join(format!("{name}.spec"));
    fs::write(
        &spec,
        format!(
            "fields = 6\nvocab_per_field = 8\nlatent_dim = 4\nterms = {terms}\n\
             noise_std = 0\nn_instances = {rows}\nseed = {seed}\n"
        ),
    )
    .unwrap();
    let csv = dir.join(format!("{name}.csv"));
    let (code, _) = run_cli(&[
        "synthesize",
        "--spec",
        path_str(&spec),
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code, 0, "synthesize failed");
    csv
}

/// Splits a CSV's rows at `at` into two files sharing the header.
pub fn split_csv(csv: &Path, at: usize) -> (PathBuf, PathBuf) {
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    let write = |suffix: &str, part: &[&str]| {
        let p = csv.with_extension(suffix);
        let mut s = String::from(header);
        s.push('\n');
        for r in part {
            s.push_str(r);
            s.push('\n');
        }
        fs::write(&p, s).unwrap();
        p
    };
    (write("train.csv", &rows[..at]), write("valid.csv", &rows[at..]))
}

pub const THREE_WAY: &str = "0+1+2:3.0; 3+4+5:3.0";
pub const TWO_WAY: &str = "0+1:3.0; 2+3:3.0; 4+5:3.0";

/// A small, fast xDeepFM configuration.
pub const SMALL_MODEL: &[&str] = &[
    "--set",
    "model.embed_dim=4",
    "--set",
    "model.dnn_widths=16",
    "--set",
    "model.cin_widths=8,8",
    "--set",
    "train.batch_size=256",
    "--set",
    "train.lr=0.01",
];
