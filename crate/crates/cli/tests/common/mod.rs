#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use gtseg::RunConfig;

/// Two-level model on 32×32 synthetic images; a few seconds per epoch.
pub const SMALL: &[&str] = &[
    "data.size=32",
    "data.count=12",
    "model.levels=2",
    "model.channels_per_level=[8,16]",
    "model.group_h=4",
    "model.group_w=4",
    "training.batch_size=4",
];

pub fn small_config(extra: &[&str]) -> RunConfig {
    let all: Vec<String> = SMALL.iter().chain(extra).map(|s| s.to_string()).collect();
    RunConfig::default().with_overrides(&all).unwrap()
}

/// `--set` flags for [`SMALL`] plus `extra`.
pub fn set_flags(extra: &[&str]) -> Vec<String> {
    SMALL
        .iter()
        .chain(extra)
        .flat_map(|s| ["--set".to_string(), s.to_string()])
        .collect()
}

pub fn gtseg(args: &[&str]) -> Output {
    gtseg_env(args, &[])
}

pub fn gtseg_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gtseg"));
    cmd.args(args).env_remove("GTSEG_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Every file under `dir`, relative path → contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
