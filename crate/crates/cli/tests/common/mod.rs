//! Fixture corpus setup shared by the end-to-end tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// Copies the pipeline fixture corpus into `dir` and writes a config that
/// uses the mock provider and the replay tracer. Returns the config path.
pub fn fixture_workspace(dir: &Path) -> PathBuf {
    let fx = fixtures().join("pipeline");
    copy_tree(&fx.join("corpus"), &dir.join("corpus"));
    let config = dir.join("opstab.toml");
    let text = format!(
        "corpus = \"corpus\"\n\
         [sandbox]\ntimeout_s = 10\nworkdir = \"work\"\ntracer_command = [{:?}, \"--index\", {:?}]\n\
         [provider]\nmock = {:?}\n\
         [generation]\ntemperatures = [0.0, 0.7]\n",
        env!("CARGO_BIN_EXE_opstab-replay-tracer"),
        fx.join("replay").display().to_string(),
        fx.join("mock_completions.json").display().to_string(),
    );
    std::fs::write(&config, text).unwrap();
    config
}

pub fn opstab(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opstab"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

pub fn run_ids(corpus: &Path) -> Vec<String> {
    let mut ids: Vec<String> = std::fs::read_dir(corpus.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids
}
