#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = r#"
schema_version = 1
seed = 3

[desk]
image_size = 32
stage1_positives = 20
stage1_negatives = 20
stage2_positives = 10
stage2_negatives = 10

[desk.backbone]
input_size = 32

[desk.backbone.kind]
kind = "desk_tiny"
widths = [4, 8]
feature_channels = 8
batch_norm = true

[desk.stage_a]
max_epochs = 2
batch_size = 8

[desk.stage_bc]
max_epochs = 2
batch_size = 8
"#;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cxrcascade"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn write_tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY_CONFIG).unwrap();
    p.to_string_lossy().into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
