#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use gstvar::model::{simulate, SimulationInit};
use gstvar::ParameterVector;
use gstvar_cli::io::{data_csv, ModelFile};

pub fn gstvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gstvar"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("GSTVAR_THREADS")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = gstvar(args);
    assert!(out.status.success(), "gstvar {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn write_model(path: &Path, params: &ParameterVector) {
    let names: Vec<String> = (1..=params.order().dim).map(|i| format!("y{i}")).collect();
    std::fs::write(path, ModelFile::from_params(params, &names).to_json().unwrap()).unwrap();
}

pub fn write_data(path: &Path, params: &ParameterVector, steps: usize, seed: u64) {
    let data = simulate(params, steps, &SimulationInit::Regime(0), seed).unwrap();
    std::fs::write(path, data_csv(&data).unwrap()).unwrap();
}

/// Rows of a headed CSV as string cells.
pub fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}
