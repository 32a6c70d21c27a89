//! Drives the command line in process: generate data, train, evaluate.

use homoenc::cli;

fn main() {
    let dir = std::env::temp_dir().join("homoenc-pipeline");
    let dir = dir.display();
    let steps = [
        format!("gen-data --family gaussian --classes 30 --per-class 30 --seed 1 --out {dir}/data.jsonl"),
        format!("train --objective vhe --d-size 5 --epochs 30 --runs 1 --data {dir}/data.jsonl --out {dir}/run"),
        format!("eval --d-sizes 1,5 --model {dir}/run/model.json --data {dir}/data.jsonl --out {dir}/metrics.csv"),
    ];
    for step in &steps {
        let code = cli::run(std::iter::once("homoenc").chain(step.split_whitespace()));
        println!("homoenc {step}\n  exit {code}");
        if code != 0 {
            std::process::exit(code);
        }
    }
    let csv = std::fs::read_to_string(format!("{dir}/metrics.csv")).unwrap_or_default();
    print!("{csv}");
}
