//! Drive the full command pipeline programmatically, the same way the
//! `suffixgan` binary does: synth, prepare, train, predict, evaluate, all
//! inside a temporary working directory.
//!
//! ```bash
//! cargo run --release --example cli_pipeline
//! ```

use clap::Parser;
use suffixgan::app::{run, Cli};

fn invoke(workdir: &std::path::Path, config: &std::path::Path, args: &[&str]) {
    let mut full = vec![
        "suffixgan",
        "--workdir",
        workdir.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ];
    full.extend_from_slice(args);
    println!("$ suffixgan {}", args.join(" "));
    run(&Cli::parse_from(full)).expect("pipeline step");
}

fn main() {
    let dir = tempfile::TempDir::new().unwrap();
    let workdir = dir.path();
    let config = workdir.join("config.json");
    std::fs::write(
        &config,
        r#"{"hidden": 32, "depth": 1, "epochs": 40, "batch_size": 32,
            "learning_rate": 0.001, "synth_traces": 80, "k": 3, "seed": 3}"#,
    )
    .unwrap();

    let log = workdir.join("log.csv");
    invoke(workdir, &config, &["synth", "--out", log.to_str().unwrap()]);
    invoke(workdir, &config, &["prepare", "--input", log.to_str().unwrap()]);
    invoke(workdir, &config, &["train"]);
    invoke(workdir, &config, &["predict"]);
    invoke(workdir, &config, &["evaluate"]);

    println!("\nworkspace artifacts:");
    let manifest = std::fs::read_to_string(workdir.join("manifest.json")).unwrap();
    let entries: std::collections::BTreeMap<String, String> =
        serde_json::from_str(&manifest).unwrap();
    for (file, digest) in entries {
        println!("  {file}  sha256:{}...", &digest[..12]);
    }
}
