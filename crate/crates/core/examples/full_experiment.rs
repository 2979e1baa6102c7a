//! Runs the whole comparison on the default configuration and writes the
//! artifacts under `target/parl-example` (or the directory given as the
//! first argument).

use std::path::PathBuf;

use parl::harness::{run_experiment, write_experiment, ExperimentConfig};

fn main() -> parl::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/parl-example"));
    let config = ExperimentConfig {
        output: out.clone(),
        ..ExperimentConfig::default()
    };
    let exp = run_experiment(&config)?;
    write_experiment(&out, &config, &exp)?;
    for (approach, o) in &exp.report.overall {
        println!(
            "{:<15} mae {:.4}  failure rate {:.2}%",
            approach.name(),
            o.mae,
            100.0 * o.failure_rate
        );
    }
    for c in &exp.report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {}", out.display());
    Ok(())
}
