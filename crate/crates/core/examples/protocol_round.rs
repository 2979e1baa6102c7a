//! Runs one PARL round for three robots over the simulated network, with
//! robot 2 dropping out before labeling, and prints the message log.

use parl::harness::{generate_robot_data, round_config, ExperimentConfig};
use parl::protocol::sim::{run_round, Event};

fn main() -> parl::Result<()> {
    let mut config = ExperimentConfig::default();
    config.dropout.before_labeling.insert(2);
    let data = generate_robot_data(&config)?;
    let report = run_round(data, round_config(&config))?;
    for e in &report.log {
        match e {
            Event::Sent { .. } | Event::DroppedOut { .. } | Event::Deadline { .. } => println!("{e:?}"),
            _ => {}
        }
    }
    println!("participants {:?}", report.participants());
    println!("shared models received {:?}", report.shared_received);
    for (robot, ack) in &report.acks {
        println!(
            "robot {robot}: held-out mae {:.4}, failure rate {:.1}%",
            ack.report.mae,
            100.0 * ack.report.failure_rate
        );
    }
    println!(
        "{} frames, {} bytes, {} passes",
        report.frames, report.bytes, report.passes
    );
    Ok(())
}
