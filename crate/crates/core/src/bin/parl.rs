use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use parl::harness::{
    generate_robot_data, load_report, reevaluate, render_markdown, results_csv, run_experiment, split_hash,
    write_datasets, write_experiment, ExperimentConfig, OutputPaths, RobotSummary,
};
use parl::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CHECK: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "parl", version, about = "Peer-assisted robotic learning experiments")]
struct Cli {
    /// Output root; overrides the config file's `output`.
    #[arg(long, global = true, env = "PARL_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every robot's world and write the train/held-out datasets.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write a JSON mirror of each dataset.
        #[arg(long)]
        json: bool,
    },
    /// Run all approaches and write models and reports.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Exit with status 2 unless every acceptance check passes.
        #[arg(long)]
        check: bool,
    },
    /// Re-score the saved models on the saved held-out sets.
    Eval {
        /// Exit with status 2 if any score differs from report.json.
        #[arg(long)]
        check: bool,
    },
    /// Render report.json as markdown (or CSV).
    Report {
        #[arg(long, value_parser = ["md", "csv", "json"], default_value = "md")]
        format: String,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    robots: Option<u16>,
    #[arg(long)]
    samples_per_task: Option<usize>,
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    demo_noise: Option<f64>,
    #[arg(long)]
    fan_out: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    fail_threshold: Option<f64>,
    #[arg(long)]
    affinity_sigma: Option<f64>,
    #[arg(long)]
    exclude_self: Option<bool>,
    #[arg(long)]
    per_robot_shared: Option<bool>,
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long)]
    augment_seed: Option<u64>,
    #[arg(long)]
    protocol_seed: Option<u64>,
    #[arg(long)]
    color_jitter: Option<bool>,
    #[arg(long)]
    random_crop: Option<bool>,
}

macro_rules! overlay {
    ($args:expr, $c:expr, $($flag:ident => $($field:ident).+),* $(,)?) => {
        $(if let Some(v) = $args.$flag { $c.$($field).+ = v; })*
    };
}

impl ConfigArgs {
    fn resolve(&self, out: Option<&Path>) -> parl::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        overlay!(self, c,
            robots => robots,
            samples_per_task => samples_per_task,
            holdout => holdout,
            demo_noise => demo_noise,
            fan_out => fan_out,
            threshold => threshold,
            beta => beta,
            lambda => lambda,
            fail_threshold => fail_threshold,
            affinity_sigma => affinity_sigma,
            exclude_self => exclude_self,
            per_robot_shared => per_robot_shared,
            world_seed => seeds.world,
            augment_seed => seeds.augment,
            protocol_seed => seeds.protocol,
            color_jitter => baselines.color_jitter,
            random_crop => baselines.random_crop,
        );
        if let Some(o) = out {
            c.output = o.to_path_buf();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct Failure {
    stage: String,
    node: String,
    error: String,
}

impl Failure {
    fn of(e: &Error) -> Self {
        match e {
            Error::Stage { stage, node, source } => Failure {
                stage: stage.clone(),
                node: node.clone(),
                error: source.to_string(),
            },
            other => Failure {
                stage: "harness".into(),
                node: "local".into(),
                error: other.to_string(),
            },
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    match e {
        Error::Config(_) => true,
        Error::Stage { source, .. } => is_config_error(source),
        _ => false,
    }
}

fn output_root(cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ExperimentConfig::default().output)
}

fn gen(config: &ExperimentConfig, json: bool) -> parl::Result<()> {
    let data = generate_robot_data(config)?;
    let paths = OutputPaths::new(&config.output);
    std::fs::create_dir_all(&config.output)?;
    std::fs::write(paths.config(), config.to_toml()?)?;
    write_datasets(&paths, &data)?;
    let mut summary = Vec::new();
    for d in &data {
        if json {
            for (split, set) in [("train", &d.train), ("held-out", &d.held_out)] {
                std::fs::write(
                    paths.dataset(d.id, split).with_extension("json"),
                    parl::codec::dataset_json(set)?,
                )?;
            }
        }
        summary.push(RobotSummary {
            robot: d.id,
            style: d.id,
            train: d.train.len(),
            held_out: d.held_out.len(),
            train_hash: split_hash(&d.train)?,
            held_out_hash: split_hash(&d.held_out)?,
        });
    }
    std::fs::write(
        config.output.join("data").join("splits.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    for s in &summary {
        println!(
            "robot {}: {} train, {} held-out ({})",
            s.robot,
            s.train,
            s.held_out,
            &s.train_hash[..16]
        );
    }
    Ok(())
}

fn run(config: &ExperimentConfig, check: bool) -> parl::Result<u8> {
    let exp = run_experiment(config)?;
    write_experiment(&config.output, config, &exp)?;
    for (a, o) in &exp.report.overall {
        println!(
            "{:<15} mae {:.4}  failure rate {:6.2}%",
            a.name(),
            o.mae,
            100.0 * o.failure_rate
        );
    }
    for c in &exp.report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if check && !exp.report.all_checks_pass() {
        EXIT_CHECK
    } else {
        0
    })
}

fn eval(root: &Path, check: bool) -> parl::Result<u8> {
    let stored = load_report(root)?;
    let fresh = reevaluate(root)?;
    let mut mismatches = 0;
    for (old, new) in stored.results.iter().zip(&fresh) {
        let same = old.report == new.report;
        mismatches += usize::from(!same);
        println!(
            "robot {} {:<15} mae {:.4}  failure rate {:6.2}%{}",
            new.robot,
            new.approach.name(),
            new.report.mae,
            100.0 * new.report.failure_rate,
            if same { "" } else { "  (differs from report.json)" }
        );
    }
    Ok(if check && (mismatches > 0 || stored.results.len() != fresh.len()) {
        EXIT_CHECK
    } else {
        0
    })
}

fn report(root: &Path, format: &str) -> parl::Result<()> {
    let r = load_report(root)?;
    match format {
        "csv" => print!("{}", results_csv(&r)?),
        "json" => println!("{}", serde_json::to_string_pretty(&r)?),
        _ => print!("{}", render_markdown(&r)),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let out = cli.out.as_deref();
    let mut root = output_root(out);
    let result = match &cli.command {
        Command::Gen { config, json } => config.resolve(out).and_then(|c| {
            root = c.output.clone();
            gen(&c, *json).map(|_| 0)
        }),
        Command::Run { config, check } => config.resolve(out).and_then(|c| {
            root = c.output.clone();
            run(&c, *check)
        }),
        Command::Eval { check } => eval(&root, *check),
        Command::Report { format } => report(&root, format).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) if is_config_error(&e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            let f = Failure::of(&e);
            eprintln!("failed at {} on {}: {}", f.stage, f.node, f.error);
            if std::fs::create_dir_all(&root).is_ok() {
                if let Ok(text) = serde_json::to_string_pretty(&f) {
                    let _ = std::fs::write(root.join("failure.json"), text);
                }
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
