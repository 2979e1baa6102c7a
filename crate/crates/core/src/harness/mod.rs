//! Experiment runner: builds one world per robot, runs local imitation
//! learning, centralized imitation learning, the PARL round and the two
//! image-level augmentation baselines on identical splits, and writes every
//! model, dataset and report to an output directory.

pub mod baselines;
mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use baselines::{
    apply_crop, baseline_color_jitter, baseline_random_resized_crop, qualitative_row, random_crop_window,
    AugmentedLayout, CropWindow, QualitativeRow,
};
pub use config::{Baselines, ExperimentConfig, Seeds};
pub use report::{render_markdown, results_csv};

use crate::codec::{self, Kind};
use crate::dat::{fit_scorer, AugmentConfig, Layout, ScorerConfig};
use crate::error::{Error, Result};
use crate::policy::{evaluate, train_local, EvaluationReport, PolicyModel};
use crate::protocol::sim::{run_round, RobotData, RoundConfig, RoundReport};
use crate::protocol::{CloudConfig, RobotConfig};
use crate::rng::{derive, rng_for};
use crate::style::{fit_style_pooled, StyleModel};
use crate::world::{DrivingSample, StyleId, TaskType, World, WorldParams};

/// Style id of the centralized learner's pooled palette.
pub const CENTRAL_STYLE: StyleId = StyleId(u16::MAX - 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    LocalIl,
    CentralizedIl,
    Parl,
    /// The cloud's model before local fine-tuning.
    ParlShared,
    ColorJitter,
    RandomCrop,
}

impl Approach {
    pub const ALL: [Approach; 6] = [
        Approach::LocalIl,
        Approach::CentralizedIl,
        Approach::Parl,
        Approach::ParlShared,
        Approach::ColorJitter,
        Approach::RandomCrop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::LocalIl => "local-il",
            Approach::CentralizedIl => "centralized-il",
            Approach::Parl => "parl",
            Approach::ParlShared => "parl-shared",
            Approach::ColorJitter => "color-jitter",
            Approach::RandomCrop => "random-crop",
        }
    }

    pub fn from_name(s: &str) -> Option<Approach> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResult {
    pub robot: u16,
    pub approach: Approach,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub count: usize,
    pub mae: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotSummary {
    pub robot: u16,
    pub style: u16,
    pub train: usize,
    pub held_out: usize,
    /// SHA-256 of the split's `PARLDS1` encoding.
    pub train_hash: String,
    pub held_out_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSummary {
    pub fan_out_requested: usize,
    pub fan_out_achieved: f64,
    pub source_layouts: usize,
    pub attempts: usize,
    pub insertion_failures: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub acceptance_rate: f64,
    pub scenarios: usize,
    pub labeled: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub participants: Vec<u16>,
    pub dropped: BTreeMap<u16, String>,
    pub shared_deliveries: BTreeMap<u16, usize>,
    pub frames: usize,
    pub bytes: usize,
    pub violations: usize,
    pub duplicates: usize,
    pub cloud_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub robots: Vec<RobotSummary>,
    pub results: Vec<ApproachResult>,
    pub overall: BTreeMap<Approach, Overall>,
    pub augmentation: Option<AugmentationSummary>,
    pub qualitative: Vec<QualitativeRow>,
    pub round: RoundSummary,
    pub checks: Vec<Check>,
}

impl ComparisonReport {
    pub fn result(&self, robot: u16, approach: Approach) -> Option<&EvaluationReport> {
        self.results
            .iter()
            .find(|r| r.robot == robot && r.approach == approach)
            .map(|r| &r.report)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// SHA-256 over the dataset file encoding.
pub fn split_hash(samples: &[DrivingSample]) -> Result<String> {
    Ok(hex::encode(Sha256::digest(codec::encode_dataset(samples)?)))
}

/// One world per robot (robot `r` renders with built-in style `r`), split
/// per task into training and held-out samples. Training labels carry the
/// demonstration noise; held-out labels are exact.
pub fn generate_robot_data(config: &ExperimentConfig) -> Result<Vec<RobotData>> {
    config.validate()?;
    let world = World::with_builtin_styles(WorldParams::default(), config.robots)?;
    let seed = config.seeds.world;
    let held = config.held_out_per_task();
    let mut out = Vec::new();
    for r in 0..config.robots {
        let mut data = RobotData {
            id: r,
            train: Vec::new(),
            held_out: Vec::new(),
        };
        for task in TaskType::ALL {
            let t = task.index() as u64;
            let mut order: Vec<usize> = (0..config.samples_per_task).collect();
            let mut rng = rng_for(seed, &[r as u64, t, 0x5B17]);
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for (rank, &i) in order.iter().enumerate() {
                let mut s = world
                    .generate(StyleId(r), task, derive(seed, &[r as u64, t, i as u64]))
                    .map_err(|e| e.at("generate", format!("robot-{r}")))?;
                if rank < held {
                    data.held_out.push(s);
                } else {
                    if config.demo_noise > 0.0 {
                        let n = rng_for(seed, &[r as u64, t, i as u64, 0xD0])
                            .gen_range(-config.demo_noise..=config.demo_noise);
                        let l = s.label.expect("generated samples are labeled") as f64;
                        s.label = Some((l + n).clamp(0.0, 1.0) as f32);
                    }
                    data.train.push(s);
                }
            }
        }
        out.push(data);
    }
    Ok(out)
}

fn robot_config(c: &ExperimentConfig) -> RobotConfig {
    RobotConfig {
        lambda: c.lambda,
        beta: c.beta,
        fail_threshold: c.fail_threshold,
        ..RobotConfig::default()
    }
}

fn cloud_config(c: &ExperimentConfig) -> CloudConfig {
    CloudConfig {
        augment: AugmentConfig {
            fan_out: c.fan_out,
            ..AugmentConfig::default()
        },
        threshold: c.threshold,
        lambda: c.lambda,
        weighting: c.weighting(),
        exclude_self: c.exclude_self,
        per_robot_shared: c.per_robot_shared,
        ..CloudConfig::default()
    }
}

pub fn round_config(c: &ExperimentConfig) -> RoundConfig {
    RoundConfig {
        robot: robot_config(c),
        cloud: cloud_config(c),
        seed: derive(c.seeds.augment, &[c.seeds.protocol]),
        dropout: c.dropout.clone(),
        ..RoundConfig::default()
    }
}

/// Everything a run produces, before it is written out.
pub struct Experiment {
    pub report: ComparisonReport,
    pub data: Vec<RobotData>,
    pub round: RoundReport,
    /// Models by file stem.
    pub models: BTreeMap<String, PolicyModel>,
    pub styles: BTreeMap<String, StyleModel>,
}

fn model_stem(robot: Option<u16>, approach: Approach) -> String {
    match robot {
        Some(r) => format!("robot-{r}-{}", approach.name()),
        None => approach.name().to_string(),
    }
}

fn overall(results: &[&EvaluationReport]) -> Overall {
    let count: usize = results.iter().map(|r| r.count).sum();
    let n = count.max(1) as f64;
    Overall {
        count,
        mae: results.iter().map(|r| r.mae * r.count as f64).sum::<f64>() / n,
        failure_rate: results.iter().map(|r| r.failure_rate * r.count as f64).sum::<f64>() / n,
    }
}

fn baseline_models(
    c: &ExperimentConfig,
    d: &RobotData,
    style: &StyleModel,
    approach: Approach,
) -> Result<(PolicyModel, Vec<DrivingSample>)> {
    let mut augmented = Vec::new();
    for (k, s) in d.train.iter().enumerate() {
        for j in 0..c.fan_out {
            let seed = derive(c.seeds.augment, &[d.id as u64, k as u64, j as u64, approach as u64]);
            augmented.push(match approach {
                Approach::ColorJitter => baseline_color_jitter(s, c.baselines.jitter_magnitude, seed),
                _ => baseline_random_resized_crop(s, c.baselines.crop_min_scale, seed),
            });
        }
    }
    let all: Vec<DrivingSample> = d.train.iter().chain(&augmented).cloned().collect();
    Ok((train_local(&all, style, c.lambda)?, augmented))
}

/// Runs every approach. Pure in the config; writes nothing.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let data = generate_robot_data(config)?;
    let round = run_round(data.clone(), round_config(config)).map_err(|e| e.at("parl-round", "cloud"))?;

    let mut results = Vec::new();
    let mut models = BTreeMap::new();
    let mut styles = BTreeMap::new();
    let mut robots = Vec::new();
    let ev = |m: &PolicyModel, d: &RobotData, s: &StyleModel, node: &str| {
        evaluate(m, &d.held_out, s, config.fail_threshold).map_err(|e| e.at("evaluate", node))
    };

    // centralized learner sees every robot's raw training scenes
    let pooled: Vec<DrivingSample> = data.iter().flat_map(|d| d.train.iter().cloned()).collect();
    let central_style = fit_style_pooled(&pooled, CENTRAL_STYLE).map_err(|e| e.at("centralized-il", "cloud"))?;
    let central = train_local(&pooled, &central_style, config.lambda).map_err(|e| e.at("centralized-il", "cloud"))?;

    let mut qual_sources: Vec<Layout> = Vec::new();
    let mut jitter_out = Vec::new();
    let mut crop_out = Vec::new();
    let mut source_offset = BTreeMap::new();

    for d in &data {
        let node = format!("robot-{}", d.id);
        robots.push(RobotSummary {
            robot: d.id,
            style: d.id,
            train: d.train.len(),
            held_out: d.held_out.len(),
            train_hash: split_hash(&d.train)?,
            held_out_hash: split_hash(&d.held_out)?,
        });
        let Some(upload) = round.uploads.get(&d.id) else {
            continue;
        };
        let style = &upload.style;
        styles.insert(format!("robot-{}-style", d.id), style.clone());
        source_offset.insert(d.id, qual_sources.len());
        qual_sources.extend(upload.layouts.iter().cloned());

        results.push(ApproachResult {
            robot: d.id,
            approach: Approach::CentralizedIl,
            report: ev(&central, d, &central_style, &node)?,
        });
        let mut record = |approach: Approach, model: &PolicyModel, s: &StyleModel| -> Result<()> {
            results.push(ApproachResult {
                robot: d.id,
                approach,
                report: ev(model, d, s, &node)?,
            });
            models.insert(model_stem(Some(d.id), approach), model.clone());
            Ok(())
        };
        record(Approach::LocalIl, &upload.policy, style)?;
        if let Some(ack) = round.acks.get(&d.id) {
            record(Approach::Parl, &ack.policy, style)?;
        }
        if let Some((_, shared)) = round
            .outcome
            .as_ref()
            .and_then(|o| o.shared.iter().find(|(r, _)| *r == d.id))
        {
            record(Approach::ParlShared, shared, style)?;
        }
        for (on, approach, out) in [
            (config.baselines.color_jitter, Approach::ColorJitter, &mut jitter_out),
            (config.baselines.random_crop, Approach::RandomCrop, &mut crop_out),
        ] {
            if !on {
                continue;
            }
            let (model, augmented) =
                baseline_models(config, d, style, approach).map_err(|e| e.at(approach.name(), node.as_str()))?;
            record(approach, &model, style)?;
            let base = source_offset[&d.id];
            for (k, a) in augmented.iter().enumerate() {
                let src = &d.train[k / config.fan_out];
                let warp = (approach == Approach::RandomCrop).then(|| {
                    random_crop_window(
                        src.semantic.width(),
                        src.semantic.height(),
                        config.baselines.crop_min_scale,
                        derive(
                            config.seeds.augment,
                            &[
                                d.id as u64,
                                (k / config.fan_out) as u64,
                                (k % config.fan_out) as u64,
                                approach as u64,
                            ],
                        ),
                    )
                });
                out.push(AugmentedLayout {
                    source: base + k / config.fan_out,
                    layout: (a.semantic.clone(), a.instances.clone()),
                    warp,
                });
            }
        }
    }
    models.insert(model_stem(None, Approach::CentralizedIl), central);
    styles.insert("centralized-style".into(), central_style);

    let mut overall_map = BTreeMap::new();
    for a in Approach::ALL {
        let rs: Vec<&EvaluationReport> = results.iter().filter(|r| r.approach == a).map(|r| &r.report).collect();
        if !rs.is_empty() {
            overall_map.insert(a, overall(&rs));
        }
    }

    let mut qualitative = Vec::new();
    let mut augmentation = None;
    if qual_sources.len() >= 10 {
        let scorer = fit_scorer(&qual_sources, ScorerConfig::default()).map_err(|e| e.at("qualitative", "harness"))?;
        if config.baselines.color_jitter {
            qualitative.push(qualitative_row("color-jitter", &qual_sources, &jitter_out, &scorer));
        }
        if config.baselines.random_crop {
            qualitative.push(qualitative_row("random-crop", &qual_sources, &crop_out, &scorer));
        }
        if let Some(o) = &round.outcome {
            let dat: Vec<AugmentedLayout> = o
                .plan
                .per_robot
                .iter()
                .flat_map(|ra| {
                    let base = source_offset[&ra.robot];
                    ra.candidates.iter().map(move |c| AugmentedLayout {
                        source: base + (c.source_sample_id & 0xFFFF_FFFF) as usize,
                        layout: c.layout(),
                        warp: None,
                    })
                })
                .collect();
            qualitative.push(qualitative_row("dat", &qual_sources, &dat, &scorer));
        }
    }
    if let Some(o) = &round.outcome {
        let st = &o.stats;
        augmentation = Some(AugmentationSummary {
            fan_out_requested: config.fan_out,
            fan_out_achieved: st.candidates as f64 / qual_sources.len().max(1) as f64,
            source_layouts: qual_sources.len(),
            attempts: st.augment.attempts,
            insertion_failures: st.augment.insertion_failures,
            accepted: st.augment.accepted,
            rejected: st.augment.rejected,
            acceptance_rate: st.augment.acceptance_rate(),
            scenarios: st.scenarios,
            labeled: st.labeled,
            pool: st.pool,
        });
    }

    let round_summary = RoundSummary {
        participants: round.participants(),
        dropped: round.drop_reasons.clone(),
        shared_deliveries: round.shared_received.clone(),
        frames: round.frames,
        bytes: round.bytes,
        violations: round.violations(),
        duplicates: round.duplicates(),
        cloud_error: round.cloud_error.clone(),
    };
    let mut report = ComparisonReport {
        robots,
        results,
        overall: overall_map,
        augmentation,
        qualitative,
        round: round_summary,
        checks: Vec::new(),
    };
    report.checks = acceptance_checks(&report);
    Ok(Experiment {
        report,
        data,
        round,
        models,
        styles,
    })
}

/// Directional checks: PARL beats local IL's error on every robot and cuts
/// its failure rate by at least 30%, and PARL's overall error does not
/// exceed centralized IL's.
pub fn acceptance_checks(report: &ComparisonReport) -> Vec<Check> {
    let mut per_robot = Vec::new();
    let mut ok = !report.robots.is_empty();
    for r in &report.robots {
        match (
            report.result(r.robot, Approach::LocalIl),
            report.result(r.robot, Approach::Parl),
        ) {
            (Some(l), Some(p)) => {
                let pass = p.failure_rate < l.failure_rate && p.failure_rate <= 0.7 * l.failure_rate;
                ok &= pass;
                per_robot.push(format!(
                    "robot-{}: local {:.4} -> parl {:.4}{}",
                    r.robot,
                    l.failure_rate,
                    p.failure_rate,
                    if pass { "" } else { " (insufficient)" }
                ));
            }
            _ => {
                ok = false;
                per_robot.push(format!("robot-{}: no PARL result", r.robot));
            }
        }
    }
    let mae = match (
        report.overall.get(&Approach::Parl),
        report.overall.get(&Approach::CentralizedIl),
    ) {
        (Some(p), Some(c)) => {
            let pass = p.mae < c.mae || (p.mae == c.mae && p.mae < 0.02);
            Check {
                name: "parl-mae-vs-centralized".into(),
                passed: pass,
                detail: format!("parl {:.4} vs centralized {:.4}", p.mae, c.mae),
            }
        }
        _ => Check {
            name: "parl-mae-vs-centralized".into(),
            passed: false,
            detail: "missing results".into(),
        },
    };
    let mut below_local = !report.robots.is_empty();
    let mut mae_detail = Vec::new();
    for r in &report.robots {
        let (l, p) = (
            report.result(r.robot, Approach::LocalIl),
            report.result(r.robot, Approach::Parl),
        );
        below_local &= matches!((l, p), (Some(l), Some(p)) if p.mae < l.mae);
        if let (Some(l), Some(p)) = (l, p) {
            mae_detail.push(format!("robot-{}: local {:.4} -> parl {:.4}", r.robot, l.mae, p.mae));
        }
    }
    vec![
        Check {
            name: "parl-mae-below-local".into(),
            passed: below_local,
            detail: mae_detail.join("; "),
        },
        Check {
            name: "parl-failure-reduction".into(),
            passed: ok,
            detail: per_robot.join("; "),
        },
        mae,
    ]
}

/// Output file layout.
pub struct OutputPaths {
    pub root: PathBuf,
}

impl OutputPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputPaths { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn dataset(&self, robot: u16, split: &str) -> PathBuf {
        self.root.join("data").join(format!("robot-{robot}-{split}.parlds"))
    }
    pub fn model(&self, stem: &str) -> PathBuf {
        self.root.join("models").join(format!("{stem}.parldm"))
    }
    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn report_md(&self) -> PathBuf {
        self.root.join("report.md")
    }
    pub fn round_log(&self) -> PathBuf {
        self.root.join("round-log.json")
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes datasets for every robot.
pub fn write_datasets(paths: &OutputPaths, data: &[RobotData]) -> Result<()> {
    for d in data {
        codec::save_dataset(&paths.dataset(d.id, "train"), &d.train)?;
        codec::save_dataset(&paths.dataset(d.id, "held-out"), &d.held_out)?;
    }
    Ok(())
}

/// Writes config, datasets, models, round log and reports under `root`.
pub fn write_experiment(root: &Path, config: &ExperimentConfig, exp: &Experiment) -> Result<()> {
    let paths = OutputPaths::new(root);
    write(&paths.config(), &config.to_toml()?)?;
    write_datasets(&paths, &exp.data)?;
    for (stem, m) in &exp.models {
        codec::save_model(&paths.model(stem), Kind::Policy, m)?;
    }
    for (stem, s) in &exp.styles {
        codec::save_model(&paths.model(stem), Kind::Style, s)?;
    }
    write(&paths.round_log(), &serde_json::to_string_pretty(&exp.round.log)?)?;
    write(&paths.report_json(), &serde_json::to_string_pretty(&exp.report)?)?;
    write(&paths.report_csv(), &results_csv(&exp.report)?)?;
    write(&paths.report_md(), &render_markdown(&exp.report))?;
    Ok(())
}

/// Re-scores the persisted models on the persisted held-out sets.
pub fn reevaluate(root: &Path) -> Result<Vec<ApproachResult>> {
    let paths = OutputPaths::new(root);
    let config = ExperimentConfig::load(&paths.config())?;
    let report: ComparisonReport = serde_json::from_str(&std::fs::read_to_string(paths.report_json())?)?;
    let central_style: StyleModel = codec::load_model(&paths.model("centralized-style"), Kind::Style)?;
    let mut out = Vec::new();
    for r in &report.results {
        let held = codec::load_dataset(&paths.dataset(r.robot, "held-out"))?;
        let (stem, style) = if r.approach == Approach::CentralizedIl {
            (model_stem(None, r.approach), central_style.clone())
        } else {
            (
                model_stem(Some(r.robot), r.approach),
                codec::load_model(&paths.model(&format!("robot-{}-style", r.robot)), Kind::Style)?,
            )
        };
        let model: PolicyModel = codec::load_model(&paths.model(&stem), Kind::Policy)?;
        out.push(ApproachResult {
            robot: r.robot,
            approach: r.approach,
            report: evaluate(&model, &held, &style, config.fail_threshold)?,
        });
    }
    Ok(out)
}

/// Loads a written report.
pub fn load_report(root: &Path) -> Result<ComparisonReport> {
    let text = std::fs::read_to_string(OutputPaths::new(root).report_json())
        .map_err(|e| Error::Config(format!("no report under {}: {e}", root.display())))?;
    Ok(serde_json::from_str(&text)?)
}
