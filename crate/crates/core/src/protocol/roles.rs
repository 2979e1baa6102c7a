use serde::{Deserialize, Serialize};

use super::{FineTuneAck, Upload};
use crate::dat::{
    augment_and_transfer, fit_scorer, AugmentConfig, AugmentStats, AugmentationCandidate, Layout, Predictors,
    ScorerConfig,
};
use crate::error::{Error, Result};
use crate::policy::{
    aggregate, evaluate, examples_from, featurize_scenario, fine_tune, member_prediction, train, Example, Member,
    PolicyModel, Weighting, DEFAULT_FAIL_THRESHOLD,
};
use crate::style::{fit_style, style_affinity, StyleModel, DEFAULT_SEPARATION};
use crate::world::{segment, DrivingSample, Provenance, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub lambda: f64,
    pub beta: f64,
    pub fail_threshold: f64,
    pub separation: f32,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            lambda: 1e-3,
            beta: 0.8,
            fail_threshold: DEFAULT_FAIL_THRESHOLD,
            separation: DEFAULT_SEPARATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    pub augment: AugmentConfig,
    /// Calibration of the plausibility scorer.
    pub scorer: ScorerConfig,
    /// Acceptance threshold applied to calibrated scores.
    pub threshold: f64,
    /// Additive smoothing of the where-predictor histograms.
    pub placement_alpha: f64,
    pub lambda: f64,
    pub weighting: Weighting,
    /// Leave the source robot's own policy out when labeling its candidates.
    pub exclude_self: bool,
    /// Train one shared model per robot on the scenarios rendered in its
    /// style instead of one pooled model.
    pub per_robot_shared: bool,
    /// Robots that may fail to upload before the round aborts.
    pub max_missing: usize,
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig {
            augment: AugmentConfig::default(),
            scorer: ScorerConfig::default(),
            threshold: ScorerConfig::default().threshold,
            placement_alpha: 0.5,
            lambda: 1e-3,
            weighting: Weighting::default(),
            exclude_self: false,
            per_robot_shared: false,
            max_missing: usize::MAX,
        }
    }
}

/// Segments every sample through a style fitted on the robot's own data and
/// trains the local policy.
pub fn robot_local_compute(train_set: &[DrivingSample], config: &RobotConfig) -> Result<Upload> {
    if train_set.is_empty() {
        return Err(Error::Fitting("robot has no local data".into()));
    }
    let style = fit_style(train_set, config.separation)?;
    let layouts = train_set.iter().map(|s| segment(&s.scenario, &style)).collect();
    let policy = train(&examples_from(train_set, &style), config.lambda)?;
    Ok(Upload { layouts, style, policy })
}

/// Fine-tunes the shared model on local data and evaluates the result on
/// the held-out split.
pub fn robot_fine_tune(
    shared: &PolicyModel,
    style: &StyleModel,
    train_set: &[DrivingSample],
    held_out: &[DrivingSample],
    config: &RobotConfig,
) -> Result<FineTuneAck> {
    let policy = fine_tune(shared, &examples_from(train_set, style), config.beta, config.lambda)?;
    let report = evaluate(&policy, held_out, style, config.fail_threshold)?;
    Ok(FineTuneAck { policy, report })
}

/// A robot's answers to a label request.
pub fn robot_predictions(policy: &PolicyModel, style: &StyleModel, scenarios: &[Scenario]) -> Vec<Option<f64>> {
    let member = Member {
        policy: policy.clone(),
        style: style.clone(),
    };
    scenarios.iter().map(|s| member_prediction(&member, s)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotAugment {
    pub robot: u16,
    pub candidates: Vec<AugmentationCandidate>,
    pub stats: AugmentStats,
}

/// A rendered candidate waiting for labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTask {
    pub source_robot: u16,
    /// Index into the participant list of the style it is rendered in.
    pub style_of: usize,
    pub scenario: Scenario,
}

/// Everything the cloud produces before labels come back.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPlan {
    /// Participating robots, ascending.
    pub participants: Vec<u16>,
    pub styles: Vec<StyleModel>,
    pub per_robot: Vec<RobotAugment>,
    pub tasks: Vec<LabelTask>,
}

impl CloudPlan {
    pub fn scenarios(&self) -> Vec<Scenario> {
        self.tasks.iter().map(|t| t.scenario.clone()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudStats {
    pub participants: Vec<u16>,
    pub augment: AugmentStats,
    pub candidates: usize,
    pub scenarios: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudOutcome {
    /// Model for each participant, in participant order.
    pub shared: Vec<(u16, PolicyModel)>,
    pub plan: CloudPlan,
    pub stats: CloudStats,
}

/// Fits placement, shape and scorer models on the pooled uploaded layouts,
/// augments each robot's layouts and renders every accepted candidate in
/// every participant's style.
pub fn cloud_augment(uploads: &[(u16, Upload)], config: &CloudConfig, seed: u64) -> Result<CloudPlan> {
    if uploads.is_empty() {
        return Err(Error::Protocol("round has no uploads".into()));
    }
    let mut uploads: Vec<&(u16, Upload)> = uploads.iter().collect();
    uploads.sort_by_key(|(r, _)| *r);
    if uploads.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Protocol("duplicate upload from one robot".into()));
    }
    let all: Vec<Layout> = uploads.iter().flat_map(|(_, u)| u.layouts.iter().cloned()).collect();
    let predictors = Predictors::fit(&all, config.placement_alpha)?;
    let scorer = fit_scorer(&all, config.scorer)?.with_threshold(config.threshold)?;
    let styles: Vec<StyleModel> = uploads.iter().map(|(_, u)| u.style.clone()).collect();

    let mut per_robot = Vec::new();
    let mut tasks = Vec::new();
    for (robot, u) in &uploads {
        let inputs: Vec<(u64, Layout)> = u
            .layouts
            .iter()
            .enumerate()
            .map(|(k, l)| (((*robot as u64) << 32) | k as u64, l.clone()))
            .collect();
        let t = augment_and_transfer(&inputs, &styles, &config.augment, &predictors, &scorer, seed)?;
        for item in t.items {
            tasks.push(LabelTask {
                source_robot: *robot,
                style_of: styles
                    .iter()
                    .position(|s| s.style == item.style)
                    .expect("rendered style"),
                scenario: item.scenario,
            });
        }
        per_robot.push(RobotAugment {
            robot: *robot,
            candidates: t.candidates,
            stats: t.stats,
        });
    }
    Ok(CloudPlan {
        participants: uploads.iter().map(|(r, _)| *r).collect(),
        styles,
        per_robot,
        tasks,
    })
}

/// Aggregates the labels and trains the shared model(s). `answers` holds,
/// per responding robot, its prediction for every task; robots without
/// answers neither label nor receive a model.
pub fn cloud_train(
    plan: &CloudPlan,
    answers: &[(u16, Vec<Option<f64>>)],
    config: &CloudConfig,
) -> Result<CloudOutcome> {
    for (r, a) in answers {
        if a.len() != plan.tasks.len() {
            return Err(Error::Protocol(format!(
                "robot {r} answered {} of {} tasks",
                a.len(),
                plan.tasks.len()
            )));
        }
    }
    let responders: Vec<(usize, &Vec<Option<f64>>)> = answers
        .iter()
        .filter_map(|(r, a)| plan.participants.iter().position(|p| p == r).map(|i| (i, a)))
        .collect();
    if responders.is_empty() {
        return Err(Error::Protocol("no robot answered the label request".into()));
    }
    let mut stats = CloudStats {
        participants: responders.iter().map(|(i, _)| plan.participants[*i]).collect(),
        candidates: plan.per_robot.iter().map(|r| r.candidates.len()).sum(),
        scenarios: plan.tasks.len(),
        ..CloudStats::default()
    };
    for r in &plan.per_robot {
        stats.augment.merge(&r.stats);
    }

    let mut pool: Vec<(usize, Example)> = Vec::new();
    for (k, task) in plan.tasks.iter().enumerate() {
        let style = &plan.styles[task.style_of];
        let (preds, weights): (Vec<Option<f64>>, Vec<f64>) = responders
            .iter()
            .filter(|(i, _)| !(config.exclude_self && plan.participants[*i] == task.source_robot))
            .map(|(i, a)| {
                let w = match config.weighting {
                    Weighting::Uniform => 1.0,
                    Weighting::StyleAffinity { sigma } => style_affinity(style, &plan.styles[*i], sigma),
                };
                (a[k], w)
            })
            .unzip();
        let (Some(label), Ok(features)) = (aggregate(&preds, &weights), featurize_scenario(&task.scenario, style))
        else {
            stats.unlabeled += 1;
            continue;
        };
        stats.labeled += 1;
        pool.push((
            task.style_of,
            Example {
                features,
                torque: label,
                provenance: Provenance::Crowdsourced,
            },
        ));
    }
    stats.pool = pool.len();

    let mut shared = Vec::new();
    if config.per_robot_shared {
        for &(i, _) in &responders {
            let own: Vec<Example> = pool.iter().filter(|(s, _)| *s == i).map(|(_, e)| e.clone()).collect();
            shared.push((plan.participants[i], train(&own, config.lambda)?));
        }
    } else {
        let all: Vec<Example> = pool.into_iter().map(|(_, e)| e).collect();
        let model = train(&all, config.lambda)?;
        for &(i, _) in &responders {
            shared.push((plan.participants[i], model.clone()));
        }
    }
    Ok(CloudOutcome {
        shared,
        plan: plan.clone(),
        stats,
    })
}

/// The cloud's whole round, labeling with the uploaded policies directly.
pub fn cloud_round(uploads: &[(u16, Upload)], config: &CloudConfig, seed: u64) -> Result<CloudOutcome> {
    let plan = cloud_augment(uploads, config, seed)?;
    let scenarios = plan.scenarios();
    let answers: Vec<(u16, Vec<Option<f64>>)> = plan
        .participants
        .iter()
        .map(|r| {
            let u = &uploads.iter().find(|(id, _)| id == r).expect("participant").1;
            (*r, robot_predictions(&u.policy, &u.style, &scenarios))
        })
        .collect();
    cloud_train(&plan, &answers, config)
}
