//! Driving policies: a fixed featurizer over segmented layouts, closed-form
//! ridge regression for torque, proximal fine-tuning toward a shared model,
//! ensemble labeling by local policies, and per-task evaluation.

mod crowd;
mod eval;
mod features;
mod ridge;

pub use crowd::{aggregate, crowdsource_labels, member_prediction, LabelItem, Member, Weighting};
pub use eval::{evaluate, EvaluationReport, TaskError, DEFAULT_FAIL_THRESHOLD, NEUTRAL_TORQUE};
pub use features::{
    featurize, featurize_layout, featurize_scenario, FeatureVector, FEATURE_LEN, LANE_OFFSET, LANE_UNIT,
    OBSTACLE_OFFSET, OCCUPANCY_LEN, POOL,
};
pub use ridge::{fine_tune, train, Example, PolicyModel, TrainingMeta, WEIGHT_LEN};

use crate::error::Result;
use crate::style::StyleModel;
use crate::world::DrivingSample;

/// Training rows for labeled samples, perceived through `style`. Samples
/// that cannot be featurized or carry no label are skipped.
pub fn examples_from(samples: &[DrivingSample], style: &StyleModel) -> Vec<Example> {
    samples
        .iter()
        .filter_map(|s| {
            let f = featurize(s, style).ok()?;
            Some(Example {
                features: f,
                torque: s.label? as f64,
                provenance: s.provenance,
            })
        })
        .collect()
}

/// Local imitation learning on one robot's samples.
pub fn train_local(samples: &[DrivingSample], style: &StyleModel, lambda: f64) -> Result<PolicyModel> {
    train(&examples_from(samples, style), lambda)
}
