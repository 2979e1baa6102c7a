use serde::{Deserialize, Serialize};

use super::features::featurize;
use super::ridge::PolicyModel;
use crate::error::{Error, Result};
use crate::style::StyleModel;
use crate::world::{DrivingSample, TaskType};

pub const DEFAULT_FAIL_THRESHOLD: f64 = 0.05;

/// Prediction used when the model cannot perceive a test scene.
pub const NEUTRAL_TORQUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskError {
    pub task: TaskType,
    pub count: usize,
    pub mae: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Indexed by [`TaskType::index`]; tasks absent from the test set have
    /// count 0 and zero error.
    pub per_task: [TaskError; 3],
    pub count: usize,
    pub mae: f64,
    pub failure_rate: f64,
    pub fail_threshold: f64,
    /// Test scenes the model could not segment into a road.
    pub unperceived: usize,
}

impl EvaluationReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "count",
        "mae",
        "failure_rate",
        "turn_mae",
        "turn_failure_rate",
        "avoid_cars_mae",
        "avoid_cars_failure_rate",
        "straight_mae",
        "straight_failure_rate",
        "fail_threshold",
        "unperceived",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.count.to_string(),
            self.mae.to_string(),
            self.failure_rate.to_string(),
        ];
        for t in &self.per_task {
            row.push(t.mae.to_string());
            row.push(t.failure_rate.to_string());
        }
        row.push(self.fail_threshold.to_string());
        row.push(self.unperceived.to_string());
        row
    }

    pub fn task(&self, task: TaskType) -> &TaskError {
        &self.per_task[task.index()]
    }
}

/// Mean absolute torque error and failure rate (error above
/// `fail_threshold`) per task and overall.
pub fn evaluate(
    model: &PolicyModel,
    testset: &[DrivingSample],
    style: &StyleModel,
    fail_threshold: f64,
) -> Result<EvaluationReport> {
    if testset.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let mut abs_err = [0.0f64; 3];
    let mut fails = [0usize; 3];
    let mut counts = [0usize; 3];
    let mut unperceived = 0;
    for s in testset {
        let label = s
            .label
            .ok_or_else(|| Error::Evaluation("test sample has no label".into()))? as f64;
        let pred = match featurize(s, style) {
            Ok(f) => model.predict(&f),
            Err(_) => {
                unperceived += 1;
                NEUTRAL_TORQUE
            }
        };
        let e = (pred - label).abs();
        let t = s.task.index();
        abs_err[t] += e;
        counts[t] += 1;
        if e > fail_threshold {
            fails[t] += 1;
        }
    }
    let per_task = TaskType::ALL.map(|task| {
        let k = task.index();
        let n = counts[k];
        TaskError {
            task,
            count: n,
            mae: if n == 0 { 0.0 } else { abs_err[k] / n as f64 },
            failure_rate: if n == 0 { 0.0 } else { fails[k] as f64 / n as f64 },
        }
    });
    let n = testset.len() as f64;
    Ok(EvaluationReport {
        count: testset.len(),
        mae: per_task.iter().map(|t| t.mae * t.count as f64).sum::<f64>() / n,
        failure_rate: fails.iter().sum::<usize>() as f64 / n,
        per_task,
        fail_threshold,
        unperceived,
    })
}
