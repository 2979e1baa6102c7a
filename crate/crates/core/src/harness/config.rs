use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Weighting, DEFAULT_FAIL_THRESHOLD};
use crate::protocol::sim::DropoutPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Scenes, demonstration noise and held-out splits.
    pub world: u64,
    /// DAT insertions, renders and baseline augmenters.
    pub augment: u64,
    /// Mixed into the cloud's seed for the round.
    pub protocol: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    pub color_jitter: bool,
    pub random_crop: bool,
    /// Largest per-channel gain deviation and offset of the jitter.
    pub jitter_magnitude: f64,
    /// Smallest crop side as a fraction of the grid side.
    pub crop_min_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub robots: u16,
    pub samples_per_task: usize,
    /// Fraction of each robot's samples per task held out for evaluation.
    pub holdout: f64,
    /// Half-width of the uniform noise on human training labels.
    pub demo_noise: f64,
    pub fan_out: usize,
    /// Scorer acceptance threshold.
    pub threshold: f64,
    pub beta: f64,
    pub lambda: f64,
    pub fail_threshold: f64,
    /// Palette-distance scale of the labeling weights; 0 means uniform.
    pub affinity_sigma: f64,
    pub exclude_self: bool,
    pub per_robot_shared: bool,
    pub seeds: Seeds,
    pub baselines: Baselines,
    #[serde(default)]
    pub dropout: DropoutPlan,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            robots: 3,
            samples_per_task: 20,
            holdout: 0.3,
            demo_noise: 0.1,
            fan_out: 2,
            threshold: 0.5,
            beta: 0.8,
            lambda: 1e-3,
            fail_threshold: DEFAULT_FAIL_THRESHOLD,
            affinity_sigma: 0.1,
            exclude_self: false,
            per_robot_shared: false,
            seeds: Seeds {
                world: 2021,
                augment: 7,
                protocol: 1,
            },
            baselines: Baselines {
                color_jitter: true,
                random_crop: true,
                jitter_magnitude: 0.1,
                crop_min_scale: 0.7,
            },
            dropout: DropoutPlan::default(),
            output: PathBuf::from("parl-out"),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.robots >= 1 && self.robots < 256, || {
            format!("robots = {} must be in 1..=255", self.robots)
        })?;
        check(self.samples_per_task >= 2, || {
            "samples_per_task must be at least 2".into()
        })?;
        check(self.holdout > 0.0 && self.holdout < 1.0, || {
            format!("holdout = {} must be in (0,1)", self.holdout)
        })?;
        let held = self.held_out_per_task();
        check(held >= 1 && held < self.samples_per_task, || {
            format!("holdout {} leaves no train or no test samples", self.holdout)
        })?;
        check((0.0..0.5).contains(&self.demo_noise), || {
            "demo_noise must be in [0, 0.5)".into()
        })?;
        check(self.fan_out >= 1, || "fan_out must be at least 1".into())?;
        check((0.0..=1.0).contains(&self.threshold), || {
            "threshold must be in [0,1]".into()
        })?;
        check((0.0..=1.0).contains(&self.beta), || "beta must be in [0,1]".into())?;
        check(self.lambda.is_finite() && self.lambda > 0.0, || {
            "lambda must be positive".into()
        })?;
        check(self.fail_threshold > 0.0 && self.fail_threshold < 1.0, || {
            "fail_threshold must be in (0,1)".into()
        })?;
        check(self.affinity_sigma.is_finite() && self.affinity_sigma >= 0.0, || {
            "affinity_sigma must be >= 0".into()
        })?;
        check((0.0..=1.0).contains(&self.baselines.jitter_magnitude), || {
            "jitter_magnitude must be in [0,1]".into()
        })?;
        check(
            self.baselines.crop_min_scale > 0.5 && self.baselines.crop_min_scale <= 1.0,
            || "crop_min_scale must be in (0.5,1]".into(),
        )?;
        Ok(())
    }

    pub fn held_out_per_task(&self) -> usize {
        (self.samples_per_task as f64 * self.holdout).round() as usize
    }

    pub fn weighting(&self) -> Weighting {
        if self.affinity_sigma == 0.0 {
            Weighting::Uniform
        } else {
            Weighting::StyleAffinity {
                sigma: self.affinity_sigma,
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}
