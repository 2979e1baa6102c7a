//! The PARL round as message-passing nodes.
//!
//! Robots segment their data, fit a style, train a local policy and upload
//! layouts, style and policy. The cloud augments every robot's layouts,
//! renders the accepted candidates in every received style, asks every
//! robot to label them, trains the shared model on the pooled labels and
//! sends it back. Robots fine-tune it on their own data and acknowledge
//! with a held-out report.
//!
//! [`cloud_round`] runs the cloud's work as one pure function; [`sim`] runs
//! the whole round over a simulated network.

mod roles;
pub mod sim;
mod wire;

use serde::{Deserialize, Serialize};

pub use roles::{
    cloud_augment, cloud_round, cloud_train, robot_fine_tune, robot_local_compute, robot_predictions, CloudConfig,
    CloudOutcome, CloudPlan, CloudStats, LabelTask, RobotAugment, RobotConfig,
};
pub use wire::{decode, encode, Envelope, ENVELOPE_LEN, MESSAGE_MAGIC, TAGS};

use crate::dat::{AugmentationCandidate, Layout};
use crate::policy::{EvaluationReport, PolicyModel};
use crate::style::StyleModel;
use crate::world::Scenario;

/// Node address. On the wire robots are their index and the cloud is
/// `u16::MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Robot(u16),
    Cloud,
}

impl NodeId {
    pub const CLOUD_WIRE: u16 = u16::MAX;

    pub fn to_wire(self) -> u16 {
        match self {
            NodeId::Robot(i) => i,
            NodeId::Cloud => Self::CLOUD_WIRE,
        }
    }

    pub fn from_wire(v: u16) -> Self {
        if v == Self::CLOUD_WIRE {
            NodeId::Cloud
        } else {
            NodeId::Robot(v)
        }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Robot(i) => write!(f, "robot-{i}"),
            NodeId::Cloud => f.write_str("cloud"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upload {
    pub layouts: Vec<Layout>,
    pub style: StyleModel,
    pub policy: PolicyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneAck {
    pub policy: PolicyModel,
    /// Computed on the robot's held-out split.
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    UploadLocal(Upload),
    /// Accepted candidates grown from the receiving robot's layouts; each
    /// carries its score.
    AugmentedSet {
        candidates: Vec<AugmentationCandidate>,
    },
    LabelRequest {
        scenarios: Vec<Scenario>,
    },
    /// One entry per requested scenario; `None` where the robot could not
    /// perceive a road.
    LabelResponse {
        torques: Vec<Option<f64>>,
    },
    SharedModel {
        policy: PolicyModel,
    },
    FineTuneAck(FineTuneAck),
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::UploadLocal(_) => "UploadLocal",
            Message::AugmentedSet { .. } => "AugmentedSet",
            Message::LabelRequest { .. } => "LabelRequest",
            Message::LabelResponse { .. } => "LabelResponse",
            Message::SharedModel { .. } => "SharedModel",
            Message::FineTuneAck(_) => "FineTuneAck",
        }
    }
}

/// Per-node round stage, in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    LocalCompute,
    Uploaded,
    CloudAugment,
    Labeling,
    CloudTrain,
    Dispatched,
    FineTuned,
    Done,
    DroppedOut,
}

impl Stage {
    /// Legal moves: forward in the fixed order, or to `DroppedOut` from any
    /// stage before `Done`.
    pub fn can_advance_to(self, next: Stage) -> bool {
        match next {
            Stage::DroppedOut => self < Stage::Done,
            _ => self != Stage::DroppedOut && next > self,
        }
    }
}
