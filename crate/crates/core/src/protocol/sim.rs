//! In-process network and a deterministic round-robin scheduler.
//!
//! Every channel `(from, to)` is a FIFO of encoded frames. Each scheduler
//! pass lets every robot (ascending index) and then the cloud take one
//! step: local work or one inbound frame. A pass in which nobody moves is
//! the logical deadline; the cloud then proceeds with whatever arrived.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::roles::{cloud_augment, cloud_train, robot_fine_tune, robot_local_compute, robot_predictions};
use super::{
    decode, encode, CloudConfig, CloudOutcome, CloudPlan, Envelope, FineTuneAck, Message, NodeId, RobotConfig, Stage,
    Upload,
};
use crate::error::{Error, Result};
use crate::world::DrivingSample;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotData {
    pub id: u16,
    pub train: Vec<DrivingSample>,
    pub held_out: Vec<DrivingSample>,
}

/// Robots that stop responding at a given point of the round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutPlan {
    #[serde(default)]
    pub before_upload: BTreeSet<u16>,
    #[serde(default)]
    pub before_labeling: BTreeSet<u16>,
    #[serde(default)]
    pub before_fine_tune: BTreeSet<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub robot: RobotConfig,
    pub cloud: CloudConfig,
    pub seed: u64,
    pub dropout: DropoutPlan,
    /// Scheduler passes before the run is declared stuck.
    pub max_passes: usize,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            robot: RobotConfig::default(),
            cloud: CloudConfig::default(),
            seed: 0,
            dropout: DropoutPlan::default(),
            max_passes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Sent {
        from: NodeId,
        to: NodeId,
        seq: u64,
        message: String,
        bytes: usize,
    },
    Stage {
        node: NodeId,
        stage: Stage,
    },
    Duplicate {
        to: NodeId,
        from: NodeId,
        seq: u64,
    },
    Undecodable {
        to: NodeId,
        from: NodeId,
        error: String,
    },
    Violation {
        node: NodeId,
        stage: Stage,
        detail: String,
    },
    DroppedOut {
        node: NodeId,
        reason: String,
    },
    Deadline {
        cloud_stage: Stage,
    },
    Aborted {
        reason: String,
    },
}

#[derive(Debug, Default)]
pub struct SimNetwork {
    queues: BTreeMap<(NodeId, NodeId), VecDeque<Vec<u8>>>,
    next_seq: BTreeMap<(NodeId, NodeId), u64>,
    pub frames: usize,
    pub bytes: usize,
}

impl SimNetwork {
    /// Encodes and enqueues `m` with the channel's next sequence number.
    pub fn send(&mut self, from: NodeId, to: NodeId, m: &Message, log: &mut Vec<Event>) -> Result<u64> {
        let seq = self.next_seq.entry((from, to)).or_insert(0);
        *seq += 1;
        let env = Envelope { from, to, seq: *seq };
        let frame = encode(&env, m)?;
        log.push(Event::Sent {
            from,
            to,
            seq: env.seq,
            message: m.name().into(),
            bytes: frame.len(),
        });
        self.send_frame(from, to, frame);
        Ok(env.seq)
    }

    /// Enqueues raw bytes; used for fault injection.
    pub fn send_frame(&mut self, from: NodeId, to: NodeId, frame: Vec<u8>) {
        self.frames += 1;
        self.bytes += frame.len();
        self.queues.entry((from, to)).or_default().push_back(frame);
    }

    /// Next frame for `to`, from the lowest-addressed sender with one queued.
    pub fn poll(&mut self, to: NodeId) -> Option<(NodeId, Vec<u8>)> {
        let key = self
            .queues
            .iter()
            .find(|((_, t), q)| *t == to && !q.is_empty())
            .map(|(k, _)| *k)?;
        let frame = self.queues.get_mut(&key)?.pop_front()?;
        Some((key.0, frame))
    }

    pub fn pending(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }
}

/// Per-node stages, current and visited.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundState {
    pub stages: BTreeMap<NodeId, Stage>,
    pub history: BTreeMap<NodeId, Vec<Stage>>,
}

impl RoundState {
    fn enter(&mut self, node: NodeId, stage: Stage, log: &mut Vec<Event>) {
        let cur = self.stages.entry(node).or_insert(Stage::LocalCompute);
        if *cur != stage {
            debug_assert!(cur.can_advance_to(stage), "{node}: {cur:?} -> {stage:?}");
            *cur = stage;
            self.history
                .entry(node)
                .or_insert_with(|| vec![Stage::LocalCompute])
                .push(stage);
            log.push(Event::Stage { node, stage });
        }
    }

    pub fn stage(&self, node: NodeId) -> Stage {
        self.stages.get(&node).copied().unwrap_or(Stage::LocalCompute)
    }
}

struct Inbox {
    last_seq: BTreeMap<NodeId, u64>,
}

impl Inbox {
    /// Decodes, checks addressing and drops duplicates.
    fn accept(
        &mut self,
        me: NodeId,
        from: NodeId,
        frame: &[u8],
        stage: Stage,
        log: &mut Vec<Event>,
    ) -> Option<Message> {
        let (env, m) = match decode(frame) {
            Ok(v) => v,
            Err(e) => {
                log.push(Event::Undecodable {
                    to: me,
                    from,
                    error: e.to_string(),
                });
                return None;
            }
        };
        if env.to != me || env.from != from {
            log.push(Event::Violation {
                node: me,
                stage,
                detail: format!(
                    "misaddressed frame {} -> {} on channel {from} -> {me}",
                    env.from, env.to
                ),
            });
            return None;
        }
        let last = self.last_seq.entry(from).or_insert(0);
        if env.seq <= *last {
            log.push(Event::Duplicate {
                to: me,
                from,
                seq: env.seq,
            });
            return None;
        }
        *last = env.seq;
        Some(m)
    }
}

struct Robot {
    id: NodeId,
    data: RobotData,
    inbox: Inbox,
    upload: Option<Upload>,
    shared_received: usize,
    candidates_received: usize,
    ack: Option<FineTuneAck>,
    drop_reason: Option<String>,
}

struct Cloud {
    inbox: Inbox,
    expected: Vec<u16>,
    uploads: BTreeMap<u16, Upload>,
    plan: Option<CloudPlan>,
    answers: BTreeMap<u16, Vec<Option<f64>>>,
    dispatched: BTreeSet<u16>,
    outcome: Option<CloudOutcome>,
    acks: BTreeMap<u16, FineTuneAck>,
    error: Option<String>,
}

/// One PARL round over the simulated network.
pub struct Simulation {
    robots: Vec<Robot>,
    cloud: Cloud,
    pub network: SimNetwork,
    pub state: RoundState,
    pub log: Vec<Event>,
    config: RoundConfig,
}

#[derive(Debug, Clone)]
pub struct RoundReport {
    pub state: RoundState,
    pub outcome: Option<CloudOutcome>,
    pub cloud_error: Option<String>,
    /// Uploads as produced by each robot.
    pub uploads: BTreeMap<u16, Upload>,
    /// Acknowledgements as received by the cloud.
    pub acks: BTreeMap<u16, FineTuneAck>,
    pub shared_received: BTreeMap<u16, usize>,
    pub candidates_received: BTreeMap<u16, usize>,
    pub drop_reasons: BTreeMap<u16, String>,
    pub log: Vec<Event>,
    pub frames: usize,
    pub bytes: usize,
    pub passes: usize,
}

impl RoundReport {
    pub fn violations(&self) -> usize {
        self.log.iter().filter(|e| matches!(e, Event::Violation { .. })).count()
    }

    pub fn duplicates(&self) -> usize {
        self.log.iter().filter(|e| matches!(e, Event::Duplicate { .. })).count()
    }

    /// Robots that completed the round.
    pub fn participants(&self) -> Vec<u16> {
        self.outcome
            .as_ref()
            .map(|o| o.shared.iter().map(|(r, _)| *r).collect())
            .unwrap_or_default()
    }
}

impl Simulation {
    pub fn new(robots: Vec<RobotData>, config: RoundConfig) -> Result<Self> {
        if robots.is_empty() {
            return Err(Error::Config("a round needs at least one robot".into()));
        }
        let ids: BTreeSet<u16> = robots.iter().map(|r| r.id).collect();
        if ids.len() != robots.len() || ids.contains(&NodeId::CLOUD_WIRE) {
            return Err(Error::Config("robot ids must be unique and below 65535".into()));
        }
        let mut robots = robots;
        robots.sort_by_key(|r| r.id);
        Ok(Simulation {
            cloud: Cloud {
                inbox: Inbox {
                    last_seq: BTreeMap::new(),
                },
                expected: ids.into_iter().collect(),
                uploads: BTreeMap::new(),
                plan: None,
                answers: BTreeMap::new(),
                dispatched: BTreeSet::new(),
                outcome: None,
                acks: BTreeMap::new(),
                error: None,
            },
            robots: robots
                .into_iter()
                .map(|data| Robot {
                    id: NodeId::Robot(data.id),
                    data,
                    inbox: Inbox {
                        last_seq: BTreeMap::new(),
                    },
                    upload: None,
                    shared_received: 0,
                    candidates_received: 0,
                    ack: None,
                    drop_reason: None,
                })
                .collect(),
            network: SimNetwork::default(),
            state: RoundState::default(),
            log: Vec::new(),
            config,
        })
    }

    pub fn run(mut self) -> Result<RoundReport> {
        let mut passes = 0;
        loop {
            let mut progress = false;
            for i in 0..self.robots.len() {
                progress |= self.robot_step(i)?;
            }
            progress |= self.cloud_step()?;
            if !progress {
                let stage = self.state.stage(NodeId::Cloud);
                self.log.push(Event::Deadline { cloud_stage: stage });
                if !self.cloud_deadline()? {
                    break;
                }
            }
            passes += 1;
            if passes > self.config.max_passes {
                return Err(Error::Protocol(format!("round did not settle in {passes} passes")));
            }
        }
        Ok(RoundReport {
            uploads: self
                .robots
                .iter()
                .filter_map(|r| r.upload.clone().map(|u| (r.data.id, u)))
                .collect(),
            shared_received: self.robots.iter().map(|r| (r.data.id, r.shared_received)).collect(),
            candidates_received: self.robots.iter().map(|r| (r.data.id, r.candidates_received)).collect(),
            drop_reasons: self
                .robots
                .iter()
                .filter_map(|r| r.drop_reason.clone().map(|d| (r.data.id, d)))
                .collect(),
            acks: self.cloud.acks,
            outcome: self.cloud.outcome,
            cloud_error: self.cloud.error,
            state: self.state,
            log: self.log,
            frames: self.network.frames,
            bytes: self.network.bytes,
            passes,
        })
    }

    fn drop_robot(&mut self, i: usize, reason: String) {
        let id = self.robots[i].id;
        log::info!("{id} dropped out: {reason}");
        self.state.enter(id, Stage::DroppedOut, &mut self.log);
        self.log.push(Event::DroppedOut {
            node: id,
            reason: reason.clone(),
        });
        self.robots[i].drop_reason = Some(reason);
    }

    fn robot_step(&mut self, i: usize) -> Result<bool> {
        let id = self.robots[i].id;
        let rid = self.robots[i].data.id;
        let stage = self.state.stage(id);
        if stage == Stage::LocalCompute {
            if self.config.dropout.before_upload.contains(&rid) {
                self.drop_robot(i, "injected before upload".into());
                return Ok(true);
            }
            match robot_local_compute(&self.robots[i].data.train, &self.config.robot) {
                Ok(u) => {
                    self.network
                        .send(id, NodeId::Cloud, &Message::UploadLocal(u.clone()), &mut self.log)?;
                    self.robots[i].upload = Some(u);
                    self.state.enter(id, Stage::Uploaded, &mut self.log);
                }
                Err(e) => self.drop_robot(i, format!("local compute: {e}")),
            }
            return Ok(true);
        }
        let Some((from, frame)) = self.network.poll(id) else {
            return Ok(false);
        };
        let Some(m) = self.robots[i].inbox.accept(id, from, &frame, stage, &mut self.log) else {
            return Ok(true);
        };
        if matches!(m, Message::SharedModel { .. }) {
            self.robots[i].shared_received += 1;
        }
        match (stage, m) {
            (Stage::Uploaded, Message::AugmentedSet { candidates }) if from == NodeId::Cloud => {
                self.robots[i].candidates_received = candidates.len();
                self.state.enter(id, Stage::CloudAugment, &mut self.log);
            }
            (Stage::CloudAugment, Message::LabelRequest { scenarios }) if from == NodeId::Cloud => {
                if self.config.dropout.before_labeling.contains(&rid) {
                    self.drop_robot(i, "injected before labeling".into());
                    return Ok(true);
                }
                let u = self.robots[i].upload.as_ref().expect("uploaded robot");
                let torques = robot_predictions(&u.policy, &u.style, &scenarios);
                self.network
                    .send(id, NodeId::Cloud, &Message::LabelResponse { torques }, &mut self.log)?;
                self.state.enter(id, Stage::Labeling, &mut self.log);
            }
            (Stage::Labeling, Message::SharedModel { policy }) if from == NodeId::Cloud => {
                self.state.enter(id, Stage::Dispatched, &mut self.log);
                if self.config.dropout.before_fine_tune.contains(&rid) {
                    self.drop_robot(i, "injected before fine-tuning".into());
                    return Ok(true);
                }
                let r = &self.robots[i];
                let style = &r.upload.as_ref().expect("uploaded robot").style;
                match robot_fine_tune(&policy, style, &r.data.train, &r.data.held_out, &self.config.robot) {
                    Ok(ack) => {
                        self.state.enter(id, Stage::FineTuned, &mut self.log);
                        self.network
                            .send(id, NodeId::Cloud, &Message::FineTuneAck(ack.clone()), &mut self.log)?;
                        self.robots[i].ack = Some(ack);
                        self.state.enter(id, Stage::Done, &mut self.log);
                    }
                    Err(e) => self.drop_robot(i, format!("fine-tune: {e}")),
                }
            }
            (Stage::DroppedOut, m) => {
                log::debug!("{id} ignores {} after dropping out", m.name());
            }
            (stage, m) => self.log.push(Event::Violation {
                node: id,
                stage,
                detail: format!("{} from {from}", m.name()),
            }),
        }
        Ok(true)
    }

    fn abort(&mut self, reason: String) {
        log::warn!("round aborted: {reason}");
        self.log.push(Event::Aborted { reason: reason.clone() });
        self.cloud.error = Some(reason);
        self.state.enter(NodeId::Cloud, Stage::DroppedOut, &mut self.log);
    }

    fn cloud_step(&mut self) -> Result<bool> {
        let stage = self.state.stage(NodeId::Cloud);
        let Some((from, frame)) = self.network.poll(NodeId::Cloud) else {
            return Ok(false);
        };
        let Some(m) = self
            .cloud
            .inbox
            .accept(NodeId::Cloud, from, &frame, stage, &mut self.log)
        else {
            return Ok(true);
        };
        let robot = match from {
            NodeId::Robot(r) if self.cloud.expected.contains(&r) => r,
            _ => {
                self.log.push(Event::Violation {
                    node: NodeId::Cloud,
                    stage,
                    detail: format!("{} from unknown node {from}", m.name()),
                });
                return Ok(true);
            }
        };
        match (stage, m) {
            (Stage::LocalCompute, Message::UploadLocal(u)) if !self.cloud.uploads.contains_key(&robot) => {
                self.cloud.uploads.insert(robot, u);
                if self.cloud.uploads.len() == self.cloud.expected.len() {
                    self.start_augment()?;
                }
            }
            (Stage::Labeling, Message::LabelResponse { torques })
                if self.cloud.uploads.contains_key(&robot) && !self.cloud.answers.contains_key(&robot) =>
            {
                self.cloud.answers.insert(robot, torques);
                if self.cloud.answers.len() == self.cloud.uploads.len() {
                    self.start_train()?;
                }
            }
            (Stage::Dispatched, Message::FineTuneAck(a))
                if self.cloud.dispatched.contains(&robot) && !self.cloud.acks.contains_key(&robot) =>
            {
                self.cloud.acks.insert(robot, a);
                if self.cloud.acks.len() == self.cloud.dispatched.len() {
                    self.state.enter(NodeId::Cloud, Stage::Done, &mut self.log);
                }
            }
            (stage, m) => self.log.push(Event::Violation {
                node: NodeId::Cloud,
                stage,
                detail: format!("{} from {from}", m.name()),
            }),
        }
        Ok(true)
    }

    /// Returns whether the deadline moved the round forward.
    fn cloud_deadline(&mut self) -> Result<bool> {
        match self.state.stage(NodeId::Cloud) {
            Stage::LocalCompute => {
                let missing = self.cloud.expected.len() - self.cloud.uploads.len();
                if self.cloud.uploads.is_empty() {
                    self.abort("no robot uploaded before the deadline".into());
                } else if missing > self.config.cloud.max_missing {
                    self.abort(format!(
                        "{missing} robots missing, at most {} allowed",
                        self.config.cloud.max_missing
                    ));
                } else {
                    self.start_augment()?;
                }
                Ok(true)
            }
            Stage::Labeling => {
                self.start_train()?;
                Ok(true)
            }
            Stage::Dispatched => {
                self.state.enter(NodeId::Cloud, Stage::Done, &mut self.log);
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn start_augment(&mut self) -> Result<()> {
        self.state.enter(NodeId::Cloud, Stage::Uploaded, &mut self.log);
        let uploads: Vec<(u16, Upload)> = self.cloud.uploads.iter().map(|(r, u)| (*r, u.clone())).collect();
        self.state.enter(NodeId::Cloud, Stage::CloudAugment, &mut self.log);
        let plan = match cloud_augment(&uploads, &self.config.cloud, self.config.seed) {
            Ok(p) => p,
            Err(e) => {
                self.abort(e.at("cloud-augment", "cloud").to_string());
                return Ok(());
            }
        };
        let scenarios = plan.scenarios();
        for ra in &plan.per_robot {
            let to = NodeId::Robot(ra.robot);
            let set = Message::AugmentedSet {
                candidates: ra.candidates.clone(),
            };
            self.network.send(NodeId::Cloud, to, &set, &mut self.log)?;
            let req = Message::LabelRequest {
                scenarios: scenarios.clone(),
            };
            self.network.send(NodeId::Cloud, to, &req, &mut self.log)?;
        }
        self.cloud.plan = Some(plan);
        self.state.enter(NodeId::Cloud, Stage::Labeling, &mut self.log);
        Ok(())
    }

    fn start_train(&mut self) -> Result<()> {
        self.state.enter(NodeId::Cloud, Stage::CloudTrain, &mut self.log);
        let plan = self.cloud.plan.as_ref().expect("plan before training");
        let answers: Vec<(u16, Vec<Option<f64>>)> = self.cloud.answers.iter().map(|(r, a)| (*r, a.clone())).collect();
        let outcome = match cloud_train(plan, &answers, &self.config.cloud) {
            Ok(o) => o,
            Err(e) => {
                self.abort(e.at("cloud-train", "cloud").to_string());
                return Ok(());
            }
        };
        for (robot, policy) in &outcome.shared {
            let m = Message::SharedModel { policy: policy.clone() };
            self.network
                .send(NodeId::Cloud, NodeId::Robot(*robot), &m, &mut self.log)?;
            self.cloud.dispatched.insert(*robot);
        }
        self.cloud.outcome = Some(outcome);
        self.state.enter(NodeId::Cloud, Stage::Dispatched, &mut self.log);
        Ok(())
    }
}

/// Runs one round to completion.
pub fn run_round(robots: Vec<RobotData>, config: RoundConfig) -> Result<RoundReport> {
    Simulation::new(robots, config)?.run()
}
