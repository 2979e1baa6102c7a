#![allow(dead_code)]

use parl::dat::{layout_of, AugmentationCandidate, Layout};
use parl::harness::ExperimentConfig;
use parl::policy::{EvaluationReport, PolicyModel, TaskError, WEIGHT_LEN};
use parl::protocol::{FineTuneAck, Message, NodeId, Upload};
use parl::style::StyleModel;
use parl::world::{
    ClassId, DrivingSample, Grid, InstanceMap, Scenario, SemanticMap, StyleId, TaskType, World, WorldParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn world(styles: u16) -> World {
    World::with_builtin_styles(WorldParams::default(), styles).unwrap()
}

/// `n` samples cycling through the tasks, seeds `offset..offset + n`.
pub fn samples(world: &World, style: u16, n: usize, offset: u64) -> Vec<DrivingSample> {
    (0..n)
        .map(|i| {
            world
                .generate(StyleId(style), TaskType::ALL[i % 3], offset + i as u64)
                .unwrap()
        })
        .collect()
}

pub fn layouts(world: &World, style: u16, n: usize, offset: u64) -> Vec<Layout> {
    samples(world, style, n, offset).iter().map(layout_of).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small experiment that still exercises every stage.
pub fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        robots: 2,
        samples_per_task: 8,
        holdout: 0.25,
        ..ExperimentConfig::default()
    }
}

pub fn random_semantic(r: &mut impl Rng, w: usize, h: usize) -> SemanticMap {
    let classes = Grid::from_fn(w, h, |_, _| ClassId::ALL[r.gen_range(0..ClassId::ALL.len())]);
    SemanticMap::new(classes).unwrap()
}

pub fn random_layout(r: &mut impl Rng) -> Layout {
    let s = random_semantic(r, 16, 16);
    let i = InstanceMap::extract(&s);
    (s, i)
}

pub fn random_scenario(r: &mut impl Rng) -> Scenario {
    let (w, h) = (r.gen_range(16..24), r.gen_range(16..20));
    Scenario {
        pixels: Grid::from_fn(w, h, |_, _| [r.gen(), r.gen(), r.gen()]),
        style: StyleId(r.gen()),
    }
}

pub fn random_policy(r: &mut impl Rng) -> PolicyModel {
    let weights = (0..WEIGHT_LEN).map(|_| r.gen_range(-5.0..5.0)).collect();
    let mut m = PolicyModel::from_weights(weights, r.gen_range(0.0..1.0)).unwrap();
    m.meta.samples = r.gen_range(0..10_000);
    m.meta.provenance = [r.gen_range(0..100), r.gen_range(0..100), r.gen_range(0..100)];
    m
}

pub fn random_report(r: &mut impl Rng) -> EvaluationReport {
    let task = |t: TaskType, r: &mut dyn rand::RngCore| TaskError {
        task: t,
        count: r.gen_range(0..50),
        mae: r.gen_range(0.0..1.0),
        failure_rate: r.gen_range(0.0..1.0),
    };
    EvaluationReport {
        per_task: [
            task(TaskType::ALL[0], r),
            task(TaskType::ALL[1], r),
            task(TaskType::ALL[2], r),
        ],
        count: r.gen_range(0..150),
        mae: r.gen_range(0.0..1.0),
        failure_rate: r.gen_range(0.0..1.0),
        fail_threshold: r.gen_range(0.01..0.5),
        unperceived: r.gen_range(0..10),
    }
}

pub fn random_candidate(r: &mut impl Rng) -> AugmentationCandidate {
    let (semantic, instances) = random_layout(r);
    let inserted = instances.records.iter().take(r.gen_range(0..3)).copied().collect();
    AugmentationCandidate {
        semantic,
        instances,
        inserted,
        source_sample_id: r.gen(),
        score: if r.gen_bool(0.5) {
            Some(r.gen_range(0.0..1.0))
        } else {
            None
        },
    }
}

pub fn random_torque(r: &mut impl Rng) -> Option<f64> {
    match r.gen_range(0..4) {
        0 => None,
        1 => Some(0.0),
        _ => Some(r.gen_range(0.0..1.0)),
    }
}

pub fn random_message(r: &mut impl Rng) -> Message {
    match r.gen_range(0..6) {
        0 => Message::UploadLocal(Upload {
            layouts: (0..r.gen_range(0..3)).map(|_| random_layout(r)).collect(),
            style: StyleModel::builtin(StyleId(r.gen_range(0..8))),
            policy: random_policy(r),
        }),
        1 => Message::AugmentedSet {
            candidates: (0..r.gen_range(0..3)).map(|_| random_candidate(r)).collect(),
        },
        2 => Message::LabelRequest {
            scenarios: (0..r.gen_range(0..3)).map(|_| random_scenario(r)).collect(),
        },
        3 => Message::LabelResponse {
            torques: (0..r.gen_range(0..40)).map(|_| random_torque(r)).collect(),
        },
        4 => Message::SharedModel {
            policy: random_policy(r),
        },
        _ => Message::FineTuneAck(FineTuneAck {
            policy: random_policy(r),
            report: random_report(r),
        }),
    }
}

pub fn random_node(r: &mut impl Rng) -> NodeId {
    if r.gen_bool(0.3) {
        NodeId::Cloud
    } else {
        NodeId::Robot(r.gen_range(0..u16::MAX))
    }
}
