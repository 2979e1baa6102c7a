mod common;

use parl::harness::{generate_robot_data, round_config};
use parl::protocol::sim::{run_round, Event, Simulation};
use parl::protocol::{decode, encode, Envelope, Message, NodeId, Stage, ENVELOPE_LEN, MESSAGE_MAGIC, TAGS};
use proptest::prelude::*;

fn frame(seed: u64) -> (Envelope, Message, Vec<u8>) {
    let mut r = common::rng(seed);
    let env = Envelope {
        from: common::random_node(&mut r),
        to: common::random_node(&mut r),
        seq: rand::Rng::gen(&mut r),
    };
    let m = common::random_message(&mut r);
    let bytes = encode(&env, &m).unwrap();
    (env, m, bytes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn messages_round_trip(seed: u64) {
        let (env, m, bytes) = frame(seed);
        prop_assert_eq!(&bytes[..7], MESSAGE_MAGIC);
        prop_assert_eq!(decode(&bytes).unwrap(), (env, m));
    }

    #[test]
    fn every_truncation_is_rejected(seed: u64, cut in 0.0f64..1.0) {
        let (_, _, bytes) = frame(seed);
        let n = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(decode(&bytes[..n.min(bytes.len() - 1)]).is_err());
    }

    #[test]
    fn tag_corruption_is_rejected(seed: u64, tag: u8) {
        let (_, _, mut bytes) = frame(seed);
        prop_assume!(tag != bytes[21]);
        bytes[21] = tag;
        prop_assert!(decode(&bytes).is_err());
    }

    #[test]
    fn trailing_bytes_are_rejected(seed: u64, extra in 1usize..8) {
        let (_, _, mut bytes) = frame(seed);
        bytes.extend(std::iter::repeat_n(0, extra));
        prop_assert!(decode(&bytes).is_err());
    }
}

#[test]
fn envelope_layout_is_fixed() {
    let env = Envelope {
        from: NodeId::Robot(2),
        to: NodeId::Cloud,
        seq: 0x0102_0304_0506_0708,
    };
    let bytes = encode(&env, &Message::LabelResponse { torques: vec![] }).unwrap();
    assert_eq!(&bytes[0..7], b"PARLMSG");
    assert_eq!(&bytes[7..9], &1u16.to_le_bytes());
    assert_eq!(&bytes[9..11], &2u16.to_le_bytes());
    assert_eq!(&bytes[11..13], &u16::MAX.to_le_bytes());
    assert_eq!(&bytes[13..21], &0x0102_0304_0506_0708u64.to_le_bytes());
    assert_eq!(bytes[21], TAGS[3]);
    let len = u32::from_le_bytes(bytes[22..26].try_into().unwrap()) as usize;
    assert_eq!(len, bytes.len() - ENVELOPE_LEN);
    assert_eq!(&bytes[26..33], b"PARLDM1");
}

#[test]
fn stages_only_advance() {
    use Stage::*;
    let order = [
        LocalCompute,
        Uploaded,
        CloudAugment,
        Labeling,
        CloudTrain,
        Dispatched,
        FineTuned,
        Done,
    ];
    for (i, a) in order.iter().enumerate() {
        for (j, b) in order.iter().enumerate() {
            assert_eq!(a.can_advance_to(*b), j > i, "{a:?} -> {b:?}");
        }
        assert!(a.can_advance_to(DroppedOut) || *a == Done);
        assert!(!DroppedOut.can_advance_to(*a));
    }
}

fn delivered_once(report: &parl::protocol::sim::RoundReport) {
    for r in report.participants() {
        assert_eq!(report.shared_received[&r], 1, "robot {r}");
    }
}

#[test]
fn dropout_at_each_point_leaves_exactly_once_delivery() {
    let base = common::small_config();
    for point in 0..3 {
        let mut c = base.clone();
        match point {
            0 => c.dropout.before_upload.insert(1),
            1 => c.dropout.before_labeling.insert(1),
            _ => c.dropout.before_fine_tune.insert(1),
        };
        let report = run_round(generate_robot_data(&c).unwrap(), round_config(&c)).unwrap();
        assert_eq!(report.violations(), 0);
        assert!(report.drop_reasons.contains_key(&1));
        delivered_once(&report);
        let participants = report.participants();
        match point {
            2 => {
                assert_eq!(participants, vec![0, 1]);
                assert!(report.acks.contains_key(&0) && !report.acks.contains_key(&1));
            }
            _ => {
                assert_eq!(participants, vec![0]);
                assert_eq!(report.shared_received[&1], 0);
            }
        }
    }
}

#[test]
fn everyone_dropping_aborts_cleanly() {
    let mut c = common::small_config();
    c.dropout.before_upload.extend([0, 1]);
    let report = run_round(generate_robot_data(&c).unwrap(), round_config(&c)).unwrap();
    assert!(report.outcome.is_none());
    assert!(report.cloud_error.is_some());
    assert!(report.log.iter().any(|e| matches!(e, Event::Aborted { .. })));
}

#[test]
fn injected_faults_are_logged_and_ignored() {
    let c = common::small_config();
    let data = generate_robot_data(&c).unwrap();
    let clean = run_round(data.clone(), round_config(&c)).unwrap();

    let mut sim = Simulation::new(data, round_config(&c)).unwrap();
    let stale = encode(
        &Envelope {
            from: NodeId::Cloud,
            to: NodeId::Robot(0),
            seq: 0,
        },
        &Message::LabelResponse { torques: vec![] },
    )
    .unwrap();
    sim.network.send_frame(NodeId::Cloud, NodeId::Robot(0), stale);
    sim.network
        .send_frame(NodeId::Robot(1), NodeId::Cloud, b"PARLMSG garbage".to_vec());
    let misaddressed = encode(
        &Envelope {
            from: NodeId::Cloud,
            to: NodeId::Robot(0),
            seq: 9,
        },
        &Message::LabelResponse { torques: vec![] },
    )
    .unwrap();
    sim.network.send_frame(NodeId::Cloud, NodeId::Robot(1), misaddressed);
    let report = sim.run().unwrap();

    assert_eq!(report.duplicates(), 1);
    assert_eq!(report.violations(), 1);
    assert_eq!(
        report
            .log
            .iter()
            .filter(|e| matches!(e, Event::Undecodable { .. }))
            .count(),
        1
    );
    delivered_once(&report);
    assert_eq!(report.acks, clean.acks);
}

#[test]
fn rounds_are_deterministic() {
    let c = common::small_config();
    let a = run_round(generate_robot_data(&c).unwrap(), round_config(&c)).unwrap();
    let b = run_round(generate_robot_data(&c).unwrap(), round_config(&c)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.acks, b.acks);
    assert_eq!(a.bytes, b.bytes);
}
