//! Message frames:
//!
//! ```text
//! magic   b"PARLMSG"   7 bytes
//! version u16
//! from    u16
//! to      u16
//! seq     u64
//! tag     u8           see TAGS
//! len     u32
//! payload[len]         PARLDM1 container whose kind matches the tag
//! ```
//!
//! Tags are pairwise at Hamming distance 4, so a flipped bit never turns one
//! variant into another.

use super::{FineTuneAck, Message, NodeId, Upload};
use crate::codec::{container, open_container, Decoder, Encoder, Kind, Wire, VERSION};
use crate::dat::AugmentationCandidate;
use crate::error::{Error, Result};
use crate::policy::{EvaluationReport, PolicyModel};
use crate::style::StyleModel;
use crate::world::Scenario;

pub const MESSAGE_MAGIC: &[u8; 7] = b"PARLMSG";
pub const ENVELOPE_LEN: usize = 7 + 2 + 2 + 2 + 8 + 1 + 4;

/// Variant tags in [`Message`] declaration order.
pub const TAGS: [u8; 6] = [0x0F, 0x33, 0x55, 0x66, 0x99, 0xAA];

const KINDS: [Kind; 6] = [
    Kind::Upload,
    Kind::AugmentedSet,
    Kind::LabelRequest,
    Kind::LabelResponse,
    Kind::SharedModel,
    Kind::FineTuneAck,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub seq: u64,
}

fn variant(m: &Message) -> usize {
    match m {
        Message::UploadLocal(_) => 0,
        Message::AugmentedSet { .. } => 1,
        Message::LabelRequest { .. } => 2,
        Message::LabelResponse { .. } => 3,
        Message::SharedModel { .. } => 4,
        Message::FineTuneAck(_) => 5,
    }
}

fn body(m: &Message) -> Result<Vec<u8>> {
    let mut e = Encoder::new();
    match m {
        Message::UploadLocal(u) => {
            u.layouts.encode(&mut e)?;
            u.style.encode(&mut e)?;
            u.policy.encode(&mut e)?;
        }
        Message::AugmentedSet { candidates } => candidates.encode(&mut e)?,
        Message::LabelRequest { scenarios } => scenarios.encode(&mut e)?,
        Message::LabelResponse { torques } => torques.encode(&mut e)?,
        Message::SharedModel { policy } => policy.encode(&mut e)?,
        Message::FineTuneAck(a) => {
            a.policy.encode(&mut e)?;
            a.report.encode(&mut e)?;
        }
    }
    Ok(e.buf)
}

fn parse_body(variant: usize, bytes: &[u8]) -> Result<Message> {
    let mut d = Decoder::new(bytes);
    let m = match variant {
        0 => Message::UploadLocal(Upload {
            layouts: Wire::decode(&mut d)?,
            style: StyleModel::decode(&mut d)?,
            policy: PolicyModel::decode(&mut d)?,
        }),
        1 => Message::AugmentedSet {
            candidates: Vec::<AugmentationCandidate>::decode(&mut d)?,
        },
        2 => Message::LabelRequest {
            scenarios: Vec::<Scenario>::decode(&mut d)?,
        },
        3 => Message::LabelResponse {
            torques: Vec::<Option<f64>>::decode(&mut d)?,
        },
        4 => Message::SharedModel {
            policy: PolicyModel::decode(&mut d)?,
        },
        _ => Message::FineTuneAck(FineTuneAck {
            policy: PolicyModel::decode(&mut d)?,
            report: EvaluationReport::decode(&mut d)?,
        }),
    };
    d.finish()?;
    Ok(m)
}

pub fn encode(env: &Envelope, m: &Message) -> Result<Vec<u8>> {
    let v = variant(m);
    let payload = container(KINDS[v], &body(m)?)?;
    let mut e = Encoder::new();
    e.bytes(MESSAGE_MAGIC);
    e.u16(VERSION);
    e.u16(env.from.to_wire());
    e.u16(env.to.to_wire());
    e.u64(env.seq);
    e.u8(TAGS[v]);
    e.len(payload.len())?;
    e.bytes(&payload);
    Ok(e.buf)
}

pub fn decode(bytes: &[u8]) -> Result<(Envelope, Message)> {
    let mut d = Decoder::new(bytes);
    if d.take(7)? != MESSAGE_MAGIC {
        return Err(Error::Decode("bad message magic".into()));
    }
    let version = d.u16()?;
    if version != VERSION {
        return Err(Error::Decode(format!("unsupported message version {version}")));
    }
    let env = Envelope {
        from: NodeId::from_wire(d.u16()?),
        to: NodeId::from_wire(d.u16()?),
        seq: d.u64()?,
    };
    let tag = d.u8()?;
    let v = TAGS
        .iter()
        .position(|&t| t == tag)
        .ok_or_else(|| Error::Decode(format!("unknown variant tag {tag:#04x}")))?;
    let n = d.len(1)?;
    let payload = d.take(n)?;
    d.finish()?;
    let m = parse_body(v, open_container(payload, KINDS[v])?)?;
    Ok((env, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_are_hamming_separated() {
        for (i, a) in TAGS.iter().enumerate() {
            for b in &TAGS[i + 1..] {
                assert!((a ^ b).count_ones() >= 4);
            }
        }
    }

    #[test]
    fn empty_and_flipped_frames_fail() {
        assert!(decode(&[]).is_err());
        let env = Envelope {
            from: NodeId::Cloud,
            to: NodeId::Robot(2),
            seq: 9,
        };
        let m = Message::LabelResponse {
            torques: vec![Some(0.25), None],
        };
        let bytes = encode(&env, &m).unwrap();
        assert_eq!(decode(&bytes).unwrap(), (env, m));
        let tag_at = ENVELOPE_LEN - 5;
        for bit in 0..8 {
            let mut b = bytes.clone();
            b[tag_at] ^= 1 << bit;
            assert!(matches!(decode(&b), Err(Error::Decode(_))));
        }
    }
}
