//! Encodes a message envelope, a model container and a dataset file, dumps
//! their headers and shows that a flipped tag is rejected.

use parl::codec::{self, Kind};
use parl::policy::PolicyModel;
use parl::protocol::{decode, encode, Envelope, Message, NodeId};
use parl::world::{StyleId, TaskType, World, WorldParams};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() -> parl::Result<()> {
    let env = Envelope {
        from: NodeId::Cloud,
        to: NodeId::Robot(1),
        seq: 3,
    };
    let msg = Message::LabelResponse {
        torques: vec![Some(0.25), None, Some(0.75)],
    };
    let frame = encode(&env, &msg)?;
    println!(
        "PARLMSG frame, {} bytes\n  header  {}\n  payload {}",
        frame.len(),
        hex(&frame[..26]),
        hex(&frame[26..])
    );
    let (env2, msg2) = decode(&frame)?;
    assert_eq!((env2, msg2), (env, msg));

    let mut bad = frame.clone();
    bad[21] ^= 0x01;
    println!("single-bit tag flip: {}", decode(&bad).unwrap_err());
    println!(
        "truncated frame:     {}",
        decode(&frame[..frame.len() - 1]).unwrap_err()
    );

    let model = codec::encode_model(Kind::Policy, &PolicyModel::constant(0.5))?;
    println!(
        "PARLDM1 policy container, {} bytes, header {}",
        model.len(),
        hex(&model[..12])
    );

    let world = World::with_builtin_styles(WorldParams::default(), 1)?;
    let samples = vec![world.generate(StyleId(0), TaskType::Straight, 1)?];
    let ds = codec::encode_dataset(&samples)?;
    println!(
        "PARLDS1 dataset of one sample, {} bytes, header {}",
        ds.len(),
        hex(&ds[..12])
    );
    assert_eq!(codec::decode_dataset(&ds)?, samples);
    Ok(())
}
