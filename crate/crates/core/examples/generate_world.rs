//! Generates one sample per task in a built-in style and prints its class
//! map as ASCII together with the torque label.

use parl::world::{ClassId, StyleId, TaskType, World, WorldParams};

fn glyph(c: ClassId) -> char {
    match c {
        ClassId::Road => '.',
        ClassId::LaneMarking => ':',
        ClassId::Sidewalk => '_',
        ClassId::Building => '#',
        ClassId::Vegetation => '*',
        ClassId::Sky => ' ',
        ClassId::Car => 'C',
        ClassId::Pedestrian => 'P',
    }
}

fn main() -> parl::Result<()> {
    let world = World::with_builtin_styles(WorldParams::default(), 1)?;
    for (i, task) in TaskType::ALL.into_iter().enumerate() {
        let s = world.generate(StyleId(0), task, 40 + i as u64)?;
        println!(
            "{}: torque {:.3}, {} instances",
            task.name(),
            s.label.unwrap_or(f32::NAN),
            s.instances.records.len()
        );
        for y in 0..s.semantic.height() {
            let row: String = (0..s.semantic.width()).map(|x| glyph(s.semantic.get(x, y))).collect();
            println!("  {row}");
        }
    }
    Ok(())
}
