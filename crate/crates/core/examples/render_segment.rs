//! Renders a semantic map in every built-in style and segments it back
//! with the same style, then with a mismatched one.

use parl::world::{render, segment, StyleId, TaskType, World, WorldParams};

fn main() -> parl::Result<()> {
    let world = World::with_builtin_styles(WorldParams::default(), 4)?;
    let sample = world.generate(StyleId(0), TaskType::AvoidCars, 3)?;
    let cells = sample.semantic.classes.len();
    for style in world.styles() {
        let scene = render(&sample.semantic, &sample.instances, style, 99)?;
        let (own, _) = segment(&scene, style);
        let (other, _) = segment(&scene, world.style(StyleId((style.style.0 + 1) % 4))?);
        let wrong = |m: &parl::world::SemanticMap| {
            m.classes
                .iter()
                .zip(sample.semantic.classes.iter())
                .filter(|(a, b)| a != b)
                .count()
        };
        println!(
            "style {}: own palette {} / {cells} cells wrong, neighbour palette {} wrong",
            style.style.0,
            wrong(&own),
            wrong(&other)
        );
    }
    Ok(())
}
