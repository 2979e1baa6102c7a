//! Fits two robots' styles from their own data, then pushes augmented
//! layouts from robot 0 through both styles.

use parl::dat::{augment_and_transfer, fit_scorer, layout_of, AugmentConfig, Layout, Predictors, ScorerConfig};
use parl::style::{fit_style, style_affinity, DEFAULT_SEPARATION};
use parl::world::{segment, DrivingSample, StyleId, TaskType, World, WorldParams};

fn data(world: &World, style: u16) -> parl::Result<Vec<DrivingSample>> {
    (0..60)
        .map(|i| world.generate(StyleId(style), TaskType::ALL[i % 3], 1000 * style as u64 + i as u64))
        .collect()
}

fn main() -> parl::Result<()> {
    let world = World::with_builtin_styles(WorldParams::default(), 2)?;
    let (d0, d1) = (data(&world, 0)?, data(&world, 1)?);
    let styles = vec![fit_style(&d0, DEFAULT_SEPARATION)?, fit_style(&d1, DEFAULT_SEPARATION)?];
    println!(
        "palette affinity at sigma 0.1: {:.4}",
        style_affinity(&styles[0], &styles[1], 0.1)
    );

    let layouts: Vec<Layout> = d0.iter().chain(&d1).map(layout_of).collect();
    let predictors = Predictors::fit(&layouts, 0.5)?;
    let scorer = fit_scorer(&layouts, ScorerConfig::default())?;
    let inputs: Vec<(u64, Layout)> = d0
        .iter()
        .take(2)
        .enumerate()
        .map(|(i, s)| (i as u64, layout_of(s)))
        .collect();
    let t = augment_and_transfer(&inputs, &styles, &AugmentConfig::default(), &predictors, &scorer, 5)?;
    println!(
        "{} inputs -> {} candidates -> {} scenarios",
        inputs.len(),
        t.candidates.len(),
        t.items.len()
    );
    for item in &t.items {
        let style = styles.iter().find(|s| s.style == item.style).expect("rendered style");
        let (semantic, _) = segment(&item.scenario, style);
        println!(
            "candidate {} in style {}: segments back exactly: {}",
            item.candidate,
            item.style.0,
            semantic == t.candidates[item.candidate].semantic
        );
    }
    Ok(())
}
