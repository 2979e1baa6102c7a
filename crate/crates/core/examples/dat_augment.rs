//! Fits the where/what predictors and the plausibility scorer on real
//! layouts, augments a few of them and shows the scorer separating
//! corrupted layouts from real ones.

use parl::dat::corrupt::car_in_building;
use parl::dat::{augment_semantic, fit_scorer, layout_of, AugmentConfig, Layout, Predictors, ScorerConfig};
use parl::world::{StyleId, TaskType, World, WorldParams};

fn main() -> parl::Result<()> {
    let world = World::with_builtin_styles(WorldParams::default(), 1)?;
    let layouts: Vec<Layout> = (0..90)
        .map(|i| {
            world
                .generate(StyleId(0), TaskType::ALL[i % 3], i as u64)
                .map(|s| layout_of(&s))
        })
        .collect::<parl::Result<_>>()?;
    let predictors = Predictors::fit(&layouts, 0.5)?;
    let scorer = fit_scorer(&layouts, ScorerConfig::default())?;
    println!("threshold {:.2}, margin {:.2}", scorer.threshold, scorer.margin);

    let config = AugmentConfig::default();
    for (id, layout) in layouts.iter().enumerate().take(4) {
        let a = augment_semantic(id as u64, layout, &config, &predictors, &scorer, 7)?;
        let added: Vec<String> = a
            .candidates
            .iter()
            .map(|c| {
                let r = c.instances.records.last().expect("one instance inserted");
                format!(
                    "{:?} at ({}, {}) score {:.3}",
                    r.class,
                    r.bbox.x,
                    r.bbox.y,
                    c.score.unwrap_or(0.0)
                )
            })
            .collect();
        println!("layout {id}: {} attempts -> {}", a.stats.attempts, added.join(", "));
    }

    let real: Vec<f64> = layouts.iter().map(|(s, i)| scorer.score_layout(s, i)).collect();
    let fake: Vec<f64> = layouts
        .iter()
        .filter_map(|l| car_in_building(l, 2, 2))
        .map(|(s, i)| scorer.score_layout(&s, &i))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "real mean {:.3} ({} layouts), car-in-building mean {:.3} ({} layouts)",
        mean(&real),
        real.len(),
        mean(&fake),
        fake.len()
    );
    Ok(())
}
