//! Trains a local ridge policy, fine-tunes a stronger model towards the
//! local data and crowdsources labels from two robots.

use parl::policy::{
    crowdsource_labels, evaluate, examples_from, fine_tune, train, train_local, LabelItem, Member, Weighting,
};
use parl::style::{fit_style, DEFAULT_SEPARATION};
use parl::world::{DrivingSample, StyleId, TaskType, World, WorldParams};

fn data(world: &World, style: u16, n: usize, offset: u64) -> parl::Result<Vec<DrivingSample>> {
    (0..n)
        .map(|i| world.generate(StyleId(style), TaskType::ALL[i % 3], offset + i as u64))
        .collect()
}

fn main() -> parl::Result<()> {
    let world = World::with_builtin_styles(WorldParams::default(), 2)?;
    let small = data(&world, 0, 12, 0)?;
    let large = data(&world, 0, 150, 500)?;
    let test = data(&world, 0, 60, 9000)?;
    let style = fit_style(&large, DEFAULT_SEPARATION)?;

    let local = train_local(&small, &style, 1e-3)?;
    let strong = train_local(&large, &style, 1e-3)?;
    for (name, m) in [("local, 12 samples", &local), ("shared, 150 samples", &strong)] {
        let r = evaluate(m, &test, &style, 0.05)?;
        println!(
            "{name:<20} mae {:.4}, failure rate {:.1}%",
            r.mae,
            100.0 * r.failure_rate
        );
    }
    for beta in [0.0, 0.5, 0.8, 1.0] {
        let tuned = fine_tune(&strong, &examples_from(&small, &style), beta, 1e-3)?;
        let r = evaluate(&tuned, &test, &style, 0.05)?;
        println!("fine-tuned beta {beta:.1}  mae {:.4}", r.mae);
    }
    let exact = train(&examples_from(&large, &style), 1e-3)?;
    assert_eq!(exact, strong);

    let other = data(&world, 1, 60, 40)?;
    let other_style = fit_style(&other, DEFAULT_SEPARATION)?;
    let members = vec![
        Member {
            policy: strong.clone(),
            style: style.clone(),
        },
        Member {
            policy: train_local(&other, &other_style, 1e-3)?,
            style: other_style,
        },
    ];
    let items: Vec<LabelItem> = test
        .iter()
        .take(5)
        .map(|s| LabelItem {
            scenario: &s.scenario,
            style: &style,
        })
        .collect();
    let labels = crowdsource_labels(&items, &members, Weighting::default());
    for (s, l) in test.iter().zip(&labels) {
        println!(
            "true {:.3}  crowdsourced {:?}",
            s.label.unwrap_or(f32::NAN),
            l.map(|v| (v * 1000.0).round() / 1000.0)
        );
    }
    Ok(())
}
