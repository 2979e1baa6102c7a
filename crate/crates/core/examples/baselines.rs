//! Applies the color-jitter and random-resized-crop baselines to one sample
//! and scores the axes of each augmenter.

use parl::dat::{fit_scorer, layout_of, Layout, ScorerConfig};
use parl::harness::{apply_crop, baseline_color_jitter, qualitative_row, random_crop_window, AugmentedLayout};
use parl::world::{StyleId, TaskType, World, WorldParams};

fn main() -> parl::Result<()> {
    let world = World::with_builtin_styles(WorldParams::default(), 1)?;
    let samples: Vec<_> = (0..60)
        .map(|i| world.generate(StyleId(0), TaskType::ALL[i % 3], i as u64))
        .collect::<parl::Result<_>>()?;
    let sources: Vec<Layout> = samples.iter().map(layout_of).collect();
    let scorer = fit_scorer(&sources, ScorerConfig::default())?;

    let mut jitter = Vec::new();
    let mut crop = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        let j = baseline_color_jitter(s, 0.1, k as u64);
        jitter.push(AugmentedLayout {
            source: k,
            layout: layout_of(&j),
            warp: None,
        });
        let w = random_crop_window(64, 32, 0.7, k as u64);
        let c = apply_crop(s, w);
        crop.push(AugmentedLayout {
            source: k,
            layout: layout_of(&c),
            warp: Some(w),
        });
    }
    let moved = samples[0]
        .scenario
        .pixels
        .iter()
        .zip(baseline_color_jitter(&samples[0], 0.1, 0).scenario.pixels.iter())
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0f32, f32::max))
        .fold(0.0f32, f32::max);
    println!("largest jitter change on sample 0: {moved:.3}");
    for row in [
        qualitative_row("color-jitter", &sources, &jitter, &scorer),
        qualitative_row("random-crop", &sources, &crop, &scorer),
    ] {
        println!(
            "{:<13} number {:.1}  semantic {}  instance {}  reality {} ({:.3})",
            row.augmenter, row.number, row.semantic, row.instance, row.reality, row.mean_score
        );
    }
    Ok(())
}
