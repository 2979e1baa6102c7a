use serde::{Deserialize, Serialize};

use super::{
    augment_semantic, AugmentConfig, AugmentStats, AugmentationCandidate, Layout, PlausibilityScorer, Predictors,
};
use crate::error::Result;
use crate::rng::derive;
use crate::style::{cross_render, StyleModel};
use crate::world::{Scenario, StyleId};

/// One accepted candidate rendered in one style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferItem {
    /// Index into [`Transferred::candidates`].
    pub candidate: usize,
    pub style: StyleId,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transferred {
    pub candidates: Vec<AugmentationCandidate>,
    pub items: Vec<TransferItem>,
    pub stats: AugmentStats,
}

/// Semantic augmentation of every input followed by style transfer of every
/// accepted candidate into every style: `inputs × fan_out × styles`
/// scenarios when nothing is rejected.
pub fn augment_and_transfer(
    inputs: &[(u64, Layout)],
    styles: &[StyleModel],
    config: &AugmentConfig,
    predictors: &Predictors,
    scorer: &PlausibilityScorer,
    seed: u64,
) -> Result<Transferred> {
    let mut out = Transferred {
        candidates: Vec::new(),
        items: Vec::new(),
        stats: AugmentStats::default(),
    };
    for (id, layout) in inputs {
        let a = augment_semantic(*id, layout, config, predictors, scorer, seed)?;
        out.stats.merge(&a.stats);
        for (k, c) in a.candidates.into_iter().enumerate() {
            let index = out.candidates.len();
            for style in styles {
                let render_seed = derive(seed, &[*id, k as u64, style.style.0 as u64, 0x5E]);
                out.items.push(TransferItem {
                    candidate: index,
                    style: style.style,
                    scenario: cross_render(&c, style, render_seed)?,
                });
            }
            out.candidates.push(c);
        }
    }
    Ok(out)
}
