//! Semantic-level augmentation: learn where instances go and what they look
//! like from real layouts, insert new ones, and keep only candidates the
//! plausibility scorer accepts.

pub mod corrupt;
mod pipeline;
mod placement;
mod scorer;
mod shapes;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use pipeline::{augment_and_transfer, TransferItem, Transferred};
pub use placement::{
    context_grid, fit_where, scale_bin, Placement, PlacementTable, WherePredictor, CONTEXT_BINS, POSITION_BINS,
    SCALE_BINS,
};
pub use scorer::{
    fit_scorer, Distribution, PlausibilityScorer, ScaleStats, ScorerConfig, ScorerDiagnostics, COMPONENTS, SCALES,
};
pub use shapes::{fit_what, Mask, WhatPredictor};

use crate::error::{Error, Result};
use crate::rng::{derive, rng_for};
use crate::world::{Affine, CellRect, ClassId, DrivingSample, InstanceMap, InstanceRecord, SemanticMap};

/// A semantic map with its instance map.
pub type Layout = (SemanticMap, InstanceMap);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationCandidate {
    pub semantic: SemanticMap,
    pub instances: InstanceMap,
    pub inserted: Vec<InstanceRecord>,
    pub source_sample_id: u64,
    pub score: Option<f64>,
}

impl AugmentationCandidate {
    /// Wraps an unmodified layout.
    pub fn from_layout(layout: Layout, source_sample_id: u64) -> Self {
        AugmentationCandidate {
            semantic: layout.0,
            instances: layout.1,
            inserted: Vec::new(),
            source_sample_id,
            score: None,
        }
    }

    pub fn layout(&self) -> Layout {
        (self.semantic.clone(), self.instances.clone())
    }
}

/// Writes `cells` as a fresh instance of `class` into a copy of `layout`.
/// Overwritten cells of older instances are lost; their records are kept.
pub fn insert_cells(layout: &Layout, cells: &[(usize, usize)], class: ClassId) -> (Layout, InstanceRecord) {
    let (mut semantic, mut instances) = layout.clone();
    let id = instances.next_id();
    let mut rect = CellRect::point(cells[0].0, cells[0].1);
    for &(x, y) in cells {
        semantic.classes[(x, y)] = class;
        instances.grid[(x, y)] = id;
        rect = rect.include(x, y);
    }
    let record = InstanceRecord {
        id,
        class,
        bbox: rect,
        affine: Affine::of_rect(rect),
    };
    instances.records.push(record);
    ((semantic, instances), record)
}

/// Fitted where/what pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictors {
    pub placement: WherePredictor,
    pub shapes: WhatPredictor,
}

impl Predictors {
    pub fn fit(layouts: &[Layout], alpha: f64) -> Result<Self> {
        Ok(Predictors {
            placement: fit_where(layouts, alpha)?,
            shapes: fit_what(layouts)?,
        })
    }
}

/// Inserts one instance of `class`: placement and extent from the where
/// predictor, mask from the what predictor's matching scale bin, resampled
/// to the drawn extent. Placements leaving the map are redrawn up to
/// `retries` times.
pub fn sample_insertion(
    placement: &WherePredictor,
    shapes: &WhatPredictor,
    base: &Layout,
    class: ClassId,
    seed: u64,
    retries: usize,
) -> Result<AugmentationCandidate> {
    if !placement.tables.contains_key(&class) || shapes.template_count(class) == 0 {
        return Err(Error::Fitting(format!("predictors not fitted for {class:?}")));
    }
    let (semantic, _) = base;
    let (w, h) = (semantic.width() as i64, semantic.height() as i64);
    let mut rng = rng_for(seed, &[class.index() as u64]);
    for _ in 0..retries {
        let Some(p) = placement.sample(class, semantic, &mut rng) else {
            break;
        };
        let Some(template) = shapes.sample(class, p.scale_bin, &mut rng) else {
            break;
        };
        let mask = template.resized(p.width, p.height);
        if !mask.is_connected() {
            continue;
        }
        let x0 = p.center_x as i64 - (p.width as i64 - 1) / 2;
        let y0 = p.center_y as i64 - (p.height as i64 - 1) / 2;
        if x0 < 0 || y0 < 0 || x0 + p.width as i64 > w || y0 + p.height as i64 > h {
            continue;
        }
        let mut cells = Vec::with_capacity(mask.count());
        for my in 0..mask.height {
            for mx in 0..mask.width {
                if mask.get(mx, my) {
                    cells.push((x0 as usize + mx, y0 as usize + my));
                }
            }
        }
        let (layout, record) = insert_cells(base, &cells, class);
        return Ok(AugmentationCandidate {
            semantic: layout.0,
            instances: layout.1,
            inserted: vec![record],
            source_sample_id: 0,
            score: None,
        });
    }
    Err(Error::Insertion { attempts: retries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub fan_out: usize,
    /// Attempt budget is `budget_factor * fan_out`.
    pub budget_factor: usize,
    /// Placement redraws per insertion attempt.
    pub retries: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            fan_out: 2,
            budget_factor: 16,
            retries: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub attempts: usize,
    pub insertion_failures: usize,
    pub rejected: usize,
    pub accepted: usize,
}

impl AugmentStats {
    pub fn merge(&mut self, o: &AugmentStats) {
        self.attempts += o.attempts;
        self.insertion_failures += o.insertion_failures;
        self.rejected += o.rejected;
        self.accepted += o.accepted;
    }

    pub fn acceptance_rate(&self) -> f64 {
        let scored = self.accepted + self.rejected;
        if scored == 0 {
            0.0
        } else {
            self.accepted as f64 / scored as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub candidates: Vec<AugmentationCandidate>,
    pub stats: AugmentStats,
}

/// Inserts instances into `sample`'s layout until `fan_out` candidates pass
/// the scorer's threshold or the attempt budget runs out. Each candidate
/// carries exactly one inserted instance and its score.
pub fn augment_semantic(
    sample_id: u64,
    layout: &Layout,
    config: &AugmentConfig,
    predictors: &Predictors,
    scorer: &PlausibilityScorer,
    seed: u64,
) -> Result<Augmented> {
    if config.fan_out == 0 {
        return Err(Error::Config("fan_out must be at least 1".into()));
    }
    let classes: Vec<(ClassId, f64)> = predictors
        .placement
        .classes()
        .filter(|&c| predictors.shapes.template_count(c) > 0)
        .map(|c| (c, predictors.placement.class_count(c)))
        .collect();
    let total: f64 = classes.iter().map(|(_, n)| n).sum();
    let mut stats = AugmentStats::default();
    let mut candidates = Vec::new();
    if total <= 0.0 {
        return Ok(Augmented { candidates, stats });
    }
    let mut rng = rng_for(seed, &[sample_id, 0xA0]);
    let budget = config.budget_factor.saturating_mul(config.fan_out);
    while candidates.len() < config.fan_out && stats.attempts < budget {
        stats.attempts += 1;
        let mut u = rng.gen_range(0.0..total);
        let mut class = classes[classes.len() - 1].0;
        for &(c, n) in &classes {
            if u < n {
                class = c;
                break;
            }
            u -= n;
        }
        let attempt_seed = derive(seed, &[sample_id, stats.attempts as u64]);
        match sample_insertion(
            &predictors.placement,
            &predictors.shapes,
            layout,
            class,
            attempt_seed,
            config.retries,
        ) {
            Ok(mut c) => {
                c.source_sample_id = sample_id;
                let score = scorer.score(&c);
                c.score = Some(score);
                if scorer.accepts(score) {
                    stats.accepted += 1;
                    candidates.push(c);
                } else {
                    stats.rejected += 1;
                }
            }
            Err(Error::Insertion { .. }) => stats.insertion_failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Augmented { candidates, stats })
}

/// Layout of a driving sample.
pub fn layout_of(sample: &DrivingSample) -> Layout {
    (sample.semantic.clone(), sample.instances.clone())
}
