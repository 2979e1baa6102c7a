//! Image-level augmenters used as baselines, and the mechanical proxies for
//! comparing augmenters along number, semantic, instance and reality axes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dat::{Layout, PlausibilityScorer};
use crate::rng::rng_for;
use crate::world::{DrivingSample, Grid, InstanceMap, Provenance, Scenario, SemanticMap};

/// Per-channel `p' = clamp(a·p + b)` with `a ∈ [1-m, 1+m]`, `b ∈ [-m, m]`.
/// Maps and label are copied.
pub fn baseline_color_jitter(sample: &DrivingSample, magnitude: f64, seed: u64) -> DrivingSample {
    let mut rng = rng_for(seed, &[0xC0]);
    let m = magnitude as f32;
    let mut gain = [1.0f32; 3];
    let mut offset = [0.0f32; 3];
    if m > 0.0 {
        for c in 0..3 {
            gain[c] = 1.0 + rng.gen_range(-m..=m);
            offset[c] = rng.gen_range(-m..=m);
        }
    }
    let pixels = sample
        .scenario
        .pixels
        .map(|px| std::array::from_fn(|c| (gain[c] * px[c] + offset[c]).clamp(0.0, 1.0)));
    DrivingSample {
        scenario: Scenario {
            pixels,
            style: sample.scenario.style,
        },
        provenance: Provenance::Augmented,
        ..sample.clone()
    }
}

/// Source window of a resized crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CropWindow {
    pub fn full(width: usize, height: usize) -> Self {
        CropWindow {
            x: 0,
            y: 0,
            w: width,
            h: height,
        }
    }

    /// Nearest-neighbour source cell of output cell `(x, y)` on a
    /// `width × height` output.
    pub fn source(&self, x: usize, y: usize, width: usize, height: usize) -> (usize, usize) {
        (self.x + x * self.w / width, self.y + y * self.h / height)
    }

    /// Resamples `grid` through the window to the grid's own size.
    pub fn apply<T: Clone>(&self, grid: &Grid<T>) -> Grid<T> {
        let (w, h) = (grid.width(), grid.height());
        Grid::from_fn(w, h, |x, y| grid[self.source(x, y, w, h)].clone())
    }
}

pub fn random_crop_window(width: usize, height: usize, min_scale: f64, seed: u64) -> CropWindow {
    let mut rng = rng_for(seed, &[0xC4]);
    let cw = rng.gen_range(((width as f64 * min_scale).ceil() as usize).min(width)..=width);
    let ch = rng.gen_range(((height as f64 * min_scale).ceil() as usize).min(height)..=height);
    CropWindow {
        x: rng.gen_range(0..=width - cw),
        y: rng.gen_range(0..=height - ch),
        w: cw,
        h: ch,
    }
}

/// Crops scenario and maps through one window; the label is kept even
/// though the crop may change the road geometry it was derived from.
pub fn apply_crop(sample: &DrivingSample, window: CropWindow) -> DrivingSample {
    let semantic = SemanticMap {
        classes: window.apply(&sample.semantic.classes),
    };
    let instances = InstanceMap::from_grid(window.apply(&sample.instances.grid), &semantic);
    DrivingSample {
        scenario: Scenario {
            pixels: window.apply(&sample.scenario.pixels),
            style: sample.scenario.style,
        },
        semantic,
        instances,
        provenance: Provenance::Augmented,
        ..sample.clone()
    }
}

pub fn baseline_random_resized_crop(sample: &DrivingSample, min_scale: f64, seed: u64) -> DrivingSample {
    let w = random_crop_window(sample.semantic.width(), sample.semantic.height(), min_scale, seed);
    apply_crop(sample, w)
}

/// One augmented layout and how it relates geometrically to its source.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedLayout {
    /// Index into the augmenter's sources.
    pub source: usize,
    pub layout: Layout,
    /// Geometric warp applied to the source; `None` means identity.
    pub warp: Option<CropWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitativeRow {
    pub augmenter: String,
    /// Achieved outputs per source.
    pub number: f64,
    /// Some output carries classes the warped source does not have there.
    pub semantic: bool,
    /// Some output has more instances than its warped source.
    pub instance: bool,
    pub mean_score: f64,
    /// `high` at or above the calibration anchor plus margin, `medium` at or
    /// above the anchor, `low` below.
    pub reality: String,
}

/// Mechanical proxies for one augmenter's outputs.
pub fn qualitative_row(
    augmenter: &str,
    sources: &[Layout],
    outputs: &[AugmentedLayout],
    scorer: &PlausibilityScorer,
) -> QualitativeRow {
    let mut semantic = false;
    let mut instance = false;
    let mut total = 0.0;
    for o in outputs {
        let (src_sem, src_inst) = &sources[o.source];
        let (warped_sem, warped_inst) = match o.warp {
            None => (src_sem.classes.clone(), src_inst.records.len()),
            Some(w) => {
                let s = SemanticMap {
                    classes: w.apply(&src_sem.classes),
                };
                let n = InstanceMap::from_grid(w.apply(&src_inst.grid), &s).records.len();
                (s.classes, n)
            }
        };
        semantic |= o.layout.0.classes != warped_sem;
        instance |= o.layout.1.records.len() > warped_inst;
        total += scorer.score_layout(&o.layout.0, &o.layout.1);
    }
    let mean_score = if outputs.is_empty() {
        0.0
    } else {
        total / outputs.len() as f64
    };
    let reality = if mean_score >= scorer.calibrated_for + scorer.margin {
        "high"
    } else if mean_score >= scorer.calibrated_for {
        "medium"
    } else {
        "low"
    };
    QualitativeRow {
        augmenter: augmenter.into(),
        number: if sources.is_empty() {
            0.0
        } else {
            outputs.len() as f64 / sources.len() as f64
        },
        semantic,
        instance,
        mean_score,
        reality: reality.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{StyleId, TaskType, World, WorldParams};

    fn sample() -> DrivingSample {
        World::with_builtin_styles(WorldParams::default(), 1)
            .unwrap()
            .generate(StyleId(0), TaskType::AvoidCars, 11)
            .unwrap()
    }

    #[test]
    fn zero_jitter_is_identity() {
        let s = sample();
        let j = baseline_color_jitter(&s, 0.0, 4);
        assert_eq!(j.scenario, s.scenario);
        assert_eq!(j.semantic, s.semantic);
    }

    #[test]
    fn full_crop_is_identity() {
        let s = sample();
        let c = apply_crop(&s, CropWindow::full(64, 32));
        assert_eq!(c.scenario, s.scenario);
        assert_eq!(c.semantic, s.semantic);
        assert_eq!(c.instances, s.instances);
    }

    #[test]
    fn crop_keeps_dimensions_and_label() {
        let s = sample();
        for seed in 0..20 {
            let c = baseline_random_resized_crop(&s, 0.7, seed);
            assert_eq!((c.semantic.width(), c.semantic.height()), (64, 32));
            assert_eq!(c.label, s.label);
            c.validate().unwrap();
        }
    }
}
