//! Per-agent appearance models: each agent's mapping from semantic classes
//! to pixel statistics, fitted from its own scenarios and usable to re-render
//! anyone's semantic maps in that agent's look.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dat::AugmentationCandidate;
use crate::error::{Error, Result};
use crate::rng::{derive, rng_for};
use crate::world::{render, ClassId, DrivingSample, Scenario, StyleId};

/// Default per-channel L-infinity separation floor between class means.
pub const DEFAULT_SEPARATION: f32 = 0.05;

const BUILTIN_SEPARATION: f32 = 0.15;
const BUILTIN_SPREAD: f32 = 0.02;
const FITTED_TEXTURE_TAG: u64 = 0xF17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAppearance {
    pub mean: [f32; 3],
    /// Half-width of the uniform texture noise.
    pub spread: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleModel {
    pub style: StyleId,
    pub palette: [Option<ClassAppearance>; ClassId::COUNT],
    pub texture_seed: u64,
}

fn linf(a: &[f32; 3], b: &[f32; 3]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

impl StyleModel {
    /// Procedural palette for agent `id`. Means are pairwise at least 0.15
    /// apart per channel, noise half-width 0.02.
    pub fn builtin(id: StyleId) -> Self {
        let mut rng = rng_for(0x5717_1E00, &[id.0 as u64]);
        let mut means: Vec<[f32; 3]> = Vec::with_capacity(ClassId::COUNT);
        while means.len() < ClassId::COUNT {
            let m = [
                rng.gen_range(0.05f32..0.95),
                rng.gen_range(0.05f32..0.95),
                rng.gen_range(0.05f32..0.95),
            ];
            let m = m.map(|v| (v * 64.0).round() / 64.0);
            if means.iter().all(|o| linf(o, &m) >= BUILTIN_SEPARATION) {
                means.push(m);
            }
        }
        let mut palette = [None; ClassId::COUNT];
        for (slot, mean) in palette.iter_mut().zip(means) {
            *slot = Some(ClassAppearance {
                mean,
                spread: BUILTIN_SPREAD,
            });
        }
        StyleModel {
            style: id,
            palette,
            texture_seed: derive(id.0 as u64, &[0x7E87]),
        }
    }

    pub fn mean(&self, class: ClassId) -> Option<[f32; 3]> {
        self.palette[class.index()].map(|a| a.mean)
    }

    /// Smallest pairwise L-infinity distance between present class means.
    pub fn min_separation(&self) -> f32 {
        let present: Vec<_> = self.palette.iter().flatten().collect();
        let mut best = f32::INFINITY;
        for (i, a) in present.iter().enumerate() {
            for b in &present[i + 1..] {
                best = best.min(linf(&a.mean, &b.mean));
            }
        }
        best
    }

    /// Checks the segmentability invariants against `separation`.
    pub fn validate(&self, separation: f32) -> Result<()> {
        for (i, a) in self.palette.iter().enumerate() {
            let Some(a) = a else { continue };
            if a.mean.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invalid(format!("class {i} mean outside [0,1]")));
            }
            if !(0.0..separation / 2.0).contains(&a.spread) {
                return Err(Error::Invalid(format!(
                    "class {i} spread {} not below half the separation floor",
                    a.spread
                )));
            }
            for (j, b) in self.palette.iter().enumerate().skip(i + 1) {
                if let Some(b) = b {
                    if linf(&a.mean, &b.mean) < separation {
                        return Err(Error::Fitting(format!(
                            "classes {:?} and {:?} are closer than the separation floor {separation}",
                            ClassId::from_index(i).unwrap(),
                            ClassId::from_index(j).unwrap()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean per-class distance between two palettes over shared classes.
    pub fn palette_distance(&self, other: &StyleModel) -> f32 {
        let mut sum = 0.0;
        let mut n = 0;
        for (a, b) in self.palette.iter().zip(&other.palette) {
            if let (Some(a), Some(b)) = (a, b) {
                sum += linf(&a.mean, &b.mean);
                n += 1;
            }
        }
        if n == 0 {
            1.0
        } else {
            sum / n as f32
        }
    }
}

/// Similarity kernel `exp(-(d / sigma)^2)` over palette distance.
pub fn style_affinity(a: &StyleModel, b: &StyleModel, sigma: f64) -> f64 {
    let d = a.palette_distance(b) as f64 / sigma;
    (-d * d).exp()
}

fn accumulate(samples: &[DrivingSample]) -> [(f64, [f64; 3], [f64; 3]); ClassId::COUNT] {
    let mut acc = [(0.0, [0.0; 3], [0.0; 3]); ClassId::COUNT];
    for s in samples {
        for ((_, _, class), px) in s.semantic.classes.enumerate().zip(s.scenario.pixels.iter()) {
            let e = &mut acc[class.index()];
            e.0 += 1.0;
            for (c, &v) in px.iter().enumerate() {
                let v = v as f64;
                e.1[c] += v;
                e.2[c] += v * v;
            }
        }
    }
    acc
}

fn moments(samples: &[DrivingSample], style: StyleId, separation: f32) -> Result<StyleModel> {
    if samples.is_empty() {
        return Err(Error::Fitting("no samples to fit a style from".into()));
    }
    let acc = accumulate(samples);
    let missing: Vec<ClassId> = ClassId::ALL.into_iter().filter(|c| acc[c.index()].0 == 0.0).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let bound = separation / 2.0 - f32::EPSILON;
    let mut palette = [None; ClassId::COUNT];
    for (slot, (n, sum, sq)) in palette.iter_mut().zip(acc) {
        let mean = sum.map(|s| s / n);
        // Amplitude of a uniform noise with the observed variance.
        let var = (0..3)
            .map(|c| (sq[c] / n - mean[c] * mean[c]).max(0.0))
            .fold(0.0f64, f64::max);
        let spread = ((var.sqrt() * 3f64.sqrt()) as f32).min(bound).max(0.0);
        *slot = Some(ClassAppearance {
            mean: mean.map(|m| m as f32),
            spread,
        });
    }
    Ok(StyleModel {
        style,
        palette,
        texture_seed: derive(style.0 as u64, &[FITTED_TEXTURE_TAG]),
    })
}

/// Moment fit of an agent's style from its labeled samples: class means are
/// the pixel means under each class, spreads the matching uniform noise
/// amplitude clamped below half the separation floor.
pub fn fit_style(samples: &[DrivingSample], separation: f32) -> Result<StyleModel> {
    let style = samples
        .first()
        .map(|s| s.scenario.style)
        .ok_or_else(|| Error::Fitting("no samples to fit a style from".into()))?;
    let model = moments(samples, style, separation)?;
    model.validate(separation)?;
    Ok(model)
}

/// One palette over samples from several agents. The separation floor is
/// not enforced, so the result may not segment any single agent exactly.
pub fn fit_style_pooled(samples: &[DrivingSample], style: StyleId) -> Result<StyleModel> {
    moments(samples, style, DEFAULT_SEPARATION)
}

/// Renders an augmented layout in another agent's style.
pub fn cross_render(candidate: &AugmentationCandidate, style: &StyleModel, seed: u64) -> Result<Scenario> {
    render(&candidate.semantic, &candidate.instances, style, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{segment, TaskType, World, WorldParams};

    fn world() -> World {
        World::with_builtin_styles(WorldParams::default(), 4).unwrap()
    }

    fn dataset(w: &World, style: StyleId, n: u64) -> Vec<DrivingSample> {
        (0..n)
            .map(|i| w.generate(style, TaskType::ALL[(i % 3) as usize], i).unwrap())
            .collect()
    }

    #[test]
    fn builtin_palettes_are_valid_and_distinct() {
        for id in 0..8 {
            let s = StyleModel::builtin(StyleId(id));
            s.validate(DEFAULT_SEPARATION).unwrap();
            assert!(s.min_separation() >= BUILTIN_SEPARATION);
        }
        let a = StyleModel::builtin(StyleId(0));
        let b = StyleModel::builtin(StyleId(1));
        assert!(style_affinity(&a, &a, 0.1) == 1.0);
        assert!(style_affinity(&a, &b, 0.1) < 0.1);
    }

    #[test]
    fn noiseless_fit_recovers_means_exactly() {
        let mut w = world();
        let mut s = StyleModel::builtin(StyleId(1));
        for a in s.palette.iter_mut().flatten() {
            a.spread = 0.0;
        }
        w.register(s.clone());
        let fitted = fit_style(&dataset(&w, StyleId(1), 12), DEFAULT_SEPARATION).unwrap();
        for c in ClassId::ALL {
            assert_eq!(fitted.mean(c), s.mean(c), "{c:?}");
            assert_eq!(fitted.palette[c.index()].unwrap().spread, 0.0);
        }
    }

    #[test]
    fn missing_class_is_reported() {
        let w = world();
        // straight scenes never contain cars
        let samples: Vec<_> = (0..40)
            .map(|i| w.generate(StyleId(0), TaskType::Straight, i).unwrap())
            .collect();
        match fit_style(&samples, DEFAULT_SEPARATION) {
            Err(Error::MissingClasses(c)) => assert_eq!(c, vec![ClassId::Car]),
            other => panic!("expected missing classes, got {other:?}"),
        }
    }

    #[test]
    fn merged_classes_violate_the_floor() {
        let mut w = world();
        let mut s = StyleModel::builtin(StyleId(2));
        let road = s.palette[0].unwrap();
        s.palette[ClassId::Sidewalk.index()] = Some(road);
        w.register(s);
        let err = fit_style(&dataset(&w, StyleId(2), 9), DEFAULT_SEPARATION).unwrap_err();
        assert!(matches!(err, Error::Fitting(_)), "{err:?}");
    }

    #[test]
    fn fitted_style_segments_its_own_scenes() {
        let w = world();
        let data = dataset(&w, StyleId(3), 15);
        let fitted = fit_style(&data, DEFAULT_SEPARATION).unwrap();
        for s in &data {
            assert_eq!(segment(&s.scenario, &fitted).0, s.semantic);
        }
    }

    #[test]
    fn pooled_fit_blurs_agents() {
        let w = world();
        let mut data = dataset(&w, StyleId(0), 9);
        data.extend(dataset(&w, StyleId(1), 9));
        let pooled = fit_style_pooled(&data, StyleId(100)).unwrap();
        let wrong = data
            .iter()
            .filter(|s| segment(&s.scenario, &pooled).0 != s.semantic)
            .count();
        assert!(wrong > 0);
    }
}
