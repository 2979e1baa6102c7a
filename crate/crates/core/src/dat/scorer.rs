//! Multi-scale layout plausibility scoring.
//!
//! Four judges run at each of three grid scales (1x, 1/2x, 1/4x):
//!
//! * `box`: classes in the one-cell ring around each instance box,
//! * `instance`: classes touching each instance mask, blended with the
//!   class-adjacency statistics of the whole map,
//! * `affine`: vertical placement and size of each instance,
//! * `shape`: mask fill ratio, times a penalty for boxes overlapping others.
//!
//! Each judge compares against frequency tables counted on real layouts. A
//! pattern seen at least [`SUPPORT_FLOOR`] of the time counts as fully
//! plausible; rarer patterns are scaled down linearly. Instance judges take
//! the worst instance, and every judge is shrunk by `n / (n + 1)` for the
//! amount of evidence behind it, so raw scores stay strictly below one.
//!
//! The weighted per-scale scores are averaged into a raw score, which a
//! monotone piecewise-linear calibration maps to the final [0, 1] score.

use serde::{Deserialize, Serialize};

use super::{corrupt, AugmentationCandidate, Layout};
use crate::error::{Error, Result};
use crate::world::{CellRect, ClassId, Grid, InstanceMap, SemanticMap};

pub const SCALES: [usize; 3] = [1, 2, 4];
pub const SUPPORT_FLOOR: f64 = 0.02;
const ADJACENCY_FLOOR: f64 = 0.002;
const SIZE_FLOOR: f64 = 0.05;
const ROW_BINS: usize = 8;
const SIZE_VALUES: usize = 8;
const FILL_BINS: usize = 5;
const K: usize = ClassId::COUNT;

pub const COMPONENTS: [&str; 4] = ["box", "instance", "affine", "shape"];

fn thing_slot(c: ClassId) -> Option<usize> {
    match c {
        ClassId::Car => Some(0),
        ClassId::Pedestrian => Some(1),
        _ => None,
    }
}

fn plausibility(counts: &[f64], i: usize, floor: f64) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    (counts[i] / total / floor).min(1.0)
}

fn evidence(n: f64) -> f64 {
    n / (n + 1.0)
}

/// A layout seen at one scale.
struct View {
    classes: Grid<ClassId>,
    ids: Grid<u16>,
    /// (id, class, box at this scale, cell count at this scale)
    instances: Vec<(u16, ClassId, CellRect, usize)>,
}

fn view(semantic: &SemanticMap, instances: &InstanceMap, factor: usize) -> View {
    if factor == 1 {
        let mut list = Vec::new();
        for r in &instances.records {
            let n = instances.grid.iter().filter(|&&v| v == r.id).count();
            if n > 0 {
                list.push((r.id, r.class, r.bbox, n));
            }
        }
        return View {
            classes: semantic.classes.clone(),
            ids: instances.grid.clone(),
            instances: list,
        };
    }
    let (w, h) = (semantic.width(), semantic.height());
    let (cw, ch) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut classes = Grid::filled(cw, ch, ClassId::Road);
    let mut ids = Grid::filled(cw, ch, InstanceMap::BACKGROUND);
    for by in 0..ch {
        for bx in 0..cw {
            let mut counts = [0usize; K];
            let cells: Vec<(usize, usize)> = (by * factor..((by + 1) * factor).min(h))
                .flat_map(|y| (bx * factor..((bx + 1) * factor).min(w)).map(move |x| (x, y)))
                .collect();
            for &(x, y) in &cells {
                counts[semantic.get(x, y).index()] += 1;
            }
            let mode = (0..K).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
            let mode = ClassId::from_index(mode).unwrap();
            classes[(bx, by)] = mode;
            if mode.is_thing() {
                let mut tally: Vec<(u16, usize)> = Vec::new();
                for &(x, y) in &cells {
                    let id = instances.grid[(x, y)];
                    if id != InstanceMap::BACKGROUND && semantic.get(x, y) == mode {
                        match tally.iter_mut().find(|(i, _)| *i == id) {
                            Some(t) => t.1 += 1,
                            None => tally.push((id, 1)),
                        }
                    }
                }
                // ties go to the instance met first in scan order, never to an id
                let mut best: Option<(u16, usize)> = None;
                for &(id, n) in &tally {
                    if best.is_none_or(|(_, m)| n > m) {
                        best = Some((id, n));
                    }
                }
                if let Some((id, _)) = best {
                    ids[(bx, by)] = id;
                }
            }
        }
    }
    let mut list = Vec::new();
    for r in &instances.records {
        let n = ids.iter().filter(|&&v| v == r.id).count();
        if n == 0 {
            continue;
        }
        let b = r.bbox;
        let x0 = b.x / factor;
        let y0 = b.y / factor;
        let rect = CellRect {
            x: x0,
            y: y0,
            w: b.x1().div_ceil(factor) - x0,
            h: b.y1().div_ceil(factor) - y0,
        };
        list.push((r.id, r.class, rect, n));
    }
    View {
        classes,
        ids,
        instances: list,
    }
}

fn ring(v: &View, b: CellRect) -> Vec<ClassId> {
    let (w, h) = (v.classes.width() as i64, v.classes.height() as i64);
    let (x0, y0, x1, y1) = (b.x as i64 - 1, b.y as i64 - 1, b.x1() as i64, b.y1() as i64);
    let mut out = Vec::new();
    let mut push = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && x < w && y < h {
            out.push(v.classes[(x as usize, y as usize)]);
        }
    };
    for x in x0..=x1 {
        push(x, y0);
        push(x, y1);
    }
    for y in y0 + 1..y1 {
        push(x0, y);
        push(x1, y);
    }
    out
}

fn boundary(v: &View, id: u16) -> Vec<ClassId> {
    let mut out = Vec::new();
    for (x, y, &cell) in v.ids.enumerate() {
        if cell != id {
            continue;
        }
        for (nx, ny) in v.ids.neighbours4(x, y) {
            if v.ids[(nx, ny)] != id {
                out.push(v.classes[(nx, ny)]);
            }
        }
    }
    out
}

fn row_bin(b: CellRect, height: usize) -> usize {
    let cy = b.y + (b.h - 1) / 2;
    (cy * ROW_BINS / height.max(1)).min(ROW_BINS - 1)
}

fn fill_bin(cells: usize, b: CellRect) -> usize {
    ((cells as f64 / b.area() as f64 * FILL_BINS as f64) as usize).min(FILL_BINS - 1)
}

fn adjacent_pairs(classes: &Grid<ClassId>) -> impl Iterator<Item = (usize, usize)> + '_ {
    classes.enumerate().flat_map(move |(x, y, &c)| {
        let right = (x + 1 < classes.width()).then(|| classes[(x + 1, y)]);
        let down = (y + 1 < classes.height()).then(|| classes[(x, y + 1)]);
        [right, down].into_iter().flatten().map(move |d| {
            let (a, b) = (c.index(), d.index());
            (a.min(b), a.max(b))
        })
    })
}

/// Frequency tables for one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub factor: usize,
    pub ring: [[f64; K]; 2],
    pub boundary: [[f64; K]; 2],
    pub adjacency: Vec<f64>,
    pub rows: [[f64; ROW_BINS]; 2],
    pub sizes: [[[f64; SIZE_VALUES]; ROW_BINS]; 2],
    pub fill: [[f64; FILL_BINS]; 2],
    pub instances: [f64; 2],
    pub pairs: f64,
}

impl ScaleStats {
    fn fit(layouts: &[Layout], factor: usize) -> Self {
        let mut s = ScaleStats {
            factor,
            ring: [[0.0; K]; 2],
            boundary: [[0.0; K]; 2],
            adjacency: vec![0.0; K * K],
            rows: [[0.0; ROW_BINS]; 2],
            sizes: [[[0.0; SIZE_VALUES]; ROW_BINS]; 2],
            fill: [[0.0; FILL_BINS]; 2],
            instances: [0.0; 2],
            pairs: 0.0,
        };
        for (sem, inst) in layouts {
            let v = view(sem, inst, factor);
            for (a, b) in adjacent_pairs(&v.classes) {
                s.adjacency[a * K + b] += 1.0;
                s.pairs += 1.0;
            }
            for &(id, class, rect, n) in &v.instances {
                let Some(k) = thing_slot(class) else { continue };
                s.instances[k] += 1.0;
                for c in ring(&v, rect) {
                    s.ring[k][c.index()] += 1.0;
                }
                for c in boundary(&v, id) {
                    s.boundary[k][c.index()] += 1.0;
                }
                let rb = row_bin(rect, v.classes.height());
                s.rows[k][rb] += 1.0;
                s.sizes[k][rb][rect.h.min(SIZE_VALUES) - 1] += 1.0;
                s.fill[k][fill_bin(n, rect)] += 1.0;
            }
        }
        s
    }

    /// Component scores `[box, instance, affine, shape]` at this scale.
    fn components(&self, semantic: &SemanticMap, instances: &InstanceMap) -> [f64; 4] {
        let v = view(semantic, instances, self.factor);
        let mut pair_sum = 0.0;
        let mut pair_n = 0usize;
        for (a, b) in adjacent_pairs(&v.classes) {
            pair_sum += plausibility(&self.adjacency, a * K + b, ADJACENCY_FLOOR);
            pair_n += 1;
        }
        let map_adjacency = if pair_n == 0 {
            0.0
        } else {
            pair_sum / pair_n as f64 * evidence(self.pairs)
        };

        let neutral = evidence(self.instances[0] + self.instances[1]);
        let (mut bx, mut bd, mut af, mut sh) = (neutral, neutral, neutral, neutral);
        for &(id, class, rect, n) in &v.instances {
            let Some(k) = thing_slot(class) else {
                bx = 0.0;
                bd = 0.0;
                af = 0.0;
                sh = 0.0;
                continue;
            };
            let e = evidence(self.instances[k]);
            let frac_score = |classes: Vec<ClassId>, table: &[f64; K]| {
                if classes.is_empty() {
                    return 1.0;
                }
                let n = classes.len() as f64;
                classes
                    .iter()
                    .map(|c| plausibility(table, c.index(), SUPPORT_FLOOR))
                    .sum::<f64>()
                    / n
            };
            bx = bx.min(e * frac_score(ring(&v, rect), &self.ring[k]));
            bd = bd.min(e * frac_score(boundary(&v, id), &self.boundary[k]));

            let rb = row_bin(rect, v.classes.height());
            let mut size_counts = self.sizes[k][rb];
            for c in size_counts.iter_mut() {
                *c += 0.5;
            }
            let size_ok = plausibility(&size_counts, rect.h.min(SIZE_VALUES) - 1, SIZE_FLOOR);
            af = af.min(e * plausibility(&self.rows[k], rb, SUPPORT_FLOOR) * size_ok);

            let overlap = instances
                .records
                .iter()
                .filter(|o| o.id != id)
                .map(|o| {
                    let full = instances.record(id).map(|r| r.bbox).unwrap_or(rect);
                    full.intersection_area(&o.bbox) as f64 / full.area().min(o.bbox.area()) as f64
                })
                .fold(0.0, f64::max);
            sh = sh.min(e * plausibility(&self.fill[k], fill_bin(n, rect), SUPPORT_FLOOR) * (1.0 - overlap));
        }
        [bx, 0.5 * bd + 0.5 * map_adjacency, af, sh]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    /// Acceptance threshold, also the calibration anchor.
    pub threshold: f64,
    /// Median real layouts are calibrated to at least `threshold + margin`.
    pub margin: f64,
    /// Weights of box, instance, affine and shape.
    pub weights: [f64; 4],
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            threshold: 0.5,
            margin: 0.1,
            weights: [0.25; 4],
        }
    }
}

/// Summary of a score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Distribution {
                count: 0,
                mean: 0.0,
                min: 0.0,
                median: 0.0,
                max: 0.0,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Distribution {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            median: quantile(&v, 0.5),
            max: v[v.len() - 1],
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerDiagnostics {
    /// Per component, averaged over scales: (real, corrupted).
    pub components: Vec<(String, Distribution, Distribution)>,
    pub raw_real: Distribution,
    pub raw_corrupted: Distribution,
    pub calibrated_real: Distribution,
    pub calibrated_corrupted: Distribution,
}

/// Fitted plausibility judge with threshold acceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityScorer {
    pub scales: Vec<ScaleStats>,
    pub weights: [f64; 4],
    /// Acceptance threshold.
    pub threshold: f64,
    /// Threshold the calibration was anchored to.
    pub calibrated_for: f64,
    pub margin: f64,
    /// Monotone knots `(raw, calibrated)` from (0, 0) to (1, 1).
    pub knots: Vec<(f64, f64)>,
    pub diagnostics: ScorerDiagnostics,
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} must lie in (0,1)", self.threshold)));
        }
        if !(self.margin >= 0.0 && self.threshold + self.margin < 1.0) {
            return Err(Error::Config("threshold + margin must stay below 1".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "component weights must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fits per-scale statistics on 70% of `real` and calibrates on the other
/// 30%, using corrupted copies of every layout as negatives.
pub fn fit_scorer(real: &[Layout], config: ScorerConfig) -> Result<PlausibilityScorer> {
    config.validate()?;
    if real.len() < 10 {
        return Err(Error::Fitting(format!(
            "scorer needs at least 10 real layouts, got {}",
            real.len()
        )));
    }
    let (fit, held): (Vec<_>, Vec<_>) = real.iter().enumerate().partition(|(i, _)| i % 10 < 7);
    let fit: Vec<Layout> = fit.into_iter().map(|(_, l)| l.clone()).collect();
    let held: Vec<&Layout> = held.into_iter().map(|(_, l)| l).collect();

    let scales: Vec<ScaleStats> = SCALES.iter().map(|&f| ScaleStats::fit(&fit, f)).collect();
    let mut scorer = PlausibilityScorer {
        scales,
        weights: config.weights,
        threshold: config.threshold,
        calibrated_for: config.threshold,
        margin: config.margin,
        knots: vec![(0.0, 0.0), (1.0, 1.0)],
        diagnostics: ScorerDiagnostics {
            components: Vec::new(),
            raw_real: Distribution::of(&[]),
            raw_corrupted: Distribution::of(&[]),
            calibrated_real: Distribution::of(&[]),
            calibrated_corrupted: Distribution::of(&[]),
        },
    };

    let real_parts: Vec<[f64; 4]> = held.iter().map(|(s, i)| scorer.component_means(s, i)).collect();
    let mut negatives = Vec::new();
    for l in real {
        negatives.extend(corrupt::car_in_building(l, 5, 3));
        negatives.extend(corrupt::overlapping_duplicate(l));
    }
    let neg_parts: Vec<[f64; 4]> = negatives.iter().map(|(s, i)| scorer.component_means(s, i)).collect();
    let raw = |p: &[f64; 4]| p.iter().zip(&config.weights).map(|(a, w)| a * w).sum::<f64>();
    let mut real_raw: Vec<f64> = real_parts.iter().map(raw).collect();
    let neg_raw: Vec<f64> = neg_parts.iter().map(raw).collect();
    real_raw.sort_by(f64::total_cmp);

    scorer.knots = calibration_knots(&real_raw, &neg_raw, config.threshold, config.margin);

    let cal = |v: &[f64]| v.iter().map(|&r| scorer.calibrate(r)).collect::<Vec<_>>();
    let components = COMPONENTS
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let r: Vec<f64> = real_parts.iter().map(|p| p[c]).collect();
            let n: Vec<f64> = neg_parts.iter().map(|p| p[c]).collect();
            (name.to_string(), Distribution::of(&r), Distribution::of(&n))
        })
        .collect();
    scorer.diagnostics = ScorerDiagnostics {
        components,
        raw_real: Distribution::of(&real_raw),
        raw_corrupted: Distribution::of(&neg_raw),
        calibrated_real: Distribution::of(&cal(&real_raw)),
        calibrated_corrupted: Distribution::of(&cal(&neg_raw)),
    };
    Ok(scorer)
}

/// Knots sending the corrupted maximum below the threshold, a low real
/// quantile onto the threshold and the real median onto threshold + margin.
fn calibration_knots(real_sorted: &[f64], negatives: &[f64], tau: f64, margin: f64) -> Vec<(f64, f64)> {
    let median = quantile(real_sorted, 0.5);
    let low_real = quantile(real_sorted, 0.02);
    let worst_negative = negatives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut knots = vec![(0.0, 0.0)];
    let mut anchor = low_real;
    if worst_negative.is_finite() && worst_negative < low_real {
        anchor = 0.5 * (worst_negative + low_real);
        if worst_negative > 0.0 {
            knots.push((worst_negative, 0.6 * tau));
        }
    }
    let anchor = anchor.min(median * (1.0 - 1e-6)).max(1e-9);
    if knots.last().unwrap().0 >= anchor {
        knots.truncate(1);
    }
    knots.push((anchor, tau));
    if median > anchor {
        knots.push((median, tau + margin));
    }
    knots.push((1.0, 1.0));
    knots
}

impl PlausibilityScorer {
    /// Per-component scores averaged over scales.
    pub fn component_means(&self, semantic: &SemanticMap, instances: &InstanceMap) -> [f64; 4] {
        let mut acc = [0.0; 4];
        for s in &self.scales {
            let c = s.components(semantic, instances);
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        acc.map(|a| a / self.scales.len() as f64)
    }

    /// Weighted mean over components and scales, before calibration.
    pub fn raw_score(&self, semantic: &SemanticMap, instances: &InstanceMap) -> f64 {
        self.component_means(semantic, instances)
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| c * w)
            .sum()
    }

    pub fn calibrate(&self, raw: f64) -> f64 {
        let raw = raw.clamp(0.0, 1.0);
        for pair in self.knots.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if raw <= x1 {
                let t = if x1 > x0 { (raw - x0) / (x1 - x0) } else { 1.0 };
                return (y0 + t * (y1 - y0)).clamp(0.0, 1.0);
            }
        }
        1.0
    }

    pub fn score_layout(&self, semantic: &SemanticMap, instances: &InstanceMap) -> f64 {
        self.calibrate(self.raw_score(semantic, instances))
    }

    /// Score in [0, 1]; ids carry no statistics so relabeling is invisible.
    pub fn score(&self, candidate: &AugmentationCandidate) -> f64 {
        self.score_layout(&candidate.semantic, &candidate.instances)
    }

    /// Copy of `candidate` carrying its score.
    pub fn scored(&self, candidate: &AugmentationCandidate) -> AugmentationCandidate {
        let mut c = candidate.clone();
        c.score = Some(self.score(candidate));
        c
    }

    pub fn accepts(&self, score: f64) -> bool {
        score >= self.threshold
    }

    /// Same calibration, different acceptance threshold in [0, 1].
    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0,1]")));
        }
        let mut s = self.clone();
        s.threshold = threshold;
        Ok(s)
    }

    pub fn diagnostics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.diagnostics)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_is_monotone_and_anchored() {
        let real: Vec<f64> = (0..20).map(|i| 0.8 + i as f64 * 0.005).collect();
        let knots = calibration_knots(&real, &[0.5, 0.6], 0.5, 0.1);
        for w in knots.windows(2) {
            assert!(w[1].0 > w[0].0 && w[1].1 >= w[0].1, "{knots:?}");
        }
        let s = PlausibilityScorer {
            scales: vec![],
            weights: [0.25; 4],
            threshold: 0.5,
            calibrated_for: 0.5,
            margin: 0.1,
            knots,
            diagnostics: ScorerDiagnostics {
                components: vec![],
                raw_real: Distribution::of(&[]),
                raw_corrupted: Distribution::of(&[]),
                calibrated_real: Distribution::of(&[]),
                calibrated_corrupted: Distribution::of(&[]),
            },
        };
        assert!(s.calibrate(0.6) < 0.5);
        assert!(s.calibrate(real[1]) >= 0.5);
        assert!((s.calibrate(quantile(&real, 0.5)) - 0.6).abs() < 1e-12);
        assert_eq!(s.calibrate(1.0), 1.0);
        assert_eq!(s.calibrate(0.0), 0.0);
    }

    #[test]
    fn config_bounds() {
        assert!(ScorerConfig::default().validate().is_ok());
        assert!(ScorerConfig {
            threshold: 0.95,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ScorerConfig {
            weights: [0.5, 0.5, 0.5, 0.0],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
