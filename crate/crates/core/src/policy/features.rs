use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::style::StyleModel;
use crate::world::{segment, ClassId, DrivingSample, InstanceMap, Scenario, SemanticMap};

pub const POOL: usize = 4;
pub const OCCUPANCY_LEN: usize = POOL * POOL * ClassId::COUNT;
pub const FEATURE_LEN: usize = OCCUPANCY_LEN + 2;
pub const LANE_OFFSET: usize = OCCUPANCY_LEN;
pub const OBSTACLE_OFFSET: usize = OCCUPANCY_LEN + 1;
/// Cells per unit of the geometry features (half a lane spacing on the
/// default road).
pub const LANE_UNIT: f64 = 5.0;

/// Class occupancy fractions on a 4x4 pooling grid (class-major within each
/// pool cell), then lane-centre offset and nearest in-corridor obstacle
/// offset, both in [`LANE_UNIT`]s. No obstacle reads as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps raw values; only the length is checked.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::Invalid(format!(
                "feature vector has {} entries, expected {FEATURE_LEN}",
                values.len()
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn occupancy(&self, pool_x: usize, pool_y: usize, class: ClassId) -> f64 {
        self.0[(pool_y * POOL + pool_x) * ClassId::COUNT + class.index()]
    }

    pub fn lane_offset(&self) -> f64 {
        self.0[LANE_OFFSET]
    }

    pub fn obstacle_offset(&self) -> f64 {
        self.0[OBSTACLE_OFFSET]
    }
}

fn drivable_span(semantic: &SemanticMap, y: usize) -> Option<(usize, usize)> {
    let row = semantic.classes.row(y);
    let l = row.iter().position(|c| c.is_drivable())?;
    let r = row.iter().rposition(|c| c.is_drivable())?;
    Some((l, r))
}

/// Features of an already segmented layout.
pub fn featurize_layout(semantic: &SemanticMap, instances: &InstanceMap) -> Result<FeatureVector> {
    let (w, h) = (semantic.width(), semantic.height());
    let mut v = vec![0.0; FEATURE_LEN];
    for py in 0..POOL {
        let rows = py * h / POOL..(py + 1) * h / POOL;
        for px in 0..POOL {
            let cols = px * w / POOL..(px + 1) * w / POOL;
            let n = (rows.len() * cols.len()) as f64;
            let base = (py * POOL + px) * ClassId::COUNT;
            for y in rows.clone() {
                for x in cols.clone() {
                    v[base + semantic.get(x, y).index()] += 1.0;
                }
            }
            for c in &mut v[base..base + ClassId::COUNT] {
                *c /= n;
            }
        }
    }

    let vehicle = (w / 2) as f64;
    let centres: Vec<f64> = (h.saturating_sub(4)..h)
        .filter_map(|y| drivable_span(semantic, y))
        .map(|(l, r)| (l + r) as f64 / 2.0)
        .collect();
    if centres.is_empty() {
        return Err(Error::Degenerate("no road in front of the vehicle".into()));
    }
    v[LANE_OFFSET] = (centres.iter().sum::<f64>() / centres.len() as f64 - vehicle) / LANE_UNIT;

    // nearest car whose centre sits inside the road span of its row
    let mut nearest: Option<(usize, f64)> = None;
    for r in instances.records.iter().filter(|r| r.class == ClassId::Car) {
        let cy = r.bbox.y + (r.bbox.h - 1) / 2;
        let cx = r.bbox.x as f64 + (r.bbox.w as f64 - 1.0) / 2.0;
        let Some((l, rr)) = drivable_span(semantic, cy) else {
            continue;
        };
        if cx < l as f64 || cx > rr as f64 {
            continue;
        }
        let offset = (cx - (l + rr) as f64 / 2.0) / LANE_UNIT;
        let bottom = r.bbox.y1();
        if nearest.is_none_or(|(b, _)| bottom > b) {
            nearest = Some((bottom, offset));
        }
    }
    v[OBSTACLE_OFFSET] = nearest.map_or(0.0, |(_, o)| o);
    Ok(FeatureVector(v))
}

/// Segments `scenario` through `style`, then featurizes the result.
pub fn featurize_scenario(scenario: &Scenario, style: &StyleModel) -> Result<FeatureVector> {
    let (semantic, instances) = segment(scenario, style);
    featurize_layout(&semantic, &instances)
}

pub fn featurize(sample: &DrivingSample, style: &StyleModel) -> Result<FeatureVector> {
    featurize_scenario(&sample.scenario, style)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Grid;
    use crate::world::{RoadGeometry, StyleId, TaskType, World, WorldParams};

    #[test]
    fn all_road_scene_is_centred_with_no_obstacle() {
        let m = SemanticMap::filled(64, 32, ClassId::Road);
        let f = featurize_layout(&m, &InstanceMap::empty(64, 32)).unwrap();
        // span 0..63 has centre 31.5 against vehicle column 32
        assert!((f.lane_offset() - (-0.5 / LANE_UNIT)).abs() < 1e-12);
        assert_eq!(f.obstacle_offset(), 0.0);
        assert_eq!(f.occupancy(2, 3, ClassId::Road), 1.0);
    }

    #[test]
    fn straight_centred_road_has_zero_offset() {
        let w = World::with_builtin_styles(WorldParams::default(), 2).unwrap();
        let s = w
            .generate_with_geometry(StyleId(0), TaskType::Straight, RoadGeometry::straight(), 3)
            .unwrap();
        let f = featurize(&s, w.style(StyleId(0)).unwrap()).unwrap();
        assert_eq!(f.lane_offset(), 0.0);
        assert_eq!(f.obstacle_offset(), 0.0);
        for cell in 0..POOL * POOL {
            let sum: f64 = f.as_slice()[cell * 8..cell * 8 + 8].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn car_dead_ahead_is_reported() {
        // road columns 10..=40 (centre 25), car centred on column 30
        let mut g = Grid::filled(64, 32, ClassId::Building);
        for y in 0..32 {
            for x in 10..=40 {
                g[(x, y)] = ClassId::Road;
            }
        }
        for y in 12..15 {
            for x in 28..=32 {
                g[(x, y)] = ClassId::Car;
            }
        }
        let m = SemanticMap { classes: g };
        let i = InstanceMap::extract(&m);
        let f = featurize_layout(&m, &i).unwrap();
        assert_eq!(f.obstacle_offset(), 1.0);
        assert_eq!(f.lane_offset(), -7.0 / LANE_UNIT);
    }

    #[test]
    fn roadless_scene_is_degenerate() {
        let m = SemanticMap::filled(64, 32, ClassId::Building);
        assert!(matches!(
            featurize_layout(&m, &InstanceMap::empty(64, 32)),
            Err(Error::Degenerate(_))
        ));
    }
}
