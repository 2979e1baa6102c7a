//! The synthetic driving world: class palette, semantic and instance maps,
//! styled scenarios and labeled driving samples.
//!
//! Grids are row-major with row 0 at the far end of the view and the
//! vehicle sitting below the last row, looking up the grid.

mod generator;
mod grid;
mod render;

use serde::{Deserialize, Serialize};

pub use generator::{generate_scenario, torque_label, Obstacle, RoadGeometry, World, WorldParams};
pub use grid::{CellRect, Grid};
pub use render::{render, segment};

use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 16;

/// Fixed eight-class palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ClassId {
    Road = 0,
    LaneMarking = 1,
    Car = 2,
    Pedestrian = 3,
    Building = 4,
    Vegetation = 5,
    Sky = 6,
    Sidewalk = 7,
}

impl ClassId {
    pub const COUNT: usize = 8;
    pub const ALL: [ClassId; 8] = [
        ClassId::Road,
        ClassId::LaneMarking,
        ClassId::Car,
        ClassId::Pedestrian,
        ClassId::Building,
        ClassId::Vegetation,
        ClassId::Sky,
        ClassId::Sidewalk,
    ];
    pub const THINGS: [ClassId; 2] = [ClassId::Car, ClassId::Pedestrian];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassId> {
        Self::ALL.get(i).copied()
    }

    /// Classes that carry instance identity.
    pub fn is_thing(self) -> bool {
        matches!(self, ClassId::Car | ClassId::Pedestrian)
    }

    pub fn is_drivable(self) -> bool {
        matches!(self, ClassId::Road | ClassId::LaneMarking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StyleId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskType {
    Turn,
    AvoidCars,
    Straight,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [TaskType::Turn, TaskType::AvoidCars, TaskType::Straight];

    pub fn index(self) -> usize {
        match self {
            TaskType::Turn => 0,
            TaskType::AvoidCars => 1,
            TaskType::Straight => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<TaskType> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskType::Turn => "turn",
            TaskType::AvoidCars => "avoid-cars",
            TaskType::Straight => "straight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Human,
    Crowdsourced,
    Augmented,
}

impl Provenance {
    pub fn index(self) -> usize {
        match self {
            Provenance::Human => 0,
            Provenance::Crowdsourced => 1,
            Provenance::Augmented => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Provenance> {
        [Provenance::Human, Provenance::Crowdsourced, Provenance::Augmented]
            .get(i)
            .copied()
    }
}

/// Per-cell class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticMap {
    pub classes: Grid<ClassId>,
}

impl SemanticMap {
    /// Validating constructor.
    pub fn new(classes: Grid<ClassId>) -> Result<Self> {
        let map = SemanticMap { classes };
        map.validate()?;
        Ok(map)
    }

    pub fn filled(width: usize, height: usize, class: ClassId) -> Self {
        SemanticMap {
            classes: Grid::filled(width, height, class),
        }
    }

    pub fn width(&self) -> usize {
        self.classes.width()
    }

    pub fn height(&self) -> usize {
        self.classes.height()
    }

    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.classes[(x, y)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.width() < MIN_SIDE || self.height() < MIN_SIDE {
            return Err(Error::Invalid(format!(
                "semantic map {}x{} is smaller than {MIN_SIDE}x{MIN_SIDE}",
                self.width(),
                self.height()
            )));
        }
        if !self.classes.iter().any(|&c| c == ClassId::Road) {
            return Err(Error::Invalid("semantic map has no road region".into()));
        }
        Ok(())
    }

    /// Per-class cell counts.
    pub fn histogram(&self) -> [usize; ClassId::COUNT] {
        let mut h = [0; ClassId::COUNT];
        for c in self.classes.iter() {
            h[c.index()] += 1;
        }
        h
    }
}

/// Placement parameters of an instance, in cell units: centre and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub translate_x: f32,
    pub translate_y: f32,
    pub scale_x: f32,
    pub scale_y: f32,
}

impl Affine {
    pub fn of_rect(r: CellRect) -> Self {
        Affine {
            translate_x: r.x as f32 + (r.w as f32 - 1.0) / 2.0,
            translate_y: r.y as f32 + (r.h as f32 - 1.0) / 2.0,
            scale_x: r.w as f32,
            scale_y: r.h as f32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u16,
    pub class: ClassId,
    pub bbox: CellRect,
    pub affine: Affine,
}

/// Instance-id grid (0 = background) plus one record per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMap {
    pub grid: Grid<u16>,
    pub records: Vec<InstanceRecord>,
}

impl InstanceMap {
    pub const BACKGROUND: u16 = 0;

    pub fn empty(width: usize, height: usize) -> Self {
        InstanceMap {
            grid: Grid::filled(width, height, Self::BACKGROUND),
            records: Vec::new(),
        }
    }

    /// Connected components (4-neighbour) of thing-class cells, numbered
    /// from 1 in row-major scan order.
    pub fn extract(semantic: &SemanticMap) -> Self {
        let (w, h) = (semantic.width(), semantic.height());
        let mut grid = Grid::filled(w, h, Self::BACKGROUND);
        let mut records = Vec::new();
        let mut stack = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let class = semantic.get(x, y);
                if !class.is_thing() || grid[(x, y)] != Self::BACKGROUND {
                    continue;
                }
                let id = records.len() as u16 + 1;
                let mut rect = CellRect::point(x, y);
                grid[(x, y)] = id;
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    rect = rect.include(cx, cy);
                    for (nx, ny) in grid.neighbours4(cx, cy) {
                        if grid[(nx, ny)] == Self::BACKGROUND && semantic.get(nx, ny) == class {
                            grid[(nx, ny)] = id;
                            stack.push((nx, ny));
                        }
                    }
                }
                records.push(InstanceRecord {
                    id,
                    class,
                    bbox: rect,
                    affine: Affine::of_rect(rect),
                });
            }
        }
        InstanceMap { grid, records }
    }

    /// Rebuilds records (tight boxes) from an id grid, taking each
    /// instance's class from the semantic map. Ids are kept.
    pub fn from_grid(grid: Grid<u16>, semantic: &SemanticMap) -> Self {
        let mut rects: std::collections::BTreeMap<u16, (CellRect, ClassId)> = Default::default();
        for (x, y, &id) in grid.enumerate() {
            if id == Self::BACKGROUND {
                continue;
            }
            rects
                .entry(id)
                .and_modify(|(r, _)| *r = r.include(x, y))
                .or_insert((CellRect::point(x, y), semantic.get(x, y)));
        }
        let records = rects
            .into_iter()
            .map(|(id, (bbox, class))| InstanceRecord {
                id,
                class,
                bbox,
                affine: Affine::of_rect(bbox),
            })
            .collect();
        InstanceMap { grid, records }
    }

    pub fn record(&self, id: u16) -> Option<&InstanceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn next_id(&self) -> u16 {
        self.records.iter().map(|r| r.id).max().unwrap_or(0) + 1
    }

    /// Cells currently carrying `id`.
    pub fn cells_of(&self, id: u16) -> Vec<(usize, usize)> {
        self.grid
            .enumerate()
            .filter(|&(_, _, &v)| v == id)
            .map(|(x, y, _)| (x, y))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.records {
            if r.id == Self::BACKGROUND || !seen.insert(r.id) {
                return Err(Error::Invalid(format!("duplicate or reserved instance id {}", r.id)));
            }
            if !r.class.is_thing() {
                return Err(Error::Invalid(format!(
                    "instance {} has stuff class {:?}",
                    r.id, r.class
                )));
            }
        }
        for (x, y, &id) in self.grid.enumerate() {
            if id == Self::BACKGROUND {
                continue;
            }
            match self.record(id) {
                Some(r) if r.bbox.contains(x, y) => {}
                Some(_) => return Err(Error::Invalid(format!("instance {id} cell ({x},{y}) outside its box"))),
                None => return Err(Error::Invalid(format!("instance {id} has no record"))),
            }
        }
        Ok(())
    }
}

/// Styled appearance grid: three channels per cell, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub pixels: Grid<[f32; 3]>,
    pub style: StyleId,
}

impl Scenario {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("scenario channel outside [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingSample {
    pub scenario: Scenario,
    pub semantic: SemanticMap,
    pub instances: InstanceMap,
    pub label: Option<f32>,
    pub task: TaskType,
    pub provenance: Provenance,
}

impl DrivingSample {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.semantic.validate()?;
        self.instances.validate()?;
        let dims = |w: usize, h: usize| (w, h) == (self.semantic.width(), self.semantic.height());
        if !dims(self.scenario.width(), self.scenario.height())
            || !dims(self.instances.grid.width(), self.instances.grid.height())
        {
            return Err(Error::Invalid("sample grids disagree on dimensions".into()));
        }
        if let Some(l) = self.label {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Invalid(format!("torque label {l} outside [0,1]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_finds_separate_blobs() {
        let mut m = SemanticMap::filled(16, 16, ClassId::Road);
        for (x, y) in [(2, 2), (3, 2), (2, 3)] {
            m.classes[(x, y)] = ClassId::Car;
        }
        m.classes[(10, 10)] = ClassId::Pedestrian;
        m.classes[(10, 11)] = ClassId::Car;
        let inst = InstanceMap::extract(&m);
        assert_eq!(inst.records.len(), 3);
        assert_eq!(inst.records[0].bbox, CellRect { x: 2, y: 2, w: 2, h: 2 });
        assert_eq!(inst.records[1].class, ClassId::Pedestrian);
        assert_eq!(inst.records[2].class, ClassId::Car);
        inst.validate().unwrap();
    }

    #[test]
    fn small_or_roadless_maps_are_rejected() {
        assert!(SemanticMap::new(Grid::filled(15, 20, ClassId::Road)).is_err());
        assert!(SemanticMap::new(Grid::filled(16, 16, ClassId::Sky)).is_err());
        assert!(SemanticMap::new(Grid::filled(16, 16, ClassId::Road)).is_ok());
    }

    #[test]
    fn affine_is_box_centre_and_extent() {
        let a = Affine::of_rect(CellRect {
            x: 4,
            y: 10,
            w: 5,
            h: 3,
        });
        assert_eq!(
            (a.translate_x, a.translate_y, a.scale_x, a.scale_y),
            (6.0, 11.0, 5.0, 3.0)
        );
    }
}
