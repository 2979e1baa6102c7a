//! Implausible layouts used as negatives when calibrating the scorer.

use super::{insert_cells, Layout};
use crate::world::ClassId;

/// Places a `w` x `h` car wholly inside the first building region (row-major
/// scan) large enough to hold it.
pub fn car_in_building(layout: &Layout, w: usize, h: usize) -> Option<Layout> {
    let (s, _) = layout;
    for y in 0..s.height().saturating_sub(h - 1) {
        for x in 0..s.width().saturating_sub(w - 1) {
            let fits = (y..y + h).all(|yy| (x..x + w).all(|xx| s.get(xx, yy) == ClassId::Building));
            if fits {
                let cells: Vec<_> = (y..y + h).flat_map(|yy| (x..x + w).map(move |xx| (xx, yy))).collect();
                return Some(insert_cells(layout, &cells, ClassId::Car).0);
            }
        }
    }
    None
}

/// Copies the first instance at least three cells long along one axis and
/// pastes it shifted one cell along that axis, so the two boxes overlap by
/// more than half.
pub fn overlapping_duplicate(layout: &Layout) -> Option<Layout> {
    let (s, inst) = layout;
    for r in &inst.records {
        let b = r.bbox;
        if b.w.max(b.h) < 3 {
            continue;
        }
        let (dx, dy) = if b.w >= b.h { (1i64, 0i64) } else { (0, 1) };
        // shift away from the map edge when needed
        let (dx, dy) = if b.x1() as i64 + dx > s.width() as i64 || b.y1() as i64 + dy > s.height() as i64 {
            (-dx, -dy)
        } else {
            (dx, dy)
        };
        if (b.x as i64 + dx) < 0 || (b.y as i64 + dy) < 0 {
            continue;
        }
        let cells: Vec<_> = inst
            .cells_of(r.id)
            .into_iter()
            .map(|(x, y)| ((x as i64 + dx) as usize, (y as i64 + dy) as usize))
            .collect();
        if cells.is_empty() {
            continue;
        }
        return Some(insert_cells(layout, &cells, r.class).0);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{InstanceMap, SemanticMap};

    #[test]
    fn building_car_is_enclosed() {
        let mut s = SemanticMap::filled(20, 16, ClassId::Road);
        for y in 4..10 {
            for x in 10..18 {
                s.classes[(x, y)] = ClassId::Building;
            }
        }
        let l = (s, InstanceMap::empty(20, 16));
        let (c, i) = car_in_building(&l, 5, 3).unwrap();
        assert_eq!(i.records.len(), 1);
        let b = i.records[0].bbox;
        assert_eq!((b.x, b.y, b.w, b.h), (10, 4, 5, 3));
        assert_eq!(c.histogram()[ClassId::Car.index()], 15);
    }

    #[test]
    fn duplicate_overlaps_more_than_half() {
        let mut s = SemanticMap::filled(20, 16, ClassId::Road);
        for y in 4..7 {
            for x in 5..10 {
                s.classes[(x, y)] = ClassId::Car;
            }
        }
        let i = InstanceMap::extract(&s);
        let (_, out) = overlapping_duplicate(&(s, i)).unwrap();
        let (a, b) = (out.records[0].bbox, out.records[1].bbox);
        let ratio = a.intersection_area(&b) as f64 / a.area().min(b.area()) as f64;
        assert!(ratio > 0.5);
    }
}
