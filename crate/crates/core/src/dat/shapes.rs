use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::placement::{scale_bin, SCALE_BINS};
use super::Layout;
use crate::error::{Error, Result};
use crate::world::ClassId;

/// Binary instance mask, tight to its bounding box.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Nearest-neighbour resample to `width` x `height`.
    pub fn resized(&self, width: usize, height: usize) -> Mask {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                bits.push(self.get(x * self.width / width, sy));
            }
        }
        Mask { width, height, bits }
    }

    /// True when the set cells form exactly one 4-connected component.
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.bits.iter().position(|&b| b) else {
            return false;
        };
        let mut seen = vec![false; self.bits.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            let (x, y) = (i % self.width, i / self.width);
            let mut push = |nx: usize, ny: usize| {
                let j = ny * self.width + nx;
                if self.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < self.width {
                push(x + 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if y + 1 < self.height {
                push(x, y + 1);
            }
        }
        reached == self.count()
    }
}

/// Shape templates per thing class and scale bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatPredictor {
    pub library: BTreeMap<ClassId, [Vec<Mask>; SCALE_BINS]>,
}

/// Collects the distinct connected masks of every observed instance.
pub fn fit_what(layouts: &[Layout]) -> Result<WhatPredictor> {
    let mut sets: BTreeMap<ClassId, [BTreeSet<Mask>; SCALE_BINS]> = BTreeMap::new();
    for (_, instances) in layouts {
        for r in &instances.records {
            let b = r.bbox;
            let mut bits = Vec::with_capacity(b.area());
            for y in b.y..b.y1() {
                for x in b.x..b.x1() {
                    bits.push(instances.grid[(x, y)] == r.id);
                }
            }
            let mask = Mask {
                width: b.w,
                height: b.h,
                bits,
            };
            if mask.is_connected() {
                sets.entry(r.class).or_default()[scale_bin(b.h)].insert(mask);
            }
        }
    }
    if sets.is_empty() {
        return Err(Error::Fitting("no connected instance shapes in layouts".into()));
    }
    let library = sets
        .into_iter()
        .map(|(c, bins)| (c, bins.map(|s| s.into_iter().collect())))
        .collect();
    Ok(WhatPredictor { library })
}

impl WhatPredictor {
    /// Draws a template from `scale_bin`, falling back to the nearest
    /// non-empty bin of the class.
    pub fn sample(&self, class: ClassId, scale_bin: usize, rng: &mut impl Rng) -> Option<&Mask> {
        let bins = self.library.get(&class)?;
        let bin = (0..SCALE_BINS)
            .filter(|&b| !bins[b].is_empty())
            .min_by_key(|&b| (b.abs_diff(scale_bin), b))?;
        let list = &bins[bin];
        Some(&list[rng.gen_range(0..list.len())])
    }

    pub fn template_count(&self, class: ClassId) -> usize {
        self.library.get(&class).map_or(0, |b| b.iter().map(Vec::len).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::world::{InstanceMap, SemanticMap};

    #[test]
    fn connectivity() {
        let m = Mask {
            width: 3,
            height: 2,
            bits: vec![true, false, true, true, true, true],
        };
        assert!(m.is_connected());
        let m = Mask {
            width: 3,
            height: 1,
            bits: vec![true, false, true],
        };
        assert!(!m.is_connected());
    }

    #[test]
    fn resize_keeps_solid_masks_solid() {
        let m = Mask {
            width: 2,
            height: 2,
            bits: vec![true; 4],
        };
        let r = m.resized(5, 3);
        assert_eq!(r.count(), 15);
        assert!(r.is_connected());
    }

    #[test]
    fn library_holds_observed_shapes() {
        let mut s = SemanticMap::filled(32, 16, ClassId::Road);
        for y in 2..5 {
            for x in 3..8 {
                s.classes[(x, y)] = ClassId::Car;
            }
        }
        let i = InstanceMap::extract(&s);
        let what = fit_what(&[(s, i)]).unwrap();
        assert_eq!(what.template_count(ClassId::Car), 1);
        let mut rng = rng_for(1, &[]);
        let m = what.sample(ClassId::Car, 2, &mut rng).unwrap();
        assert_eq!((m.width, m.height), (5, 3));
        assert!(what.sample(ClassId::Pedestrian, 0, &mut rng).is_none());
    }
}
