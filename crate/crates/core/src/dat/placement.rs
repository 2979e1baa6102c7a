use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Layout;
use crate::error::{Error, Result};
use crate::world::{ClassId, Grid, SemanticMap};

pub const POSITION_BINS: usize = 8;
pub const SCALE_BINS: usize = 3;
pub const CONTEXT_BINS: usize = 4;
const TABLE_LEN: usize = CONTEXT_BINS * POSITION_BINS * POSITION_BINS * SCALE_BINS;

/// Scale bin of an instance from its height in cells.
pub fn scale_bin(height: usize) -> usize {
    match height {
        0..=3 => 0,
        4..=5 => 1,
        _ => 2,
    }
}

/// Distance-to-road-edge context of every cell: 0 road interior, 1 road
/// near an edge, 2 off-road near the road, 3 far from any road in its row.
pub fn context_grid(semantic: &SemanticMap) -> Grid<u8> {
    let w = semantic.width();
    let spans: Vec<Option<(usize, usize)>> = (0..semantic.height())
        .map(|y| {
            let row = semantic.classes.row(y);
            let l = row.iter().position(|c| c.is_drivable())?;
            let r = row.iter().rposition(|c| c.is_drivable())?;
            Some((l, r))
        })
        .collect();
    Grid::from_fn(w, semantic.height(), |x, y| match spans[y] {
        None => 3,
        Some((l, r)) if x >= l && x <= r => {
            if (x - l).min(r - x) >= 3 {
                0
            } else {
                1
            }
        }
        Some((l, r)) => {
            let d = if x < l { l - x } else { x - r };
            if d <= 3 {
                2
            } else {
                3
            }
        }
    })
}

fn position_bin(v: usize, extent: usize) -> usize {
    (v * POSITION_BINS / extent.max(1)).min(POSITION_BINS - 1)
}

fn table_index(ctx: usize, xb: usize, yb: usize, sb: usize) -> usize {
    ((ctx * POSITION_BINS + yb) * POSITION_BINS + xb) * SCALE_BINS + sb
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementTable {
    /// Observed counts per (context, y bin, x bin, scale bin).
    pub raw: Vec<f64>,
    /// Smoothed and normalised; sums to 1.
    pub prob: Vec<f64>,
    /// Observed (width, height) per scale bin.
    pub sizes: [Vec<(u16, u16)>; SCALE_BINS],
}

/// Per-class placement density over position, scale and road context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WherePredictor {
    pub width: usize,
    pub height: usize,
    pub alpha: f64,
    pub tables: BTreeMap<ClassId, PlacementTable>,
}

/// A drawn placement: centre cell plus scale bin and extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub center_x: usize,
    pub center_y: usize,
    pub scale_bin: usize,
    pub width: usize,
    pub height: usize,
}

/// Fits placement histograms from observed instances. Each observed bin
/// spreads `alpha` extra mass onto itself and its position neighbours with
/// the same context and scale; all other bins stay at zero.
pub fn fit_where(layouts: &[Layout], alpha: f64) -> Result<WherePredictor> {
    let (width, height) = match layouts.first() {
        Some((s, _)) => (s.width(), s.height()),
        None => return Err(Error::Fitting("no layouts to fit placement from".into())),
    };
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing alpha {alpha} must be >= 0")));
    }
    let mut tables: BTreeMap<ClassId, PlacementTable> = BTreeMap::new();
    for (semantic, instances) in layouts {
        let ctx = context_grid(semantic);
        for r in &instances.records {
            let cx = r.bbox.x + (r.bbox.w - 1) / 2;
            let cy = r.bbox.y + (r.bbox.h - 1) / 2;
            let t = tables.entry(r.class).or_insert_with(|| PlacementTable {
                raw: vec![0.0; TABLE_LEN],
                prob: vec![0.0; TABLE_LEN],
                sizes: Default::default(),
            });
            let sb = scale_bin(r.bbox.h);
            let i = table_index(
                ctx[(cx, cy)] as usize,
                position_bin(cx, width),
                position_bin(cy, height),
                sb,
            );
            t.raw[i] += 1.0;
            t.sizes[sb].push((r.bbox.w as u16, r.bbox.h as u16));
        }
    }
    if tables.is_empty() {
        return Err(Error::Fitting("layouts contain no instances".into()));
    }
    for t in tables.values_mut() {
        let mut mass = t.raw.clone();
        for ctx in 0..CONTEXT_BINS {
            for sb in 0..SCALE_BINS {
                for yb in 0..POSITION_BINS {
                    for xb in 0..POSITION_BINS {
                        let near_observed = (yb.saturating_sub(1)..=(yb + 1).min(POSITION_BINS - 1)).any(|y| {
                            (xb.saturating_sub(1)..=(xb + 1).min(POSITION_BINS - 1))
                                .any(|x| t.raw[table_index(ctx, x, y, sb)] > 0.0)
                        });
                        if near_observed {
                            mass[table_index(ctx, xb, yb, sb)] += alpha;
                        }
                    }
                }
            }
        }
        let total: f64 = mass.iter().sum();
        t.prob = mass.into_iter().map(|m| m / total).collect();
        for s in t.sizes.iter_mut() {
            s.sort_unstable();
        }
    }
    Ok(WherePredictor {
        width,
        height,
        alpha,
        tables,
    })
}

impl WherePredictor {
    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.tables.keys().copied()
    }

    /// Number of training instances per class.
    pub fn class_count(&self, class: ClassId) -> f64 {
        self.tables.get(&class).map_or(0.0, |t| t.raw.iter().sum())
    }

    /// Unsmoothed count mass in one vertical position bin.
    pub fn raw_row_mass(&self, class: ClassId, y_bin: usize) -> f64 {
        let Some(t) = self.tables.get(&class) else { return 0.0 };
        let mut m = 0.0;
        for ctx in 0..CONTEXT_BINS {
            for xb in 0..POSITION_BINS {
                for sb in 0..SCALE_BINS {
                    m += t.raw[table_index(ctx, xb, y_bin, sb)];
                }
            }
        }
        m
    }

    pub fn probability(&self, class: ClassId, ctx: usize, x_bin: usize, y_bin: usize, s_bin: usize) -> f64 {
        self.tables
            .get(&class)
            .map_or(0.0, |t| t.prob[table_index(ctx, x_bin, y_bin, s_bin)])
    }

    /// Most probable `(context, x bin, y bin, scale bin)`, lowest index on ties.
    pub fn mode(&self, class: ClassId) -> Option<(usize, usize, usize, usize)> {
        let t = self.tables.get(&class)?;
        let mut best = 0;
        for (i, &p) in t.prob.iter().enumerate() {
            if p > t.prob[best] {
                best = i;
            }
        }
        let sb = best % SCALE_BINS;
        let xb = (best / SCALE_BINS) % POSITION_BINS;
        let yb = (best / (SCALE_BINS * POSITION_BINS)) % POSITION_BINS;
        let ctx = best / (SCALE_BINS * POSITION_BINS * POSITION_BINS);
        Some((ctx, xb, yb, sb))
    }

    /// Draws a centre cell and extent, weighting every cell of `semantic` by
    /// the density of its own (context, position) bin.
    pub fn sample(&self, class: ClassId, semantic: &SemanticMap, rng: &mut impl Rng) -> Option<Placement> {
        let t = self.tables.get(&class)?;
        let ctx = context_grid(semantic);
        let (w, h) = (semantic.width(), semantic.height());
        let mut weights = Vec::with_capacity(w * h * SCALE_BINS);
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                for sb in 0..SCALE_BINS {
                    let p = t.prob[table_index(ctx[(x, y)] as usize, position_bin(x, w), position_bin(y, h), sb)];
                    total += if t.sizes[sb].is_empty() { 0.0 } else { p };
                    weights.push(total);
                }
            }
        }
        if total <= 0.0 {
            return None;
        }
        let u = rng.gen_range(0.0..total);
        let i = weights.partition_point(|&c| c <= u).min(weights.len() - 1);
        let sb = i % SCALE_BINS;
        let cell = i / SCALE_BINS;
        let sizes = &t.sizes[sb];
        let (sw, sh) = sizes[rng.gen_range(0..sizes.len())];
        Some(Placement {
            center_x: cell % w,
            center_y: cell / w,
            scale_bin: sb,
            width: sw as usize,
            height: sh as usize,
        })
    }
}
