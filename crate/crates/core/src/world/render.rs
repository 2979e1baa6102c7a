use rand::Rng;

use super::{ClassId, Grid, InstanceMap, Scenario, SemanticMap};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::style::StyleModel;

/// Paints each cell with its class mean plus uniform texture noise of the
/// class's spread, clamped to [0, 1].
///
/// Noise is drawn in row-major order from a generator keyed on `seed` and
/// the style's texture seed, so the output is a pure function of the inputs.
pub fn render(semantic: &SemanticMap, _instances: &InstanceMap, style: &StyleModel, seed: u64) -> Result<Scenario> {
    let palette = &style.palette;
    for &c in semantic.classes.iter() {
        if palette[c.index()].is_none() {
            return Err(Error::Rendering(c));
        }
    }
    let mut rng = rng_for(seed, &[style.texture_seed]);
    let pixels = semantic.classes.map(|c| {
        let a = palette[c.index()].expect("checked above");
        let mut px = a.mean;
        if a.spread > 0.0 {
            for v in px.iter_mut() {
                let u: f32 = rng.gen_range(-1.0..=1.0);
                *v = (*v + a.spread * u).clamp(0.0, 1.0);
            }
        }
        px
    });
    Ok(Scenario {
        pixels,
        style: style.style,
    })
}

/// Nearest-mean classification (L-infinity distance, ties to the lowest
/// class id) followed by connected-component instance extraction.
pub fn segment(scenario: &Scenario, style: &StyleModel) -> (SemanticMap, InstanceMap) {
    let classes: Grid<ClassId> = scenario.pixels.map(|px| nearest_class(px, style));
    let semantic = SemanticMap { classes };
    let instances = InstanceMap::extract(&semantic);
    (semantic, instances)
}

pub(crate) fn nearest_class(px: &[f32; 3], style: &StyleModel) -> ClassId {
    let mut best = (f32::INFINITY, ClassId::Road);
    for class in ClassId::ALL {
        if let Some(a) = style.palette[class.index()] {
            let d = px
                .iter()
                .zip(a.mean.iter())
                .map(|(p, m)| (p - m).abs())
                .fold(0.0f32, f32::max);
            if d < best.0 {
                best = (d, class);
            }
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style::ClassAppearance;
    use crate::world::StyleId;

    fn flat_style() -> StyleModel {
        let mut s = StyleModel::builtin(StyleId(0));
        for a in s.palette.iter_mut().flatten() {
            a.spread = 0.0;
        }
        s
    }

    #[test]
    fn constant_map_renders_uniformly() {
        let s = flat_style();
        let m = SemanticMap::filled(20, 16, ClassId::Road);
        let sc = render(&m, &InstanceMap::empty(20, 16), &s, 5).unwrap();
        let road = s.palette[0].unwrap().mean;
        assert!(sc.pixels.iter().all(|p| *p == road));
        let (seg, inst) = segment(&sc, &s);
        assert!(seg.classes.iter().all(|&c| c == ClassId::Road));
        assert!(inst.records.is_empty());
    }

    #[test]
    fn missing_palette_entry_is_an_error() {
        let mut s = flat_style();
        s.palette[ClassId::Sky.index()] = None;
        let mut m = SemanticMap::filled(16, 16, ClassId::Road);
        m.classes[(0, 0)] = ClassId::Sky;
        let err = render(&m, &InstanceMap::empty(16, 16), &s, 0).unwrap_err();
        assert!(matches!(err, Error::Rendering(ClassId::Sky)));
    }

    #[test]
    fn one_car_blob_gives_one_car_instance() {
        let s = StyleModel::builtin(StyleId(3));
        let mut m = SemanticMap::filled(24, 16, ClassId::Road);
        for y in 5..8 {
            for x in 10..15 {
                m.classes[(x, y)] = ClassId::Car;
            }
        }
        let sc = render(&m, &InstanceMap::empty(24, 16), &s, 11).unwrap();
        let (seg, inst) = segment(&sc, &s);
        assert_eq!(seg, m);
        assert_eq!(inst.records.len(), 1);
        assert_eq!(inst.records[0].class, ClassId::Car);
        assert_eq!(inst.records[0].bbox.area(), 15);
    }

    #[test]
    fn ties_resolve_to_lowest_class() {
        let mut s = flat_style();
        s.palette = [None; ClassId::COUNT];
        s.palette[ClassId::Road.index()] = Some(ClassAppearance {
            mean: [0.25, 0.2, 0.2],
            spread: 0.0,
        });
        s.palette[ClassId::Car.index()] = Some(ClassAppearance {
            mean: [0.75, 0.2, 0.2],
            spread: 0.0,
        });
        assert_eq!(nearest_class(&[0.5, 0.2, 0.2], &s), ClassId::Road);
    }
}
