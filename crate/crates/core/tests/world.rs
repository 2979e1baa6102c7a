mod common;

use parl::style::StyleModel;
use parl::world::{render, segment, torque_label, ClassId, InstanceMap, RoadGeometry, StyleId, TaskType, WorldParams};
use proptest::prelude::*;

/// Torque oracle written from the label definition.
fn label_oracle(base: i64, curv: i64, obstacle_side: Option<i8>) -> f64 {
    let w = 64.0;
    let shift = obstacle_side.map_or(0, |s| -(s as i64) * 5);
    (0.5 + 2.0 * curv as f64 / w + (base + shift) as f64 / w).clamp(0.0, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_segment_recovers_classes(style in 0u16..8, task in 0usize..3, seed: u64, render_seed: u64) {
        let w = common::world(8);
        let s = w.generate(StyleId(style), TaskType::ALL[task], seed).unwrap();
        let model = StyleModel::builtin(StyleId(style));
        let scene = render(&s.semantic, &s.instances, &model, render_seed).unwrap();
        let (semantic, instances) = segment(&scene, &model);
        prop_assert_eq!(&semantic, &s.semantic);
        prop_assert_eq!(instances, InstanceMap::extract(&s.semantic));
    }

    #[test]
    fn generated_samples_are_valid_and_pure(style in 0u16..4, task in 0usize..3, seed: u64) {
        let w = common::world(4);
        let a = w.generate(StyleId(style), TaskType::ALL[task], seed).unwrap();
        a.validate().unwrap();
        prop_assert_eq!(&a, &w.generate(StyleId(style), TaskType::ALL[task], seed).unwrap());
        let l = a.label.unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(a.scenario.style, StyleId(style));
        let cars = a.instances.records.iter().filter(|r| r.class == ClassId::Car).count();
        prop_assert_eq!(cars > 0, TaskType::ALL[task] == TaskType::AvoidCars);
    }

    #[test]
    fn torque_matches_oracle(base in -3i64..=3, curv in -12i64..=12, side in prop::option::of(prop::sample::select(vec![-1i8, 1])), row in 10usize..=22) {
        let g = RoadGeometry {
            base_offset: base,
            curvature_cells: curv,
            obstacle: side.map(|side| parl::world::Obstacle { side, center_row: row }),
        };
        let got = torque_label(&WorldParams::default(), &g);
        prop_assert!((got - label_oracle(base, curv, side)).abs() < 1e-12);
    }

    #[test]
    fn rendered_channels_stay_in_range(style in 0u16..8, seed: u64) {
        let w = common::world(8);
        let s = w.generate(StyleId(style), TaskType::Turn, seed).unwrap();
        s.scenario.validate().unwrap();
    }
}

#[test]
fn straight_road_drives_straight() {
    assert_eq!(torque_label(&WorldParams::default(), &RoadGeometry::straight()), 0.5);
}

#[test]
fn left_curve_turns_left() {
    let g = RoadGeometry {
        curvature_cells: -12,
        ..RoadGeometry::straight()
    };
    assert!(torque_label(&WorldParams::default(), &g) < 0.5);
}

#[test]
fn rendering_with_a_missing_class_fails() {
    let w = common::world(1);
    let s = w.generate(StyleId(0), TaskType::Straight, 1).unwrap();
    let mut style = StyleModel::builtin(StyleId(0));
    style.palette[ClassId::Road.index()] = None;
    assert!(render(&s.semantic, &s.instances, &style, 0).is_err());
}
