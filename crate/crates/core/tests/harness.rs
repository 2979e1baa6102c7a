mod common;

use std::process::Command;

use parl::harness::{
    apply_crop, baseline_color_jitter, baseline_random_resized_crop, generate_robot_data, load_report, reevaluate,
    run_experiment, write_experiment, Approach, CropWindow, ExperimentConfig,
};
use parl::world::{StyleId, TaskType};
use proptest::prelude::*;

fn sample(seed: u64) -> parl::world::DrivingSample {
    common::world(1)
        .generate(StyleId(0), TaskType::ALL[(seed % 3) as usize], seed)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jitter_keeps_channels_in_range_and_maps_intact(seed: u64, m in 0.0f64..=1.0) {
        let s = sample(seed % 50);
        let j = baseline_color_jitter(&s, m, seed);
        prop_assert!(j.scenario.validate().is_ok());
        prop_assert_eq!(&j.semantic, &s.semantic);
        prop_assert_eq!(&j.instances, &s.instances);
        prop_assert_eq!(j.label, s.label);
    }

    #[test]
    fn crop_matches_coordinate_oracle(seed: u64, scale in 0.55f64..=1.0) {
        let s = sample(seed % 50);
        let c = baseline_random_resized_crop(&s, scale, seed);
        // recover the window by brute force over the oracle mapping
        let (w, h) = (64usize, 32usize);
        let found = (0..w).flat_map(|x| (0..h).map(move |y| (x, y))).flat_map(|(x, y)| {
            let min_w = (w as f64 * scale).ceil() as usize;
            let min_h = (h as f64 * scale).ceil() as usize;
            (min_w..=w - x).flat_map(move |cw| (min_h..=h - y).map(move |ch| CropWindow { x, y, w: cw, h: ch }))
        }).any(|win| {
            (0..h).all(|oy| (0..w).all(|ox| {
                let sx = win.x + ox * win.w / w;
                let sy = win.y + oy * win.h / h;
                c.semantic.get(ox, oy) == s.semantic.get(sx, sy)
                    && c.scenario.pixels[(ox, oy)] == s.scenario.pixels[(sx, sy)]
            }))
        });
        prop_assert!(found);
        prop_assert_eq!(c.label, s.label);
        c.validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_toml(robots in 1u16..10, n in 2usize..40, fan_out in 1usize..5, beta in 0.0f64..=1.0, lambda in 1e-9f64..1.0, seed: u64) {
        let c = ExperimentConfig {
            robots,
            samples_per_task: n.max(4),
            fan_out,
            beta,
            lambda,
            seeds: parl::harness::Seeds { world: seed, augment: seed ^ 7, protocol: seed.rotate_left(3) },
            ..ExperimentConfig::default()
        };
        prop_assume!(c.validate().is_ok());
        prop_assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}

#[test]
fn crop_window_matches_manual_resample() {
    let s = sample(4);
    let win = CropWindow {
        x: 5,
        y: 3,
        w: 50,
        h: 25,
    };
    let c = apply_crop(&s, win);
    assert_eq!(c.semantic.get(0, 0), s.semantic.get(5, 3));
    assert_eq!(
        c.semantic.get(63, 31),
        s.semantic.get(5 + 63 * 50 / 64, 3 + 31 * 25 / 32)
    );
}

#[test]
fn splits_are_shared_and_held_out_labels_exact() {
    let c = common::small_config();
    let data = generate_robot_data(&c).unwrap();
    assert_eq!(data, generate_robot_data(&c).unwrap());
    let world = common::world(c.robots);
    for d in &data {
        assert_eq!(d.held_out.len(), 3 * c.held_out_per_task());
        assert_eq!(d.train.len() + d.held_out.len(), 3 * c.samples_per_task);
        for s in &d.held_out {
            assert!(d.train.iter().all(|t| t.scenario != s.scenario));
            let geometry_label = (0..c.samples_per_task as u64)
                .map(|i| {
                    world
                        .generate(
                            StyleId(d.id),
                            s.task,
                            parl::rng::derive(c.seeds.world, &[d.id as u64, s.task.index() as u64, i]),
                        )
                        .unwrap()
                })
                .find(|g| g.scenario == s.scenario)
                .expect("held-out sample comes from the world")
                .label;
            assert_eq!(s.label, geometry_label);
        }
    }
}

#[test]
fn experiment_artifacts_reproduce_the_report() {
    let c = common::small_config();
    let dir = tempfile::tempdir().unwrap();
    let exp = run_experiment(&c).unwrap();
    write_experiment(dir.path(), &c, &exp).unwrap();
    let stored = load_report(dir.path()).unwrap();
    assert_eq!(stored, exp.report);
    let fresh = reevaluate(dir.path()).unwrap();
    assert_eq!(fresh, stored.results);

    for r in 0..c.robots {
        for a in Approach::ALL {
            assert!(stored.result(r, a).is_some(), "{r} {a:?}");
        }
    }
    let rows: Vec<_> = stored
        .qualitative
        .iter()
        .map(|q| (q.augmenter.as_str(), q.semantic, q.instance))
        .collect();
    assert_eq!(
        rows,
        vec![
            ("color-jitter", false, false),
            ("random-crop", false, false),
            ("dat", true, true)
        ]
    );
    let hashes: Vec<_> = stored.robots.iter().map(|r| r.train_hash.clone()).collect();
    assert!(hashes.iter().all(|h| h.len() == 64));
    assert_ne!(hashes[0], hashes[1]);
}

#[test]
fn single_robot_run_completes() {
    let c = ExperimentConfig {
        robots: 1,
        ..common::small_config()
    };
    let exp = run_experiment(&c).unwrap();
    assert_eq!(exp.report.round.participants, vec![0]);
    assert!(exp.report.result(0, Approach::Parl).is_some());
}

fn parl(args: &[&str], out: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_parl"))
        .args(args)
        .env("PARL_OUT", out)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let small = ["--robots", "2", "--samples-per-task", "8", "--holdout", "0.25"];

    let gen = parl(&[&["gen"][..], &small].concat(), &out);
    assert_eq!(gen.status.code(), Some(0));
    assert!(out.join("data/robot-1-held-out.parlds").exists());

    let run = parl(&[&["run"][..], &small].concat(), &out);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("report.json").exists());
    assert_eq!(parl(&["eval", "--check"], &out).status.code(), Some(0));
    let md = parl(&["report"], &out);
    assert!(String::from_utf8_lossy(&md.stdout).starts_with("# PARL comparison"));

    let single = parl(
        &[
            "run",
            "--robots",
            "1",
            "--samples-per-task",
            "8",
            "--holdout",
            "0.25",
            "--check",
        ],
        &dir.path().join("one"),
    );
    assert_eq!(single.status.code(), Some(2));

    assert_eq!(parl(&["run", "--beta", "1.5"], &out).status.code(), Some(3));
    assert_eq!(parl(&["run", "--no-such-flag"], &out).status.code(), Some(3));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "robts = 3\n").unwrap();
    assert_eq!(
        parl(&["run", "--config", bad.to_str().unwrap()], &out).status.code(),
        Some(3)
    );
    assert_eq!(parl(&["report"], &dir.path().join("empty")).status.code(), Some(3));
}
