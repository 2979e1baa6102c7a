//! The eight acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use parl::dat::corrupt::{car_in_building, overlapping_duplicate};
use parl::dat::{augment_and_transfer, fit_scorer, AugmentConfig, Layout, Predictors, ScorerConfig};
use parl::harness::{generate_robot_data, round_config, run_experiment, Approach, ExperimentConfig};
use parl::policy::{fine_tune, train, Example, FeatureVector, FEATURE_LEN, WEIGHT_LEN};
use parl::protocol::sim::run_round;
use parl::protocol::{decode, encode, Envelope, TAGS};
use parl::style::StyleModel;
use parl::world::{render, segment, Provenance, StyleId, TaskType};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_iv_direction() -> Outcome {
    let config = ExperimentConfig::default();
    let start = Instant::now();
    let exp = run_experiment(&config).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs < 60.0;
    let mut parts = Vec::new();
    for r in 0..config.robots {
        let local = exp
            .report
            .result(r, Approach::LocalIl)
            .ok_or("no local result")?
            .failure_rate;
        let parl = exp
            .report
            .result(r, Approach::Parl)
            .map_or(f64::NAN, |e| e.failure_rate);
        let reduction = 1.0 - parl / local;
        ok &= parl < local && reduction >= 0.3;
        parts.push(format!(
            "robot {r}: {:.1}% -> {:.1}% (-{:.0}%)",
            100.0 * local,
            100.0 * parl,
            100.0 * reduction
        ));
    }
    ensure(ok, format!("{}; {secs:.1}s", parts.join(", ")))
}

fn table_v_direction() -> Outcome {
    let exp = run_experiment(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let p = exp.report.overall[&Approach::Parl].mae;
    let c = exp.report.overall[&Approach::CentralizedIl].mae;
    ensure(
        p < c || (p == c && p < 0.02),
        format!("PARL {p:.4} vs centralized {c:.4}"),
    )
}

fn fan_out_arithmetic() -> Outcome {
    let world = common::world(2);
    let corpus: Vec<Layout> = common::layouts(&world, 0, 60, 0);
    let predictors = Predictors::fit(&corpus, 0.5).map_err(|e| e.to_string())?;
    let scorer = fit_scorer(&corpus, ScorerConfig::default())
        .and_then(|s| s.with_threshold(0.0))
        .map_err(|e| e.to_string())?;
    let styles = vec![StyleModel::builtin(StyleId(0)), StyleModel::builtin(StyleId(1))];
    let inputs: Vec<(u64, Layout)> = common::layouts(&world, 1, 2, 777)
        .into_iter()
        .enumerate()
        .map(|(i, l)| (i as u64, l))
        .collect();
    let config = AugmentConfig {
        fan_out: 2,
        ..AugmentConfig::default()
    };
    let t = augment_and_transfer(&inputs, &styles, &config, &predictors, &scorer, 11).map_err(|e| e.to_string())?;
    ensure(
        t.items.len() == 8,
        format!(
            "{} inputs x fan-out 2 x 2 styles -> {} scenarios",
            inputs.len(),
            t.items.len()
        ),
    )
}

fn discriminator() -> Outcome {
    let world = common::world(3);
    let train: Vec<Layout> = (0..3).flat_map(|s| common::layouts(&world, s, 60, 0)).collect();
    let held: Vec<Layout> = (0..3).flat_map(|s| common::layouts(&world, s, 60, 10_000)).collect();
    let scorer = fit_scorer(&train, ScorerConfig::default()).map_err(|e| e.to_string())?;
    let mut real: Vec<f64> = held.iter().map(|(s, i)| scorer.score_layout(s, i)).collect();
    let above = real.iter().filter(|&&v| v >= scorer.threshold).count() as f64 / real.len() as f64;
    real.sort_by(f64::total_cmp);
    let median = real[real.len() / 2];
    let corrupt: Vec<f64> = held
        .iter()
        .filter_map(|l| car_in_building(l, 2, 2))
        .chain(held.iter().filter_map(overlapping_duplicate))
        .map(|(s, i)| scorer.score_layout(&s, &i))
        .collect();
    let below = corrupt.iter().filter(|&&v| v < median).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&real) - mean(&corrupt);
    ensure(
        above >= 0.95 && below == corrupt.len() && !corrupt.is_empty() && gap >= 0.2,
        format!(
            "{:.1}% of {} real >= tau, {below}/{} corrupted below median {median:.3}, gap {gap:.3}",
            100.0 * above,
            real.len(),
            corrupt.len()
        ),
    )
}

fn round_trip_exactness() -> Outcome {
    let world = common::world(8);
    let mut r = common::rng(5);
    let mut failures = 0;
    let mut total = 0;
    for style in world.styles() {
        for _ in 0..100 {
            let s = world
                .generate(style.style, TaskType::ALL[r.gen_range(0..3)], r.gen())
                .map_err(|e| e.to_string())?;
            let scene = render(&s.semantic, &s.instances, style, r.gen()).map_err(|e| e.to_string())?;
            failures += usize::from(segment(&scene, style).0 != s.semantic);
            total += 1;
        }
    }
    ensure(
        failures == 0,
        format!("{failures} failures over {total} worlds in 8 styles"),
    )
}

fn protocol_integrity() -> Outcome {
    let mut r = common::rng(6);
    let (mut mismatches, mut accepted_corrupt) = (0, 0);
    let (mut corruptions, mut sent) = (0, 0);
    for i in 0..10_000 {
        let env = Envelope {
            from: common::random_node(&mut r),
            to: common::random_node(&mut r),
            seq: r.gen(),
        };
        let m = common::random_message(&mut r);
        let bytes = encode(&env, &m).map_err(|e| e.to_string())?;
        sent += 1;
        mismatches += usize::from(decode(&bytes).ok() != Some((env, m)));
        if i % 10 == 0 {
            for tag in (0..=255u8).filter(|t| *t != bytes[21]) {
                let mut bad = bytes.clone();
                bad[21] = tag;
                accepted_corrupt += usize::from(decode(&bad).is_ok());
                corruptions += 1;
            }
            for cut in [0, 1, 7, 21, 25, 26, bytes.len() / 2, bytes.len() - 1] {
                accepted_corrupt += usize::from(decode(&bytes[..cut]).is_ok());
                corruptions += 1;
            }
        }
    }
    let tag_distance = TAGS
        .iter()
        .enumerate()
        .flat_map(|(i, a)| TAGS[i + 1..].iter().map(move |b| (a ^ b).count_ones()))
        .min()
        .unwrap_or(0);

    let mut dropout_ok = true;
    let base = ExperimentConfig {
        robots: 3,
        samples_per_task: 8,
        holdout: 0.25,
        ..ExperimentConfig::default()
    };
    for point in 0..3 {
        let mut c = base.clone();
        match point {
            0 => c.dropout.before_upload.insert(2),
            1 => c.dropout.before_labeling.insert(2),
            _ => c.dropout.before_fine_tune.insert(2),
        };
        let report = run_round(generate_robot_data(&c).map_err(|e| e.to_string())?, round_config(&c))
            .map_err(|e| e.to_string())?;
        let participants = report.participants();
        dropout_ok &= !participants.is_empty()
            && participants.iter().all(|p| report.shared_received[p] == 1)
            && report.violations() == 0;
    }
    ensure(
        mismatches == 0 && accepted_corrupt == 0 && dropout_ok,
        format!(
            "{sent} messages, {mismatches} mismatches; {accepted_corrupt}/{corruptions} corrupted frames accepted; min tag distance {tag_distance}; dropout runs exactly-once: {dropout_ok}"
        ),
    )
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_parl"))
            .arg("run")
            .env("PARL_OUT", &out)
            .output()
            .map_err(|e| e.to_string())
            .and_then(|o| {
                if o.status.success() {
                    Ok(())
                } else {
                    Err(String::from_utf8_lossy(&o.stderr).into_owned())
                }
            })
    };
    run()?;
    let first = files(&out);
    std::fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
    run()?;
    let second = files(&out);
    let models = first.keys().filter(|k| k.ends_with(".parldm")).count();
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    ensure(
        first.len() == second.len() && differing.is_empty() && models > 0 && first.contains_key("report.json"),
        format!(
            "{} files ({models} models) compared, differing: {differing:?}",
            first.len()
        ),
    )
}

fn learner_sanity() -> Outcome {
    let mut r = common::rng(8);
    let planted: Vec<f64> = (0..WEIGHT_LEN).map(|_| r.gen_range(-0.5..0.5)).collect();
    let data: Vec<Example> = (0..400)
        .map(|_| {
            let x: Vec<f64> = (0..FEATURE_LEN).map(|_| r.gen_range(-1.0..1.0)).collect();
            let y = planted[0] + planted[1..].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            Example {
                features: FeatureVector::from_raw(x).unwrap(),
                torque: y,
                provenance: Provenance::Human,
            }
        })
        .collect();
    let m = train(&data, 1e-9).map_err(|e| e.to_string())?;
    let err = m
        .weights
        .iter()
        .zip(&planted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let shared = common::random_policy(&mut r);
    let beta0 = fine_tune(&shared, &data, 0.0, 1e-3).map_err(|e| e.to_string())?
        == train(&data, 1e-3).map_err(|e| e.to_string())?;
    let beta1 = fine_tune(&shared, &data, 1.0, 1e-3).map_err(|e| e.to_string())?.weights == shared.weights;
    ensure(
        err <= 1e-6 && beta0 && beta1,
        format!("max weight error {err:.2e}; beta=0 is train: {beta0}; beta=1 is shared: {beta1}"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("failure rate, PARL vs local IL", table_iv_direction),
        ("overall error, PARL vs centralized IL", table_v_direction),
        ("fan-out arithmetic", fan_out_arithmetic),
        ("discriminator", discriminator),
        ("render/segment round trip", round_trip_exactness),
        ("protocol integrity", protocol_integrity),
        ("determinism", determinism),
        ("learner sanity", learner_sanity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
