use std::fmt::Write as _;

use super::{Approach, ComparisonReport};
use crate::error::{Error, Result};
use crate::policy::EvaluationReport;

/// One row per (robot, approach) with the evaluation columns.
pub fn results_csv(report: &ComparisonReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["robot", "approach"];
    header.extend(EvaluationReport::CSV_HEADER);
    w.write_record(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    for r in &report.results {
        let mut row = vec![r.robot.to_string(), r.approach.name().to_string()];
        row.extend(r.report.csv_row());
        w.write_record(&row).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn flag(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "none"
    }
}

pub fn render_markdown(report: &ComparisonReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# PARL comparison\n");

    let _ = writeln!(s, "## Failure rate per robot\n");
    let _ = writeln!(
        s,
        "| robot | local IL | PARL | centralized IL | color jitter | random crop |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for r in &report.robots {
        let cell = |a: Approach| {
            report
                .result(r.robot, a)
                .map_or("-".to_string(), |e| pct(e.failure_rate))
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.robot,
            cell(Approach::LocalIl),
            cell(Approach::Parl),
            cell(Approach::CentralizedIl),
            cell(Approach::ColorJitter),
            cell(Approach::RandomCrop)
        );
    }

    let _ = writeln!(s, "\n## Per-task mean absolute torque error\n");
    let _ = writeln!(s, "| robot | approach | turn | avoid-cars | straight | overall |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for r in &report.results {
        let t = &r.report.per_task;
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.robot,
            r.approach.name(),
            t[0].mae,
            t[1].mae,
            t[2].mae,
            r.report.mae
        );
    }

    let _ = writeln!(s, "\n## Overall\n");
    let _ = writeln!(s, "| approach | samples | MAE | failure rate |");
    let _ = writeln!(s, "|---|---|---|---|");
    for (a, o) in &report.overall {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {} |",
            a.name(),
            o.count,
            o.mae,
            pct(o.failure_rate)
        );
    }

    if !report.qualitative.is_empty() {
        let _ = writeln!(s, "\n## Augmenters\n");
        let _ = writeln!(s, "| augmenter | number | semantic | instance | reality | mean score |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for q in &report.qualitative {
            let _ = writeln!(
                s,
                "| {} | {:.2} | {} | {} | {} | {:.3} |",
                q.augmenter,
                q.number,
                flag(q.semantic),
                flag(q.instance),
                q.reality,
                q.mean_score
            );
        }
    }

    if let Some(a) = &report.augmentation {
        let _ = writeln!(s, "\n## Cloud augmentation\n");
        let _ = writeln!(
            s,
            "{} source layouts, fan-out {} requested, {:.2} achieved. {} attempts, {} accepted, {} rejected, {} insertion failures (acceptance {}). {} scenarios rendered, {} labeled, pool {}.",
            a.source_layouts,
            a.fan_out_requested,
            a.fan_out_achieved,
            a.attempts,
            a.accepted,
            a.rejected,
            a.insertion_failures,
            pct(a.acceptance_rate),
            a.scenarios,
            a.labeled,
            a.pool
        );
    }

    let r = &report.round;
    let _ = writeln!(s, "\n## Round\n");
    let _ = writeln!(
        s,
        "Participants {:?}; {} frames, {} bytes; {} violations, {} duplicates.",
        r.participants, r.frames, r.bytes, r.violations, r.duplicates
    );
    for (robot, why) in &r.dropped {
        let _ = writeln!(s, "- robot {robot} dropped out: {why}");
    }
    if let Some(e) = &r.cloud_error {
        let _ = writeln!(s, "- cloud aborted: {e}");
    }

    let _ = writeln!(s, "\n## Splits\n");
    let _ = writeln!(s, "| robot | train | held-out | train sha256 | held-out sha256 |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for r in &report.robots {
        let _ = writeln!(
            s,
            "| {} | {} | {} | `{}` | `{}` |",
            r.robot,
            r.train,
            r.held_out,
            &r.train_hash[..16],
            &r.held_out_hash[..16]
        );
    }

    let _ = writeln!(s, "\n## Checks\n");
    for c in &report.checks {
        let _ = writeln!(
            s,
            "- {} **{}**: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    s
}
