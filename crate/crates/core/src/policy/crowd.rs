use serde::{Deserialize, Serialize};

use super::features::featurize_scenario;
use super::ridge::PolicyModel;
use crate::style::{style_affinity, StyleModel};
use crate::world::Scenario;

/// A local policy together with the style it perceives the world through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub policy: PolicyModel,
    pub style: StyleModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    /// Weight `exp(-(d/sigma)²)` on the palette distance between the
    /// candidate's rendering style and the member's own style.
    StyleAffinity {
        sigma: f64,
    },
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::StyleAffinity { sigma: 0.1 }
    }
}

/// Scenario to label, with the style model it was rendered under.
#[derive(Debug, Clone, Copy)]
pub struct LabelItem<'a> {
    pub scenario: &'a Scenario,
    pub style: &'a StyleModel,
}

/// Weighted mean of the available predictions. Falls back to equal weights
/// when every weight of an available prediction is zero; `None` when no
/// member produced a prediction.
pub fn aggregate(predictions: &[Option<f64>], weights: &[f64]) -> Option<f64> {
    let present: Vec<(f64, f64)> = predictions
        .iter()
        .zip(weights)
        .filter_map(|(p, &w)| p.map(|p| (p, w.max(0.0))))
        .collect();
    if present.is_empty() {
        return None;
    }
    let total: f64 = present.iter().map(|(_, w)| w).sum();
    let v = if total > 0.0 && total.is_finite() {
        present.iter().map(|(p, w)| p * w).sum::<f64>() / total
    } else {
        present.iter().map(|(p, _)| p).sum::<f64>() / present.len() as f64
    };
    // guard the convex hull against rounding
    let lo = present.iter().map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
    let hi = present.iter().map(|(p, _)| *p).fold(f64::NEG_INFINITY, f64::max);
    Some(v.clamp(lo, hi))
}

/// Prediction of one member: the member segments the scenario with its own
/// style, so a member whose palette does not match sees a garbled layout or
/// none at all (`None`).
pub fn member_prediction(member: &Member, scenario: &Scenario) -> Option<f64> {
    featurize_scenario(scenario, &member.style)
        .ok()
        .map(|f| member.policy.predict(&f))
}

/// Labels every item with the weighted mean of member predictions. Items no
/// member can perceive get `None`.
pub fn crowdsource_labels(items: &[LabelItem<'_>], members: &[Member], weighting: Weighting) -> Vec<Option<f64>> {
    items
        .iter()
        .map(|item| {
            let preds: Vec<Option<f64>> = members.iter().map(|m| member_prediction(m, item.scenario)).collect();
            let weights: Vec<f64> = members
                .iter()
                .map(|m| match weighting {
                    Weighting::Uniform => 1.0,
                    Weighting::StyleAffinity { sigma } => style_affinity(item.style, &m.style, sigma),
                })
                .collect();
            aggregate(&preds, &weights)
        })
        .collect()
}
