use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::world::Provenance;

/// Bias followed by one weight per feature.
pub const WEIGHT_LEN: usize = FEATURE_LEN + 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub samples: usize,
    /// Sample counts indexed by [`Provenance::index`].
    pub provenance: [usize; 3],
}

/// Linear torque regressor over [`FeatureVector`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub meta: TrainingMeta,
}

impl PolicyModel {
    pub fn from_weights(weights: Vec<f64>, lambda: f64) -> Result<Self> {
        let m = PolicyModel {
            weights,
            lambda,
            meta: TrainingMeta::default(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Always predicts `value` (clamped).
    pub fn constant(value: f64) -> Self {
        let mut weights = vec![0.0; WEIGHT_LEN];
        weights[0] = value;
        PolicyModel {
            weights,
            lambda: 0.0,
            meta: TrainingMeta::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != WEIGHT_LEN {
            return Err(Error::Invalid(format!(
                "policy has {} weights, expected {WEIGHT_LEN}",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Invalid("policy weights or lambda not finite".into()));
        }
        Ok(())
    }

    pub fn raw(&self, f: &FeatureVector) -> f64 {
        self.weights[0]
            + self.weights[1..]
                .iter()
                .zip(f.as_slice())
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    pub fn predict(&self, f: &FeatureVector) -> f64 {
        let r = self.raw(f);
        if r.is_nan() {
            0.5
        } else {
            r.clamp(0.0, 1.0)
        }
    }
}

/// One training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: FeatureVector,
    pub torque: f64,
    pub provenance: Provenance,
}

impl Example {
    pub fn human(features: FeatureVector, torque: f64) -> Self {
        Example {
            features,
            torque,
            provenance: Provenance::Human,
        }
    }
}

fn bits(e: &Example) -> impl Iterator<Item = u64> + '_ {
    e.features
        .as_slice()
        .iter()
        .map(|v| v.to_bits())
        .chain(std::iter::once(e.torque.to_bits()))
}

/// Normal equations of the mean squared error, `(XᵀX/n, Xᵀy/n)` with a
/// leading bias column. Rows are sorted and duplicates merged with their
/// multiplicity first, so the result is bit-identical under reordering and
/// under uniform duplication of the dataset.
fn moments(data: &[Example]) -> Result<(DMatrix<f64>, DVector<f64>, TrainingMeta)> {
    if data.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let mut meta = TrainingMeta {
        samples: data.len(),
        provenance: [0; 3],
    };
    for e in data {
        if e.features.as_slice().iter().any(|v| !v.is_finite()) || !e.torque.is_finite() {
            return Err(Error::Training("non-finite feature or label".into()));
        }
        meta.provenance[e.provenance.index()] += 1;
    }
    let mut order: Vec<&Example> = data.iter().collect();
    order.sort_by(|a, b| bits(a).cmp(bits(b)));

    let n = data.len() as f64;
    let mut xtx = DMatrix::<f64>::zeros(WEIGHT_LEN, WEIGHT_LEN);
    let mut xty = DVector::<f64>::zeros(WEIGHT_LEN);
    let mut row = vec![1.0; WEIGHT_LEN];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && bits(order[j]).eq(bits(order[i])) {
            j += 1;
        }
        let share = (j - i) as f64 / n;
        row[1..].copy_from_slice(order[i].features.as_slice());
        for a in 0..WEIGHT_LEN {
            let sa = share * row[a];
            xty[a] += sa * order[i].torque;
            for b in a..WEIGHT_LEN {
                xtx[(a, b)] += sa * row[b];
            }
        }
        i = j;
    }
    for a in 0..WEIGHT_LEN {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    Ok((xtx, xty, meta))
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Training("normal equations are not positive definite; raise lambda".into()))?;
    let w = chol.solve(&b);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("solution is not finite".into()));
    }
    Ok(w.iter().copied().collect())
}

/// Minimises `mean((w·x - y)²) + λ‖w₁..‖²`; the bias is not penalised.
pub fn train(data: &[Example], lambda: f64) -> Result<PolicyModel> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Training(format!("lambda {lambda} must be finite and >= 0")));
    }
    let (mut a, b, meta) = moments(data)?;
    for k in 1..WEIGHT_LEN {
        a[(k, k)] += lambda;
    }
    Ok(PolicyModel {
        weights: solve(a, b)?,
        lambda,
        meta,
    })
}

/// Minimises `(1-β)·[ridge objective on data] + β‖w - w_shared‖²`.
/// β = 0 is exactly [`train`]; β = 1 returns the shared weights.
pub fn fine_tune(shared: &PolicyModel, data: &[Example], beta: f64, lambda: f64) -> Result<PolicyModel> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Training(format!("beta {beta} outside [0,1]")));
    }
    shared.validate()?;
    if beta == 0.0 {
        return train(data, lambda);
    }
    if beta == 1.0 {
        let (_, _, meta) = moments(data)?;
        return Ok(PolicyModel {
            weights: shared.weights.clone(),
            lambda,
            meta,
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Training(format!("lambda {lambda} must be finite and >= 0")));
    }
    let (a0, b0, meta) = moments(data)?;
    let mut a = a0 * (1.0 - beta);
    let mut b = b0 * (1.0 - beta);
    for k in 0..WEIGHT_LEN {
        let ridge = if k == 0 { 0.0 } else { (1.0 - beta) * lambda };
        a[(k, k)] += ridge + beta;
        b[k] += beta * shared.weights[k];
    }
    Ok(PolicyModel {
        weights: solve(a, b)?,
        lambda,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(seed: usize) -> FeatureVector {
        let v = (0..FEATURE_LEN)
            .map(|k| (((seed * 131 + k * 17) % 97) as f64 / 97.0) - 0.3)
            .collect();
        FeatureVector::from_raw(v).unwrap()
    }

    #[test]
    fn empty_dataset_is_a_training_error() {
        assert!(matches!(train(&[], 1.0), Err(Error::Training(_))));
    }

    #[test]
    fn single_sample_is_interpolated() {
        let d = [Example::human(fv(3), 0.7)];
        let m = train(&d, 1e-9).unwrap();
        assert!((m.raw(&d[0].features) - 0.7).abs() < 1e-6);
    }

    #[test]
    fn prediction_is_clamped() {
        let m = PolicyModel::constant(3.0);
        assert_eq!(m.predict(&fv(1)), 1.0);
        assert_eq!(PolicyModel::constant(-2.0).predict(&fv(1)), 0.0);
    }

    #[test]
    fn fine_tune_endpoints() {
        let d: Vec<_> = (0..40).map(|i| Example::human(fv(i), (i % 7) as f64 / 7.0)).collect();
        let shared = PolicyModel::constant(0.3);
        let local = train(&d, 0.01).unwrap();
        assert_eq!(fine_tune(&shared, &d, 0.0, 0.01).unwrap(), local);
        assert_eq!(fine_tune(&shared, &d, 1.0, 0.01).unwrap().weights, shared.weights);
        let mid = fine_tune(&shared, &d, 0.5, 0.01).unwrap();
        assert_ne!(mid.weights, shared.weights);
        assert_ne!(mid.weights, local.weights);
    }
}
