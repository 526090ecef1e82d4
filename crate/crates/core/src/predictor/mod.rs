//! Expected-revenue prediction: a small network emitting conversion
//! probability and lognormal revenue parameters per customer-fund pair.

mod loss;
mod metrics;
mod network;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{apply_risk_mask, Customer, Fund, RevenueMatrix};
use crate::error::{Error, Result};
use crate::par;

pub use loss::{
    esj_loss, lognormal_logpdf, mse_loss, mse_terms, ziln_loss, Counterfactual, LabeledSample, LossKind,
    MseTerms, Objective, LOG_DENSITY_FLOOR,
};
pub use metrics::{
    auc, evaluate, evaluate_triples, point_log_revenue, predict_samples, regression_errors, EvalReport,
};
pub use network::{
    logistic, softplus, Activation, PredictionTriple, PredictorModel, DEFAULT_HIDDEN, DEFAULT_SIGMA_FLOOR,
    HEADS,
};
pub use train::{
    batch_loss, esj_gradient, loss_and_gradient, train, train_with_report, TrainConfig, TrainReport,
    SHARD_LEN,
};

/// Which scale expected revenue is reported on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RevenueScale {
    /// `P_c·exp(μ + σ²/2)`, the mean of the shifted label `R + 1` given conversion.
    #[default]
    Shifted,
    /// `P_c·(exp(μ + σ²/2) − 1)`, the shift removed.
    Unshifted,
}

impl std::str::FromStr for RevenueScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted" => Ok(RevenueScale::Shifted),
            "unshifted" => Ok(RevenueScale::Unshifted),
            _ => Err(Error::InvalidConfig(format!("unknown revenue scale '{s}'"))),
        }
    }
}

/// `P_c·exp(μ + σ²/2)`.
#[inline]
pub fn expected_revenue(t: &PredictionTriple) -> f64 {
    t.p_c * (t.mu + 0.5 * t.sigma * t.sigma).exp()
}

pub fn expected_revenue_on(t: &PredictionTriple, scale: RevenueScale) -> f64 {
    match scale {
        RevenueScale::Shifted => expected_revenue(t),
        RevenueScale::Unshifted => t.p_c * (t.mu + 0.5 * t.sigma * t.sigma).exp_m1(),
    }
}

/// Expected revenue for every customer-fund pair, risk-masked.
pub fn predict_matrix(
    model: &PredictorModel,
    customers: &[Customer],
    funds: &[Fund],
) -> Result<RevenueMatrix> {
    predict_matrix_on(model, customers, funds, RevenueScale::Shifted)
}

pub fn predict_matrix_on(
    model: &PredictorModel,
    customers: &[Customer],
    funds: &[Fund],
    scale: RevenueScale,
) -> Result<RevenueMatrix> {
    if let Some(c) = customers
        .iter()
        .find(|c| c.features.len() != model.customer_dim())
    {
        return Err(Error::DimMismatch(format!(
            "customer {} has {} features, model expects {}",
            c.id,
            c.features.len(),
            model.customer_dim()
        )));
    }
    if let Some(f) = funds.iter().find(|f| f.features.len() != model.fund_dim()) {
        return Err(Error::DimMismatch(format!(
            "fund {} has {} features, model expects {}",
            f.id,
            f.features.len(),
            model.fund_dim()
        )));
    }
    let rows = par::map_slice(customers, |c| {
        funds
            .iter()
            .map(|f| {
                model
                    .forward(&c.features, &f.features)
                    .map(|t| expected_revenue_on(&t, scale))
            })
            .collect::<Result<Vec<f64>>>()
    });
    let mut values = Vec::with_capacity(customers.len() * funds.len());
    for row in rows {
        values.extend(row?);
    }
    let eligible = vec![true; values.len()];
    let raw = RevenueMatrix::new(customers.len(), funds.len(), values, eligible)?;
    apply_risk_mask(&raw, customers, funds)
}

pub const MODEL_FORMAT: &str = "fund-alloc-predictor";
pub const MODEL_VERSION: u32 = 1;

/// On-disk model: network plus the training settings that shaped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub version: u32,
    pub loss: LossKind,
    pub epsilon: f64,
    pub model: PredictorModel,
}

impl SavedModel {
    pub fn new(model: PredictorModel, loss: LossKind, epsilon: f64) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            loss,
            epsilon,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let saved: SavedModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            column: e.column(),
            message: e.to_string(),
        })?;
        if saved.format != MODEL_FORMAT || saved.version != MODEL_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model file {} v{}",
                saved.format, saved.version
            )));
        }
        let expected = PredictorModel::zeros(
            saved.model.customer_dim(),
            saved.model.fund_dim(),
            saved.model.hidden(),
            saved.model.activation(),
            saved.model.sigma_floor(),
        )?;
        if expected.n_params() != saved.model.n_params() || saved.model.input_dim() != expected.input_dim() {
            return Err(Error::DimMismatch(format!(
                "model file holds {} parameters, its shape needs {}",
                saved.model.n_params(),
                expected.n_params()
            )));
        }
        Ok(saved)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn customers(n: usize, dim: usize) -> Vec<Customer> {
        (0..n)
            .map(|i| Customer {
                id: i as u64 + 1,
                risk_tolerance: 1 + (i % 2) as u32,
                features: (0..dim).map(|j| (i + j) as f64 * 0.1).collect(),
            })
            .collect()
    }

    fn funds(n: usize, dim: usize) -> Vec<Fund> {
        (0..n)
            .map(|i| Fund {
                id: i as u64 + 1,
                risk_level: 1 + i as u32,
                demand: 1,
                features: (0..dim).map(|j| (i * j) as f64 * 0.2 - 0.1).collect(),
            })
            .collect()
    }

    #[test]
    fn expected_revenue_values() {
        let t = PredictionTriple {
            p_c: 0.2,
            mu: 2.0,
            sigma: 1.0,
        };
        // 0.2 * e^2.5 via a truncated Taylor series of e.
        let e: f64 = (0..30)
            .scan(1.0, |term, k| {
                let out = *term;
                *term /= (k + 1) as f64;
                Some(out)
            })
            .sum();
        assert!((expected_revenue(&t) - 0.2 * e.powi(2) * e.sqrt()).abs() < 1e-12);
        assert!((expected_revenue(&t) - 2.436499).abs() < 1e-6);
        assert_eq!(
            expected_revenue(&PredictionTriple {
                p_c: 0.0,
                mu: 3.0,
                sigma: 2.0
            }),
            0.0
        );
        let near_one = PredictionTriple {
            p_c: 1.0,
            mu: 0.0,
            sigma: 1e-3,
        };
        assert!((expected_revenue(&near_one) - 1.0).abs() < 1e-6);
        assert!(
            (expected_revenue_on(&t, RevenueScale::Unshifted) - 0.2 * (2.5f64.exp() - 1.0)).abs() < 1e-12
        );
    }

    #[test]
    fn matrix_shape_values_and_mask() {
        let model = PredictorModel::initialized(2, 3, &[4, 4], Activation::Silu, 1e-3, 3).unwrap();
        let (cs, fs) = (customers(3, 2), funds(2, 3));
        let m = predict_matrix(&model, &cs, &fs).unwrap();
        assert_eq!((m.n_customers(), m.n_funds()), (3, 2));
        for (u, c) in cs.iter().enumerate() {
            for (f, fund) in fs.iter().enumerate() {
                let want = expected_revenue(&model.forward(&c.features, &fund.features).unwrap());
                let eligible = c.risk_tolerance >= fund.risk_level;
                assert_eq!(m.is_eligible(u, f), eligible);
                assert_eq!(m.value(u, f), if eligible { want } else { 0.0 });
            }
        }
    }

    #[test]
    fn silenced_conversion_head_gives_zero_matrix() {
        let mut model = PredictorModel::initialized(2, 3, &[4], Activation::Silu, 1e-3, 3).unwrap();
        model.head_bias_mut()[0] = -1e4;
        let m = predict_matrix(&model, &customers(3, 2), &funds(2, 3)).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_width_mismatch() {
        let model = PredictorModel::zeros(2, 3, &[4], Activation::Silu, 1e-3).unwrap();
        assert!(matches!(
            predict_matrix(&model, &customers(3, 1), &funds(2, 3)),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn saved_model_round_trip_and_version_check() {
        let model = PredictorModel::initialized(2, 1, &[3], Activation::Relu, 1e-3, 1).unwrap();
        let saved = SavedModel::new(model, LossKind::Ziln, 0.0);
        let back = SavedModel::from_json(&saved.to_json()).unwrap();
        assert_eq!(back, saved);
        let bumped = saved.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            SavedModel::from_json(&bumped),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(SavedModel::from_json("{"), Err(Error::Parse { .. })));
    }
}
