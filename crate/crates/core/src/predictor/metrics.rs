//! Ranking and regression metrics for a fitted predictor.

use serde::{Deserialize, Serialize};

use super::loss::LabeledSample;
use super::network::{PredictionTriple, PredictorModel};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub mse: f64,
    pub mae: f64,
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, with tied
/// scores sharing their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean squared and mean absolute error, in that order.
pub fn regression_errors(predicted: &[f64], actual: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != actual.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions for {} targets",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = predicted.len() as f64;
    let (sq, abs) = predicted
        .iter()
        .zip(actual)
        .fold((0.0, 0.0), |(sq, abs), (p, a)| {
            let e = p - a;
            (sq + e * e, abs + e.abs())
        });
    Ok((sq / n, abs / n))
}

/// Point forecast of `v = ln(R + 1)`: zero without conversion, `μ` with it.
#[inline]
pub fn point_log_revenue(t: &PredictionTriple) -> f64 {
    t.p_c * t.mu
}

pub fn predict_samples(model: &PredictorModel, samples: &[LabeledSample]) -> Result<Vec<PredictionTriple>> {
    par::map_slice(samples, |s| model.forward(&s.customer_features, &s.fund_features))
        .into_iter()
        .collect()
}

/// AUC of `P_c` against conversion labels, MSE and MAE of `P_c·μ` against `v`.
pub fn evaluate(model: &PredictorModel, test_set: &[LabeledSample]) -> Result<EvalReport> {
    let triples = predict_samples(model, test_set)?;
    evaluate_triples(&triples, test_set)
}

pub fn evaluate_triples(triples: &[PredictionTriple], test_set: &[LabeledSample]) -> Result<EvalReport> {
    let scores: Vec<f64> = triples.iter().map(|t| t.p_c).collect();
    let labels: Vec<bool> = test_set.iter().map(|s| s.converted).collect();
    let auc = auc(&scores, &labels)?;
    let predicted: Vec<f64> = triples.iter().map(point_log_revenue).collect();
    let actual: Vec<f64> = test_set.iter().map(LabeledSample::log_revenue).collect();
    let (mse, mae) = regression_errors(&predicted, &actual)?;
    Ok(EvalReport { auc, mse, mae })
}
