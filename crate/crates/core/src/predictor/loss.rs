//! Likelihood losses over the shifted revenue label `v = ln(R + 1)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::network::{logistic, softplus, PredictionTriple, HEADS};
use crate::error::{Error, Result};

/// Floor on the counterfactual log-density so `exp` never underflows to 0.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub customer_features: Vec<f64>,
    pub fund_features: Vec<f64>,
    pub converted: bool,
    /// Observed revenue, 0 for negatives.
    pub revenue: f64,
}

impl LabeledSample {
    /// `ln(R + 1)`.
    #[inline]
    pub fn log_revenue(&self) -> f64 {
        self.revenue.ln_1p()
    }
}

/// What a non-converted sample would have brought in had it converted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Counterfactual {
    /// Negatives only inform the conversion head.
    Off,
    /// Assumed revenue `ε ≥ 0`.
    Revenue(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Esj,
    Ziln,
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esj" => Ok(LossKind::Esj),
            "ziln" => Ok(LossKind::Ziln),
            "mse" => Ok(LossKind::Mse),
            _ => Err(Error::InvalidConfig(format!("unknown loss '{s}'"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Esj => "esj",
            LossKind::Ziln => "ziln",
            LossKind::Mse => "mse",
        })
    }
}

/// A loss kind together with the counterfactual revenue it uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Esj(Counterfactual),
    Ziln,
    Mse,
}

impl Objective {
    pub fn new(kind: LossKind, epsilon: f64) -> Self {
        match kind {
            LossKind::Esj => Objective::Esj(Counterfactual::Revenue(epsilon)),
            LossKind::Ziln => Objective::Ziln,
            LossKind::Mse => Objective::Mse,
        }
    }

    pub fn loss(self, batch: &[LabeledSample], triples: &[PredictionTriple]) -> Result<f64> {
        match self {
            Objective::Esj(cf) => esj_loss(batch, triples, cf),
            Objective::Ziln => ziln_loss(batch, triples),
            Objective::Mse => mse_loss(batch, triples),
        }
    }
}

/// Log-density of the shifted lognormal at `y_v = R + 1`, with `v_obs = ln(y_v)`.
pub fn lognormal_logpdf(v_obs: f64, mu: f64, sigma: f64, y_v: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::NonpositiveSigma(sigma));
    }
    Ok(logpdf(v_obs, mu, sigma, y_v.ln()))
}

#[inline]
fn logpdf(v: f64, mu: f64, sigma: f64, ln_y: f64) -> f64 {
    let r = (v - mu) / sigma;
    -0.5 * (2.0 * PI).ln() - sigma.ln() - ln_y - 0.5 * r * r
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check(batch: &[LabeledSample], triples: &[PredictionTriple]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.len() != triples.len() {
        return Err(Error::DimMismatch(format!(
            "{} samples but {} predictions",
            batch.len(),
            triples.len()
        )));
    }
    if let Some(t) = triples.iter().find(|t| t.sigma.is_nan() || t.sigma <= 0.0) {
        return Err(Error::NonpositiveSigma(t.sigma));
    }
    Ok(())
}

/// Joint negative log-likelihood over the entire sample space. A negative
/// sample is explained either by no intent (`1 - p`) or by intent with the
/// counterfactual revenue `ε`.
pub fn esj_loss(
    batch: &[LabeledSample],
    triples: &[PredictionTriple],
    counterfactual: Counterfactual,
) -> Result<f64> {
    check(batch, triples)?;
    let mut total = 0.0;
    for (s, t) in batch.iter().zip(triples) {
        total += if s.converted {
            let v = s.log_revenue();
            -(t.p_c.ln() + logpdf(v, t.mu, t.sigma, v))
        } else {
            let no_intent = (-t.p_c).ln_1p();
            match counterfactual {
                Counterfactual::Off => -no_intent,
                Counterfactual::Revenue(eps) => {
                    let v_cf = eps.ln_1p();
                    let a = logpdf(v_cf, t.mu, t.sigma, v_cf).max(LOG_DENSITY_FLOOR);
                    -log_add_exp(no_intent, t.p_c.ln() + a)
                }
            }
        };
    }
    Ok(total / batch.len() as f64)
}

/// Cross-entropy on every sample plus the lognormal term on positives only.
pub fn ziln_loss(batch: &[LabeledSample], triples: &[PredictionTriple]) -> Result<f64> {
    check(batch, triples)?;
    let m = batch.len() as f64;
    let mut bce = 0.0;
    let mut regression = 0.0;
    for (s, t) in batch.iter().zip(triples) {
        let y = if s.converted { 1.0 } else { 0.0 };
        bce -= y * t.p_c.ln() + (1.0 - y) * (1.0 - t.p_c).ln();
        if s.converted {
            let y_v = s.revenue + 1.0;
            let z = (y_v.ln() - t.mu) / t.sigma;
            regression += (y_v * t.sigma * (2.0 * PI).sqrt()).ln() + z * z / 2.0;
        }
    }
    Ok((bce + regression) / m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseTerms {
    /// Mean binary cross-entropy over the batch.
    pub classification: f64,
    /// Mean squared error of `μ` against `v` over positives; 0 without positives.
    pub regression: f64,
}

pub fn mse_terms(batch: &[LabeledSample], triples: &[PredictionTriple]) -> Result<MseTerms> {
    check(batch, triples)?;
    let mut bce = 0.0;
    let mut sq = 0.0;
    let mut n_pos = 0usize;
    for (s, t) in batch.iter().zip(triples) {
        if s.converted {
            bce -= t.p_c.ln();
            sq += (t.mu - s.log_revenue()).powi(2);
            n_pos += 1;
        } else {
            bce -= (-t.p_c).ln_1p();
        }
    }
    Ok(MseTerms {
        classification: bce / batch.len() as f64,
        regression: if n_pos == 0 { 0.0 } else { sq / n_pos as f64 },
    })
}

pub fn mse_loss(batch: &[LabeledSample], triples: &[PredictionTriple]) -> Result<f64> {
    let t = mse_terms(batch, triples)?;
    Ok(t.classification + t.regression)
}

/// Per-sample loss and its derivative with respect to the raw head outputs
/// `z = (conversion logit, μ, pre-softplus σ)`. `regression_weight` scales the
/// squared-error term of the MSE objective.
pub(crate) fn head_loss_grad(
    objective: Objective,
    converted: bool,
    v: f64,
    z: [f64; HEADS],
    sigma_floor: f64,
    regression_weight: f64,
) -> (f64, [f64; HEADS]) {
    let p = logistic(z[0]);
    let mu = z[1];
    let sigma = softplus(z[2]) + sigma_floor;
    let dsigma_dz = logistic(z[2]);
    // ln p and ln(1 - p) straight from the logit.
    let log_p = -softplus(-z[0]);
    let log_q = -softplus(z[0]);

    match objective {
        Objective::Esj(_) | Objective::Ziln if converted => {
            let r = (v - mu) / sigma;
            let loss = -log_p - logpdf(v, mu, sigma, v);
            let d_mu = -r / sigma;
            let d_sigma = (1.0 - r * r) / sigma;
            (loss, [-(1.0 - p), d_mu, d_sigma * dsigma_dz])
        }
        Objective::Esj(Counterfactual::Revenue(eps)) => {
            let v_cf = eps.ln_1p();
            let raw = logpdf(v_cf, mu, sigma, v_cf);
            let clamped = raw < LOG_DENSITY_FLOOR;
            let a = raw.max(LOG_DENSITY_FLOOR);
            let b = log_p + a;
            let lse = log_add_exp(log_q, b);
            let w_a = (log_q - lse).exp();
            let w_b = (b - lse).exp();
            let d_z = -(-p * w_a + (1.0 - p) * w_b);
            let (d_mu, d_sigma) = if clamped {
                (0.0, 0.0)
            } else {
                let r = (v_cf - mu) / sigma;
                (-w_b * r / sigma, -w_b * (r * r - 1.0) / sigma)
            };
            (-lse, [d_z, d_mu, d_sigma * dsigma_dz])
        }
        Objective::Esj(Counterfactual::Off) | Objective::Ziln => (-log_q, [p, 0.0, 0.0]),
        Objective::Mse => {
            if converted {
                let e = mu - v;
                (
                    -log_p + regression_weight * e * e,
                    [-(1.0 - p), 2.0 * regression_weight * e, 0.0],
                )
            } else {
                (-log_q, [p, 0.0, 0.0])
            }
        }
    }
}
