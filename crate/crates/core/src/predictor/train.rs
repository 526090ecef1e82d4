//! Mini-batch Adam training with a held-out split for model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{head_loss_grad, Counterfactual, LabeledSample, LossKind, Objective};
use super::network::{Activation, PredictorModel, Scratch, DEFAULT_HIDDEN, DEFAULT_SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::par;

/// Samples per gradient shard. Shards are summed in order, so the result
/// does not depend on how many threads computed them.
pub const SHARD_LEN: usize = 64;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Counterfactual revenue for negatives under the ESJ loss.
    pub epsilon: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub sigma_floor: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Share of the data held out to pick the best epoch.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            learning_rate: 2e-3,
            batch_size: 512,
            epochs: 20,
            seed: 0,
            loss: LossKind::Esj,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Silu,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        Objective::new(self.loss, self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be a finite non-negative number, got {}",
                self.epsilon
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.epochs == 0 {
            return bad("at least one epoch is required".into());
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return bad(format!("sigma floor must be positive, got {}", self.sigma_floor));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch, averaged over its mini-batches.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

pub fn train(dataset: &[LabeledSample], config: &TrainConfig) -> Result<PredictorModel> {
    train_with_report(dataset, config).map(|(m, _)| m)
}

pub fn train_with_report(
    dataset: &[LabeledSample],
    config: &TrainConfig,
) -> Result<(PredictorModel, TrainReport)> {
    config.validate()?;
    let first = dataset.first().ok_or(Error::EmptyBatch)?;
    let (du, df) = (first.customer_features.len(), first.fund_features.len());
    if let Some((i, _)) = dataset
        .iter()
        .enumerate()
        .find(|(_, s)| s.customer_features.len() != du || s.fund_features.len() != df)
    {
        return Err(Error::DimMismatch(format!(
            "sample {i} has feature widths that differ from sample 0 ({du} + {df})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = PredictorModel::initialized(
        du,
        df,
        &config.hidden,
        config.activation,
        config.sigma_floor,
        config.seed,
    )?;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64) * config.validation_fraction).floor() as usize;
    let n_val = n_val.min(dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx: Vec<usize> = if val_idx.is_empty() {
        train_idx.to_vec()
    } else {
        val_idx.to_vec()
    };
    let mut train_idx = train_idx.to_vec();

    let objective = config.objective();
    let mut adam = Adam::new(model.n_params());
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(config.epochs),
        validation_loss: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in train_idx.chunks(config.batch_size) {
            let (loss, grad) = indexed_loss_and_gradient(&model, dataset, batch, objective);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            adam.step(model.params_mut(), &grad, config.learning_rate);
            epoch_loss += loss;
            batches += 1;
        }
        let val = indexed_loss(&model, dataset, &val_idx, objective);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.train_loss.push(epoch_loss / batches as f64);
        report.validation_loss.push(val);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, model.params().to_vec()));
            report.best_epoch = epoch;
        }
    }

    if let Some((_, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    Ok((model, report))
}

/// Mean loss of `objective` over the batch and its gradient with respect to
/// every model parameter.
pub fn loss_and_gradient(
    model: &PredictorModel,
    batch: &[LabeledSample],
    objective: Objective,
) -> Result<(f64, Vec<f64>)> {
    check_batch(model, batch)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    Ok(indexed_loss_and_gradient(model, batch, &idx, objective))
}

/// Gradient of the ESJ loss.
pub fn esj_gradient(
    model: &PredictorModel,
    batch: &[LabeledSample],
    counterfactual: Counterfactual,
) -> Result<Vec<f64>> {
    loss_and_gradient(model, batch, Objective::Esj(counterfactual)).map(|(_, g)| g)
}

/// Mean loss over `batch` without a gradient.
pub fn batch_loss(model: &PredictorModel, batch: &[LabeledSample], objective: Objective) -> Result<f64> {
    check_batch(model, batch)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    Ok(indexed_loss(model, batch, &idx, objective))
}

fn check_batch(model: &PredictorModel, batch: &[LabeledSample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for (i, s) in batch.iter().enumerate() {
        if s.customer_features.len() != model.customer_dim() || s.fund_features.len() != model.fund_dim() {
            return Err(Error::DimMismatch(format!(
                "sample {i} has {} + {} features, model expects {} + {}",
                s.customer_features.len(),
                s.fund_features.len(),
                model.customer_dim(),
                model.fund_dim()
            )));
        }
    }
    Ok(())
}

fn regression_weight(data: &[LabeledSample], idx: &[usize], objective: Objective) -> f64 {
    match objective {
        Objective::Mse => {
            let n_pos = idx.iter().filter(|&&i| data[i].converted).count();
            if n_pos == 0 {
                0.0
            } else {
                idx.len() as f64 / n_pos as f64
            }
        }
        _ => 0.0,
    }
}

fn indexed_loss_and_gradient(
    model: &PredictorModel,
    data: &[LabeledSample],
    idx: &[usize],
    objective: Objective,
) -> (f64, Vec<f64>) {
    let weight = regression_weight(data, idx, objective);
    let floor = model.sigma_floor();
    let shards: Vec<&[usize]> = idx.chunks(SHARD_LEN).collect();
    let partial = par::map_slice(&shards, |shard| {
        let mut scratch = Scratch::new(model);
        let mut grad = vec![0.0; model.n_params()];
        let mut loss = 0.0;
        for &i in shard.iter() {
            let s = &data[i];
            scratch.load(&s.customer_features, &s.fund_features);
            let z = model.run(&mut scratch);
            let (l, dz) = head_loss_grad(objective, s.converted, s.log_revenue(), z, floor, weight);
            loss += l;
            model.backward(&mut scratch, dz, &mut grad);
        }
        (loss, grad)
    });
    let scale = 1.0 / idx.len() as f64;
    let mut total_loss = 0.0;
    let mut total = vec![0.0; model.n_params()];
    for (loss, grad) in partial {
        total_loss += loss;
        for (t, g) in total.iter_mut().zip(&grad) {
            *t += g;
        }
    }
    for t in &mut total {
        *t *= scale;
    }
    (total_loss * scale, total)
}

fn indexed_loss(model: &PredictorModel, data: &[LabeledSample], idx: &[usize], objective: Objective) -> f64 {
    let weight = regression_weight(data, idx, objective);
    let floor = model.sigma_floor();
    let shards: Vec<&[usize]> = idx.chunks(SHARD_LEN).collect();
    let partial = par::map_slice(&shards, |shard| {
        let mut scratch = Scratch::new(model);
        shard
            .iter()
            .map(|&i| {
                let s = &data[i];
                scratch.load(&s.customer_features, &s.fund_features);
                let z = model.run(&mut scratch);
                head_loss_grad(objective, s.converted, s.log_revenue(), z, floor, weight).0
            })
            .sum::<f64>()
    });
    partial.into_iter().sum::<f64>() / idx.len() as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}
