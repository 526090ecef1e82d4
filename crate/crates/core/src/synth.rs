//! Seeded synthetic instances and training data with known ground truth.
//!
//! Conversion intent, lognormal location and log-scale are linear in the
//! concatenated customer and fund features. Every random draw comes from a
//! ChaCha stream keyed by (seed, purpose, index), so output does not depend
//! on generation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{AllocationInstance, Customer, Fund, RevenueMatrix, DEFAULT_RISK_LEVELS};
use crate::error::{Error, Result};
use crate::par;
use crate::predictor::{expected_revenue, LabeledSample, PredictionTriple};

const STREAM_WEIGHTS: u64 = 1;
const STREAM_CUSTOMER: u64 = 2;
const STREAM_FUND: u64 = 3;
const STREAM_SHARES: u64 = 4;
const STREAM_DEMAND: u64 = 5;
const STREAM_SAMPLE: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskMode {
    /// Levels drawn independently of features.
    #[default]
    Independent,
    /// Levels follow the first feature's quantile.
    Correlated,
}

impl std::str::FromStr for RiskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(RiskMode::Independent),
            "correlated" => Ok(RiskMode::Correlated),
            _ => Err(Error::InvalidConfig(format!("unknown risk mode '{s}'"))),
        }
    }
}

/// Ground-truth heads: `bias + scale · (w · x) / sqrt(dim)` with `w ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthParams {
    pub logit_bias: f64,
    pub logit_scale: f64,
    pub mu_bias: f64,
    pub mu_scale: f64,
    pub log_sigma_bias: f64,
    pub log_sigma_scale: f64,
    /// Replace the intent probability with this constant.
    pub fixed_intent: Option<f64>,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            logit_bias: -1.0,
            logit_scale: 1.5,
            mu_bias: 1.5,
            mu_scale: 0.5,
            log_sigma_bias: 0.6f64.ln(),
            log_sigma_scale: 0.2,
            fixed_intent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_customers: usize,
    pub n_funds: usize,
    pub k: usize,
    pub customer_dim: usize,
    pub fund_dim: usize,
    pub risk_levels: u32,
    pub risk_mode: RiskMode,
    /// Explicit demands; otherwise customers pick funds by random shares.
    pub demands: Option<Vec<usize>>,
    /// Explicit revenue rows replacing the ground-truth expectation.
    pub pinned_revenue: Option<Vec<Vec<f64>>>,
    pub truth: TruthParams,
    /// Probability that intent turns into an observed conversion.
    pub conversion_given_intent: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_customers: 1000,
            n_funds: 8,
            k: 1,
            customer_dim: 4,
            fund_dim: 4,
            risk_levels: DEFAULT_RISK_LEVELS,
            risk_mode: RiskMode::Independent,
            demands: None,
            pinned_revenue: None,
            truth: TruthParams::default(),
            conversion_given_intent: 0.9,
            n_samples: 10_000,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_customers == 0 || self.n_funds == 0 {
            return bad("need at least one customer and one fund".into());
        }
        if self.k == 0 || self.k > self.n_funds {
            return bad(format!("K = {} must be in 1..={}", self.k, self.n_funds));
        }
        if self.risk_levels == 0 {
            return bad("at least one risk level is required".into());
        }
        if !(0.0..=1.0).contains(&self.conversion_given_intent) {
            return bad(format!(
                "conversion probability {} outside [0, 1]",
                self.conversion_given_intent
            ));
        }
        let t = &self.truth;
        let coefficients = [
            t.logit_bias,
            t.logit_scale,
            t.mu_bias,
            t.mu_scale,
            t.log_sigma_bias,
            t.log_sigma_scale,
        ];
        if coefficients.iter().any(|c| !c.is_finite()) {
            return bad("ground-truth coefficients must be finite".into());
        }
        if let Some(p) = t.fixed_intent {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("fixed intent {p} outside [0, 1]"));
            }
        }
        if let Some(d) = &self.demands {
            if d.len() != self.n_funds {
                return bad(format!("{} demands for {} funds", d.len(), self.n_funds));
            }
            let total: usize = d.iter().sum();
            if total != self.k * self.n_customers {
                return bad(format!(
                    "demands sum to {total}, K * customers is {}",
                    self.k * self.n_customers
                ));
            }
        }
        if let Some(rows) = &self.pinned_revenue {
            if rows.len() != self.n_customers || rows.iter().any(|r| r.len() != self.n_funds) {
                return bad(format!(
                    "pinned revenue must be {} x {}",
                    self.n_customers, self.n_funds
                ));
            }
        }
        Ok(())
    }

    fn input_dim(&self) -> usize {
        self.customer_dim + self.fund_dim
    }
}

/// The generating model's heads as a function of features.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthModel {
    params: TruthParams,
    w_logit: Vec<f64>,
    w_mu: Vec<f64>,
    w_log_sigma: Vec<f64>,
    customer_dim: usize,
}

impl TruthModel {
    pub fn new(config: &GeneratorConfig) -> Self {
        let dim = config.input_dim();
        let mut rng = stream(config.seed, STREAM_WEIGHTS, 0);
        let norm = 1.0 / (dim.max(1) as f64).sqrt();
        let mut draw = |scale: f64| -> Vec<f64> {
            (0..dim)
                .map(|_| scale * norm * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let t = &config.truth;
        let w_logit = draw(t.logit_scale);
        let w_mu = draw(t.mu_scale);
        let w_log_sigma = draw(t.log_sigma_scale);
        Self {
            params: t.clone(),
            w_logit,
            w_mu,
            w_log_sigma,
            customer_dim: config.customer_dim,
        }
    }

    /// True intent probability, location and scale for one pair.
    pub fn triple(&self, x_u: &[f64], x_f: &[f64]) -> PredictionTriple {
        let dot = |w: &[f64]| -> f64 {
            let (wu, wf) = w.split_at(self.customer_dim);
            wu.iter().zip(x_u).map(|(a, b)| a * b).sum::<f64>()
                + wf.iter().zip(x_f).map(|(a, b)| a * b).sum::<f64>()
        };
        let p = &self.params;
        let p_c = match p.fixed_intent {
            Some(c) => c,
            None => crate::predictor::logistic(p.logit_bias + dot(&self.w_logit)),
        };
        PredictionTriple {
            p_c,
            mu: p.mu_bias + dot(&self.w_mu),
            sigma: (p.log_sigma_bias + dot(&self.w_log_sigma)).exp(),
        }
    }
}

/// Per-pair truth of an instance, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub n_customers: usize,
    pub n_funds: usize,
    pub cells: Vec<PredictionTriple>,
    /// `p*·exp(μ* + σ*²/2)` per cell.
    pub expected: Vec<f64>,
}

impl GroundTruth {
    pub fn get(&self, customer: usize, fund: usize) -> PredictionTriple {
        self.cells[customer * self.n_funds + fund]
    }

    /// Expected revenue as an all-eligible matrix (risk masking happens in the instance).
    pub fn expected_matrix(&self) -> RevenueMatrix {
        RevenueMatrix::new(
            self.n_customers,
            self.n_funds,
            self.expected.clone(),
            vec![true; self.expected.len()],
        )
        .expect("truth dimensions are consistent")
    }
}

/// Instance whose revenue matrix is the true expected revenue (or the pinned rows).
pub fn generate_instance(config: &GeneratorConfig) -> Result<(AllocationInstance, GroundTruth)> {
    config.validate()?;
    let truth_model = TruthModel::new(config);
    let (mut customers, mut funds) = draw_entities(config);
    assign_risk_levels(config, &mut customers, &mut funds);

    let demands = match &config.demands {
        Some(d) => d.clone(),
        None => realise_demands(config, &customers, &funds),
    };
    for (f, d) in funds.iter_mut().zip(demands) {
        f.demand = d;
    }

    let nf = funds.len();
    let cells: Vec<PredictionTriple> = par::map_range(customers.len() * nf, |i| {
        truth_model.triple(&customers[i / nf].features, &funds[i % nf].features)
    });
    let expected: Vec<f64> = cells.iter().map(expected_revenue).collect();
    let truth = GroundTruth {
        n_customers: customers.len(),
        n_funds: nf,
        cells,
        expected,
    };
    let revenue = match &config.pinned_revenue {
        Some(rows) => RevenueMatrix::from_rows(rows)?,
        None => truth.expected_matrix(),
    };
    let instance =
        AllocationInstance::with_risk_levels(customers, funds, revenue, config.k, config.risk_levels)?;
    Ok((instance, truth))
}

/// Labeled samples with fresh i.i.d. features.
pub fn generate_training_data(config: &GeneratorConfig) -> Result<Vec<LabeledSample>> {
    Ok(generate_training_data_with_truth(config)?.samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDraw {
    pub samples: Vec<LabeledSample>,
    /// Generating (p*, μ*, σ*) of each sample.
    pub truth: Vec<PredictionTriple>,
    /// Latent purchase intent of each sample.
    pub intent: Vec<bool>,
}

/// Each sample: intent `C ~ Bernoulli(p*)`; given intent, conversion is
/// observed with probability `q`; observed conversions draw
/// `R = exp(N(μ*, σ*²)) − 1`. A draw with `R ≤ 0` is recorded as a negative.
pub fn generate_training_data_with_truth(config: &GeneratorConfig) -> Result<TrainingDraw> {
    config.validate()?;
    if config.n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be positive".into()));
    }
    let truth_model = TruthModel::new(config);
    let q = config.conversion_given_intent;
    let draws = par::map_range(config.n_samples, |i| {
        let mut rng = stream(config.seed, STREAM_SAMPLE, i as u64);
        let x_u = normals(&mut rng, config.customer_dim);
        let x_f = normals(&mut rng, config.fund_dim);
        let t = truth_model.triple(&x_u, &x_f);
        let intent = rng.random::<f64>() < t.p_c;
        let observed = rng.random::<f64>() < q;
        let z: f64 = t.mu + t.sigma * rng.sample::<f64, _>(StandardNormal);
        let revenue = if intent && observed {
            z.exp_m1().max(0.0)
        } else {
            0.0
        };
        let sample = LabeledSample {
            customer_features: x_u,
            fund_features: x_f,
            converted: revenue > 0.0,
            revenue,
        };
        (sample, t, intent)
    });
    let mut out = TrainingDraw {
        samples: Vec::with_capacity(draws.len()),
        truth: Vec::with_capacity(draws.len()),
        intent: Vec::with_capacity(draws.len()),
    };
    for (s, t, c) in draws {
        out.samples.push(s);
        out.truth.push(t);
        out.intent.push(c);
    }
    Ok(out)
}

/// The three-customer, two-fund instance with demands [2, 1] and its known
/// revenue rows, as a generator configuration.
pub fn worked_example_config() -> GeneratorConfig {
    GeneratorConfig {
        n_customers: 3,
        n_funds: 2,
        k: 1,
        customer_dim: 0,
        fund_dim: 0,
        risk_levels: 1,
        demands: Some(vec![2, 1]),
        pinned_revenue: Some(vec![vec![510.0, 450.0], vec![900.0, 600.0], vec![500.0, 300.0]]),
        n_samples: 1,
        ..GeneratorConfig::default()
    }
}

fn draw_entities(config: &GeneratorConfig) -> (Vec<Customer>, Vec<Fund>) {
    let customers = par::map_range(config.n_customers, |u| {
        let mut rng = stream(config.seed, STREAM_CUSTOMER, u as u64);
        let features = normals(&mut rng, config.customer_dim);
        Customer {
            id: u as u64 + 1,
            risk_tolerance: draw_level(&mut rng, config.risk_levels),
            features,
        }
    });
    let funds = (0..config.n_funds)
        .map(|f| {
            let mut rng = stream(config.seed, STREAM_FUND, f as u64);
            let features = normals(&mut rng, config.fund_dim);
            Fund {
                id: f as u64 + 1,
                risk_level: draw_level(&mut rng, config.risk_levels),
                demand: 0,
                features,
            }
        })
        .collect();
    (customers, funds)
}

fn draw_level(rng: &mut ChaCha8Rng, levels: u32) -> u32 {
    rng.random_range(1..=levels)
}

/// Correlated mode re-derives levels from the rank of the first feature; in
/// both modes the K least risky funds are moved to level 1 so every customer
/// keeps K eligible funds.
fn assign_risk_levels(config: &GeneratorConfig, customers: &mut [Customer], funds: &mut [Fund]) {
    let levels = config.risk_levels;
    if config.risk_mode == RiskMode::Correlated {
        let buckets = |keys: Vec<Option<f64>>| -> Vec<Option<u32>> {
            let n = keys.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let (x, y) = (keys[a].unwrap_or(0.0), keys[b].unwrap_or(0.0));
                x.total_cmp(&y).then(a.cmp(&b))
            });
            let mut out = vec![None; n];
            for (rank, &i) in order.iter().enumerate() {
                if keys[i].is_some() {
                    out[i] = Some(1 + (rank * levels as usize / n) as u32);
                }
            }
            out
        };
        let cl = buckets(customers.iter().map(|c| c.features.first().copied()).collect());
        for (c, l) in customers.iter_mut().zip(cl) {
            c.risk_tolerance = l.unwrap_or(c.risk_tolerance);
        }
        let fl = buckets(funds.iter().map(|f| f.features.first().copied()).collect());
        for (f, l) in funds.iter_mut().zip(fl) {
            f.risk_level = l.unwrap_or(f.risk_level);
        }
    }
    let mut order: Vec<usize> = (0..funds.len()).collect();
    order.sort_by_key(|&f| (funds[f].risk_level, f));
    for &f in order.iter().take(config.k) {
        funds[f].risk_level = 1;
    }
}

/// Every customer picks K distinct eligible funds with probability
/// proportional to random fund shares; demands are the resulting counts.
fn realise_demands(config: &GeneratorConfig, customers: &[Customer], funds: &[Fund]) -> Vec<usize> {
    let mut rng = stream(config.seed, STREAM_SHARES, 0);
    let shares: Vec<f64> = (0..funds.len()).map(|_| rng.random_range(0.5..1.5)).collect();
    let picks = par::map_slice(customers, |c| {
        let mut rng = stream(config.seed, STREAM_DEMAND, c.id);
        let mut weights: Vec<f64> = funds
            .iter()
            .zip(&shares)
            .map(|(f, &s)| if f.risk_level <= c.risk_tolerance { s } else { 0.0 })
            .collect();
        let mut chosen = Vec::with_capacity(config.k);
        for _ in 0..config.k {
            let total: f64 = weights.iter().sum();
            let mut target = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("K eligible funds");
            for (f, &w) in weights.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = f;
                    break;
                }
                target -= w;
            }
            weights[pick] = 0.0;
            chosen.push(pick);
        }
        chosen
    });
    let mut demands = vec![0; funds.len()];
    for f in picks.into_iter().flatten() {
        demands[f] += 1;
    }
    demands
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Independent ChaCha stream for one (purpose, index) pair.
fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.set_word_pos(u128::from(index) << 20);
    rng
}
