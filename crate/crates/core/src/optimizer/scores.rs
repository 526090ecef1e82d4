//! Fund consumption rates and per-customer regret scores.

use std::cmp::Ordering;

use crate::domain::RevenueMatrix;
use crate::error::{Error, Result};
use crate::par;

/// Per-fund consumption rate: eligible revenue mass divided by remaining demand.
/// Exhausted funds carry no rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionRates {
    alpha: Vec<Option<f64>>,
}

impl ConsumptionRates {
    pub fn from_alpha(alpha: Vec<Option<f64>>) -> Self {
        Self { alpha }
    }

    pub fn get(&self, fund: usize) -> Result<f64> {
        self.alpha
            .get(fund)
            .copied()
            .flatten()
            .ok_or(Error::ZeroDemand(fund))
    }

    #[inline]
    pub fn alpha(&self, fund: usize) -> Option<f64> {
        self.alpha[fund]
    }

    #[inline]
    pub fn is_active(&self, fund: usize) -> bool {
        self.alpha[fund].is_some()
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Rates over every customer in the matrix.
pub fn consumption_rates(revenue: &RevenueMatrix, remaining_demand: &[usize]) -> Result<ConsumptionRates> {
    if remaining_demand.len() != revenue.n_funds() {
        return Err(Error::DimMismatch(format!(
            "{} demands for {} funds",
            remaining_demand.len(),
            revenue.n_funds()
        )));
    }
    let all: Vec<usize> = (0..revenue.n_customers()).collect();
    Ok(rates_over(revenue, remaining_demand, &all))
}

/// Rates restricted to `customers`, summed in the given order.
pub(crate) fn rates_over(
    revenue: &RevenueMatrix,
    remaining_demand: &[usize],
    customers: &[usize],
) -> ConsumptionRates {
    rates_from_sums(&column_sums(revenue, customers), remaining_demand)
}

/// Eligible revenue per fund over `customers`, accumulated in list order.
pub(crate) fn column_sums(revenue: &RevenueMatrix, customers: &[usize]) -> Vec<f64> {
    let nf = revenue.n_funds();
    let mut sums = vec![0.0; nf];
    for &u in customers {
        let values = revenue.row(u);
        let eligible = revenue.eligible_row(u);
        for f in 0..nf {
            if eligible[f] {
                sums[f] += values[f];
            }
        }
    }
    sums
}

pub(crate) fn rates_from_sums(sums: &[f64], remaining_demand: &[usize]) -> ConsumptionRates {
    ConsumptionRates {
        alpha: sums
            .iter()
            .zip(remaining_demand)
            .map(|(&s, &d)| (d > 0).then(|| s / d as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreVariant {
    /// Rate-weighted sum of gaps between adjacent funds in the customer's ranking.
    #[default]
    AdjacentGaps,
    /// Legacy score from the customer's top three funds only.
    TopThree,
}

/// Scores aligned with the customer list they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicScores {
    pub customers: Vec<usize>,
    pub scores: Vec<f64>,
}

impl HeuristicScores {
    pub fn score_of(&self, customer: usize) -> Option<f64> {
        self.customers
            .iter()
            .position(|&u| u == customer)
            .map(|i| self.scores[i])
    }
}

pub fn heuristic_scores(
    revenue: &RevenueMatrix,
    rates: &ConsumptionRates,
    unallocated: &[usize],
) -> Result<HeuristicScores> {
    scores_for(revenue, rates, unallocated, ScoreVariant::AdjacentGaps, 1)
}

pub fn heuristic_scores_top3(
    revenue: &RevenueMatrix,
    rates: &ConsumptionRates,
    unallocated: &[usize],
) -> Result<HeuristicScores> {
    scores_for(revenue, rates, unallocated, ScoreVariant::TopThree, 1)
}

pub(crate) fn scores_for(
    revenue: &RevenueMatrix,
    rates: &ConsumptionRates,
    customers: &[usize],
    variant: ScoreVariant,
    forced_at: usize,
) -> Result<HeuristicScores> {
    let scores = par::map_slice(customers, |&u| {
        customer_score(revenue, rates, u, variant, forced_at)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(HeuristicScores {
        customers: customers.to_vec(),
        scores,
    })
}

/// Descending by revenue, ascending fund index on ties.
#[inline]
pub(crate) fn rank_cmp(row: &[f64], a: usize, b: usize) -> Ordering {
    row[b].total_cmp(&row[a]).then(a.cmp(&b))
}

/// Eligible funds that still have a rate, best first.
pub(crate) fn ranked_funds(revenue: &RevenueMatrix, active: impl Fn(usize) -> bool, u: usize) -> Vec<usize> {
    let row = revenue.row(u);
    let eligible = revenue.eligible_row(u);
    let mut funds: Vec<usize> = (0..row.len()).filter(|&f| eligible[f] && active(f)).collect();
    funds.sort_unstable_by(|&a, &b| rank_cmp(row, a, b));
    funds
}

/// Score of one customer. A customer with `forced_at` or fewer options left
/// has no choice and is served first (`+inf`).
pub(crate) fn customer_score(
    revenue: &RevenueMatrix,
    rates: &ConsumptionRates,
    u: usize,
    variant: ScoreVariant,
    forced_at: usize,
) -> Result<f64> {
    let ranked = ranked_funds(revenue, |f| rates.is_active(f), u);
    score_ranked(revenue.row(u), &ranked, rates, u, variant, forced_at)
}

/// Score of customer `u` from its already ranked active funds.
pub(crate) fn score_ranked(
    row: &[f64],
    ranked: &[usize],
    rates: &ConsumptionRates,
    u: usize,
    variant: ScoreVariant,
    forced_at: usize,
) -> Result<f64> {
    if ranked.is_empty() {
        return Err(Error::NoEligibleFund(u));
    }
    if ranked.len() <= forced_at {
        return Ok(f64::INFINITY);
    }
    let alpha = |f: usize| rates.alpha(f).expect("ranked funds are active");
    let score = match variant {
        ScoreVariant::TopThree if ranked.len() >= 3 => {
            let (a, b, c) = (ranked[0], ranked[1], ranked[2]);
            (alpha(a) + alpha(b)) / 2.0 * (2.0 * row[a] - row[b] - row[c])
        }
        _ => ranked
            .windows(2)
            .map(|w| alpha(w[0]) * (row[w[0]] - row[w[1]]))
            .sum(),
    };
    Ok(score)
}
