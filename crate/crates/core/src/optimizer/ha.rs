//! Regret-ordered greedy allocation.
//!
//! Customers are served in descending score order, each taking its top-K
//! eligible funds that still have demand. Whenever a fund runs out, rates and
//! scores are recomputed for everyone still waiting and the queue is re-sorted.

use std::time::Instant;

use super::completion::Completion;
use super::scores::{
    column_sums, customer_score, ranked_funds, rates_from_sums, rates_over, score_ranked, ScoreVariant,
};
use super::{ensure_supply_matches, SolverStats};
use crate::domain::{AllocationInstance, AllocationResult, Assignment};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recompute {
    /// Fresh rates and scores for every waiting customer after each exhaustion.
    #[default]
    Strict,
    /// Running rate sums and cached fund rankings; only customers who could
    /// have taken an exhausted fund are re-ranked.
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaOptions {
    pub variant: ScoreVariant,
    pub recompute: Recompute,
    /// Skip a fund when taking it would leave some waiting customer unable to
    /// fill its K slots.
    pub risk_reserve: bool,
}

impl Default for HaOptions {
    fn default() -> Self {
        Self {
            variant: ScoreVariant::default(),
            recompute: Recompute::default(),
            risk_reserve: true,
        }
    }
}

pub fn allocate_ha(
    instance: &AllocationInstance,
    variant: ScoreVariant,
) -> Result<(AllocationResult, SolverStats)> {
    allocate_ha_with(
        instance,
        HaOptions {
            variant,
            ..HaOptions::default()
        },
    )
}

pub fn allocate_ha_with(
    instance: &AllocationInstance,
    options: HaOptions,
) -> Result<(AllocationResult, SolverStats)> {
    let start = Instant::now();
    ensure_supply_matches(instance)?;
    let revenue = &instance.revenue;
    let n = instance.n_customers();
    let nf = instance.n_funds();
    let k = instance.k;
    let variant = options.variant;

    let mut remaining = instance.demands();
    let mut assignment = Assignment::empty(n, nf);
    let mut waiting: Vec<usize> = (0..n).collect();
    let mut rounds = 0;

    // Lazy mode state: running column sums over waiting customers and each
    // customer's cached fund ranking.
    let lazy = options.recompute == Recompute::Lazy;
    let mut col_sums = Vec::new();
    let mut rankings: Vec<Vec<usize>> = Vec::new();
    if lazy {
        col_sums = column_sums(revenue, &waiting);
        rankings = par::map_range(n, |u| ranked_funds(revenue, |f| remaining[f] > 0, u));
    }
    let mut newly_exhausted: Vec<usize> = Vec::new();
    let mut reserve = Reserve::new(instance);
    let mut picks = Vec::with_capacity(k);

    while !waiting.is_empty() {
        rounds += 1;
        let rates = if lazy {
            rates_from_sums(&col_sums, &remaining)
        } else {
            rates_over(revenue, &remaining, &waiting)
        };

        let scored = if lazy {
            for &u in &waiting {
                if newly_exhausted.iter().any(|&f| revenue.is_eligible(u, f)) {
                    rankings[u].retain(|&f| remaining[f] > 0);
                }
            }
            par::map_slice(&waiting, |&u| {
                score_ranked(revenue.row(u), &rankings[u], &rates, u, variant, k)
            })
        } else {
            par::map_slice(&waiting, |&u| customer_score(revenue, &rates, u, variant, k))
        };
        let mut queue = Vec::with_capacity(waiting.len());
        for (&u, s) in waiting.iter().zip(scored) {
            let s = match s {
                Ok(s) => s,
                Err(Error::NoEligibleFund(u)) => {
                    return Err(stuck(
                        format!("customer index {u} has no eligible fund with remaining demand"),
                        assignment,
                        instance,
                    ))
                }
                Err(e) => return Err(e),
            };
            queue.push((s, u));
        }
        queue.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        newly_exhausted.clear();
        let mut served = queue.len();
        for (pos, &(_, u)) in queue.iter().enumerate() {
            let ranked = ranked_funds(revenue, |f| remaining[f] > 0, u);
            if ranked.len() < k {
                return Err(stuck(
                    format!(
                        "customer index {u} has {} eligible funds with capacity, needs K = {k}",
                        ranked.len()
                    ),
                    assignment,
                    instance,
                ));
            }
            picks.clear();
            if options.risk_reserve {
                reserve.pick(u, &ranked, k, &mut picks);
            } else {
                picks.extend_from_slice(&ranked[..k]);
            }
            for &f in &picks {
                assignment.set(u, f, true);
                remaining[f] -= 1;
                if remaining[f] == 0 {
                    newly_exhausted.push(f);
                }
            }
            if lazy {
                let row = revenue.row(u);
                let eligible = revenue.eligible_row(u);
                for f in 0..nf {
                    if eligible[f] {
                        col_sums[f] -= row[f];
                    }
                }
            }
            if !newly_exhausted.is_empty() {
                served = pos + 1;
                break;
            }
        }
        let mut rest: Vec<usize> = queue[served..].iter().map(|&(_, u)| u).collect();
        rest.sort_unstable();
        waiting = rest;
    }

    let result = AllocationResult::from_partial(assignment, revenue);
    let stats = SolverStats::new(
        match variant {
            ScoreVariant::AdjacentGaps => "ha-eq8",
            ScoreVariant::TopThree => "ha-top3",
        },
        start,
        rounds,
        result.objective,
    );
    Ok((result, stats))
}

/// Per-level reserve used when there are too many funds for [`Completion`].
/// Customers with tolerance `t` can only use funds at levels `<= t`, so for
/// every level `l` the funds at or below `l` must cover K slots for each
/// waiting customer at or below `l`, with each fund counted at most once per
/// customer.
struct LevelReserve {
    k: usize,
    left: Vec<usize>,
    reach: Vec<usize>,
    eligible: Vec<bool>,
    tolerance: Vec<usize>,
    level: Vec<usize>,
    waiting: Vec<usize>,
}

impl LevelReserve {
    fn new(instance: &AllocationInstance) -> Self {
        let levels = instance.risk_levels as usize;
        let tolerance: Vec<usize> = instance
            .customers
            .iter()
            .map(|c| c.risk_tolerance as usize - 1)
            .collect();
        let level: Vec<usize> = instance.funds.iter().map(|f| f.risk_level as usize - 1).collect();
        let mut waiting = vec![0; levels];
        for &t in &tolerance {
            waiting[t] += 1;
        }
        let nf = instance.n_funds();
        let eligible = instance.revenue.mask().to_vec();
        let mut reach = vec![0; nf];
        for row in eligible.chunks(nf.max(1)) {
            for (r, &e) in reach.iter_mut().zip(row) {
                *r += usize::from(e);
            }
        }
        Self {
            k: instance.k,
            left: instance.demands(),
            reach,
            eligible,
            tolerance,
            level,
            waiting,
        }
    }

    fn leave(&mut self, u: usize) {
        self.waiting[self.tolerance[u]] -= 1;
        let nf = self.reach.len();
        for (r, &e) in self.reach.iter_mut().zip(&self.eligible[u * nf..(u + 1) * nf]) {
            *r -= usize::from(e);
        }
    }

    fn take(&mut self, f: usize) {
        self.left[f] -= 1;
    }

    /// After the current customer left, `f` has more demand than the waiting
    /// customers can absorb, so the current customer must take it.
    fn tight(&self, f: usize) -> bool {
        self.left[f] > self.reach[f]
    }

    /// Whether `u` can take `f` and still have `later` more picks of its own.
    fn allows(&self, u: usize, f: usize, later: usize) -> bool {
        let mut waiting = 0;
        for l in 0..self.waiting.len() {
            waiting += self.waiting[l];
            if l < self.level[f] {
                continue;
            }
            let pending = usize::from(later > 0 && self.tolerance[u] <= l);
            let customers = waiting + pending;
            let need = self.k * waiting + if pending == 1 { later } else { 0 };
            let supply: usize = self
                .level
                .iter()
                .enumerate()
                .filter(|&(_, &lg)| lg <= l)
                .map(|(g, _)| (self.left[g] - usize::from(g == f)).min(customers))
                .sum();
            if supply < need {
                return false;
            }
        }
        true
    }
}

enum Reserve {
    Exact(Completion),
    Level(LevelReserve),
}

impl Reserve {
    fn new(instance: &AllocationInstance) -> Self {
        match Completion::new(instance) {
            Some(c) => Reserve::Exact(c),
            None => Reserve::Level(LevelReserve::new(instance)),
        }
    }

    /// Picks up to `k` funds for `u` from `ranked`, best first, skipping any
    /// that would leave the rest of the problem without a completion.
    fn pick(&mut self, u: usize, ranked: &[usize], k: usize, picks: &mut Vec<usize>) {
        match self {
            Reserve::Exact(c) => {
                for &f in ranked {
                    if picks.len() < k && c.allows(u, f) {
                        c.assign(u, f);
                        picks.push(f);
                    }
                }
            }
            Reserve::Level(r) => {
                r.leave(u);
                for &f in ranked {
                    if picks.len() < k && r.tight(f) {
                        r.take(f);
                        picks.push(f);
                    }
                }
                for &f in ranked {
                    if picks.len() < k && !picks.contains(&f) && r.allows(u, f, k - picks.len() - 1) {
                        r.take(f);
                        picks.push(f);
                    }
                }
            }
        }
        // Nothing safe left: fall back to plain rank order.
        for &f in ranked {
            if picks.len() < k && !picks.contains(&f) {
                match self {
                    Reserve::Exact(c) => c.assign(u, f),
                    Reserve::Level(r) => r.take(f),
                }
                picks.push(f);
            }
        }
    }
}

fn stuck(detail: String, assignment: Assignment, instance: &AllocationInstance) -> Error {
    Error::InfeasibleDuringAllocation {
        detail,
        partial: Box::new(AllocationResult::from_partial(assignment, &instance.revenue)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{is_feasible, worked_example, Customer, Fund, RevenueMatrix};
    use crate::optimizer::allocate_manual;

    #[test]
    fn worked_example_reaches_optimum() {
        let inst = worked_example();
        let (res, stats) = allocate_ha(&inst, ScoreVariant::AdjacentGaps).unwrap();
        assert_eq!(res.objective, 1850.0);
        assert!(res.assignment.get(1, 0));
        assert!(res.assignment.get(2, 0));
        assert!(res.assignment.get(0, 1));
        assert!(is_feasible(&res.assignment, &inst));
        assert_eq!(stats.rounds, 2);
        assert_eq!(res.fill_counts, vec![2, 1]);
    }

    #[test]
    fn beats_fund_first_manual_on_worked_example() {
        let inst = worked_example();
        let (ha, _) = allocate_ha(&inst, ScoreVariant::AdjacentGaps).unwrap();
        let (manual, _) = allocate_manual(&inst, Some(&[0, 1])).unwrap();
        assert_eq!(manual.objective, 1710.0);
        assert!(ha.objective > manual.objective);
    }

    #[test]
    fn lazy_matches_strict_on_worked_example() {
        let inst = worked_example();
        let opts = HaOptions {
            recompute: Recompute::Lazy,
            ..HaOptions::default()
        };
        let (res, _) = allocate_ha_with(&inst, opts).unwrap();
        assert_eq!(res.objective, 1850.0);
    }

    #[test]
    fn supply_mismatch_is_rejected() {
        let mut inst = worked_example();
        inst.funds[1].demand = 2;
        assert!(matches!(
            allocate_ha(&inst, ScoreVariant::AdjacentGaps),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn reserve_keeps_low_risk_capacity() {
        let inst = stuck_instance();
        let (res, _) = allocate_ha(&inst, ScoreVariant::AdjacentGaps).unwrap();
        assert!(is_feasible(&res.assignment, &inst));
        // The tolerant customer is steered to the riskier fund.
        assert!(res.assignment.get(2, 1));
    }

    fn stuck_instance() -> AllocationInstance {
        // Without a reserve, customer 3 grabs fund 1 first; customers 1 and 2 then compete for
        // fund 3 alone while fund 2 is out of their risk range.
        let customers = vec![
            Customer {
                id: 1,
                risk_tolerance: 1,
                features: vec![],
            },
            Customer {
                id: 2,
                risk_tolerance: 1,
                features: vec![],
            },
            Customer {
                id: 3,
                risk_tolerance: 2,
                features: vec![],
            },
        ];
        let funds = vec![
            Fund {
                id: 1,
                risk_level: 1,
                demand: 1,
                features: vec![],
            },
            Fund {
                id: 2,
                risk_level: 2,
                demand: 1,
                features: vec![],
            },
            Fund {
                id: 3,
                risk_level: 1,
                demand: 1,
                features: vec![],
            },
        ];
        let revenue =
            RevenueMatrix::from_rows(&[vec![10.0, 0.0, 9.0], vec![10.0, 0.0, 9.0], vec![100.0, 1.0, 50.0]])
                .unwrap();
        AllocationInstance::new(customers, funds, revenue, 1).unwrap()
    }

    #[test]
    fn stuck_without_reserve_reports_partial_assignment() {
        let inst = stuck_instance();
        assert!(crate::domain::validate_instance(&inst).feasible_necessary);
        let opts = HaOptions {
            risk_reserve: false,
            ..HaOptions::default()
        };
        match allocate_ha_with(&inst, opts) {
            Err(Error::InfeasibleDuringAllocation { partial, .. }) => {
                assert_eq!(partial.fill_counts, vec![1, 0, 1]);
                assert!(partial.assignment.get(2, 0));
            }
            other => panic!("expected a stuck allocation, got {other:?}"),
        }
    }
}
