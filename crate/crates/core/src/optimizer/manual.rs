//! Fund-first baseline: funds in a fixed priority order each take their
//! highest-revenue customers that still have free slots.

use std::cmp::Ordering;
use std::time::Instant;

use super::completion::Completion;
use super::scores::consumption_rates;
use super::{ensure_supply_matches, SolverStats};
use crate::domain::{AllocationInstance, AllocationResult, Assignment};
use crate::error::{Error, Result};

/// Riskiest funds first, since they have the fewest eligible customers; within
/// a level, descending initial consumption rate. Funds without demand go last.
pub fn default_priority(instance: &AllocationInstance) -> Vec<usize> {
    let rates = consumption_rates(&instance.revenue, &instance.demands()).expect("demands match fund count");
    let level = |f: usize| instance.funds[f].risk_level;
    let mut order: Vec<usize> = (0..instance.n_funds()).collect();
    order.sort_by(|&a, &b| match (rates.alpha(a), rates.alpha(b)) {
        (Some(x), Some(y)) => level(b).cmp(&level(a)).then(y.total_cmp(&x)).then(a.cmp(&b)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

/// `priority` lists fund indices; `None` uses [`default_priority`].
pub fn allocate_manual(
    instance: &AllocationInstance,
    priority: Option<&[usize]>,
) -> Result<(AllocationResult, SolverStats)> {
    let start = Instant::now();
    let nf = instance.n_funds();
    let order = match priority {
        Some(p) => {
            let mut seen = vec![false; nf];
            if p.len() != nf
                || p.iter()
                    .any(|&f| f >= nf || std::mem::replace(&mut seen[f], true))
            {
                return Err(Error::InvalidConfig(format!(
                    "priority {p:?} is not a permutation of {nf} funds"
                )));
            }
            p.to_vec()
        }
        None => default_priority(instance),
    };
    ensure_supply_matches(instance)?;

    let revenue = &instance.revenue;
    let n = instance.n_customers();
    let k = instance.k;
    let mut slots_used = vec![0usize; n];
    let mut assignment = Assignment::empty(n, nf);
    let mut rounds = 0;
    // Funds not yet processed that each customer could still take.
    let mut options: Vec<usize> = (0..n)
        .map(|u| {
            (0..nf)
                .filter(|&f| instance.funds[f].demand > 0 && revenue.is_eligible(u, f))
                .count()
        })
        .collect();

    let mut completion = Completion::new(instance);

    for &f in &order {
        let demand = instance.funds[f].demand;
        if demand == 0 {
            continue;
        }
        rounds += 1;
        let mut candidates: Vec<usize> = (0..n)
            .filter(|&u| slots_used[u] < k && revenue.is_eligible(u, f))
            .collect();
        if candidates.len() < demand {
            return Err(Error::InfeasibleDuringAllocation {
                detail: format!(
                    "fund index {f} needs {demand} customers but only {} are eligible with free slots",
                    candidates.len()
                ),
                partial: Box::new(AllocationResult::from_partial(assignment, revenue)),
            });
        }
        // A customer with as many free slots as remaining options must take
        // this fund now; those go first, the rest by revenue.
        let forced = |u: usize| k - slots_used[u] >= options[u];
        let by_revenue = |a: &usize, b: &usize| {
            forced(*b)
                .cmp(&forced(*a))
                .then(revenue.value(*b, f).total_cmp(&revenue.value(*a, f)))
                .then(a.cmp(b))
        };
        candidates.sort_unstable_by(by_revenue);
        let mut chosen = Vec::with_capacity(demand);
        if let Some(c) = completion.as_mut() {
            for &u in &candidates {
                if chosen.len() < demand && c.allows(u, f) {
                    c.assign(u, f);
                    chosen.push(u);
                }
            }
        }
        for &u in &candidates {
            if chosen.len() < demand && !chosen.contains(&u) {
                if let Some(c) = completion.as_mut() {
                    c.assign(u, f);
                }
                chosen.push(u);
            }
        }
        for &u in &chosen {
            assignment.set(u, f, true);
            slots_used[u] += 1;
        }
        for (u, o) in options.iter_mut().enumerate() {
            if revenue.is_eligible(u, f) {
                *o -= 1;
            }
        }
    }

    let result = AllocationResult::from_partial(assignment, revenue);
    let stats = SolverStats::new("manual", start, rounds, result.objective);
    Ok((result, stats))
}
