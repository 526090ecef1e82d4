//! Exhaustive search over all feasible assignments of tiny instances.

use crate::domain::{AllocationInstance, AllocationResult, Assignment};
use crate::error::{Error, Result};

pub const BRUTE_FORCE_MAX_CUSTOMERS: usize = 10;
pub const BRUTE_FORCE_MAX_FUNDS: usize = 4;

/// Globally optimal assignment. Among equal objectives the lexicographically
/// smallest one wins, comparing customers in index order by their ascending
/// fund lists.
pub fn allocate_exact_bruteforce(instance: &AllocationInstance) -> Result<AllocationResult> {
    let n = instance.n_customers();
    let nf = instance.n_funds();
    if n > BRUTE_FORCE_MAX_CUSTOMERS || nf > BRUTE_FORCE_MAX_FUNDS {
        return Err(Error::TooLarge {
            customers: n,
            funds: nf,
            max_customers: BRUTE_FORCE_MAX_CUSTOMERS,
            max_funds: BRUTE_FORCE_MAX_FUNDS,
        });
    }
    let k = instance.k;
    if instance.demands().iter().sum::<usize>() != k * n {
        return Err(Error::Infeasible);
    }
    let revenue = &instance.revenue;

    // K-subsets of each customer's eligible funds, in lexicographic order.
    let options: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|u| {
            let eligible: Vec<usize> = (0..nf).filter(|&f| revenue.is_eligible(u, f)).collect();
            combinations(&eligible, k)
        })
        .collect();

    // Upper bound on what customers u.. can still add.
    let mut suffix_bound = vec![0.0; n + 1];
    for u in (0..n).rev() {
        let mut vals: Vec<f64> = (0..nf).filter_map(|f| revenue.get(u, f)).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        suffix_bound[u] = suffix_bound[u + 1] + vals.iter().take(k).sum::<f64>();
    }

    let mut search = Search {
        options: &options,
        suffix_bound: &suffix_bound,
        values: revenue.values(),
        nf,
        k,
        remaining: instance.demands(),
        chosen: vec![0; n],
        best: None,
    };
    search.descend(0, 0.0);

    let (_, picks) = search.best.ok_or(Error::Infeasible)?;
    let mut x = Assignment::empty(n, nf);
    for (u, &i) in picks.iter().enumerate() {
        for &f in &options[u][i] {
            x.set(u, f, true);
        }
    }
    AllocationResult::evaluate(x, revenue)
}

struct Search<'a> {
    options: &'a [Vec<Vec<usize>>],
    suffix_bound: &'a [f64],
    values: &'a [f64],
    nf: usize,
    k: usize,
    remaining: Vec<usize>,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, u: usize, total: f64) {
        if u == self.options.len() {
            if self.remaining.iter().all(|&d| d == 0) && self.best.as_ref().is_none_or(|(b, _)| total > *b) {
                self.best = Some((total, self.chosen.clone()));
            }
            return;
        }
        if let Some((best, _)) = &self.best {
            let bound = total + self.suffix_bound[u];
            if bound + 1e-9 * (1.0 + best.abs()) < *best {
                return;
            }
        }
        let customers_left = self.options.len() - u;
        if self.remaining.iter().sum::<usize>() != self.k * customers_left {
            return;
        }
        for i in 0..self.options[u].len() {
            let funds = &self.options[u][i];
            if funds.iter().any(|&f| self.remaining[f] == 0) {
                continue;
            }
            // Accumulate in row-major order so the final total matches
            // `objective_value` bit for bit.
            let mut t = total;
            for &f in funds {
                self.remaining[f] -= 1;
                t += self.values[u * self.nf + f];
            }
            self.chosen[u] = i;
            self.descend(u + 1, t);
            for &f in funds {
                self.remaining[f] += 1;
            }
        }
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}
