//! Exact check that a partial allocation can still be completed.
//!
//! Each customer needs some number of further funds from the ones it is
//! eligible for and does not hold yet. By max-flow/min-cut the remaining
//! problem is solvable iff for every set `Y` of live funds, the slots
//! customers cannot fill outside `Y` fit in the demand left on `Y`. Customers
//! are grouped by (available funds, need), so a check costs
//! `2^live funds * groups`.

use std::collections::HashMap;

use crate::domain::AllocationInstance;

/// Largest fund count the exponential check is run for.
pub const COMPLETION_MAX_FUNDS: usize = 16;

pub(crate) struct Completion {
    left: Vec<usize>,
    group_of: Vec<usize>,
    groups: Vec<Group>,
    index: HashMap<(u32, usize), usize>,
    sums: Vec<usize>,
    sets: Vec<u32>,
}

#[derive(Clone, Copy)]
struct Group {
    avail: u32,
    need: usize,
    count: usize,
}

impl Completion {
    /// `None` when the instance has too many funds.
    pub fn new(instance: &AllocationInstance) -> Option<Self> {
        let nf = instance.n_funds();
        if nf > COMPLETION_MAX_FUNDS {
            return None;
        }
        let mut c = Self {
            left: instance.demands(),
            group_of: Vec::with_capacity(instance.n_customers()),
            groups: Vec::new(),
            index: HashMap::new(),
            sums: Vec::new(),
            sets: Vec::new(),
        };
        for u in 0..instance.n_customers() {
            let avail = instance
                .revenue
                .eligible_row(u)
                .iter()
                .enumerate()
                .filter(|&(_, &e)| e)
                .fold(0u32, |m, (f, _)| m | 1 << f);
            let g = c.group(avail, instance.k);
            c.groups[g].count += 1;
            c.group_of.push(g);
        }
        Some(c)
    }

    fn group(&mut self, avail: u32, need: usize) -> usize {
        let groups = &mut self.groups;
        *self.index.entry((avail, need)).or_insert_with(|| {
            groups.push(Group {
                avail,
                need,
                count: 0,
            });
            groups.len() - 1
        })
    }

    /// Records that `u` took `f`.
    pub fn assign(&mut self, u: usize, f: usize) {
        let old = self.groups[self.group_of[u]];
        self.groups[self.group_of[u]].count -= 1;
        let g = self.group(old.avail & !(1 << f), old.need.saturating_sub(1));
        self.groups[g].count += 1;
        self.group_of[u] = g;
        self.left[f] -= 1;
    }

    /// Whether everyone can still be completed after `u` takes `f`.
    pub fn allows(&mut self, u: usize, f: usize) -> bool {
        let own = self.groups[self.group_of[u]];
        if own.need == 0 || own.avail & (1 << f) == 0 || self.left[f] == 0 {
            return false;
        }
        let own_group = self.group_of[u];
        let own_avail = own.avail & !(1 << f);
        let own_need = own.need - 1;

        let left = |g: usize| self.left[g] - usize::from(g == f);
        let live: Vec<usize> = (0..self.left.len()).filter(|&g| left(g) > 0).collect();
        let alive = live.iter().fold(0u32, |m, &g| m | 1 << g);

        let subsets = 1usize << live.len();
        self.sums.clear();
        self.sums.resize(subsets, 0);
        self.sets.clear();
        self.sets.resize(subsets, 0);
        for y in 1..subsets {
            let low = y.trailing_zeros() as usize;
            let rest = y & (y - 1);
            self.sums[y] = self.sums[rest] + left(live[low]);
            self.sets[y] = self.sets[rest] | 1 << live[low];
        }
        for y in 0..subsets {
            let free = alive & !self.sets[y];
            let mut short = own_need.saturating_sub((own_avail & free).count_ones() as usize);
            for (i, g) in self.groups.iter().enumerate() {
                let count = g.count - usize::from(i == own_group);
                if count > 0 && g.need > 0 {
                    short += count * g.need.saturating_sub((g.avail & free).count_ones() as usize);
                }
            }
            if short > self.sums[y] {
                return false;
            }
        }
        true
    }
}
