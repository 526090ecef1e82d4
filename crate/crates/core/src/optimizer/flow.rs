//! Exact K = 1 allocation as a min-cost max-flow problem.
//!
//! Network: source -> customer (cap 1), customer -> eligible fund (cap 1,
//! cost -E), fund -> sink (cap d_f). Customers are routed one at a time along
//! a shortest augmenting path in the residual network (successive shortest
//! paths with Dijkstra over reduced costs). Adding the source arcs one customer
//! at a time keeps every intermediate flow optimal for the customers already
//! routed, so the final flow is a min-cost flow of value |U|.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::domain::{AllocationInstance, AllocationResult, Assignment};
use crate::error::{Error, Result};

const UNASSIGNED: usize = usize::MAX;

/// Optimal assignment for K = 1 instances.
pub fn allocate_exact_flow(instance: &AllocationInstance) -> Result<AllocationResult> {
    let (result, _) = solve(instance)?;
    Ok(result)
}

/// Also returns the number of augmenting paths (one per customer).
pub(crate) fn solve(instance: &AllocationInstance) -> Result<(AllocationResult, usize)> {
    if instance.k != 1 {
        return Err(Error::UnsupportedK(instance.k));
    }
    let n = instance.n_customers();
    if instance.demands().iter().sum::<usize>() != n {
        return Err(Error::Infeasible);
    }
    let mut net = Residual::new(instance);
    for s in 0..n {
        net.route(s)?;
    }
    let mut x = Assignment::empty(n, instance.n_funds());
    for (u, &f) in net.fund_of.iter().enumerate() {
        x.set(u, f, true);
    }
    Ok((AllocationResult::evaluate(x, &instance.revenue)?, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    // Declared first so the sink wins distance ties and search stops early.
    Sink,
    Fund(usize),
    Customer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Residual<'a> {
    instance: &'a AllocationInstance,
    nf: usize,
    capacity: Vec<usize>,
    fund_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
    // Node potentials; reduced cost of arc (a, b) is cost + pi(a) - pi(b).
    pi_customer: Vec<f64>,
    pi_fund: Vec<f64>,
    pi_sink: f64,
    // Dijkstra scratch, invalidated by bumping `stamp`.
    stamp: u32,
    seen_customer: Vec<u32>,
    done_customer: Vec<u32>,
    dist_customer: Vec<f64>,
    seen_fund: Vec<u32>,
    done_fund: Vec<u32>,
    dist_fund: Vec<f64>,
    via_fund: Vec<usize>,
    settled_customers: Vec<(usize, f64)>,
    settled_funds: Vec<(usize, f64)>,
    heap: BinaryHeap<Reverse<(Dist, Node)>>,
}

impl<'a> Residual<'a> {
    fn new(instance: &'a AllocationInstance) -> Self {
        let n = instance.n_customers();
        let nf = instance.n_funds();
        Self {
            instance,
            nf,
            capacity: instance.demands(),
            fund_of: vec![UNASSIGNED; n],
            members: vec![Vec::new(); nf],
            slot: vec![0; n],
            pi_customer: vec![0.0; n],
            pi_fund: vec![0.0; nf],
            pi_sink: 0.0,
            stamp: 0,
            seen_customer: vec![0; n],
            done_customer: vec![0; n],
            dist_customer: vec![0.0; n],
            seen_fund: vec![0; nf],
            done_fund: vec![0; nf],
            dist_fund: vec![0.0; nf],
            via_fund: vec![0; nf],
            settled_customers: Vec::new(),
            settled_funds: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    /// Push one unit of flow from customer `s` to the sink along a shortest path.
    fn route(&mut self, s: usize) -> Result<()> {
        let revenue = &self.instance.revenue;
        // Make every arc out of `s` non-negative under the potentials.
        let mut pi_s = f64::NEG_INFINITY;
        for f in 0..self.nf {
            if let Some(e) = revenue.get(s, f) {
                pi_s = pi_s.max(self.pi_fund[f] + e);
            }
        }
        if pi_s == f64::NEG_INFINITY {
            return Err(Error::Infeasible);
        }
        self.pi_customer[s] = pi_s;

        self.stamp += 1;
        let stamp = self.stamp;
        self.heap.clear();
        self.settled_customers.clear();
        self.settled_funds.clear();
        self.seen_customer[s] = stamp;
        self.dist_customer[s] = 0.0;
        self.heap.push(Reverse((Dist(0.0), Node::Customer(s))));
        let mut sink: Option<(f64, usize)> = None;

        while let Some(Reverse((Dist(d), node))) = self.heap.pop() {
            match node {
                Node::Sink => {
                    let (_, f) = sink.expect("sink reached through a fund");
                    sink = Some((d, f));
                    break;
                }
                Node::Customer(v) => {
                    if self.done_customer[v] == stamp || d > self.dist_customer[v] {
                        continue;
                    }
                    self.done_customer[v] = stamp;
                    self.settled_customers.push((v, d));
                    let current = self.fund_of[v];
                    let values = revenue.row(v);
                    let eligible = revenue.eligible_row(v);
                    for g in 0..self.nf {
                        if !eligible[g] || g == current || self.done_fund[g] == stamp {
                            continue;
                        }
                        let reduced = -values[g] + self.pi_customer[v] - self.pi_fund[g];
                        let nd = d + reduced.max(0.0);
                        if self.seen_fund[g] != stamp || nd < self.dist_fund[g] {
                            self.seen_fund[g] = stamp;
                            self.dist_fund[g] = nd;
                            self.via_fund[g] = v;
                            self.heap.push(Reverse((Dist(nd), Node::Fund(g))));
                        }
                    }
                }
                Node::Fund(f) => {
                    if self.done_fund[f] == stamp || d > self.dist_fund[f] {
                        continue;
                    }
                    self.done_fund[f] = stamp;
                    self.settled_funds.push((f, d));
                    if self.members[f].len() < self.capacity[f] {
                        let nd = d + (self.pi_fund[f] - self.pi_sink).max(0.0);
                        if sink.is_none_or(|(best, _)| nd < best) {
                            sink = Some((nd, f));
                            self.heap.push(Reverse((Dist(nd), Node::Sink)));
                        }
                    }
                    for &v in &self.members[f] {
                        if self.done_customer[v] == stamp {
                            continue;
                        }
                        let reduced = revenue.value(v, f) + self.pi_fund[f] - self.pi_customer[v];
                        let nd = d + reduced.max(0.0);
                        if self.seen_customer[v] != stamp || nd < self.dist_customer[v] {
                            self.seen_customer[v] = stamp;
                            self.dist_customer[v] = nd;
                            self.heap.push(Reverse((Dist(nd), Node::Customer(v))));
                        }
                    }
                }
            }
        }

        let Some((d_sink, last)) = sink else {
            return Err(Error::Infeasible);
        };

        for &(v, d) in &self.settled_customers {
            self.pi_customer[v] += d - d_sink;
        }
        for &(f, d) in &self.settled_funds {
            self.pi_fund[f] += d - d_sink;
        }

        // Walk back from the sink, shifting each customer on the path one fund over.
        let mut f = last;
        loop {
            let v = self.via_fund[f];
            let prev = self.fund_of[v];
            if prev != UNASSIGNED {
                self.detach(v, prev);
            }
            self.attach(v, f);
            if v == s {
                break;
            }
            f = prev;
        }
        Ok(())
    }

    fn detach(&mut self, v: usize, f: usize) {
        let i = self.slot[v];
        self.members[f].swap_remove(i);
        if let Some(&moved) = self.members[f].get(i) {
            self.slot[moved] = i;
        }
        self.fund_of[v] = UNASSIGNED;
    }

    fn attach(&mut self, v: usize, f: usize) {
        self.slot[v] = self.members[f].len();
        self.members[f].push(v);
        self.fund_of[v] = f;
    }
}
