//! Allocation instances, assignments, constraint checks and business metrics.
//!
//! A customer `u` may be shown fund `f` only if its risk tolerance is at
//! least the fund's risk level. Ineligible cells are tracked with an explicit
//! boolean mask; they never take part in sums or argmaxes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of risk levels when nothing else is configured.
pub const DEFAULT_RISK_LEVELS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: u64,
    pub risk_tolerance: u32,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fund {
    pub id: u64,
    pub risk_level: u32,
    /// Exact number of customers this fund must be exposed to.
    pub demand: usize,
    pub features: Vec<f64>,
}

/// Dense customers x funds grid of expected revenue with an eligibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueMatrix {
    n_customers: usize,
    n_funds: usize,
    values: Vec<f64>,
    eligible: Vec<bool>,
}

impl RevenueMatrix {
    /// Row-major `values` and `eligible`. Eligible cells must be finite and
    /// non-negative; ineligible cells are stored as zero.
    pub fn new(
        n_customers: usize,
        n_funds: usize,
        mut values: Vec<f64>,
        eligible: Vec<bool>,
    ) -> Result<Self> {
        let cells = n_customers * n_funds;
        if values.len() != cells || eligible.len() != cells {
            return Err(Error::DimMismatch(format!(
                "revenue matrix {}x{} needs {} cells, got {} values and {} mask entries",
                n_customers,
                n_funds,
                cells,
                values.len(),
                eligible.len()
            )));
        }
        for (i, (&v, &e)) in values.iter().zip(&eligible).enumerate() {
            if e && !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "revenue for customer {} fund {} must be finite and >= 0, got {}",
                    i / n_funds.max(1),
                    i % n_funds.max(1),
                    v
                )));
            }
        }
        for (v, &e) in values.iter_mut().zip(&eligible) {
            if !e {
                *v = 0.0;
            }
        }
        Ok(Self {
            n_customers,
            n_funds,
            values,
            eligible,
        })
    }

    /// Fully eligible matrix from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_funds = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_funds) {
            return Err(Error::DimMismatch("ragged revenue rows".into()));
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        let eligible = vec![true; values.len()];
        Self::new(rows.len(), n_funds, values, eligible)
    }

    /// All-zero, fully eligible matrix.
    pub fn zeros(n_customers: usize, n_funds: usize) -> Self {
        Self {
            n_customers,
            n_funds,
            values: vec![0.0; n_customers * n_funds],
            eligible: vec![true; n_customers * n_funds],
        }
    }

    pub fn n_customers(&self) -> usize {
        self.n_customers
    }

    pub fn n_funds(&self) -> usize {
        self.n_funds
    }

    #[inline]
    pub fn value(&self, customer: usize, fund: usize) -> f64 {
        self.values[customer * self.n_funds + fund]
    }

    #[inline]
    pub fn is_eligible(&self, customer: usize, fund: usize) -> bool {
        self.eligible[customer * self.n_funds + fund]
    }

    /// The value when the cell is eligible.
    #[inline]
    pub fn get(&self, customer: usize, fund: usize) -> Option<f64> {
        let i = customer * self.n_funds + fund;
        self.eligible[i].then(|| self.values[i])
    }

    #[inline]
    pub fn row(&self, customer: usize) -> &[f64] {
        &self.values[customer * self.n_funds..(customer + 1) * self.n_funds]
    }

    #[inline]
    pub fn eligible_row(&self, customer: usize) -> &[bool] {
        &self.eligible[customer * self.n_funds..(customer + 1) * self.n_funds]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.eligible
    }

    /// Every value multiplied by `factor`; the mask is unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_customers: self.n_customers,
            n_funds: self.n_funds,
            values: self.values.iter().map(|v| v * factor).collect(),
            eligible: self.eligible.clone(),
        }
    }

    pub fn eligible_count(&self) -> usize {
        self.eligible.iter().filter(|&&e| e).count()
    }
}

/// Binary customers x funds assignment grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    n_customers: usize,
    n_funds: usize,
    cells: Vec<bool>,
}

impl Assignment {
    pub fn empty(n_customers: usize, n_funds: usize) -> Self {
        Self {
            n_customers,
            n_funds,
            cells: vec![false; n_customers * n_funds],
        }
    }

    /// Build from `(customer_index, fund_index)` pairs.
    pub fn from_pairs(n_customers: usize, n_funds: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut x = Self::empty(n_customers, n_funds);
        for &(u, f) in pairs {
            if u >= n_customers || f >= n_funds {
                return Err(Error::DimMismatch(format!(
                    "pair ({u}, {f}) outside {n_customers}x{n_funds}"
                )));
            }
            x.set(u, f, true);
        }
        Ok(x)
    }

    pub fn n_customers(&self) -> usize {
        self.n_customers
    }

    pub fn n_funds(&self) -> usize {
        self.n_funds
    }

    #[inline]
    pub fn get(&self, customer: usize, fund: usize) -> bool {
        self.cells[customer * self.n_funds + fund]
    }

    #[inline]
    pub fn set(&mut self, customer: usize, fund: usize, on: bool) {
        self.cells[customer * self.n_funds + fund] = on;
    }

    pub fn row_sum(&self, customer: usize) -> usize {
        self.cells[customer * self.n_funds..(customer + 1) * self.n_funds]
            .iter()
            .filter(|&&c| c)
            .count()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.n_funds];
        for row in self.cells.chunks(self.n_funds.max(1)) {
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += usize::from(c);
            }
        }
        sums
    }

    /// Set cells in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nf = self.n_funds;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(move |(i, _)| (i / nf, i % nf))
    }

    /// Funds assigned to one customer, ascending.
    pub fn funds_of(&self, customer: usize) -> Vec<usize> {
        (0..self.n_funds).filter(|&f| self.get(customer, f)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationInstance {
    pub customers: Vec<Customer>,
    pub funds: Vec<Fund>,
    pub revenue: RevenueMatrix,
    /// Exposure slots per customer.
    pub k: usize,
    /// Risk levels live in `1..=risk_levels`.
    pub risk_levels: u32,
}

impl AllocationInstance {
    /// Checks shapes and ids, then applies the risk mask to `revenue`.
    pub fn new(customers: Vec<Customer>, funds: Vec<Fund>, revenue: RevenueMatrix, k: usize) -> Result<Self> {
        Self::with_risk_levels(customers, funds, revenue, k, DEFAULT_RISK_LEVELS)
    }

    pub fn with_risk_levels(
        customers: Vec<Customer>,
        funds: Vec<Fund>,
        revenue: RevenueMatrix,
        k: usize,
        risk_levels: u32,
    ) -> Result<Self> {
        if revenue.n_customers() != customers.len() || revenue.n_funds() != funds.len() {
            return Err(Error::DimMismatch(format!(
                "revenue is {}x{} but instance has {} customers and {} funds",
                revenue.n_customers(),
                revenue.n_funds(),
                customers.len(),
                funds.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidInstance("K must be positive".into()));
        }
        if k > funds.len() {
            return Err(Error::InvalidInstance(format!(
                "K = {k} exceeds the number of funds ({})",
                funds.len()
            )));
        }
        if risk_levels == 0 {
            return Err(Error::InvalidInstance(
                "at least one risk level is required".into(),
            ));
        }
        let mut seen = HashSet::new();
        for c in &customers {
            if !seen.insert(c.id) {
                return Err(Error::InvalidInstance(format!("duplicate customer id {}", c.id)));
            }
            if !(1..=risk_levels).contains(&c.risk_tolerance) {
                return Err(Error::InvalidInstance(format!(
                    "customer {} risk tolerance {} outside 1..={risk_levels}",
                    c.id, c.risk_tolerance
                )));
            }
        }
        seen.clear();
        for f in &funds {
            if !seen.insert(f.id) {
                return Err(Error::InvalidInstance(format!("duplicate fund id {}", f.id)));
            }
            if !(1..=risk_levels).contains(&f.risk_level) {
                return Err(Error::InvalidInstance(format!(
                    "fund {} risk level {} outside 1..={risk_levels}",
                    f.id, f.risk_level
                )));
            }
        }
        let revenue = apply_risk_mask(&revenue, &customers, &funds)?;
        Ok(Self {
            customers,
            funds,
            revenue,
            k,
            risk_levels,
        })
    }

    /// Same customers and funds with a different revenue matrix (re-masked).
    pub fn with_revenue(&self, revenue: RevenueMatrix) -> Result<Self> {
        Self::with_risk_levels(
            self.customers.clone(),
            self.funds.clone(),
            revenue,
            self.k,
            self.risk_levels,
        )
    }

    pub fn n_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn n_funds(&self) -> usize {
        self.funds.len()
    }

    pub fn demands(&self) -> Vec<usize> {
        self.funds.iter().map(|f| f.demand).collect()
    }

    pub fn customer_index(&self, id: u64) -> Option<usize> {
        self.customers.iter().position(|c| c.id == id)
    }

    pub fn fund_index(&self, id: u64) -> Option<usize> {
        self.funds.iter().position(|f| f.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub assignment: Assignment,
    pub objective: f64,
    pub fill_counts: Vec<usize>,
}

impl AllocationResult {
    /// Score an assignment against `revenue`.
    pub fn evaluate(assignment: Assignment, revenue: &RevenueMatrix) -> Result<Self> {
        let objective = objective_value(&assignment, revenue)?;
        let fill_counts = assignment.column_sums();
        Ok(Self {
            assignment,
            objective,
            fill_counts,
        })
    }

    /// Like [`AllocationResult::evaluate`] but for partial assignments built by
    /// the solvers themselves, which never touch ineligible cells.
    pub(crate) fn from_partial(assignment: Assignment, revenue: &RevenueMatrix) -> Self {
        let objective = assignment.pairs().map(|(u, f)| revenue.value(u, f)).sum();
        let fill_counts = assignment.column_sums();
        Self {
            assignment,
            objective,
            fill_counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    /// Total fund demand differs from K times the number of customers.
    SupplyMismatch,
    /// A fund wants more customers than can legally see it.
    RiskStarved,
    /// A customer has fewer than K eligible funds.
    CustomerUnderserved,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::SupplyMismatch => "SUPPLY_MISMATCH",
            ViolationCode::RiskStarved => "RISK_STARVED",
            ViolationCode::CustomerUnderserved => "CUSTOMER_UNDERSERVED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

/// Necessary (not sufficient) feasibility conditions. Only the exact flow
/// solver certifies that a feasible assignment exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub feasible_necessary: bool,
    pub violations: Vec<Violation>,
    pub supply_total: usize,
    pub demand_total: usize,
}

impl ValidationReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

pub fn validate_instance(instance: &AllocationInstance) -> ValidationReport {
    let mut violations = Vec::new();
    let supply_total: usize = instance.funds.iter().map(|f| f.demand).sum();
    let demand_total = instance.k * instance.customers.len();
    if supply_total != demand_total {
        violations.push(Violation {
            code: ViolationCode::SupplyMismatch,
            message: format!("sum of fund demands is {supply_total} but K x customers is {demand_total}"),
        });
    }
    for fund in &instance.funds {
        let reachable = instance
            .customers
            .iter()
            .filter(|c| c.risk_tolerance >= fund.risk_level)
            .count();
        if fund.demand > reachable {
            violations.push(Violation {
                code: ViolationCode::RiskStarved,
                message: format!(
                    "fund {} needs {} customers but only {} tolerate risk level {}",
                    fund.id, fund.demand, reachable, fund.risk_level
                ),
            });
        }
    }
    for customer in &instance.customers {
        let options = instance
            .funds
            .iter()
            .filter(|f| f.risk_level <= customer.risk_tolerance)
            .count();
        if options < instance.k {
            violations.push(Violation {
                code: ViolationCode::CustomerUnderserved,
                message: format!(
                    "customer {} has {} eligible funds, needs K = {}",
                    customer.id, options, instance.k
                ),
            });
        }
    }
    ValidationReport {
        feasible_necessary: violations.is_empty(),
        violations,
        supply_total,
        demand_total,
    }
}

/// Mark cells ineligible wherever the fund's risk level exceeds the
/// customer's tolerance. Cells already ineligible stay ineligible.
pub fn apply_risk_mask(
    revenue: &RevenueMatrix,
    customers: &[Customer],
    funds: &[Fund],
) -> Result<RevenueMatrix> {
    if revenue.n_customers() != customers.len() || revenue.n_funds() != funds.len() {
        return Err(Error::DimMismatch(format!(
            "revenue is {}x{}, customers {} funds {}",
            revenue.n_customers(),
            revenue.n_funds(),
            customers.len(),
            funds.len()
        )));
    }
    let mut eligible = revenue.eligible.clone();
    let mut values = revenue.values.clone();
    for (u, c) in customers.iter().enumerate() {
        for (f, fund) in funds.iter().enumerate() {
            if fund.risk_level > c.risk_tolerance {
                eligible[u * funds.len() + f] = false;
                values[u * funds.len() + f] = 0.0;
            }
        }
    }
    Ok(RevenueMatrix {
        n_customers: revenue.n_customers,
        n_funds: revenue.n_funds,
        values,
        eligible,
    })
}

/// Total expected revenue of an assignment, summed in row-major order.
pub fn objective_value(x: &Assignment, revenue: &RevenueMatrix) -> Result<f64> {
    if x.n_customers() != revenue.n_customers() || x.n_funds() != revenue.n_funds() {
        return Err(Error::DimMismatch(format!(
            "assignment is {}x{}, revenue is {}x{}",
            x.n_customers(),
            x.n_funds(),
            revenue.n_customers(),
            revenue.n_funds()
        )));
    }
    let mut total = 0.0;
    for (u, f) in x.pairs() {
        match revenue.get(u, f) {
            Some(v) => total += v,
            None => return Err(Error::AssignedIneligible { customer: u, fund: f }),
        }
    }
    Ok(total)
}

/// Rows sum to K, columns sum to their demand, and no ineligible cell is set.
pub fn is_feasible(x: &Assignment, instance: &AllocationInstance) -> bool {
    if x.n_customers() != instance.n_customers() || x.n_funds() != instance.n_funds() {
        return false;
    }
    if (0..x.n_customers()).any(|u| x.row_sum(u) != instance.k) {
        return false;
    }
    if x.column_sums()
        .iter()
        .zip(&instance.funds)
        .any(|(&fill, fund)| fill != fund.demand)
    {
        return false;
    }
    x.pairs().all(|(u, f)| instance.revenue.is_eligible(u, f))
}

/// Conversions per thousand exposures.
pub fn cpme(conversions: u64, exposures: u64) -> Result<f64> {
    if exposures == 0 {
        return Err(Error::ZeroExposures);
    }
    Ok(conversions as f64 / exposures as f64 * 1000.0)
}

/// Revenue per thousand exposures.
pub fn rpme(revenue_sum: f64, exposures: u64) -> Result<f64> {
    if exposures == 0 {
        return Err(Error::ZeroExposures);
    }
    Ok(revenue_sum / exposures as f64 * 1000.0)
}

/// Three customers, two funds (demands 2 and 1), K = 1, a single risk level.
///
/// Manual fund-first allocation gives 1710 (f1 first) or 1610 (f2 first);
/// the optimum is 1850.
pub fn worked_example() -> AllocationInstance {
    let customers = (1..=3)
        .map(|id| Customer {
            id,
            risk_tolerance: 1,
            features: Vec::new(),
        })
        .collect();
    let funds = vec![
        Fund {
            id: 1,
            risk_level: 1,
            demand: 2,
            features: Vec::new(),
        },
        Fund {
            id: 2,
            risk_level: 1,
            demand: 1,
            features: Vec::new(),
        },
    ];
    let revenue = RevenueMatrix::from_rows(&[vec![510.0, 450.0], vec![900.0, 600.0], vec![500.0, 300.0]])
        .expect("static matrix");
    AllocationInstance::with_risk_levels(customers, funds, revenue, 1, 1).expect("static instance")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn customer(id: u64, t: u32) -> Customer {
        Customer {
            id,
            risk_tolerance: t,
            features: vec![],
        }
    }

    fn fund(id: u64, r: u32, d: usize) -> Fund {
        Fund {
            id,
            risk_level: r,
            demand: d,
            features: vec![],
        }
    }

    #[test]
    fn worked_example_passes_necessary_checks() {
        let inst = worked_example();
        let report = validate_instance(&inst);
        assert!(report.feasible_necessary);
        assert_eq!(report.supply_total, 3);
        assert_eq!(report.demand_total, 3);
    }

    #[test]
    fn supply_mismatch_is_reported() {
        let inst = AllocationInstance::new(
            vec![customer(1, 1), customer(2, 1), customer(3, 1)],
            vec![fund(1, 1, 3), fund(2, 1, 2)],
            RevenueMatrix::zeros(3, 2),
            1,
        )
        .unwrap();
        let report = validate_instance(&inst);
        assert!(!report.feasible_necessary);
        assert!(report.has(ViolationCode::SupplyMismatch));
        assert_eq!(report.supply_total, 5);
    }

    #[test]
    fn risk_starved_fund_is_reported() {
        let inst = AllocationInstance::new(
            vec![customer(1, 1), customer(2, 1)],
            vec![fund(1, 1, 1), fund(2, 5, 1)],
            RevenueMatrix::zeros(2, 2),
            1,
        )
        .unwrap();
        let report = validate_instance(&inst);
        assert!(report.has(ViolationCode::RiskStarved));
        assert!(!report.has(ViolationCode::SupplyMismatch));
    }

    #[test]
    fn underserved_customer_is_reported() {
        let inst = AllocationInstance::new(
            vec![customer(1, 1), customer(2, 3)],
            vec![fund(1, 1, 1), fund(2, 2, 2), fund(3, 3, 1)],
            RevenueMatrix::zeros(2, 3),
            2,
        )
        .unwrap();
        let report = validate_instance(&inst);
        assert!(report.has(ViolationCode::CustomerUnderserved));
    }

    #[test]
    fn risk_mask_cells() {
        let customers = vec![customer(1, 3), customer(2, 1)];
        let funds = vec![fund(1, 2, 1)];
        let m = apply_risk_mask(&RevenueMatrix::zeros(2, 1), &customers, &funds).unwrap();
        assert!(m.is_eligible(0, 0));
        assert!(!m.is_eligible(1, 0));
    }

    #[test]
    fn risk_mask_identity_when_levels_equal() {
        let customers = vec![customer(1, 2), customer(2, 2)];
        let funds = vec![fund(1, 2, 1), fund(2, 2, 1)];
        let m = RevenueMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(apply_risk_mask(&m, &customers, &funds).unwrap(), m);
    }

    #[test]
    fn worked_example_objectives() {
        let inst = worked_example();
        let best = Assignment::from_pairs(3, 2, &[(1, 0), (2, 0), (0, 1)]).unwrap();
        assert_eq!(objective_value(&best, &inst.revenue).unwrap(), 1850.0);
        let manual = Assignment::from_pairs(3, 2, &[(0, 0), (1, 0), (2, 1)]).unwrap();
        assert_eq!(objective_value(&manual, &inst.revenue).unwrap(), 1710.0);
        let empty = Assignment::empty(3, 2);
        assert_eq!(objective_value(&empty, &inst.revenue).unwrap(), 0.0);
    }

    #[test]
    fn objective_rejects_ineligible_cells() {
        let inst = AllocationInstance::new(
            vec![customer(1, 1)],
            vec![fund(1, 2, 1)],
            RevenueMatrix::from_rows(&[vec![5.0]]).unwrap(),
            1,
        )
        .unwrap();
        let x = Assignment::from_pairs(1, 1, &[(0, 0)]).unwrap();
        assert!(matches!(
            objective_value(&x, &inst.revenue),
            Err(Error::AssignedIneligible { customer: 0, fund: 0 })
        ));
    }

    #[test]
    fn feasibility_checks() {
        let inst = worked_example();
        let best = Assignment::from_pairs(3, 2, &[(1, 0), (2, 0), (0, 1)]).unwrap();
        assert!(is_feasible(&best, &inst));
        let missing_row = Assignment::from_pairs(3, 2, &[(1, 0), (2, 0)]).unwrap();
        assert!(!is_feasible(&missing_row, &inst));
        let overfull = Assignment::from_pairs(3, 2, &[(0, 0), (1, 0), (2, 0)]).unwrap();
        assert!(!is_feasible(&overfull, &inst));
    }

    #[test]
    fn business_metrics() {
        assert_eq!(cpme(3, 1000).unwrap(), 3.0);
        assert_eq!(rpme(0.0, 1000).unwrap(), 0.0);
        assert!((cpme(269, 100_000).unwrap() - 2.69).abs() < 1e-12);
        assert!(matches!(cpme(1, 0), Err(Error::ZeroExposures)));
        assert!(matches!(rpme(1.0, 0), Err(Error::ZeroExposures)));
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        let err = AllocationInstance::new(
            vec![customer(1, 1)],
            vec![fund(1, 1, 1)],
            RevenueMatrix::zeros(2, 1),
            1,
        );
        assert!(matches!(err, Err(Error::DimMismatch(_))));
        let err = AllocationInstance::new(
            vec![customer(1, 1)],
            vec![fund(1, 1, 1)],
            RevenueMatrix::zeros(1, 1),
            2,
        );
        assert!(matches!(err, Err(Error::InvalidInstance(_))));
        let err = AllocationInstance::new(
            vec![customer(1, 1), customer(1, 1)],
            vec![fund(1, 1, 2)],
            RevenueMatrix::zeros(2, 1),
            1,
        );
        assert!(matches!(err, Err(Error::InvalidInstance(_))));
    }

    fn arb_instance() -> impl Strategy<Value = (AllocationInstance, Vec<(usize, usize)>)> {
        (1usize..8, 1usize..5, 1u32..4).prop_flat_map(|(nu, nf, levels)| {
            (
                proptest::collection::vec(1..=levels, nu),
                proptest::collection::vec(1..=levels, nf),
                proptest::collection::vec(0.0f64..100.0, nu * nf),
                proptest::collection::vec(0usize..4, nf),
                proptest::collection::vec((0..nu, 0..nf), 0..10),
            )
                .prop_map(move |(t, r, vals, d, pairs)| {
                    let customers = t
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| customer(i as u64, t))
                        .collect();
                    let funds = r
                        .iter()
                        .zip(&d)
                        .enumerate()
                        .map(|(i, (&r, &d))| fund(i as u64, r, d))
                        .collect();
                    let m = RevenueMatrix::new(nu, nf, vals, vec![true; nu * nf]).unwrap();
                    let inst = AllocationInstance::with_risk_levels(customers, funds, m, 1, levels).unwrap();
                    (inst, pairs)
                })
        })
    }

    proptest! {
        #[test]
        fn objective_is_linear_in_matrix((inst, pairs) in arb_instance(), c in 0.01f64..100.0) {
            let mut x = Assignment::from_pairs(inst.n_customers(), inst.n_funds(), &pairs).unwrap();
            for (u, f) in x.clone().pairs() {
                if !inst.revenue.is_eligible(u, f) { x.set(u, f, false); }
            }
            let base = objective_value(&x, &inst.revenue).unwrap();
            let scaled = objective_value(&x, &inst.revenue.scaled(c)).unwrap();
            prop_assert!((scaled - c * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }

        #[test]
        fn risk_mask_is_idempotent((inst, _) in arb_instance()) {
            let once = apply_risk_mask(&inst.revenue, &inst.customers, &inst.funds).unwrap();
            let twice = apply_risk_mask(&once, &inst.customers, &inst.funds).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn supply_mismatch_iff_counts_differ((inst, _) in arb_instance()) {
            let report = validate_instance(&inst);
            let differs = inst.demands().iter().sum::<usize>() != inst.k * inst.n_customers();
            prop_assert_eq!(report.has(ViolationCode::SupplyMismatch), differs);
            prop_assert_eq!(report.feasible_necessary, report.violations.is_empty());
        }

        #[test]
        fn flipping_any_cell_breaks_feasibility(u in 0usize..3, f in 0usize..2) {
            let inst = worked_example();
            let mut x = Assignment::from_pairs(3, 2, &[(1, 0), (2, 0), (0, 1)]).unwrap();
            prop_assert!(is_feasible(&x, &inst));
            let cell = x.get(u, f);
            x.set(u, f, !cell);
            prop_assert!(!is_feasible(&x, &inst));
        }
    }
}
