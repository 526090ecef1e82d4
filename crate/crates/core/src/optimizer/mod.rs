//! Allocation solvers and the bookkeeping shared between them.

mod completion;
mod exhaustive;
mod flow;
mod ha;
mod manual;
mod scores;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{AllocationInstance, AllocationResult};
use crate::error::{Error, Result};

pub use completion::COMPLETION_MAX_FUNDS;
pub use exhaustive::{allocate_exact_bruteforce, BRUTE_FORCE_MAX_CUSTOMERS, BRUTE_FORCE_MAX_FUNDS};
pub use flow::allocate_exact_flow;
pub use ha::{allocate_ha, allocate_ha_with, HaOptions, Recompute};
pub use manual::{allocate_manual, default_priority};
pub use scores::{
    consumption_rates, heuristic_scores, heuristic_scores_top3, ConsumptionRates, HeuristicScores,
    ScoreVariant,
};

pub const STATS_SCHEMA: u32 = 1;

/// One solver run. `wall_ms` is the only field that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub schema: u32,
    pub solver: String,
    pub objective: f64,
    pub wall_ms: f64,
    pub rounds: usize,
    pub gap: Option<f64>,
}

impl SolverStats {
    pub fn new(solver: &str, start: Instant, rounds: usize, objective: f64) -> Self {
        Self {
            schema: STATS_SCHEMA,
            solver: solver.to_string(),
            objective,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            rounds,
            gap: None,
        }
    }

    /// Relative shortfall against an exact objective, clamped to [0, 1].
    pub fn with_gap(mut self, oracle_objective: f64) -> Self {
        self.gap = optimality_gap(self.objective, oracle_objective);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

/// `1 - objective / oracle`, or `None` when the oracle objective is not positive.
pub fn optimality_gap(objective: f64, oracle_objective: f64) -> Option<f64> {
    (oracle_objective > 0.0).then(|| (1.0 - objective / oracle_objective).clamp(0.0, 1.0))
}

pub(crate) fn ensure_supply_matches(instance: &AllocationInstance) -> Result<()> {
    let supply: usize = instance.demands().iter().sum();
    let needed = instance.k * instance.n_customers();
    if supply != needed {
        return Err(Error::InvalidInstance(format!(
            "total demand {supply} differs from K * customers = {needed}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    HaEq8,
    HaTop3,
    Manual,
    ExactBruteForce,
    ExactFlow,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::HaEq8,
        SolverKind::HaTop3,
        SolverKind::Manual,
        SolverKind::ExactBruteForce,
        SolverKind::ExactFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::HaEq8 => "ha-eq8",
            SolverKind::HaTop3 => "ha-top3",
            SolverKind::Manual => "manual",
            SolverKind::ExactBruteForce => "exact-bf",
            SolverKind::ExactFlow => "exact-flow",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, SolverKind::ExactBruteForce | SolverKind::ExactFlow)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown solver '{s}'")))
    }
}

/// Knobs that only some solvers read.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub recompute: Recompute,
    pub risk_reserve: bool,
    pub priority: Option<Vec<usize>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            recompute: Recompute::Strict,
            risk_reserve: true,
            priority: None,
        }
    }
}

pub fn solve(
    instance: &AllocationInstance,
    kind: SolverKind,
    options: &SolveOptions,
) -> Result<(AllocationResult, SolverStats)> {
    let ha = |variant| {
        allocate_ha_with(
            instance,
            HaOptions {
                variant,
                recompute: options.recompute,
                risk_reserve: options.risk_reserve,
            },
        )
    };
    match kind {
        SolverKind::HaEq8 => ha(ScoreVariant::AdjacentGaps),
        SolverKind::HaTop3 => ha(ScoreVariant::TopThree),
        SolverKind::Manual => allocate_manual(instance, options.priority.as_deref()),
        SolverKind::ExactBruteForce => {
            let start = Instant::now();
            let r = allocate_exact_bruteforce(instance)?;
            let stats = SolverStats::new(kind.name(), start, 1, r.objective);
            Ok((r, stats))
        }
        SolverKind::ExactFlow => {
            let start = Instant::now();
            let (r, paths) = flow::solve(instance)?;
            let stats = SolverStats::new(kind.name(), start, paths, r.objective);
            Ok((r, stats))
        }
    }
}
