//! Architecture design as a mathematical program.
//!
//! Decision variables are per-stage widths (multiples of a granularity) and
//! depths. The objective is `Σ α_i H_i − β·Q`; constraints are the
//! effectiveness bound `ρ ≤ ρ0`, the Params and FLOPs budgets and
//! non-decreasing stage widths.
//!
//! [`solve`] runs independent restarts in parallel. Each restart
//!
//! 1. maximizes an exterior quadratic penalty of the continuous relaxation by
//!    projected coordinate ascent (the penalty weight starts at 10× the
//!    objective scale and doubles per round until every constraint holds to
//!    0.5%),
//! 2. rounds onto the lattice (granular widths projected onto the
//!    non-decreasing cone, integer depths) and repairs greedily,
//! 3. polishes with a discrete variable-neighborhood descent.
//!
//! Restart `k` starts from the box center when `k = 0` and from a uniform
//! point drawn from stream `k` of a ChaCha8 generator seeded with the run
//! seed otherwise. The global best is reduced in restart order under the
//! total preference order of [`preference`], so thread count never changes
//! the result.

mod brute;
mod evaluate;
mod problem;
mod relaxed;
mod repair;
mod search;

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::metrics::MetricError;

pub use brute::{brute_force, random_tiny_problem, DEFAULT_MAX_ENUMERATION};
pub use evaluate::{
    better, evaluate, feasible, objective, preference, realize, Constraint, ConstraintViolation,
    Evaluation, Slacks,
};
pub use problem::{
    Candidate, ProblemError, ProblemSpec, DEFAULT_BETA, DEFAULT_GRANULARITY, PROBLEM_FORMAT_VERSION,
};
pub use repair::{isotonic_nondecreasing, round_and_repair, round_to_lattice, RepairExhausted};
pub use search::{BLOCK_NEIGHBORHOOD_CAP, CONTINUOUS_TOLERANCE};

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("candidate out of bounds: {0}")]
    OutOfBounds(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("lattice has {size} points, above the enumeration cap of {cap}")]
    LatticeTooLarge { size: u128, cap: u64 },
    #[error("max_evals must be at least 1")]
    NoBudget,
    #[error("{0}")]
    Infeasible(InfeasibilityReport),
}

/// Why no feasible candidate was found: the least-violating point seen and
/// its violations, tightest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub binding: Constraint,
    pub candidate: Candidate,
    pub violations: Vec<ConstraintViolation>,
}

impl InfeasibilityReport {
    pub(crate) fn from_evaluation(e: &Evaluation) -> Self {
        let mut violations = e.violations.clone();
        violations.sort_by(|a, b| b.excess.total_cmp(&a.excess).then(a.constraint.cmp(&b.constraint)));
        InfeasibilityReport {
            binding: violations[0].constraint,
            candidate: e.candidate.clone(),
            violations,
        }
    }
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "infeasible: tightest constraint is {} at widths {:?}, depths {:?}",
            self.binding, self.candidate.widths, self.candidate.depths
        )?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub seed: u64,
    pub restarts: u64,
    /// Total evaluation budget, split evenly across restarts (the first ones
    /// take the remainder). Relaxed and lattice evaluations both count.
    pub max_evals: u64,
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            seed: 0,
            restarts: 8,
            max_evals: 2_000_000,
            trace: false,
        }
    }
}

/// Best point of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: u64,
    pub candidate: Candidate,
    pub objective: f64,
    pub feasible: bool,
    pub evaluations: u64,
}

fn as_seconds<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub best: Candidate,
    pub objective: f64,
    pub feasible: bool,
    /// `budget − usage` for ρ, FLOPs and Params.
    pub slacks: Slacks,
    /// Slacks as fractions of their budgets.
    pub relative_slacks: Slacks,
    pub violations: Vec<ConstraintViolation>,
    pub restarts_used: u64,
    pub evaluations: u64,
    pub budget_exhausted: bool,
    #[serde(serialize_with = "as_seconds")]
    pub wall_time: Duration,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<RestartTrace>>,
    #[serde(skip)]
    pub evaluation: Evaluation,
}

fn split_budget(total: u64, parts: u64, k: u64) -> u64 {
    total / parts + u64::from(k < total % parts)
}

pub fn solve(prob: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    prob.validate()?;
    if opts.max_evals == 0 {
        return Err(SolveError::NoBudget);
    }
    let restarts = opts.restarts.max(1);
    let outcomes = (0..restarts)
        .into_par_iter()
        .filter_map(|k| {
            let share = split_budget(opts.max_evals, restarts, k);
            (share > 0).then(|| search::run_restart(prob, opts.seed, k, share))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut best: Option<Evaluation> = None;
    for o in &outcomes {
        if let Some(e) = &o.best {
            best = Some(match best {
                None => e.clone(),
                Some(b) => better(b, e.clone()),
            });
        }
    }
    let best = best.expect("every restart with a budget evaluates its start point");
    let exhausted = outcomes.iter().any(|o| o.exhausted);
    if !best.feasible() && !exhausted {
        return Err(SolveError::Infeasible(InfeasibilityReport::from_evaluation(&best)));
    }
    let trace = opts.trace.then(|| {
        outcomes
            .iter()
            .filter_map(|o| {
                o.best.as_ref().map(|e| RestartTrace {
                    restart: o.restart,
                    candidate: e.candidate.clone(),
                    objective: e.objective,
                    feasible: e.feasible(),
                    evaluations: o.evaluations,
                })
            })
            .collect()
    });
    Ok(SolveReport {
        best: best.candidate.clone(),
        objective: best.objective,
        feasible: best.feasible(),
        slacks: best.slacks(prob),
        relative_slacks: best.relative_slacks(prob),
        violations: best.violations.clone(),
        restarts_used: outcomes.len() as u64,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
        budget_exhausted: exhausted,
        wall_time: started.elapsed(),
        trace,
        evaluation: best,
    })
}
