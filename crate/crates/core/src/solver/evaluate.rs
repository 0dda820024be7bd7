use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arch::NetworkSpec;
use crate::metrics::{
    depth_uniformity_penalty, effectiveness_of_layers, flops_of_layers, params_of_layers,
    weighted_entropy_of_layers,
};

use super::problem::{Candidate, ProblemSpec};
use super::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Rho,
    Flops,
    Params,
    Monotone,
}

impl Constraint {
    pub fn as_str(self) -> &'static str {
        match self {
            Constraint::Rho => "rho",
            Constraint::Flops => "flops",
            Constraint::Params => "params",
            Constraint::Monotone => "monotone",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A violated constraint. `excess` is the overshoot relative to the limit
/// (for monotonicity: the largest width drop relative to the later width).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: Constraint,
    pub usage: f64,
    pub limit: f64,
    pub excess: f64,
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} exceeds {} by {:.2}%",
            self.constraint,
            self.usage,
            self.limit,
            100.0 * self.excess
        )
    }
}

/// Signed slacks, `budget − usage`. Nonnegative everywhere iff the budgets hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slacks {
    pub rho: f64,
    pub flops: f64,
    pub params: f64,
}

/// Everything the solver knows about one lattice point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub candidate: Candidate,
    pub objective: f64,
    pub weighted_entropy: f64,
    pub q: f64,
    pub rho: f64,
    pub params: u64,
    pub flops: u64,
    pub violations: Vec<ConstraintViolation>,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total_excess(&self) -> f64 {
        self.violations.iter().map(|v| v.excess).sum()
    }

    pub fn slacks(&self, prob: &ProblemSpec) -> Slacks {
        Slacks {
            rho: prob.rho0 - self.rho,
            flops: prob.max_flops as f64 - self.flops as f64,
            params: prob.max_params as f64 - self.params as f64,
        }
    }

    /// Slacks as fractions of the budgets.
    pub fn relative_slacks(&self, prob: &ProblemSpec) -> Slacks {
        let s = self.slacks(prob);
        Slacks {
            rho: s.rho / prob.rho0,
            flops: s.flops / prob.max_flops as f64,
            params: s.params / prob.max_params as f64,
        }
    }
}

/// Total preference order between evaluations; `Greater` means `a` is better.
///
/// Feasible beats infeasible. Feasible points compare by higher objective,
/// then lower Params, then smaller widths and depths (lexicographic).
/// Infeasible points compare by smaller total excess first.
pub fn preference(a: &Evaluation, b: &Evaluation) -> Ordering {
    match (a.feasible(), b.feasible()) {
        (true, false) => return Ordering::Greater,
        (false, true) => return Ordering::Less,
        (false, false) => {
            let o = b.total_excess().total_cmp(&a.total_excess());
            if o != Ordering::Equal {
                return o;
            }
        }
        (true, true) => {}
    }
    a.objective
        .total_cmp(&b.objective)
        .then(b.params.cmp(&a.params))
        .then_with(|| b.candidate.cmp(&a.candidate))
}

/// The better of two evaluations under [`preference`].
pub fn better(a: Evaluation, b: Evaluation) -> Evaluation {
    if preference(&b, &a) == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Builds the network for a candidate.
pub fn realize(cand: &Candidate, prob: &ProblemSpec) -> Result<NetworkSpec, SolveError> {
    prob.check_bounds(cand).map_err(SolveError::OutOfBounds)?;
    Ok(prob.network(cand))
}

pub fn evaluate(cand: &Candidate, prob: &ProblemSpec) -> Result<Evaluation, SolveError> {
    let net = realize(cand, prob)?;
    let m = prob.num_stages;
    let conv = &prob.conventions;
    let layers = net.expand().map_err(crate::metrics::MetricError::from)?;
    let entropy = weighted_entropy_of_layers(&layers, &prob.alphas, conv)?.total;
    let q = depth_uniformity_penalty(&cand.depths);
    let rho = effectiveness_of_layers(&layers, m, conv)?;
    let params = params_of_layers(&layers, conv);
    let flops = flops_of_layers(&layers, conv);

    let mut violations = Vec::new();
    if rho > prob.rho0 {
        violations.push(ConstraintViolation {
            constraint: Constraint::Rho,
            usage: rho,
            limit: prob.rho0,
            excess: rho / prob.rho0 - 1.0,
        });
    }
    if flops > prob.max_flops {
        violations.push(ConstraintViolation {
            constraint: Constraint::Flops,
            usage: flops as f64,
            limit: prob.max_flops as f64,
            excess: flops as f64 / prob.max_flops as f64 - 1.0,
        });
    }
    if params > prob.max_params {
        violations.push(ConstraintViolation {
            constraint: Constraint::Params,
            usage: params as f64,
            limit: prob.max_params as f64,
            excess: params as f64 / prob.max_params as f64 - 1.0,
        });
    }
    let worst_drop = cand
        .widths
        .windows(2)
        .filter(|w| w[0] > w[1])
        .map(|w| (w[0] - w[1], w[1]))
        .max_by(|a, b| (a.0 as f64 / a.1 as f64).total_cmp(&(b.0 as f64 / b.1 as f64)));
    if let Some((drop, later)) = worst_drop {
        violations.push(ConstraintViolation {
            constraint: Constraint::Monotone,
            usage: drop as f64,
            limit: 0.0,
            excess: drop as f64 / later as f64,
        });
    }
    Ok(Evaluation {
        candidate: cand.clone(),
        objective: entropy - prob.beta * q,
        weighted_entropy: entropy,
        q,
        rho,
        params,
        flops,
        violations,
    })
}

/// `Σ α_i H_i − β·Q` of the realized candidate.
pub fn objective(cand: &Candidate, prob: &ProblemSpec) -> Result<f64, SolveError> {
    Ok(evaluate(cand, prob)?.objective)
}

/// Feasibility verdict with every violated constraint.
pub fn feasible(cand: &Candidate, prob: &ProblemSpec) -> Result<(bool, Vec<ConstraintViolation>), SolveError> {
    let e = evaluate(cand, prob)?;
    Ok((e.feasible(), e.violations))
}
