//! Rounding of continuous points onto the lattice and greedy feasibility repair.

use serde::{Deserialize, Serialize};

use crate::metrics::stage_costs;

use super::evaluate::{Constraint, ConstraintViolation, Evaluation};
use super::problem::{Candidate, ProblemSpec};
use super::search::Budget;
use super::SolveError;

/// Least-squares projection onto the non-decreasing cone (pool adjacent
/// violators, unit weights).
pub fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, n2) = blocks[blocks.len() - 1];
            let (s1, n1) = blocks[blocks.len() - 2];
            if s1 / n1 as f64 > s2 / n2 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s1 + s2, n1 + n2);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n))
        .collect()
}

fn snap_width(prob: &ProblemSpec, i: usize, w: f64) -> u32 {
    let g = prob.width_granularity as f64;
    let opts = prob.width_options(i);
    let k = ((w / g).round() * g).max(0.0) as u32;
    k.clamp(opts[0], *opts.last().unwrap())
}

/// Rounds widths to the granularity, projects them onto the non-decreasing
/// cone, rounds again and clamps everything into the bounds.
pub fn round_to_lattice(prob: &ProblemSpec, widths: &[f64], depths: &[f64]) -> Candidate {
    let g = prob.width_granularity as f64;
    let rounded: Vec<f64> = widths.iter().map(|w| (w / g).round() * g).collect();
    let projected = isotonic_nondecreasing(&rounded);
    let widths = projected
        .iter()
        .enumerate()
        .map(|(i, &w)| snap_width(prob, i, w))
        .collect();
    let depths = depths
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let [lo, hi] = prob.depth_bounds[i];
            (d.round().max(0.0) as u32).clamp(lo, hi)
        })
        .collect();
    Candidate::new(widths, depths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("repair reached the bounds with {} violation(s) left", .violations.len())]
pub struct RepairExhausted {
    pub candidate: Candidate,
    pub violations: Vec<ConstraintViolation>,
}

pub(crate) enum Repair {
    Feasible(Evaluation),
    /// No repair move applies; the last point is still infeasible.
    Stuck(Evaluation),
    /// The evaluation budget ran out; carries the last evaluated point.
    OutOfEvals(Option<Evaluation>),
}

/// Next point of the greedy repair, or `None` when no move applies.
///
/// Budget violations shrink the width of the stage that spends most of the
/// violated resource, keeping widths non-decreasing; when no width can
/// shrink, depths are reduced in the same stage order. An effectiveness
/// violation alone reduces the deepest stage.
fn repair_step(prob: &ProblemSpec, e: &Evaluation) -> Result<Option<Candidate>, SolveError> {
    let excess = |c: Constraint| {
        e.violations
            .iter()
            .find(|v| v.constraint == c)
            .map(|v| v.excess)
    };
    let cand = &e.candidate;
    let m = prob.num_stages;
    let cost = match (excess(Constraint::Flops), excess(Constraint::Params)) {
        (None, None) => None,
        (Some(f), Some(p)) => Some(if f >= p { Constraint::Flops } else { Constraint::Params }),
        (Some(_), None) => Some(Constraint::Flops),
        (None, Some(_)) => Some(Constraint::Params),
    };
    if let Some(resource) = cost {
        let layers = prob
            .network(cand)
            .expand()
            .map_err(crate::metrics::MetricError::from)?;
        let costs = stage_costs(&layers, m, &prob.conventions);
        let mut order: Vec<usize> = (0..m).collect();
        let key = |i: usize| match resource {
            Constraint::Flops => costs[i].1,
            _ => costs[i].0,
        };
        // Most expensive first; later stages first on ties.
        order.sort_by(|&a, &b| key(b).cmp(&key(a)).then(b.cmp(&a)));
        let g = prob.width_granularity;
        for &i in &order {
            let w = cand.widths[i];
            let min = prob.width_options(i)[0];
            if w >= min + g && (i == 0 || cand.widths[i - 1] <= w - g) {
                let mut next = cand.clone();
                next.widths[i] = w - g;
                return Ok(Some(next));
            }
        }
        for &i in &order {
            if cand.depths[i] > prob.depth_bounds[i][0] {
                let mut next = cand.clone();
                next.depths[i] -= 1;
                return Ok(Some(next));
            }
        }
        return Ok(None);
    }
    if excess(Constraint::Rho).is_some() {
        let deepest = (0..m)
            .filter(|&i| cand.depths[i] > prob.depth_bounds[i][0])
            .max_by_key(|&i| (cand.depths[i], i));
        return Ok(deepest.map(|i| {
            let mut next = cand.clone();
            next.depths[i] -= 1;
            next
        }));
    }
    Ok(None)
}

pub(crate) fn repair_from(
    prob: &ProblemSpec,
    start: Candidate,
    budget: &mut Budget,
) -> Result<Repair, SolveError> {
    let mut cand = start;
    let mut last = None;
    loop {
        let Some(e) = budget.evaluate(prob, &cand)? else {
            return Ok(Repair::OutOfEvals(last));
        };
        if e.feasible() {
            return Ok(Repair::Feasible(e));
        }
        match repair_step(prob, &e)? {
            Some(next) => {
                cand = next;
                last = Some(e);
            }
            None => return Ok(Repair::Stuck(e)),
        }
    }
}

/// Rounds a continuous point onto the lattice and repairs it until feasible.
pub fn round_and_repair(
    prob: &ProblemSpec,
    widths: &[f64],
    depths: &[f64],
) -> Result<Result<Candidate, RepairExhausted>, SolveError> {
    let start = round_to_lattice(prob, widths, depths);
    let mut budget = Budget::unlimited();
    Ok(match repair_from(prob, start, &mut budget)? {
        Repair::Feasible(e) => Ok(e.candidate),
        Repair::Stuck(e) => Err(RepairExhausted {
            candidate: e.candidate,
            violations: e.violations,
        }),
        Repair::OutOfEvals(_) => unreachable!("unlimited budget"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{BlockKind, StemSpec};
    use crate::solver::evaluate::evaluate;

    fn problem(max_params: u64) -> ProblemSpec {
        let stem = StemSpec {
            channels: 16,
            kernel: 3,
            stride: 1,
            pool: false,
        };
        let mut p = ProblemSpec::new(
            "repair",
            BlockKind::PlainConvBnRelu,
            stem,
            vec![false, true],
            vec![[8, 256], [8, 256]],
            vec![[1, 4], [1, 4]],
            32,
            10,
        );
        p.max_params = max_params;
        p
    }

    #[test]
    fn pava_projection() {
        assert_eq!(isotonic_nondecreasing(&[130.0, 120.0]), vec![125.0, 125.0]);
        assert_eq!(isotonic_nondecreasing(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_nondecreasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_nondecreasing(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert!(isotonic_nondecreasing(&[]).is_empty());
    }

    #[test]
    fn rounding_examples() {
        let p = problem(u64::MAX);
        let c = round_to_lattice(&p, &[63.7, 120.2], &[1.4, 2.6]);
        assert_eq!(c, Candidate::new(vec![64, 120], vec![1, 3]));
        let c = round_to_lattice(&p, &[130.0, 120.0], &[2.0, 2.0]);
        assert_eq!(c, Candidate::new(vec![128, 128], vec![2, 2]));
        // Out-of-box values clamp.
        let c = round_to_lattice(&p, &[1.0, 999.0], &[0.2, 9.0]);
        assert_eq!(c, Candidate::new(vec![8, 256], vec![1, 4]));
    }

    #[test]
    fn lattice_points_are_unchanged() {
        let p = problem(u64::MAX);
        let c = round_and_repair(&p, &[64.0, 120.0], &[2.0, 3.0]).unwrap().unwrap();
        assert_eq!(c, Candidate::new(vec![64, 120], vec![2, 3]));
    }

    #[test]
    fn repair_hand_trace() {
        // (130, 120) rounds to (128, 128). Params of the plain net:
        // stem 16·3·9 + 32, stage convs 9·c_in·c_out + 2·c_out, classifier.
        let params = |w: [u64; 2], d: [u64; 2]| {
            let stem = 16 * 27 + 32;
            let s0 = 9 * 16 * w[0] + 2 * w[0] + (d[0] - 1) * (9 * w[0] * w[0] + 2 * w[0]);
            let s1 = 9 * w[0] * w[1] + 2 * w[1] + (d[1] - 1) * (9 * w[1] * w[1] + 2 * w[1]);
            stem + s0 + s1 + 10 * w[1] + 10
        };
        let start = params([128, 128], [2, 2]);
        // A budget just below the start: stage 1 is the most expensive, but it
        // cannot shrink below stage 0, so stage 0 shrinks first, then stage 1.
        let p = problem(start - 1);
        let c = round_and_repair(&p, &[130.0, 120.0], &[2.0, 2.0]).unwrap().unwrap();
        assert_eq!(c, Candidate::new(vec![120, 128], vec![2, 2]));
        assert!(params([120, 128], [2, 2]) <= start - 1);

        // Tighter: widths walk down until the budget holds.
        let budget = params([96, 112], [2, 2]);
        let p = problem(budget);
        let c = round_and_repair(&p, &[130.0, 120.0], &[2.0, 2.0]).unwrap().unwrap();
        let e = evaluate(&c, &p).unwrap();
        assert!(e.feasible());
        assert_eq!(e.params, params([c.widths[0] as u64, c.widths[1] as u64], [2, 2]));
    }

    #[test]
    fn repair_exhausts_bounds() {
        let p = problem(100);
        let err = round_and_repair(&p, &[64.0, 64.0], &[2.0, 2.0]).unwrap().unwrap_err();
        assert_eq!(err.candidate, Candidate::new(vec![8, 8], vec![1, 1]));
        assert_eq!(err.violations[0].constraint, Constraint::Params);
    }
}
