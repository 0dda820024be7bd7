//! The two search phases and one complete restart.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::evaluate::{better, evaluate, preference, Evaluation};
use super::problem::{Candidate, ProblemSpec};
use super::relaxed::{evaluate_relaxed, RelaxedEval};
use super::repair::{repair_from, round_to_lattice, Repair};
use super::SolveError;

/// Relative constraint tolerance that ends the continuous phase.
pub const CONTINUOUS_TOLERANCE: f64 = 0.005;
/// Initial penalty weight as a multiple of the objective scale.
const PENALTY_START: f64 = 10.0;
const PENALTY_ROUNDS: usize = 16;
/// Largest stage-block neighborhood enumerated by the discrete phase.
pub const BLOCK_NEIGHBORHOOD_CAP: u128 = 4096;

/// Evaluation counter shared by both phases of a restart. Lattice points are
/// memoized, so revisits are free.
pub(crate) struct Budget {
    used: u64,
    limit: u64,
    exhausted: bool,
    cache: HashMap<Candidate, Evaluation>,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget {
            used: 0,
            limit,
            exhausted: false,
            cache: HashMap::new(),
        }
    }

    pub fn unlimited() -> Self {
        Budget::new(u64::MAX)
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    fn spend(&mut self) -> bool {
        if self.used >= self.limit {
            self.exhausted = true;
            false
        } else {
            self.used += 1;
            true
        }
    }

    pub fn evaluate(&mut self, prob: &ProblemSpec, cand: &Candidate) -> Result<Option<Evaluation>, SolveError> {
        if let Some(e) = self.cache.get(cand) {
            return Ok(Some(e.clone()));
        }
        if !self.spend() {
            return Ok(None);
        }
        let e = evaluate(cand, prob)?;
        self.cache.insert(cand.clone(), e.clone());
        Ok(Some(e))
    }

    fn relaxed(&mut self, prob: &ProblemSpec, x: &[f64]) -> Option<RelaxedEval> {
        if !self.spend() {
            return None;
        }
        let m = prob.num_stages;
        Some(evaluate_relaxed(prob, &x[..m], &x[m..]))
    }
}

/// Box of the continuous phase: widths then depths.
fn bounds(prob: &ProblemSpec) -> (Vec<f64>, Vec<f64>) {
    let m = prob.num_stages;
    let mut lo = Vec::with_capacity(2 * m);
    let mut hi = Vec::with_capacity(2 * m);
    for i in 0..m {
        let opts = prob.width_options(i);
        lo.push(opts[0] as f64);
        hi.push(*opts.last().unwrap() as f64);
    }
    for b in &prob.depth_bounds {
        lo.push(b[0] as f64);
        hi.push(b[1] as f64);
    }
    (lo, hi)
}

/// Start point of a restart: the box center for restart 0, uniform random
/// otherwise.
pub(crate) fn start_point(prob: &ProblemSpec, seed: u64, restart: u64) -> Vec<f64> {
    let (lo, hi) = bounds(prob);
    if restart == 0 {
        return lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    lo.iter()
        .zip(&hi)
        .map(|(&a, &b)| if a < b { rng.random_range(a..=b) } else { a })
        .collect()
}

/// Projected coordinate ascent on the penalized objective with per-coordinate
/// step sizes that grow on success and halve on failure.
fn ascend(prob: &ProblemSpec, x: &mut [f64], mu: f64, budget: &mut Budget) -> Option<()> {
    let m = prob.num_stages;
    let (lo, hi) = bounds(prob);
    let min_step: Vec<f64> = (0..2 * m)
        .map(|k| if k < m { prob.width_granularity as f64 / 4.0 } else { 0.125 })
        .collect();
    let mut step: Vec<f64> = (0..2 * m).map(|k| 0.25 * (hi[k] - lo[k])).collect();
    let mut current = budget.relaxed(prob, x)?.penalized(prob, mu);
    loop {
        let mut active = false;
        for k in 0..2 * m {
            if step[k] < min_step[k] {
                continue;
            }
            active = true;
            let orig = x[k];
            let mut moved = false;
            for dir in [1.0, -1.0] {
                let v = (orig + dir * step[k]).clamp(lo[k], hi[k]);
                if v == orig {
                    continue;
                }
                x[k] = v;
                let value = budget.relaxed(prob, x);
                let Some(value) = value else {
                    x[k] = orig;
                    return None;
                };
                let value = value.penalized(prob, mu);
                if value > current {
                    current = value;
                    moved = true;
                    break;
                }
                x[k] = orig;
            }
            step[k] = if moved {
                (step[k] * 1.5).min(hi[k] - lo[k])
            } else {
                step[k] * 0.5
            };
        }
        if !active {
            return Some(());
        }
    }
}

/// Continuous phase: exterior-penalty rounds with a doubling weight until the
/// constraints hold to [`CONTINUOUS_TOLERANCE`].
pub(crate) fn continuous_phase(prob: &ProblemSpec, start: &[f64], budget: &mut Budget) -> Vec<f64> {
    let mut x = start.to_vec();
    let Some(first) = budget.relaxed(prob, &x) else {
        return x;
    };
    let mut mu = PENALTY_START * first.objective.abs().max(1.0);
    for _ in 0..PENALTY_ROUNDS {
        if ascend(prob, &mut x, mu, budget).is_none() {
            break;
        }
        match budget.relaxed(prob, &x) {
            Some(e) if e.max_excess(prob) <= CONTINUOUS_TOLERANCE => break,
            Some(_) => mu *= 2.0,
            None => break,
        }
    }
    x
}

fn push_if_valid(prob: &ProblemSpec, out: &mut Vec<Candidate>, c: Candidate) {
    if prob.check_bounds(&c).is_ok() {
        out.push(c);
    }
}

/// Single-step moves: ±1 depth, ±granularity width, width transfers between
/// adjacent stages, depth transfers between any two stages, depth/width
/// trades, and shifting a run of consecutive stage widths together.
pub(crate) fn basic_moves(prob: &ProblemSpec, c: &Candidate) -> Vec<Candidate> {
    let m = prob.num_stages;
    let g = prob.width_granularity as i64;
    let mut out = Vec::new();
    let shifted = |dw: &[(usize, i64)], dd: &[(usize, i64)]| -> Option<Candidate> {
        let mut n = c.clone();
        for &(i, d) in dw {
            n.widths[i] = u32::try_from(n.widths[i] as i64 + d).ok()?;
        }
        for &(i, d) in dd {
            n.depths[i] = u32::try_from(n.depths[i] as i64 + d).ok()?;
        }
        Some(n)
    };
    let mut add = |n: Option<Candidate>| {
        if let Some(n) = n {
            push_if_valid(prob, &mut out, n);
        }
    };
    for i in 0..m {
        for s in [1, -1] {
            add(shifted(&[], &[(i, s)]));
            add(shifted(&[(i, s * g)], &[]));
        }
    }
    for i in 0..m.saturating_sub(1) {
        for s in [1, -1] {
            add(shifted(&[(i, s * g), (i + 1, -s * g)], &[]));
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i != j {
                add(shifted(&[], &[(i, 1), (j, -1)]));
            }
            for s in [1, -1] {
                add(shifted(&[(j, -s * g)], &[(i, s)]));
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            for s in [1, -1] {
                let run: Vec<(usize, i64)> = (i..=j).map(|k| (k, s * g)).collect();
                add(shifted(&run, &[]));
            }
        }
    }
    out
}

/// Every (width, depth) assignment of the given stages with the rest fixed,
/// or nothing when that block exceeds [`BLOCK_NEIGHBORHOOD_CAP`].
pub(crate) fn block_moves(prob: &ProblemSpec, c: &Candidate, stages: &[usize]) -> Vec<Candidate> {
    let choices: Vec<Vec<(u32, u32)>> = stages
        .iter()
        .map(|&i| {
            let ds = prob.depth_options(i);
            prob.width_options(i)
                .into_iter()
                .flat_map(|w| ds.iter().map(move |&d| (w, d)))
                .collect()
        })
        .collect();
    let size = choices.iter().fold(1u128, |a, ch| a.saturating_mul(ch.len() as u128));
    if size > BLOCK_NEIGHBORHOOD_CAP {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(size as usize);
    for mut idx in 0..size as usize {
        let mut n = c.clone();
        for (k, &i) in stages.iter().enumerate() {
            let (w, d) = choices[k][idx % choices[k].len()];
            idx /= choices[k].len();
            n.widths[i] = w;
            n.depths[i] = d;
        }
        if n != *c {
            out.push(n);
        }
    }
    out
}

fn best_of(
    prob: &ProblemSpec,
    cands: Vec<Candidate>,
    budget: &mut Budget,
) -> Result<Option<Evaluation>, SolveError> {
    let mut best: Option<Evaluation> = None;
    for c in cands {
        let Some(e) = budget.evaluate(prob, &c)? else {
            break;
        };
        best = Some(match best {
            None => e,
            Some(b) => better(b, e),
        });
    }
    Ok(best)
}

/// Discrete phase: variable-neighborhood descent. Basic moves first; when
/// none improves, single-stage blocks, then pairs of stages, each enumerated
/// exhaustively when small enough.
pub(crate) fn local_search(
    prob: &ProblemSpec,
    start: Evaluation,
    budget: &mut Budget,
) -> Result<Evaluation, SolveError> {
    let m = prob.num_stages;
    let singles: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    let pairs: Vec<Vec<usize>> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| vec![i, j]))
        .collect();
    let hoods: [&dyn Fn(&Candidate) -> Vec<Candidate>; 3] = [
        &|c| basic_moves(prob, c),
        &|c| singles.iter().flat_map(|s| block_moves(prob, c, s)).collect(),
        &|c| pairs.iter().flat_map(|s| block_moves(prob, c, s)).collect(),
    ];
    let mut current = start;
    'descent: loop {
        for hood in hoods {
            let cands = hood(&current.candidate);
            let best = best_of(prob, cands, budget)?;
            if budget.exhausted() {
                if let Some(b) = best {
                    current = better(current, b);
                }
                break 'descent;
            }
            if let Some(b) = best {
                if preference(&b, &current) == Ordering::Greater {
                    current = b;
                    continue 'descent;
                }
            }
        }
        break;
    }
    Ok(current)
}

/// Result of one restart.
#[derive(Debug, Clone)]
pub(crate) struct RestartOutcome {
    pub restart: u64,
    pub best: Option<Evaluation>,
    pub evaluations: u64,
    pub exhausted: bool,
}

pub(crate) fn run_restart(
    prob: &ProblemSpec,
    seed: u64,
    restart: u64,
    max_evals: u64,
) -> Result<RestartOutcome, SolveError> {
    let mut budget = Budget::new(max_evals);
    let start = start_point(prob, seed, restart);
    let m = prob.num_stages;
    let mut best = budget.evaluate(prob, &round_to_lattice(prob, &start[..m], &start[m..]))?;

    let x = continuous_phase(prob, &start, &mut budget);
    let repaired = repair_from(prob, round_to_lattice(prob, &x[..m], &x[m..]), &mut budget)?;
    let seed_point = match repaired {
        Repair::Feasible(e) | Repair::Stuck(e) => Some(e),
        Repair::OutOfEvals(e) => e,
    };
    if let Some(e) = seed_point {
        let e = if budget.exhausted() { e } else { local_search(prob, e, &mut budget)? };
        best = Some(match best {
            None => e,
            Some(b) => better(b, e),
        });
    }
    Ok(RestartOutcome {
        restart,
        best,
        evaluations: budget.used(),
        exhausted: budget.exhausted(),
    })
}
