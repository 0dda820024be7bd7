use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arch::{BlockKind, StemSpec};

use super::evaluate::{better, evaluate, Evaluation};
use super::problem::{Candidate, ProblemSpec};
use super::{InfeasibilityReport, SolveError};

pub const DEFAULT_MAX_ENUMERATION: u64 = 1_000_000;

/// Exhaustive search of the lattice. Returns the feasible maximum under the
/// same preference order the solver uses.
pub fn brute_force(prob: &ProblemSpec, max_enumeration: u64) -> Result<Evaluation, SolveError> {
    prob.validate()?;
    let size = prob.lattice_size();
    if size > max_enumeration as u128 {
        return Err(SolveError::LatticeTooLarge {
            size,
            cap: max_enumeration,
        });
    }
    let m = prob.num_stages;
    let choices: Vec<Vec<(u32, u32)>> = (0..m)
        .map(|i| {
            let ds = prob.depth_options(i);
            prob.width_options(i)
                .into_iter()
                .flat_map(|w| ds.iter().map(move |&d| (w, d)))
                .collect()
        })
        .collect();
    let decode = |mut idx: usize| {
        let mut c = Candidate::new(vec![0; m], vec![0; m]);
        for (i, ch) in choices.iter().enumerate() {
            let (w, d) = ch[idx % ch.len()];
            idx /= ch.len();
            c.widths[i] = w;
            c.depths[i] = d;
        }
        c
    };
    let best = (0..size as usize)
        .into_par_iter()
        .map(|idx| evaluate(&decode(idx), prob))
        .try_reduce_with(|a, b| Ok(better(a, b)))
        .expect("lattice is nonempty")?;
    if !best.feasible() {
        return Err(SolveError::Infeasible(InfeasibilityReport::from_evaluation(&best)));
    }
    Ok(best)
}

/// Random small problem for oracle checks: one to three stages, a few widths
/// and depths per stage, and budgets drawn between the cheapest and the most
/// expensive lattice corner so that constraints often bind.
pub fn random_tiny_problem(seed: u64, max_lattice: u128) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let m = rng.random_range(1..=3usize);
        let block = match rng.random_range(0..5) {
            0 => BlockKind::PlainConvBnRelu,
            1 => BlockKind::ResNetBasic,
            2 => BlockKind::bottleneck(),
            3 => BlockKind::mbconv([1, 3, 6][rng.random_range(0..3)], None),
            _ => BlockKind::mbconv(4, Some(4)),
        };
        let stem = StemSpec {
            channels: 8 * rng.random_range(1..=3),
            kernel: 3,
            stride: 1,
            pool: false,
        };
        let mut width_bounds = Vec::new();
        let mut depth_bounds = Vec::new();
        let mut downsample = Vec::new();
        for i in 0..m {
            let lo = 8 * rng.random_range(1..=4);
            let n = rng.random_range(1..=5);
            width_bounds.push([lo, lo + 8 * (n - 1)]);
            let dlo = rng.random_range(1..=2);
            depth_bounds.push([dlo, dlo + rng.random_range(0..=3)]);
            downsample.push(i > 0 && rng.random_bool(0.7));
        }
        let mut p = ProblemSpec::new(
            "tiny",
            block,
            stem,
            downsample,
            width_bounds,
            depth_bounds,
            32,
            10,
        );
        if matches!(block, BlockKind::MobileNetV2Se { .. }) && rng.random_bool(0.5) {
            p.head_channels = Some(64);
        }
        p.beta = [0.0, 1.0, 10.0, 10.0][rng.random_range(0..4)];
        if p.lattice_size() > max_lattice || p.validate().is_err() {
            continue;
        }
        let lo = Candidate::new(
            (0..m).map(|i| p.width_bounds[i][0]).collect(),
            (0..m).map(|i| p.depth_bounds[i][0]).collect(),
        );
        let hi = Candidate::new(
            (0..m).map(|i| p.width_bounds[i][1]).collect(),
            (0..m).map(|i| p.depth_bounds[i][1]).collect(),
        );
        let (Ok(a), Ok(b)) = (evaluate(&lo, &p), evaluate(&hi, &p)) else {
            continue;
        };
        let between = |x: u64, y: u64, u: f64| (x as f64 + u * (y as f64 - x as f64)).max(1.0) as u64;
        p.max_params = between(a.params, b.params, rng.random_range(0.2..1.1));
        p.max_flops = between(a.flops, b.flops, rng.random_range(0.2..1.1));
        p.rho0 = a.rho.max(b.rho) * rng.random_range(0.7..1.5);
        return p;
    }
}
