//! Monte-Carlo check of the variance law for random linear MLPs.
//!
//! With standard-normal inputs and weights, the output of
//! `x_{L+1} = M_L ⋯ M_1 x_1` has zero mean and per-coordinate variance
//! `Π w_i`. The harness samples fresh weights for every draw by default
//! (annealed average over weights and inputs).
//!
//! Sampling is split into fixed-size chunks, each seeded from
//! `(seed, chunk index)`, and chunk sums are combined in index order, so
//! parallel and sequential runs give bit-identical statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest width product the empirical estimator is run on.
pub const MAX_SIMULATED_PRODUCT: f64 = 1e12;
/// Deepest stack for which the harness asserts pass/fail.
pub const MAX_ASSERTED_DEPTH: usize = 4;
/// Fewest samples for which the harness asserts pass/fail.
pub const MIN_ASSERTED_SAMPLES: u64 = 1000;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Fresh weights for every sample.
    #[default]
    Annealed,
    /// One weight draw shared by all samples (report only).
    Quenched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Layer input widths `w_1..w_L`.
    pub widths: Vec<u32>,
    pub n_samples: u64,
    pub seed: u64,
    /// Acceptance band in standard errors.
    pub tolerance: f64,
    #[serde(default)]
    pub mode: WeightMode,
}

impl SimulationConfig {
    pub fn new(widths: Vec<u32>, n_samples: u64, seed: u64) -> Self {
        SimulationConfig {
            widths,
            n_samples,
            seed,
            tolerance: 5.0,
            mode: WeightMode::Annealed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VarianceError {
    #[error("width list is empty")]
    Empty,
    #[error("width {0} at position {1} must be at least 1")]
    ZeroWidth(u32, usize),
    #[error("need at least one sample")]
    NoSamples,
    #[error(
        "width product e^{log_variance:.1} exceeds 1e12; \
         the empirical estimator is unreliable here, use the log-space theoretical value only"
    )]
    Infeasible { log_variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theoretical {
    /// `Π w_i`; infinite when it overflows.
    pub variance: f64,
    pub log_variance: f64,
}

/// `Π w_i`, accumulated in log space.
pub fn theoretical_variance(widths: &[u32]) -> Result<Theoretical, VarianceError> {
    if widths.is_empty() {
        return Err(VarianceError::Empty);
    }
    let mut log_variance = 0.0;
    for (i, &w) in widths.iter().enumerate() {
        if w == 0 {
            return Err(VarianceError::ZeroWidth(w, i));
        }
        log_variance += (w as f64).ln();
    }
    // Exact product while it fits; avoids exp(ln) round-off for small stacks.
    let exact = widths
        .iter()
        .try_fold(1u64, |acc, &w| acc.checked_mul(w as u64));
    let variance = match exact {
        Some(p) if p < (1u64 << 53) => p as f64,
        _ => log_variance.exp(),
    };
    Ok(Theoretical {
        variance,
        log_variance,
    })
}

/// Empirical moments of the first output coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: u64,
    pub mean: f64,
    /// Population variance of the samples.
    pub variance: f64,
    /// Fourth central moment.
    pub fourth_moment: f64,
}

impl SampleStats {
    /// Standard error of the variance estimate.
    pub fn variance_std_error(&self) -> f64 {
        ((self.fourth_moment - self.variance.powi(2)).max(0.0) / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PowerSums {
    n: u64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl PowerSums {
    fn push(&mut self, x: f64) {
        let x2 = x * x;
        self.n += 1;
        self.s1 += x;
        self.s2 += x2;
        self.s3 += x2 * x;
        self.s4 += x2 * x2;
    }

    fn merge(mut self, o: &PowerSums) -> Self {
        self.n += o.n;
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s3 += o.s3;
        self.s4 += o.s4;
        self
    }

    fn stats(&self) -> SampleStats {
        let n = self.n as f64;
        let m = self.s1 / n;
        let (e2, e3, e4) = (self.s2 / n, self.s3 / n, self.s4 / n);
        SampleStats {
            n: self.n,
            mean: m,
            variance: e2 - m * m,
            fourth_moment: e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4),
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Weight matrices `M_1..M_L` (row-major); the last keeps only its first row.
fn draw_weights(widths: &[u32], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..widths.len())
        .map(|i| {
            let rows = if i + 1 < widths.len() { widths[i + 1] } else { 1 };
            normal_vec(rng, rows as usize * widths[i] as usize)
        })
        .collect()
}

fn forward(widths: &[u32], weights: &[Vec<f64>], mut x: Vec<f64>) -> f64 {
    for (i, m) in weights.iter().enumerate() {
        let cols = widths[i] as usize;
        x = m.chunks_exact(cols)
            .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
    }
    x[0]
}

fn check(cfg: &SimulationConfig) -> Result<Theoretical, VarianceError> {
    let t = theoretical_variance(&cfg.widths)?;
    if cfg.n_samples == 0 {
        return Err(VarianceError::NoSamples);
    }
    if t.log_variance > MAX_SIMULATED_PRODUCT.ln() {
        return Err(VarianceError::Infeasible {
            log_variance: t.log_variance,
        });
    }
    Ok(t)
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample(cfg: &SimulationConfig) -> PowerSums {
    let widths = &cfg.widths;
    let shared = match cfg.mode {
        WeightMode::Quenched => Some(draw_weights(widths, &mut chunk_rng(cfg.seed, u64::MAX))),
        WeightMode::Annealed => None,
    };
    let chunks = cfg.n_samples.div_ceil(CHUNK);
    let partial: Vec<PowerSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(cfg.seed, c);
            let count = CHUNK.min(cfg.n_samples - c * CHUNK);
            let mut sums = PowerSums::default();
            for _ in 0..count {
                let x = normal_vec(&mut rng, widths[0] as usize);
                let y = match &shared {
                    Some(w) => forward(widths, w, x),
                    None => forward(widths, &draw_weights(widths, &mut rng), x),
                };
                sums.push(y);
            }
            sums
        })
        .collect();
    partial
        .iter()
        .fold(PowerSums::default(), |acc, p| acc.merge(p))
}

/// Empirical moments of one output coordinate; deterministic given the seed.
pub fn simulate_mlp_variance(cfg: &SimulationConfig) -> Result<SampleStats, VarianceError> {
    check(cfg)?;
    Ok(sample(cfg).stats())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCheck {
    pub mean: f64,
    /// `4 σ / √n` with σ² the theoretical variance.
    pub band: f64,
    pub passed: bool,
}

pub fn mean_check(cfg: &SimulationConfig) -> Result<MeanCheck, VarianceError> {
    let t = check(cfg)?;
    let s = sample(cfg).stats();
    let band = 4.0 * (t.variance / s.n as f64).sqrt();
    Ok(MeanCheck {
        mean: s.mean,
        band,
        passed: s.mean.abs() <= band,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub widths: Vec<u32>,
    pub n_samples: u64,
    pub seed: u64,
    pub mode: WeightMode,
    pub theoretical: f64,
    pub log_theoretical: f64,
    pub empirical: f64,
    pub ratio: f64,
    /// Standard error of the variance estimate, relative to the theoretical value.
    pub relative_std_error: f64,
    pub band: f64,
    pub mean: f64,
    pub mean_band: f64,
    /// Whether this configuration is eligible for pass/fail.
    pub asserted: bool,
    pub variance_ok: bool,
    pub mean_ok: bool,
}

impl VarianceReport {
    /// Pass/fail verdict; `None` for report-only configurations.
    pub fn passed(&self) -> Option<bool> {
        self.asserted.then_some(self.variance_ok && self.mean_ok)
    }
}

/// Runs the simulation once and compares against the product law.
pub fn verify(cfg: &SimulationConfig) -> Result<VarianceReport, VarianceError> {
    let t = check(cfg)?;
    let s = sample(cfg).stats();
    let rel_se = s.variance_std_error() / t.variance;
    let ratio = s.variance / t.variance;
    let band = cfg.tolerance * rel_se;
    let mean_band = 4.0 * (t.variance / s.n as f64).sqrt();
    Ok(VarianceReport {
        widths: cfg.widths.clone(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        mode: cfg.mode,
        theoretical: t.variance,
        log_theoretical: t.log_variance,
        empirical: s.variance,
        ratio,
        relative_std_error: rel_se,
        band,
        mean: s.mean,
        mean_band,
        asserted: cfg.mode == WeightMode::Annealed
            && cfg.widths.len() <= MAX_ASSERTED_DEPTH
            && cfg.n_samples >= MIN_ASSERTED_SAMPLES,
        variance_ok: (ratio - 1.0).abs() <= band,
        mean_ok: s.mean.abs() <= mean_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theoretical_examples() {
        assert_eq!(theoretical_variance(&[1]).unwrap().variance, 1.0);
        assert_eq!(theoretical_variance(&[16, 32, 64]).unwrap().variance, 32768.0);
        let deep = theoretical_variance(&[10; 30]).unwrap();
        assert!((deep.log_variance - 30.0 * 10f64.ln()).abs() < 1e-12);
        assert!((deep.variance / 1e30 - 1.0).abs() < 1e-12);
        assert_eq!(theoretical_variance(&[]), Err(VarianceError::Empty));
        assert!(theoretical_variance(&[3, 0]).is_err());
    }

    #[test]
    fn huge_products_are_refused() {
        let cfg = SimulationConfig::new(vec![1000; 5], 1000, 1);
        assert!(matches!(
            simulate_mlp_variance(&cfg),
            Err(VarianceError::Infeasible { .. })
        ));
    }

    #[test]
    fn unit_width_has_unit_variance() {
        let cfg = SimulationConfig::new(vec![1], 100_000, 11);
        let s = simulate_mlp_variance(&cfg).unwrap();
        assert!((s.variance - 1.0).abs() < 0.03, "{}", s.variance);
        let m = mean_check(&SimulationConfig::new(vec![1], 10_000, 3)).unwrap();
        assert!(m.passed, "{m:?}");
    }

    #[test]
    fn same_seed_same_bits() {
        let cfg = SimulationConfig::new(vec![4, 6], 10_000, 42);
        let a = simulate_mlp_variance(&cfg).unwrap();
        let b = simulate_mlp_variance(&cfg).unwrap();
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| simulate_mlp_variance(&cfg).unwrap());
        assert_eq!(a, c);
        let other = simulate_mlp_variance(&SimulationConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.variance, other.variance);
    }

    #[test]
    fn deep_or_quenched_runs_are_report_only() {
        let r = verify(&SimulationConfig::new(vec![2; 5], 2000, 1)).unwrap();
        assert_eq!(r.passed(), None);
        let q = verify(&SimulationConfig {
            mode: WeightMode::Quenched,
            ..SimulationConfig::new(vec![4, 4], 2000, 1)
        })
        .unwrap();
        assert_eq!(q.passed(), None);
    }
}
