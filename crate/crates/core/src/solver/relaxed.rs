//! Continuous relaxation: the objective and constraint functions of a
//! network whose widths and depths are real numbers.
//!
//! A stage of real depth `d` is its first block (weight 1) plus the repeated
//! block with weight `d − 1`; every sum over layers becomes a weighted sum.
//! At lattice points the values coincide with the exact integer metrics.

use crate::arch::{block_convs, halve, ConvShape, Groups, LayerRole, StageSpec};
use crate::conventions::Conventions;
use crate::metrics::penalty_real;

use super::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RelaxedEval {
    pub objective: f64,
    pub rho: f64,
    pub params: f64,
    pub flops: f64,
    pub monotone_excess: f64,
}

impl RelaxedEval {
    /// Relative constraint overshoots (rho, flops, params, monotone), each ≥ 0.
    pub fn excesses(&self, prob: &ProblemSpec) -> [f64; 4] {
        [
            (self.rho / prob.rho0 - 1.0).max(0.0),
            (self.flops / prob.max_flops as f64 - 1.0).max(0.0),
            (self.params / prob.max_params as f64 - 1.0).max(0.0),
            self.monotone_excess,
        ]
    }

    pub fn max_excess(&self, prob: &ProblemSpec) -> f64 {
        self.excesses(prob).into_iter().fold(0.0, f64::max)
    }

    /// Exterior quadratic penalty function.
    pub fn penalized(&self, prob: &ProblemSpec, mu: f64) -> f64 {
        let v: f64 = self.excesses(prob).iter().map(|e| e * e).sum();
        self.objective - mu * v
    }
}

struct Accumulator<'a> {
    conv: &'a Conventions,
    params: f64,
    flops: f64,
    path_len: f64,
    log_sum: f64,
    own: Vec<f64>,
    entropy: Vec<f64>,
}

impl Accumulator<'_> {
    fn push(&mut self, s: &ConvShape, weight: f64, stage: usize) {
        let area = (s.r_out as f64).powi(2);
        let mut p = s.weights();
        let mut f = s.weights() * area;
        if s.role.has_batch_norm() {
            if self.conv.bn_params {
                p += 2.0 * s.c_out;
            }
            if self.conv.bn_flops {
                f += 2.0 * s.c_out * area;
            }
        }
        if s.role.has_bias() {
            p += s.c_out;
        }
        self.params += weight * p;
        self.flops += weight * f;

        if self.conv.in_entropy_path(s.role) {
            let lw = weight * s.projected_width().ln();
            self.path_len += weight;
            self.log_sum += lw;
            self.own[stage] += lw;
            // Stages occur in order along the path, so the last write wins and
            // lands on the stage's closing layer.
            let sum = if self.conv.stagewise_entropy { self.own[stage] } else { self.log_sum };
            self.entropy[stage] = (area * s.c_out).ln() * sum;
        }
    }
}

fn shape(c_in: f64, c_out: f64, kernel: u32, stride: u32, r_in: u32, r_out: u32, role: LayerRole) -> ConvShape {
    ConvShape {
        c_in,
        c_out,
        kernel,
        groups: Groups::Fixed(1),
        stride,
        r_in,
        r_out,
        role,
    }
}

pub(crate) fn evaluate_relaxed(prob: &ProblemSpec, widths: &[f64], depths: &[f64]) -> RelaxedEval {
    let m = prob.num_stages;
    let mut acc = Accumulator {
        conv: &prob.conventions,
        params: 0.0,
        flops: 0.0,
        path_len: 0.0,
        log_sum: 0.0,
        own: vec![0.0; m],
        entropy: vec![0.0; m],
    };
    let stem = prob.stem;
    let mut r = prob.input_resolution;
    let stem_out = if stem.stride == 2 { halve(r) } else { r };
    acc.push(
        &shape(
            prob.input_channels as f64,
            stem.channels as f64,
            stem.kernel,
            stem.stride,
            r,
            stem_out,
            LayerRole::Stem,
        ),
        1.0,
        0,
    );
    r = if stem.pool { halve(stem_out) } else { stem_out };

    let mut c = stem.channels as f64;
    for i in 0..m {
        let spec = StageSpec {
            block: prob.block,
            depth: 1,
            width: 0,
            kernel: prob.kernels[i],
            groups: 1,
            downsample: prob.downsample[i],
        };
        let w = widths[i];
        let stride = if prob.downsample[i] { 2 } else { 1 };
        for s in block_convs(&spec, c, w, stride, r, false) {
            acc.push(&s, 1.0, i);
        }
        if stride == 2 {
            r = halve(r);
        }
        for s in block_convs(&spec, w, w, 1, r, false) {
            acc.push(&s, depths[i] - 1.0, i);
        }
        c = w;
    }
    if let Some(h) = prob.head_channels {
        acc.push(&shape(c, h as f64, 1, 1, r, r, LayerRole::Head), 1.0, m - 1);
        c = h as f64;
    }
    acc.push(
        &shape(c, prob.num_classes as f64, 1, 1, 1, 1, LayerRole::Classifier),
        1.0,
        m - 1,
    );

    let entropy: f64 = prob.alphas.iter().zip(&acc.entropy).map(|(a, h)| a * h).sum();
    let avg = (acc.log_sum / acc.path_len).exp();
    let monotone_excess = widths
        .windows(2)
        .map(|w| ((w[0] - w[1]) / w[1]).max(0.0))
        .sum();
    RelaxedEval {
        objective: entropy - prob.beta * penalty_real(depths),
        rho: acc.path_len / avg,
        params: acc.params,
        flops: acc.flops,
        monotone_excess,
    }
}
