//! Closed-form network metrics: projected widths, entropy, effectiveness,
//! depth-uniformity penalty and Params/FLOPs.
//!
//! All logarithms are natural. FLOPs count one multiply-accumulate as one
//! operation.

use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, LayerDescriptor, LayerRole, NetworkSpec};
use crate::conventions::Conventions;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("width {width} at position {index} is below 1")]
    WidthBelowOne { index: usize, width: f64 },
    #[error("empty width list")]
    Empty,
    #[error("expected {expected} stage weights (one per stage), got {got}")]
    AlphaLength { expected: usize, got: usize },
    #[error("stage weight {index} is negative or not finite: {value}")]
    BadAlpha { index: usize, value: f64 },
    #[error("output resolution and channels must be positive")]
    BadOutput,
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// MLP-equivalent width `c_in · k² / g` of a convolution.
pub fn projected_width(layer: &LayerDescriptor) -> f64 {
    layer.c_in as f64 * (layer.kernel as f64).powi(2) / layer.groups as f64
}

fn sum_log_widths(widths: impl IntoIterator<Item = f64>) -> Result<f64, MetricError> {
    let mut total = 0.0;
    for (index, w) in widths.into_iter().enumerate() {
        if !(w >= 1.0) || !w.is_finite() {
            return Err(MetricError::WidthBelowOne { index, width: w });
        }
        total += w.ln();
    }
    Ok(total)
}

/// Entropy of a linear MLP: `w_{L+1} · Σ log w_i`.
pub fn mlp_entropy(widths: &[f64], out_width: f64) -> Result<f64, MetricError> {
    if widths.is_empty() {
        return Err(MetricError::Empty);
    }
    if !(out_width >= 1.0) {
        return Err(MetricError::WidthBelowOne {
            index: widths.len(),
            width: out_width,
        });
    }
    Ok(out_width * sum_log_widths(widths.iter().copied())?)
}

/// CNN entropy of a layer prefix: `log(r_out² · c_out) · Σ log(c_i k_i² / g_i)`.
pub fn cnn_entropy(layers: &[LayerDescriptor], r_out: u32, c_out: u32) -> Result<f64, MetricError> {
    if layers.is_empty() {
        return Err(MetricError::Empty);
    }
    if r_out == 0 || c_out == 0 {
        return Err(MetricError::BadOutput);
    }
    let volume = (r_out as f64).powi(2) * c_out as f64;
    Ok(volume.ln() * sum_log_widths(layers.iter().map(projected_width))?)
}

/// Geometric mean, computed in log space relative to the first width so that
/// identical widths come back exactly.
pub fn average_width(widths: &[f64]) -> Result<f64, MetricError> {
    let Some(&pivot) = widths.first() else {
        return Err(MetricError::Empty);
    };
    let mut sum = 0.0;
    for (index, &w) in widths.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(MetricError::WidthBelowOne { index, width: w });
        }
        sum += (w / pivot).ln();
    }
    Ok(pivot * (sum / widths.len() as f64).exp())
}

/// `exp` of the population variance of the stage depths.
///
/// The variance is formed exactly in integers, `(n·Σd² − (Σd)²) / n²`, so the
/// result does not depend on the order of the stages.
pub fn depth_uniformity_penalty(depths: &[u32]) -> f64 {
    if depths.is_empty() {
        return 1.0;
    }
    let n = depths.len() as u128;
    let sum: u128 = depths.iter().map(|&d| d as u128).sum();
    let squares: u128 = depths.iter().map(|&d| (d as u128).pow(2)).sum();
    let var = (n * squares - sum * sum) as f64 / (n * n) as f64;
    var.exp()
}

pub(crate) fn penalty_real(depths: &[f64]) -> f64 {
    if depths.is_empty() {
        return 1.0;
    }
    let n = depths.len() as f64;
    let mean = depths.iter().sum::<f64>() / n;
    let var = depths.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    var.exp()
}

/// Stage a layer is attributed to on the entropy path.
fn path_stage(layer: &LayerDescriptor, num_stages: usize) -> usize {
    match layer.role {
        LayerRole::Stem => 0,
        LayerRole::Head | LayerRole::Classifier => num_stages - 1,
        _ => layer.stage.unwrap_or(0),
    }
}

/// Entropy-path layers with their stage attribution, in execution order.
pub fn entropy_path<'a>(
    layers: &'a [LayerDescriptor],
    num_stages: usize,
    conv: &Conventions,
) -> Vec<(usize, &'a LayerDescriptor)> {
    layers
        .iter()
        .filter(|l| conv.in_entropy_path(l.role))
        .map(|l| (path_stage(l, num_stages), l))
        .collect()
}

/// Projected widths of the entropy path.
pub fn path_widths(layers: &[LayerDescriptor], num_stages: usize, conv: &Conventions) -> Vec<f64> {
    entropy_path(layers, num_stages, conv)
        .into_iter()
        .map(|(_, l)| projected_width(l))
        .collect()
}

/// `H_i` for every stage, evaluated at the last entropy-path layer of stage i.
pub fn stage_entropies(
    layers: &[LayerDescriptor],
    num_stages: usize,
    conv: &Conventions,
) -> Result<Vec<f64>, MetricError> {
    let path = entropy_path(layers, num_stages, conv);
    let mut out = vec![0.0; num_stages];
    let mut cumulative = 0.0;
    let mut own = vec![0.0; num_stages];
    for (pos, &(stage, layer)) in path.iter().enumerate() {
        let w = projected_width(layer);
        if !(w >= 1.0) {
            return Err(MetricError::WidthBelowOne { index: pos, width: w });
        }
        cumulative += w.ln();
        own[stage] += w.ln();
        let closes_stage = path.get(pos + 1).is_none_or(|&(next, _)| next != stage);
        if closes_stage {
            let volume = ((layer.r_out as f64).powi(2) * layer.c_out as f64).ln();
            let sum = if conv.stagewise_entropy { own[stage] } else { cumulative };
            out[stage] = volume * sum;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEntropy {
    pub total: f64,
    pub per_stage: Vec<f64>,
}

pub(crate) fn check_alphas(alphas: &[f64], num_stages: usize) -> Result<(), MetricError> {
    if alphas.len() != num_stages {
        return Err(MetricError::AlphaLength {
            expected: num_stages,
            got: alphas.len(),
        });
    }
    for (index, &value) in alphas.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(MetricError::BadAlpha { index, value });
        }
    }
    Ok(())
}

/// `Σ α_i H_i` over the stages of an already expanded network.
pub fn weighted_entropy_of_layers(
    layers: &[LayerDescriptor],
    alphas: &[f64],
    conv: &Conventions,
) -> Result<WeightedEntropy, MetricError> {
    let per_stage = stage_entropies(layers, alphas.len(), conv)?;
    let total = alphas.iter().zip(&per_stage).map(|(a, h)| a * h).sum();
    Ok(WeightedEntropy { total, per_stage })
}

pub fn weighted_entropy(
    net: &NetworkSpec,
    alphas: &[f64],
    conv: &Conventions,
) -> Result<WeightedEntropy, MetricError> {
    check_alphas(alphas, net.stages.len())?;
    let layers = net.expand()?;
    weighted_entropy_of_layers(&layers, alphas, conv)
}

/// `L / w̄` over the entropy path of an expanded network.
pub fn effectiveness_of_layers(
    layers: &[LayerDescriptor],
    num_stages: usize,
    conv: &Conventions,
) -> Result<f64, MetricError> {
    let widths = path_widths(layers, num_stages, conv);
    Ok(widths.len() as f64 / average_width(&widths)?)
}

pub fn effectiveness(net: &NetworkSpec, conv: &Conventions) -> Result<f64, MetricError> {
    let layers = net.expand()?;
    effectiveness_of_layers(&layers, net.stages.len(), conv)
}

pub fn layer_params(layer: &LayerDescriptor, conv: &Conventions) -> u64 {
    let mut p = layer.weights();
    if layer.role.has_batch_norm() && conv.bn_params {
        p += 2 * layer.c_out as u64;
    }
    if layer.role.has_bias() {
        p += layer.c_out as u64;
    }
    p
}

pub fn layer_flops(layer: &LayerDescriptor, conv: &Conventions) -> u64 {
    let mut f = layer.macs();
    if layer.role.has_batch_norm() && conv.bn_flops {
        f += 2 * layer.c_out as u64 * (layer.r_out as u64).pow(2);
    }
    f
}

pub fn params_of_layers(layers: &[LayerDescriptor], conv: &Conventions) -> u64 {
    layers.iter().map(|l| layer_params(l, conv)).sum()
}

/// FLOPs split by whether they scale with the input resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    /// Feature-map convolutions; scale with the square of the resolution.
    pub spatial: u64,
    /// Convolutions on pooled vectors (SE, classifier).
    pub unit: u64,
}

impl FlopBreakdown {
    pub fn total(&self) -> u64 {
        self.spatial + self.unit
    }
}

pub fn flop_breakdown(layers: &[LayerDescriptor], conv: &Conventions) -> FlopBreakdown {
    let mut b = FlopBreakdown { spatial: 0, unit: 0 };
    for l in layers {
        let f = layer_flops(l, conv);
        if l.role.is_unit_resolution() {
            b.unit += f;
        } else {
            b.spatial += f;
        }
    }
    b
}

pub fn flops_of_layers(layers: &[LayerDescriptor], conv: &Conventions) -> u64 {
    layers.iter().map(|l| layer_flops(l, conv)).sum()
}

pub fn count_params(net: &NetworkSpec, conv: &Conventions) -> Result<u64, MetricError> {
    Ok(params_of_layers(&net.expand()?, conv))
}

pub fn count_flops(net: &NetworkSpec, conv: &Conventions) -> Result<u64, MetricError> {
    Ok(flops_of_layers(&net.expand()?, conv))
}

/// Params and FLOPs owned by each stage (stem, head and classifier excluded).
pub fn stage_costs(layers: &[LayerDescriptor], num_stages: usize, conv: &Conventions) -> Vec<(u64, u64)> {
    let mut out = vec![(0, 0); num_stages];
    for l in layers {
        if let Some(s) = l.stage {
            out[s].0 += layer_params(l, conv);
            out[s].1 += layer_flops(l, conv);
        }
    }
    out
}

/// True iff stage output channels never decrease.
pub fn monotone_width_check(net: &NetworkSpec) -> bool {
    net.stages.windows(2).all(|w| w[0].width <= w[1].width)
}

/// Every metric of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub format_version: u32,
    pub conventions: String,
    pub stages: usize,
    pub depths: Vec<u32>,
    pub stage_widths: Vec<u32>,
    pub alphas: Vec<f64>,
    pub entropy_per_stage: Vec<f64>,
    pub weighted_entropy: f64,
    pub entropy_layers: usize,
    pub average_width: f64,
    pub rho: f64,
    pub q: f64,
    pub params: u64,
    pub flops: u64,
    pub monotone: bool,
    pub widths: Vec<f64>,
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub fn analyze(net: &NetworkSpec, alphas: &[f64], conv: &Conventions) -> Result<MetricReport, MetricError> {
    check_alphas(alphas, net.stages.len())?;
    let layers = net.expand()?;
    let m = net.stages.len();
    let we = weighted_entropy_of_layers(&layers, alphas, conv)?;
    let widths = path_widths(&layers, m, conv);
    let avg = average_width(&widths)?;
    Ok(MetricReport {
        format_version: REPORT_FORMAT_VERSION,
        conventions: conv.fingerprint(),
        stages: m,
        depths: net.depths(),
        stage_widths: net.widths(),
        alphas: alphas.to_vec(),
        entropy_per_stage: we.per_stage,
        weighted_entropy: we.total,
        entropy_layers: widths.len(),
        average_width: avg,
        rho: widths.len() as f64 / avg,
        q: depth_uniformity_penalty(&net.depths()),
        params: params_of_layers(&layers, conv),
        flops: flops_of_layers(&layers, conv),
        monotone: monotone_width_check(net),
        widths,
    })
}

/// Stage weights 1 everywhere except 8 on the final stage; `{1,1,1,1,8}` for
/// five stages.
pub fn default_alphas(num_stages: usize) -> Vec<f64> {
    let mut a = vec![1.0; num_stages];
    if let Some(last) = a.last_mut() {
        *last = 8.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{BlockKind, StageSpec, StemSpec};

    fn layer(c_in: u32, c_out: u32, kernel: u32, groups: u32, r: u32) -> LayerDescriptor {
        LayerDescriptor {
            c_in,
            c_out,
            kernel,
            groups,
            stride: 1,
            r_in: r,
            r_out: r,
            role: LayerRole::Main,
            stage: Some(0),
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn projected_width_examples() {
        assert_eq!(projected_width(&layer(64, 64, 3, 1, 8)), 576.0);
        assert_eq!(projected_width(&layer(96, 96, 3, 96, 8)), 9.0);
        assert_eq!(projected_width(&layer(256, 64, 1, 1, 8)), 256.0);
    }

    #[test]
    fn mlp_entropy_examples() {
        assert_eq!(mlp_entropy(&[1.0], 5.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!(close(mlp_entropy(&[e, e, e], 2.0).unwrap(), 6.0, 1e-12));
        // 10 · (ln 16 + ln 32 + ln 64) = 10 · 15 · ln 2
        let expected = 10.0 * 15.0 * 2f64.ln();
        assert!(close(mlp_entropy(&[16.0, 32.0, 64.0], 10.0).unwrap(), expected, 1e-12));
        assert!((expected - 103.97).abs() < 0.01);
        assert!(matches!(
            mlp_entropy(&[0.5], 1.0),
            Err(MetricError::WidthBelowOne { index: 0, .. })
        ));
    }

    #[test]
    fn cnn_entropy_examples() {
        let l = layer(64, 64, 3, 1, 56);
        let h = cnn_entropy(&[l], 56, 64).unwrap();
        let expected = (56.0f64 * 56.0 * 64.0).ln() * 576f64.ln();
        assert!(close(h, expected, 1e-12));
        assert!((h - 77.63).abs() < 0.05, "{h}");
        assert_eq!(cnn_entropy(&[l, l], 1, 1).unwrap(), 0.0);
        let two = cnn_entropy(&[l, l], 56, 64).unwrap();
        assert!(close(two, 2.0 * h, 1e-12));
        assert!(cnn_entropy(&[], 4, 4).is_err());
    }

    #[test]
    fn average_width_examples() {
        assert_eq!(average_width(&[7.0, 7.0, 7.0]).unwrap(), 7.0);
        assert!(close(average_width(&[4.0, 16.0]).unwrap(), 8.0, 1e-14));
        // independent: fourth root of the product, computed directly
        let direct = (576.0f64 * 576.0 * 1152.0 * 2304.0).powf(0.25);
        let w = average_width(&[576.0, 576.0, 1152.0, 2304.0]).unwrap();
        assert!(close(w, direct, 1e-12));
        assert!((w - 969.0).abs() < 0.5);
        assert_eq!(average_width(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn average_width_of_identical_widths_is_exact() {
        for w in 1..=4096u32 {
            for l in [1usize, 3, 17, 50] {
                let ws = vec![w as f64; l];
                assert_eq!(average_width(&ws).unwrap(), w as f64);
            }
        }
    }

    #[test]
    fn average_width_survives_huge_products() {
        let ws = vec![1e6; 1000];
        let avg = average_width(&ws).unwrap();
        assert!(((avg - 1e6) / 1e6).abs() < 1e-9);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(depth_uniformity_penalty(&[3, 3, 3, 3]), 1.0);
        assert!(close(depth_uniformity_penalty(&[1, 3]), 1f64.exp(), 1e-15));
        // mean 4, squared deviations 4 + 4 + 16 = 24, / 3 = 8
        assert!(close(depth_uniformity_penalty(&[2, 2, 8]), 8f64.exp(), 1e-14));
        assert_eq!(depth_uniformity_penalty(&[5]), 1.0);
    }

    #[test]
    fn monotone_check() {
        let mk = |ws: &[u32]| NetworkSpec {
            input_resolution: 32,
            input_channels: 3,
            stem: StemSpec {
                channels: 8,
                kernel: 3,
                stride: 1,
                pool: false,
            },
            stages: ws
                .iter()
                .map(|&w| StageSpec::new(BlockKind::PlainConvBnRelu, 1, w, false))
                .collect(),
            head_channels: None,
            num_classes: 10,
        };
        assert!(monotone_width_check(&mk(&[64, 128, 256, 512])));
        assert!(!monotone_width_check(&mk(&[64, 32])));
        assert!(monotone_width_check(&mk(&[40, 40, 40])));
    }

    #[test]
    fn single_conv_costs() {
        let l = LayerDescriptor {
            c_in: 8,
            c_out: 8,
            kernel: 1,
            groups: 1,
            stride: 1,
            r_in: 4,
            r_out: 4,
            role: LayerRole::Main,
            stage: Some(0),
        };
        assert_eq!(layer_params(&l, &Conventions::BARE), 64);
        assert_eq!(layer_flops(&l, &Conventions::BARE), 1024);
        assert_eq!(layer_params(&l, &Conventions::CALIBRATED), 64 + 16);
        assert_eq!(layer_flops(&l, &Conventions::CALIBRATED), 1024 + 2 * 8 * 16);
    }

    #[test]
    fn alpha_checks() {
        assert_eq!(
            check_alphas(&[1.0], 2),
            Err(MetricError::AlphaLength { expected: 2, got: 1 })
        );
        assert!(check_alphas(&[1.0, -1.0], 2).is_err());
        assert_eq!(default_alphas(5), vec![1.0, 1.0, 1.0, 1.0, 8.0]);
    }
}
