//! Architecture data model.
//!
//! A [`NetworkSpec`] describes a CNN at block granularity: a stem convolution,
//! an ordered list of stages (each a run of identical blocks), an optional
//! 1×1 head convolution and a classifier. [`NetworkSpec::expand`] flattens it
//! into the convolution sequence every metric works on.
//!
//! Block expansion tables (execution order inside one block):
//!
//! | block              | convolutions                                                         |
//! |--------------------|----------------------------------------------------------------------|
//! | `plain`            | k×k `c_in→c` (groups g, stride s)                                    |
//! | `resnet_basic`     | k×k `c_in→c` (s), k×k `c→c`, projection 1×1 `c_in→c` (s) if needed   |
//! | `resnet_bottleneck`| 1×1 `c_in→m`, k×k `m→m` (g, s), 1×1 `m→c`, projection if needed      |
//! | `mbconv`           | 1×1 `c_in→e` (omitted when t = 1), k×k depthwise `e→e` (s), SE pair, 1×1 `e→c` |
//!
//! with `m = c / bottleneck_ratio`, `e = c_in · t` and SE squeeze width
//! `max(1, c_in / se_ratio)`. A projection shortcut is emitted when the block
//! changes resolution or channel count. Inverted-residual blocks never carry a
//! projection (their residual is identity-only). SE convolutions act on the
//! pooled vector and are recorded at resolution 1. The classifier is a 1×1
//! convolution at resolution 1 with bias.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Default kernel of the main spatial convolution of every block kind.
pub const DEFAULT_KERNEL: u32 = 3;

/// Building block repeated inside a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// A single conv-BN-ReLU.
    PlainConvBnRelu,
    /// Two k×k convolutions with a residual connection.
    ResNetBasic,
    /// 1×1 reduce, k×k, 1×1 expand; the stage width is the expanded width.
    ResNetBottleneck { bottleneck_ratio: u32 },
    /// Inverted residual with depthwise conv and optional squeeze-excitation.
    MobileNetV2Se {
        expansion: u32,
        se_ratio: Option<u32>,
    },
}

impl BlockKind {
    pub fn bottleneck() -> Self {
        BlockKind::ResNetBottleneck { bottleneck_ratio: 4 }
    }

    pub fn mbconv(expansion: u32, se_ratio: Option<u32>) -> Self {
        BlockKind::MobileNetV2Se {
            expansion,
            se_ratio,
        }
    }

    /// Stable identifier used in architecture files.
    pub fn tag(&self) -> &'static str {
        match self {
            BlockKind::PlainConvBnRelu => "plain",
            BlockKind::ResNetBasic => "resnet_basic",
            BlockKind::ResNetBottleneck { .. } => "resnet_bottleneck",
            BlockKind::MobileNetV2Se { .. } => "mbconv",
        }
    }

    /// Main-path layers contributed by one block.
    pub fn main_layers_per_block(&self) -> usize {
        match self {
            BlockKind::PlainConvBnRelu => 1,
            BlockKind::ResNetBasic => 2,
            BlockKind::ResNetBottleneck { .. } => 3,
            BlockKind::MobileNetV2Se { expansion: 1, .. } => 2,
            BlockKind::MobileNetV2Se { .. } => 3,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSpec {
    pub block: BlockKind,
    pub depth: u32,
    pub width: u32,
    pub kernel: u32,
    pub groups: u32,
    pub downsample: bool,
}

impl StageSpec {
    pub fn new(block: BlockKind, depth: u32, width: u32, downsample: bool) -> Self {
        StageSpec {
            block,
            depth,
            width,
            kernel: DEFAULT_KERNEL,
            groups: 1,
            downsample,
        }
    }

    pub fn with_kernel(mut self, kernel: u32) -> Self {
        self.kernel = kernel;
        self
    }
}

/// Stem convolution from the image channels, optionally followed by a
/// stride-2 max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StemSpec {
    pub channels: u32,
    pub kernel: u32,
    pub stride: u32,
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_resolution: u32,
    pub input_channels: u32,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub head_channels: Option<u32>,
    pub num_classes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Stem,
    Main,
    Shortcut,
    SqueezeExcite,
    Head,
    Classifier,
}

impl LayerRole {
    /// Whether the layer is followed by a batch-norm in the reference nets.
    pub fn has_batch_norm(self) -> bool {
        matches!(
            self,
            LayerRole::Stem | LayerRole::Main | LayerRole::Shortcut | LayerRole::Head
        )
    }

    pub fn has_bias(self) -> bool {
        matches!(self, LayerRole::SqueezeExcite | LayerRole::Classifier)
    }

    /// Layers evaluated on a pooled vector; their cost does not depend on the
    /// input resolution.
    pub fn is_unit_resolution(self) -> bool {
        matches!(self, LayerRole::SqueezeExcite | LayerRole::Classifier)
    }
}

/// One convolution after block expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub c_in: u32,
    pub c_out: u32,
    pub kernel: u32,
    pub groups: u32,
    pub stride: u32,
    pub r_in: u32,
    pub r_out: u32,
    pub role: LayerRole,
    /// Owning stage; `None` for stem, head and classifier.
    pub stage: Option<usize>,
}

impl LayerDescriptor {
    /// Weight count `c_out · c_in · k² / g`.
    pub fn weights(&self) -> u64 {
        self.c_out as u64 * self.c_in as u64 * (self.kernel as u64).pow(2) / self.groups as u64
    }

    /// Multiply-accumulates of the convolution itself.
    pub fn macs(&self) -> u64 {
        self.weights() * (self.r_out as u64).pow(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    NoStages,
    ZeroResolution,
    ZeroChannels,
    ZeroClasses,
    ZeroDepth,
    ZeroWidth,
    ZeroKernel,
    EvenKernel,
    BadStride,
    ZeroGroups,
    GroupMismatch,
    WidthNotDivisible,
    BadExpansion,
    BadSeRatio,
    DepthwiseGroups,
    ResolutionUnderflow,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::NoStages => "no_stages",
            ViolationCode::ZeroResolution => "zero_resolution",
            ViolationCode::ZeroChannels => "zero_channels",
            ViolationCode::ZeroClasses => "zero_classes",
            ViolationCode::ZeroDepth => "zero_depth",
            ViolationCode::ZeroWidth => "zero_width",
            ViolationCode::ZeroKernel => "zero_kernel",
            ViolationCode::EvenKernel => "kernel_even",
            ViolationCode::BadStride => "bad_stride",
            ViolationCode::ZeroGroups => "zero_groups",
            ViolationCode::GroupMismatch => "group_mismatch",
            ViolationCode::WidthNotDivisible => "width_not_divisible",
            ViolationCode::BadExpansion => "bad_expansion",
            ViolationCode::BadSeRatio => "bad_se_ratio",
            ViolationCode::DepthwiseGroups => "depthwise_groups",
            ViolationCode::ResolutionUnderflow => "resolution_underflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    /// Offending element, e.g. `stages[2]` or `stem`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} [{}]", self.location, self.message, self.code.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArchError {
    #[error("invalid architecture: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub(crate) fn halve(r: u32) -> u32 {
    r.div_ceil(2)
}

/// Group count of a block convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Groups {
    Fixed(u32),
    Depthwise,
}

/// Channel-generic convolution shape. Channels are `f64` so the solver's
/// continuous relaxation can share the block tables; the integral expansion
/// converts them back exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ConvShape {
    pub c_in: f64,
    pub c_out: f64,
    pub kernel: u32,
    pub groups: Groups,
    pub stride: u32,
    pub r_in: u32,
    pub r_out: u32,
    pub role: LayerRole,
}

impl ConvShape {
    pub fn group_count(&self) -> f64 {
        match self.groups {
            Groups::Fixed(g) => g as f64,
            Groups::Depthwise => self.c_in,
        }
    }

    pub fn projected_width(&self) -> f64 {
        self.c_in * (self.kernel as f64).powi(2) / self.group_count()
    }

    pub fn weights(&self) -> f64 {
        self.c_out * self.projected_width()
    }
}

/// Convolutions of one block. With `integral` the SE squeeze width is floored
/// like the reference implementations; otherwise it stays continuous.
pub(crate) fn block_convs(
    stage: &StageSpec,
    c_in: f64,
    c_out: f64,
    stride: u32,
    r_in: u32,
    integral: bool,
) -> Vec<ConvShape> {
    let r_out = if stride == 2 { halve(r_in) } else { r_in };
    let k = stage.kernel;
    let g = Groups::Fixed(stage.groups);
    let conv = |c_in, c_out, kernel, groups, stride, r_in, r_out, role| ConvShape {
        c_in,
        c_out,
        kernel,
        groups,
        stride,
        r_in,
        r_out,
        role,
    };
    let one = Groups::Fixed(1);
    let projection = stride != 1 || c_in != c_out;
    let mut out = Vec::with_capacity(5);
    match stage.block {
        BlockKind::PlainConvBnRelu => {
            out.push(conv(c_in, c_out, k, g, stride, r_in, r_out, LayerRole::Main));
        }
        BlockKind::ResNetBasic => {
            out.push(conv(c_in, c_out, k, g, stride, r_in, r_out, LayerRole::Main));
            out.push(conv(c_out, c_out, k, g, 1, r_out, r_out, LayerRole::Main));
            if projection {
                out.push(conv(c_in, c_out, 1, one, stride, r_in, r_out, LayerRole::Shortcut));
            }
        }
        BlockKind::ResNetBottleneck { bottleneck_ratio } => {
            let mid = c_out / bottleneck_ratio as f64;
            out.push(conv(c_in, mid, 1, one, 1, r_in, r_in, LayerRole::Main));
            out.push(conv(mid, mid, k, g, stride, r_in, r_out, LayerRole::Main));
            out.push(conv(mid, c_out, 1, one, 1, r_out, r_out, LayerRole::Main));
            if projection {
                out.push(conv(c_in, c_out, 1, one, stride, r_in, r_out, LayerRole::Shortcut));
            }
        }
        BlockKind::MobileNetV2Se {
            expansion,
            se_ratio,
        } => {
            let hidden = c_in * expansion as f64;
            if expansion != 1 {
                out.push(conv(c_in, hidden, 1, one, 1, r_in, r_in, LayerRole::Main));
            }
            out.push(conv(
                hidden,
                hidden,
                k,
                Groups::Depthwise,
                stride,
                r_in,
                r_out,
                LayerRole::Main,
            ));
            if let Some(ratio) = se_ratio {
                let raw = c_in / ratio as f64;
                let squeeze = if integral { raw.floor() } else { raw }.max(1.0);
                out.push(conv(hidden, squeeze, 1, one, 1, 1, 1, LayerRole::SqueezeExcite));
                out.push(conv(squeeze, hidden, 1, one, 1, 1, 1, LayerRole::SqueezeExcite));
            }
            out.push(conv(hidden, c_out, 1, one, 1, r_out, r_out, LayerRole::Main));
        }
    }
    out
}

impl NetworkSpec {
    pub fn depths(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.depth).collect()
    }

    pub fn widths(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.width).collect()
    }

    /// Declared stride-2 main-path layers: the stem stride plus one per
    /// downsampling stage.
    pub fn downsample_count(&self) -> usize {
        (self.stem.stride == 2) as usize + self.stages.iter().filter(|s| s.downsample).count()
    }

    /// Every invariant violation, in a stable order. An empty list means
    /// [`expand`](Self::expand) succeeds.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |code: ViolationCode, location: String, message: String| {
            v.push(Violation {
                code,
                location,
                message,
            })
        };

        if self.input_resolution == 0 {
            push(
                ViolationCode::ZeroResolution,
                "input_resolution".into(),
                "input resolution must be positive".into(),
            );
        }
        if self.input_channels == 0 {
            push(
                ViolationCode::ZeroChannels,
                "input_channels".into(),
                "input channels must be positive".into(),
            );
        }
        if self.num_classes == 0 {
            push(
                ViolationCode::ZeroClasses,
                "num_classes".into(),
                "num_classes must be positive".into(),
            );
        }
        if self.head_channels == Some(0) {
            push(
                ViolationCode::ZeroChannels,
                "head_channels".into(),
                "head channels must be positive".into(),
            );
        }
        if self.stages.is_empty() {
            push(
                ViolationCode::NoStages,
                "stages".into(),
                "network needs at least one stage".into(),
            );
        }

        let stem = &self.stem;
        if stem.channels == 0 {
            push(
                ViolationCode::ZeroChannels,
                "stem".into(),
                "stem channels must be positive".into(),
            );
        }
        if stem.kernel == 0 {
            push(ViolationCode::ZeroKernel, "stem".into(), "kernel must be positive".into());
        } else if stem.kernel % 2 == 0 {
            push(ViolationCode::EvenKernel, "stem".into(), "kernel must be odd".into());
        }
        if !(stem.stride == 1 || stem.stride == 2) {
            push(ViolationCode::BadStride, "stem".into(), "stride must be 1 or 2".into());
        }

        // Resolution walk; a stride-2 step on a 1×1 map underflows.
        let mut r = self.input_resolution.max(1);
        let step = |r: &mut u32, at: &str, push: &mut dyn FnMut(ViolationCode, String, String)| {
            if *r <= 1 {
                push(
                    ViolationCode::ResolutionUnderflow,
                    at.to_string(),
                    "resolution underflow: downsampling a 1x1 feature map".into(),
                );
            }
            *r = halve(*r);
        };
        if stem.stride == 2 {
            step(&mut r, "stem", &mut push);
        }
        if stem.pool {
            step(&mut r, "stem", &mut push);
        }

        let mut c_prev = stem.channels;
        for (i, s) in self.stages.iter().enumerate() {
            let at = format!("stages[{i}]");
            if s.depth == 0 {
                push(ViolationCode::ZeroDepth, at.clone(), "depth must be at least 1".into());
            }
            if s.width == 0 {
                push(ViolationCode::ZeroWidth, at.clone(), "width must be at least 1".into());
            }
            if s.kernel == 0 {
                push(ViolationCode::ZeroKernel, at.clone(), "kernel must be positive".into());
            } else if s.kernel % 2 == 0 {
                push(ViolationCode::EvenKernel, at.clone(), "kernel must be odd".into());
            }
            if s.groups == 0 {
                push(ViolationCode::ZeroGroups, at.clone(), "groups must be positive".into());
            }
            if s.downsample {
                step(&mut r, &at, &mut push);
            }
            if s.width > 0 && s.groups > 0 {
                match s.block {
                    BlockKind::PlainConvBnRelu | BlockKind::ResNetBasic => {
                        if c_prev % s.groups != 0 || s.width % s.groups != 0 {
                            push(
                                ViolationCode::GroupMismatch,
                                at.clone(),
                                format!(
                                    "groups {} must divide channels {} and {}",
                                    s.groups, c_prev, s.width
                                ),
                            );
                        }
                    }
                    BlockKind::ResNetBottleneck { bottleneck_ratio } => {
                        if bottleneck_ratio == 0 {
                            push(
                                ViolationCode::BadExpansion,
                                at.clone(),
                                "bottleneck ratio must be positive".into(),
                            );
                        } else if s.width % bottleneck_ratio != 0 {
                            push(
                                ViolationCode::WidthNotDivisible,
                                at.clone(),
                                format!(
                                    "width {} not divisible by bottleneck ratio {}",
                                    s.width, bottleneck_ratio
                                ),
                            );
                        } else if (s.width / bottleneck_ratio) % s.groups != 0 {
                            push(
                                ViolationCode::GroupMismatch,
                                at.clone(),
                                format!(
                                    "groups {} must divide bottleneck channels {}",
                                    s.groups,
                                    s.width / bottleneck_ratio
                                ),
                            );
                        }
                    }
                    BlockKind::MobileNetV2Se {
                        expansion,
                        se_ratio,
                    } => {
                        if expansion == 0 {
                            push(
                                ViolationCode::BadExpansion,
                                at.clone(),
                                "expansion ratio must be positive".into(),
                            );
                        }
                        if se_ratio == Some(0) {
                            push(
                                ViolationCode::BadSeRatio,
                                at.clone(),
                                "SE reduction ratio must be at least 1".into(),
                            );
                        }
                        if s.groups != 1 {
                            push(
                                ViolationCode::DepthwiseGroups,
                                at.clone(),
                                "inverted residual blocks fix depthwise groups; groups must be 1"
                                    .into(),
                            );
                        }
                    }
                }
            }
            if s.width > 0 {
                c_prev = s.width;
            }
        }
        v
    }

    /// Flattens the network into its convolutions in execution order.
    pub fn expand(&self) -> Result<Vec<LayerDescriptor>, ArchError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(ArchError::Invalid(violations));
        }
        let mut layers = Vec::new();
        let mut r = self.input_resolution;
        let stem_out = if self.stem.stride == 2 { halve(r) } else { r };
        layers.push(LayerDescriptor {
            c_in: self.input_channels,
            c_out: self.stem.channels,
            kernel: self.stem.kernel,
            groups: 1,
            stride: self.stem.stride,
            r_in: r,
            r_out: stem_out,
            role: LayerRole::Stem,
            stage: None,
        });
        r = if self.stem.pool { halve(stem_out) } else { stem_out };

        let mut c = self.stem.channels;
        for (i, stage) in self.stages.iter().enumerate() {
            for b in 0..stage.depth {
                let stride = if b == 0 && stage.downsample { 2 } else { 1 };
                let convs = block_convs(stage, c as f64, stage.width as f64, stride, r, true);
                for s in &convs {
                    let c_in = s.c_in as u32;
                    layers.push(LayerDescriptor {
                        c_in,
                        c_out: s.c_out as u32,
                        kernel: s.kernel,
                        groups: match s.groups {
                            Groups::Fixed(g) => g,
                            Groups::Depthwise => c_in,
                        },
                        stride: s.stride,
                        r_in: s.r_in,
                        r_out: s.r_out,
                        role: s.role,
                        stage: Some(i),
                    });
                }
                if stride == 2 {
                    r = halve(r);
                }
                c = stage.width;
            }
        }
        if let Some(h) = self.head_channels {
            layers.push(LayerDescriptor {
                c_in: c,
                c_out: h,
                kernel: 1,
                groups: 1,
                stride: 1,
                r_in: r,
                r_out: r,
                role: LayerRole::Head,
                stage: None,
            });
            c = h;
        }
        layers.push(LayerDescriptor {
            c_in: c,
            c_out: self.num_classes,
            kernel: 1,
            groups: 1,
            stride: 1,
            r_in: 1,
            r_out: 1,
            role: LayerRole::Classifier,
            stage: None,
        });
        Ok(layers)
    }

    /// Spatial side of the final feature map.
    pub fn output_resolution(&self) -> u32 {
        let mut r = self.input_resolution;
        if self.stem.stride == 2 {
            r = halve(r);
        }
        if self.stem.pool {
            r = halve(r);
        }
        for s in &self.stages {
            if s.downsample {
                r = halve(r);
            }
        }
        r
    }

    /// Copy of the network at another input resolution.
    pub fn at_resolution(&self, input_resolution: u32) -> NetworkSpec {
        NetworkSpec {
            input_resolution,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_net(depth: u32, width: u32, r: u32) -> NetworkSpec {
        NetworkSpec {
            input_resolution: r,
            input_channels: 3,
            stem: StemSpec {
                channels: 16,
                kernel: 3,
                stride: 1,
                pool: false,
            },
            stages: vec![StageSpec::new(BlockKind::PlainConvBnRelu, depth, width, false)],
            head_channels: None,
            num_classes: 10,
        }
    }

    #[test]
    fn single_plain_block_is_one_conv() {
        let net = plain_net(1, 8, 32);
        let layers = net.expand().unwrap();
        let main: Vec<_> = layers.iter().filter(|l| l.role == LayerRole::Main).collect();
        assert_eq!(main.len(), 1);
        let l = main[0];
        assert_eq!((l.c_in, l.c_out, l.kernel, l.groups, l.r_in), (16, 8, 3, 1, 32));
        // stem, main, classifier
        assert_eq!(layers.len(), 3);
        let fc = layers.last().unwrap();
        assert_eq!((fc.c_in, fc.c_out, fc.kernel, fc.r_in, fc.r_out), (8, 10, 1, 1, 1));
    }

    #[test]
    fn inverted_residual_block_expansion() {
        let stage = StageSpec::new(BlockKind::mbconv(6, Some(4)), 1, 24, true);
        let convs = block_convs(&stage, 16.0, 24.0, 2, 112, true);
        let dims: Vec<_> = convs
            .iter()
            .map(|c| (c.c_in as u32, c.c_out as u32, c.kernel, c.group_count() as u32, c.role))
            .collect();
        assert_eq!(
            dims,
            vec![
                (16, 96, 1, 1, LayerRole::Main),
                (96, 96, 3, 96, LayerRole::Main),
                (96, 4, 1, 1, LayerRole::SqueezeExcite),
                (4, 96, 1, 1, LayerRole::SqueezeExcite),
                (96, 24, 1, 1, LayerRole::Main),
            ]
        );
        assert_eq!(convs[1].r_out, 56);
        assert_eq!(convs[2].r_out, 1);
    }

    #[test]
    fn expansion_one_skips_pointwise_expand() {
        let stage = StageSpec::new(BlockKind::mbconv(1, None), 1, 16, false);
        let convs = block_convs(&stage, 32.0, 16.0, 1, 112, true);
        assert_eq!(convs.len(), 2);
        assert_eq!(convs[0].groups, Groups::Depthwise);
    }

    #[test]
    fn even_kernel_is_rejected() {
        let mut net = plain_net(1, 8, 32);
        net.stages[0].kernel = 4;
        let v = net.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::EvenKernel);
        assert_eq!(v[0].message, "kernel must be odd");
        assert_eq!(v[0].location, "stages[0]");
        assert!(net.expand().is_err());
    }

    #[test]
    fn seven_downsamples_underflow_at_32() {
        let mut net = plain_net(1, 8, 32);
        net.stages = (0..7)
            .map(|_| StageSpec::new(BlockKind::PlainConvBnRelu, 1, 8, true))
            .collect();
        let v = net.validate();
        assert!(v.iter().any(|x| x.code == ViolationCode::ResolutionUnderflow));
        assert_eq!(v[0].location, "stages[5]");
        // five halvings are fine
        net.stages.truncate(5);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn group_mismatch_names_stage() {
        let mut net = plain_net(1, 8, 32);
        net.stages.push(StageSpec {
            groups: 3,
            ..StageSpec::new(BlockKind::ResNetBasic, 1, 12, false)
        });
        let err = net.expand().unwrap_err();
        let ArchError::Invalid(v) = &err;
        assert_eq!(v[0].code, ViolationCode::GroupMismatch);
        assert!(err.to_string().contains("stages[1]"));
    }

    #[test]
    fn bottleneck_width_must_divide() {
        let mut net = plain_net(1, 8, 32);
        net.stages[0] = StageSpec::new(BlockKind::bottleneck(), 1, 30, false);
        assert_eq!(net.validate()[0].code, ViolationCode::WidthNotDivisible);
    }

    #[test]
    fn groups_divide_channels_after_expansion() {
        let mut net = plain_net(2, 32, 32);
        net.stages[0].groups = 8;
        net.stages.push(StageSpec {
            groups: 4,
            ..StageSpec::new(BlockKind::bottleneck(), 2, 64, true)
        });
        for l in net.expand().unwrap() {
            assert_eq!(l.c_in % l.groups, 0);
            assert_eq!(l.c_out % l.groups, 0);
        }
    }

    #[test]
    fn resolution_uses_ceil_halving() {
        let mut net = plain_net(1, 8, 7);
        net.stages[0].downsample = true;
        let layers = net.expand().unwrap();
        assert_eq!(layers[1].r_out, 4);
        assert_eq!(net.output_resolution(), 4);
    }
}
