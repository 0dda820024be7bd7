use serde::{Deserialize, Serialize};

use crate::arch::{BlockKind, NetworkSpec, StageSpec, StemSpec, DEFAULT_KERNEL};
use crate::conventions::Conventions;
use crate::format::{check_version, parse_toml, BlockFields, FormatError, StemFile};
use crate::metrics::{check_alphas, default_alphas};

pub const PROBLEM_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_GRANULARITY: u32 = 8;

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// One design problem: block family, stage layout, search box, objective
/// weights and budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub block: BlockKind,
    pub num_stages: usize,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub rho0: f64,
    pub max_flops: u64,
    pub max_params: u64,
    pub input_resolution: u32,
    pub input_channels: u32,
    pub num_classes: u32,
    pub stem: StemSpec,
    pub head_channels: Option<u32>,
    pub downsample: Vec<bool>,
    pub kernels: Vec<u32>,
    pub width_bounds: Vec<[u32; 2]>,
    pub depth_bounds: Vec<[u32; 2]>,
    pub width_granularity: u32,
    pub conventions: Conventions,
}

/// Stage widths and depths, the decision variables.
///
/// The derived ordering (widths, then depths, lexicographically) is the last
/// tie-break between candidates of equal objective and Params.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub widths: Vec<u32>,
    pub depths: Vec<u32>,
}

impl Candidate {
    pub fn new(widths: Vec<u32>, depths: Vec<u32>) -> Self {
        Candidate { widths, depths }
    }
}

impl ProblemSpec {
    /// Problem with the default objective weights and granularity, kernel 3
    /// everywhere and the calibrated conventions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        block: BlockKind,
        stem: StemSpec,
        downsample: Vec<bool>,
        width_bounds: Vec<[u32; 2]>,
        depth_bounds: Vec<[u32; 2]>,
        input_resolution: u32,
        num_classes: u32,
    ) -> Self {
        let m = downsample.len();
        ProblemSpec {
            name: name.to_string(),
            block,
            num_stages: m,
            alphas: default_alphas(m),
            beta: DEFAULT_BETA,
            rho0: 2.0,
            max_flops: u64::MAX,
            max_params: u64::MAX,
            input_resolution,
            input_channels: 3,
            num_classes,
            stem,
            head_channels: None,
            downsample,
            kernels: vec![DEFAULT_KERNEL; m],
            width_bounds,
            depth_bounds,
            width_granularity: DEFAULT_GRANULARITY,
            conventions: Conventions::CALIBRATED,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let m = self.num_stages;
        if m == 0 {
            return Err(invalid("stages", "at least one stage is required"));
        }
        for (field, len) in [
            ("downsample", self.downsample.len()),
            ("kernels", self.kernels.len()),
            ("width_bounds", self.width_bounds.len()),
            ("depth_bounds", self.depth_bounds.len()),
        ] {
            if len != m {
                return Err(invalid(field, format!("expected {m} entries (one per stage), got {len}")));
            }
        }
        check_alphas(&self.alphas, m).map_err(|e| invalid("alphas", e.to_string()))?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid("beta", "must be a nonnegative number"));
        }
        if !(self.rho0 > 0.0) || !self.rho0.is_finite() {
            return Err(invalid("rho0", "must be positive"));
        }
        if self.max_flops == 0 {
            return Err(invalid("max_flops", "must be positive"));
        }
        if self.max_params == 0 {
            return Err(invalid("max_params", "must be positive"));
        }
        if self.width_granularity == 0 {
            return Err(invalid("width_granularity", "must be positive"));
        }
        if let BlockKind::ResNetBottleneck { bottleneck_ratio } = self.block {
            if bottleneck_ratio == 0 || self.width_granularity % bottleneck_ratio != 0 {
                return Err(invalid(
                    "width_granularity",
                    format!("must be a multiple of the bottleneck ratio {bottleneck_ratio}"),
                ));
            }
        }
        for i in 0..m {
            let [lo, hi] = self.width_bounds[i];
            if lo == 0 || lo > hi {
                return Err(invalid(format!("width_bounds[{i}]"), format!("empty range [{lo}, {hi}]")));
            }
            if self.width_options(i).is_empty() {
                return Err(invalid(
                    format!("width_bounds[{i}]"),
                    format!("no multiple of {} in [{lo}, {hi}]", self.width_granularity),
                ));
            }
            let [lo, hi] = self.depth_bounds[i];
            if lo == 0 || lo > hi {
                return Err(invalid(format!("depth_bounds[{i}]"), format!("empty range [{lo}, {hi}]")));
            }
        }
        // The widest network in the box must be structurally valid; narrower
        // ones then are too.
        let corner = Candidate::new(
            (0..m).map(|i| *self.width_options(i).last().unwrap()).collect(),
            self.depth_bounds.iter().map(|b| b[1]).collect(),
        );
        let violations = self.network(&corner).validate();
        if let Some(v) = violations.first() {
            return Err(invalid(v.location.clone(), v.message.clone()));
        }
        Ok(())
    }

    /// Granular widths allowed for stage `i`, ascending.
    pub fn width_options(&self, i: usize) -> Vec<u32> {
        let g = self.width_granularity;
        let [lo, hi] = self.width_bounds[i];
        let first = lo.div_ceil(g);
        let last = hi / g;
        (first..=last).map(|k| k * g).collect()
    }

    pub fn depth_options(&self, i: usize) -> Vec<u32> {
        let [lo, hi] = self.depth_bounds[i];
        (lo..=hi).collect()
    }

    /// Number of lattice points (saturating).
    pub fn lattice_size(&self) -> u128 {
        (0..self.num_stages)
            .map(|i| self.width_options(i).len() as u128 * self.depth_options(i).len() as u128)
            .fold(1u128, |a, b| a.saturating_mul(b))
    }

    /// Lattice-bound violations of a candidate, if any.
    pub fn check_bounds(&self, cand: &Candidate) -> Result<(), String> {
        let m = self.num_stages;
        if cand.widths.len() != m || cand.depths.len() != m {
            return Err(format!(
                "candidate has {} widths and {} depths, problem has {m} stages",
                cand.widths.len(),
                cand.depths.len()
            ));
        }
        for i in 0..m {
            let w = cand.widths[i];
            let [lo, hi] = self.width_bounds[i];
            if w < lo || w > hi {
                return Err(format!("width {w} of stage {i} outside [{lo}, {hi}]"));
            }
            if w % self.width_granularity != 0 {
                return Err(format!(
                    "width {w} of stage {i} is not a multiple of {}",
                    self.width_granularity
                ));
            }
            let d = cand.depths[i];
            let [lo, hi] = self.depth_bounds[i];
            if d < lo || d > hi {
                return Err(format!("depth {d} of stage {i} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Network for a candidate without bound checks.
    pub(crate) fn network(&self, cand: &Candidate) -> NetworkSpec {
        NetworkSpec {
            input_resolution: self.input_resolution,
            input_channels: self.input_channels,
            stem: self.stem,
            stages: (0..self.num_stages)
                .map(|i| StageSpec {
                    block: self.block,
                    depth: cand.depths[i],
                    width: cand.widths[i],
                    kernel: self.kernels[i],
                    groups: 1,
                    downsample: self.downsample[i],
                })
                .collect(),
            head_channels: self.head_channels,
            num_classes: self.num_classes,
        }
    }

    pub fn from_toml(text: &str, allow_unknown: bool) -> Result<ProblemSpec, ProblemError> {
        let f: ProblemFile = parse_toml(text, allow_unknown)?;
        check_version(f.format_version, PROBLEM_FORMAT_VERSION)?;
        let block = BlockFields {
            block: f.block,
            bottleneck_ratio: f.bottleneck_ratio,
            expansion: f.expansion,
            se_ratio: f.se_ratio,
        }
        .to_kind("block")?;
        let m = f.stages;
        let prob = ProblemSpec {
            name: f.name,
            block,
            num_stages: m,
            alphas: f.alphas.unwrap_or_else(|| default_alphas(m)),
            beta: f.beta,
            rho0: f.rho0,
            max_flops: f.max_flops,
            max_params: f.max_params,
            input_resolution: f.input_resolution,
            input_channels: f.input_channels,
            num_classes: f.num_classes,
            stem: f.stem.into(),
            head_channels: f.head_channels,
            downsample: f.downsample,
            kernels: f.kernels.unwrap_or_else(|| vec![DEFAULT_KERNEL; m]),
            width_bounds: f.width_bounds,
            depth_bounds: f.depth_bounds,
            width_granularity: f.width_granularity,
            conventions: Conventions::CALIBRATED,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn to_toml(&self) -> Result<String, FormatError> {
        let b = BlockFields::from_kind(self.block);
        let f = ProblemFile {
            format_version: PROBLEM_FORMAT_VERSION,
            name: self.name.clone(),
            stages: self.num_stages,
            block: b.block,
            bottleneck_ratio: b.bottleneck_ratio,
            expansion: b.expansion,
            se_ratio: b.se_ratio,
            alphas: Some(self.alphas.clone()),
            beta: self.beta,
            rho0: self.rho0,
            max_params: self.max_params,
            max_flops: self.max_flops,
            input_resolution: self.input_resolution,
            input_channels: self.input_channels,
            num_classes: self.num_classes,
            head_channels: self.head_channels,
            width_granularity: self.width_granularity,
            downsample: self.downsample.clone(),
            kernels: Some(self.kernels.clone()),
            width_bounds: self.width_bounds.clone(),
            depth_bounds: self.depth_bounds.clone(),
            stem: self.stem.into(),
        };
        crate::format::to_toml(&f)
    }
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_granularity() -> u32 {
    DEFAULT_GRANULARITY
}
fn default_channels() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemFile {
    format_version: u32,
    name: String,
    stages: usize,
    block: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bottleneck_ratio: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expansion: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    se_ratio: Option<u32>,
    #[serde(default)]
    alphas: Option<Vec<f64>>,
    #[serde(default = "default_beta")]
    beta: f64,
    rho0: f64,
    max_params: u64,
    max_flops: u64,
    input_resolution: u32,
    #[serde(default = "default_channels")]
    input_channels: u32,
    num_classes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_channels: Option<u32>,
    #[serde(default = "default_granularity")]
    width_granularity: u32,
    downsample: Vec<bool>,
    #[serde(default)]
    kernels: Option<Vec<u32>>,
    width_bounds: Vec<[u32; 2]>,
    depth_bounds: Vec<[u32; 2]>,
    stem: StemFile,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TINY: &str = r#"
format_version = 1
name = "tiny"
stages = 2
block = "plain"
rho0 = 2.0
max_params = 1000000
max_flops = 100000000
input_resolution = 32
num_classes = 10
downsample = [false, true]
width_bounds = [[8, 32], [8, 32]]
depth_bounds = [[1, 3], [1, 3]]

[stem]
channels = 16
"#;

    #[test]
    fn parses_with_defaults() {
        let p = ProblemSpec::from_toml(TINY, false).unwrap();
        assert_eq!(p.num_stages, 2);
        assert_eq!(p.alphas, vec![1.0, 8.0]);
        assert_eq!(p.beta, 10.0);
        assert_eq!(p.width_granularity, 8);
        assert_eq!(p.kernels, vec![3, 3]);
        assert_eq!(p.width_options(0), vec![8, 16, 24, 32]);
        assert_eq!(p.lattice_size(), 144);
        let back = ProblemSpec::from_toml(&p.to_toml().unwrap(), false).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn rejects_inconsistent_problems() {
        let bad = TINY.replace("downsample = [false, true]", "downsample = [false]");
        let err = ProblemSpec::from_toml(&bad, false).unwrap_err();
        assert!(err.to_string().contains("downsample"), "{err}");

        let bad = TINY.replace("[[1, 3], [1, 3]]", "[[3, 1], [1, 3]]");
        let err = ProblemSpec::from_toml(&bad, false).unwrap_err();
        assert!(err.to_string().contains("depth_bounds[0]"), "{err}");

        let bad = TINY.replace("[[8, 32], [8, 32]]", "[[9, 15], [8, 32]]");
        let err = ProblemSpec::from_toml(&bad, false).unwrap_err();
        assert!(err.to_string().contains("no multiple of 8"), "{err}");

        let bad = TINY.replace("rho0 = 2.0", "rho0 = 2.0\nalphas = [1.0]");
        let err = ProblemSpec::from_toml(&bad, false).unwrap_err();
        assert!(err.to_string().contains("alphas"), "{err}");

        let bad = TINY.replace("rho0 = 2.0", "rho0 = 2.0\nsolver = \"ipopt\"");
        assert!(matches!(
            ProblemSpec::from_toml(&bad, false),
            Err(ProblemError::Format(FormatError::UnknownFields(_)))
        ));
    }

    #[test]
    fn bounds_are_checked() {
        let p = ProblemSpec::from_toml(TINY, false).unwrap();
        assert!(p.check_bounds(&Candidate::new(vec![8, 32], vec![1, 3])).is_ok());
        assert!(p.check_bounds(&Candidate::new(vec![12, 32], vec![1, 3])).is_err());
        assert!(p.check_bounds(&Candidate::new(vec![8, 40], vec![1, 3])).is_err());
        assert!(p.check_bounds(&Candidate::new(vec![8, 32], vec![0, 3])).is_err());
        assert!(p.check_bounds(&Candidate::new(vec![8], vec![1])).is_err());
    }
}
