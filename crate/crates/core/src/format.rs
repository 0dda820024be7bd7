//! Text file formats.
//!
//! Architectures, problems and reports are TOML documents carrying a
//! `format_version` key. Readers reject keys they do not know unless
//! `allow_unknown` is set; see `docs/formats.md` for the schemas.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::arch::{BlockKind, NetworkSpec, StageSpec, StemSpec, DEFAULT_KERNEL};

pub const ARCH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("empty document")]
    Empty,
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unknown field(s): {}", .0.join(", "))]
    UnknownFields(Vec<String>),
    #[error("unsupported format_version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Deserializes a TOML document, collecting keys the target type ignores.
pub fn parse_toml<T: DeserializeOwned>(text: &str, allow_unknown: bool) -> Result<T, FormatError> {
    if text.trim().is_empty() {
        return Err(FormatError::Empty);
    }
    let de = toml::Deserializer::new(text);
    let mut unknown = Vec::new();
    let value: T = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))?;
    if !unknown.is_empty() && !allow_unknown {
        return Err(FormatError::UnknownFields(unknown));
    }
    Ok(value)
}

pub(crate) fn check_version(found: u32, supported: u32) -> Result<(), FormatError> {
    if found != supported {
        return Err(FormatError::Version { found, supported });
    }
    Ok(())
}

/// Block identity as written in files: a tag plus its structure parameters.
#[derive(Debug, Clone, Default)]
pub(crate) struct BlockFields {
    pub block: String,
    pub bottleneck_ratio: Option<u32>,
    pub expansion: Option<u32>,
    pub se_ratio: Option<u32>,
}

impl BlockFields {
    pub fn from_kind(kind: BlockKind) -> Self {
        let mut f = BlockFields {
            block: kind.tag().to_string(),
            ..Default::default()
        };
        match kind {
            BlockKind::ResNetBottleneck { bottleneck_ratio } => {
                f.bottleneck_ratio = Some(bottleneck_ratio)
            }
            BlockKind::MobileNetV2Se {
                expansion,
                se_ratio,
            } => {
                f.expansion = Some(expansion);
                f.se_ratio = se_ratio;
            }
            _ => {}
        }
        f
    }

    pub fn to_kind(&self, at: &str) -> Result<BlockKind, FormatError> {
        let field_err = |message: String| FormatError::Field {
            field: at.to_string(),
            message,
        };
        let stray = |name: &str, present: bool| -> Result<(), FormatError> {
            if present {
                Err(field_err(format!("`{name}` does not apply to block `{}`", self.block)))
            } else {
                Ok(())
            }
        };
        match self.block.as_str() {
            "plain" | "resnet_basic" => {
                stray("bottleneck_ratio", self.bottleneck_ratio.is_some())?;
                stray("expansion", self.expansion.is_some())?;
                stray("se_ratio", self.se_ratio.is_some())?;
                Ok(if self.block == "plain" {
                    BlockKind::PlainConvBnRelu
                } else {
                    BlockKind::ResNetBasic
                })
            }
            "resnet_bottleneck" => {
                stray("expansion", self.expansion.is_some())?;
                stray("se_ratio", self.se_ratio.is_some())?;
                Ok(BlockKind::ResNetBottleneck {
                    bottleneck_ratio: self.bottleneck_ratio.unwrap_or(4),
                })
            }
            "mbconv" => {
                stray("bottleneck_ratio", self.bottleneck_ratio.is_some())?;
                let expansion = self
                    .expansion
                    .ok_or_else(|| field_err("`mbconv` requires `expansion`".into()))?;
                Ok(BlockKind::MobileNetV2Se {
                    expansion,
                    se_ratio: self.se_ratio,
                })
            }
            other => Err(field_err(format!(
                "unknown block `{other}` (expected plain, resnet_basic, resnet_bottleneck or mbconv)"
            ))),
        }
    }
}

fn default_kernel() -> u32 {
    DEFAULT_KERNEL
}
fn default_one() -> u32 {
    1
}
fn default_channels() -> u32 {
    3
}
fn is_one(v: &u32) -> bool {
    *v == 1
}
fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct StemFile {
    pub channels: u32,
    #[serde(default = "default_kernel")]
    pub kernel: u32,
    #[serde(default = "default_one")]
    pub stride: u32,
    #[serde(default)]
    pub pool: bool,
}

impl From<StemSpec> for StemFile {
    fn from(s: StemSpec) -> Self {
        StemFile {
            channels: s.channels,
            kernel: s.kernel,
            stride: s.stride,
            pool: s.pool,
        }
    }
}

impl From<StemFile> for StemSpec {
    fn from(s: StemFile) -> Self {
        StemSpec {
            channels: s.channels,
            kernel: s.kernel,
            stride: s.stride,
            pool: s.pool,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageFile {
    block: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bottleneck_ratio: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expansion: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    se_ratio: Option<u32>,
    depth: u32,
    width: u32,
    #[serde(default = "default_kernel")]
    kernel: u32,
    #[serde(default = "default_one", skip_serializing_if = "is_one")]
    groups: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    downsample: bool,
}

impl StageFile {
    fn block_fields(&self) -> BlockFields {
        BlockFields {
            block: self.block.clone(),
            bottleneck_ratio: self.bottleneck_ratio,
            expansion: self.expansion,
            se_ratio: self.se_ratio,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchFile {
    format_version: u32,
    input_resolution: u32,
    #[serde(default = "default_channels")]
    input_channels: u32,
    num_classes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_channels: Option<u32>,
    stem: StemFile,
    stages: Vec<StageFile>,
}

/// Parses an architecture file. Structural validity is checked separately by
/// [`NetworkSpec::validate`].
pub fn parse_network(text: &str, allow_unknown: bool) -> Result<NetworkSpec, FormatError> {
    let file: ArchFile = parse_toml(text, allow_unknown)?;
    check_version(file.format_version, ARCH_FORMAT_VERSION)?;
    let stages = file
        .stages
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(StageSpec {
                block: s.block_fields().to_kind(&format!("stages[{i}]"))?,
                depth: s.depth,
                width: s.width,
                kernel: s.kernel,
                groups: s.groups,
                downsample: s.downsample,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(NetworkSpec {
        input_resolution: file.input_resolution,
        input_channels: file.input_channels,
        stem: file.stem.into(),
        stages,
        head_channels: file.head_channels,
        num_classes: file.num_classes,
    })
}

pub fn network_to_toml(net: &NetworkSpec) -> Result<String, FormatError> {
    let file = ArchFile {
        format_version: ARCH_FORMAT_VERSION,
        input_resolution: net.input_resolution,
        input_channels: net.input_channels,
        num_classes: net.num_classes,
        head_channels: net.head_channels,
        stem: net.stem.into(),
        stages: net
            .stages
            .iter()
            .map(|s| {
                let b = BlockFields::from_kind(s.block);
                StageFile {
                block: b.block,
                bottleneck_ratio: b.bottleneck_ratio,
                expansion: b.expansion,
                se_ratio: b.se_ratio,
                depth: s.depth,
                width: s.width,
                kernel: s.kernel,
                groups: s.groups,
                downsample: s.downsample,
            }})
            .collect(),
    };
    Ok(toml::to_string(&file)?)
}

/// Serializes any report type in the same family.
pub fn to_toml<T: Serialize>(value: &T) -> Result<String, FormatError> {
    Ok(toml::to_string(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
format_version = 1
input_resolution = 32
num_classes = 10

[stem]
channels = 16
kernel = 3

[[stages]]
block = "resnet_basic"
depth = 2
width = 16

[[stages]]
block = "mbconv"
expansion = 6
se_ratio = 4
depth = 1
width = 24
kernel = 5
downsample = true
"#;

    #[test]
    fn parses_defaults() {
        let net = parse_network(SMALL, false).unwrap();
        assert_eq!(net.input_channels, 3);
        assert_eq!(net.stem.stride, 1);
        assert!(!net.stem.pool);
        assert_eq!(net.stages[0].kernel, 3);
        assert_eq!(net.stages[0].groups, 1);
        assert_eq!(net.stages[1].block, BlockKind::mbconv(6, Some(4)));
        assert_eq!(net.stages[1].kernel, 5);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn round_trips() {
        let net = parse_network(SMALL, false).unwrap();
        let text = network_to_toml(&net).unwrap();
        let back = parse_network(&text, false).unwrap();
        assert_eq!(net, back);
        assert_eq!(text, network_to_toml(&back).unwrap());
    }

    #[test]
    fn unknown_fields_rejected_unless_allowed() {
        let text = SMALL.replace("num_classes = 10", "num_classes = 10\ncolor = \"red\"");
        match parse_network(&text, false) {
            Err(FormatError::UnknownFields(f)) => assert_eq!(f, vec!["color".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(parse_network(&text, true).is_ok());

        let text = SMALL.replace("width = 16", "width = 16\ndilation = 2");
        match parse_network(&text, false) {
            Err(FormatError::UnknownFields(f)) => assert_eq!(f, vec!["stages.0.dilation".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(parse_network(&text, true).is_ok());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(parse_network("", false), Err(FormatError::Empty)));
        assert!(matches!(parse_network("   \n", false), Err(FormatError::Empty)));
        let text = SMALL.replace("format_version = 1", "format_version = 9");
        assert!(matches!(parse_network(&text, false), Err(FormatError::Version { found: 9, .. })));
        let text = SMALL.replace("\"resnet_basic\"", "\"transformer\"");
        assert!(matches!(parse_network(&text, false), Err(FormatError::Field { .. })));
        let text = SMALL.replace("expansion = 6\n", "");
        assert!(matches!(parse_network(&text, false), Err(FormatError::Field { .. })));
        let text = SMALL.replace("width = 16", "width = \"wide\"");
        let err = parse_network(&text, false).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
