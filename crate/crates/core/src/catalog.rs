//! Reference architectures and convention calibration.
//!
//! The catalog holds ResNet-18/34/50, MobileNetV2 and EfficientNet-B0 as
//! architecture files under `data/catalog/`, transcribed from the original
//! architecture descriptions (He et al. 2016; Sandler et al. 2018; Tan & Le
//! 2019). Each entry carries the budget and effectiveness figures commonly
//! reported for it at 224×224 input.

use serde::Serialize;

use crate::arch::NetworkSpec;
use crate::conventions::Conventions;
use crate::format::{self, FormatError};
use crate::metrics::{self, MetricError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expected {
    pub params: u64,
    pub flops: u64,
    pub rho: f64,
    /// Decimal places the effectiveness figure is quoted to.
    pub rho_decimals: u32,
    pub rho_tolerance: f64,
    /// Relative tolerances.
    pub params_tolerance: f64,
    pub flops_tolerance: f64,
    pub source: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub spec: NetworkSpec,
    pub expected: Expected,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown catalog entry `{0}` (known: {known})", known = NAMES.join(", "))]
    Unknown(String),
    #[error("catalog entry `{name}` is malformed: {source}")]
    Malformed {
        name: String,
        #[source]
        source: FormatError,
    },
}

struct Raw {
    name: &'static str,
    text: &'static str,
    expected: Expected,
}

const RESNET_SOURCE: &str = "ImageNet-1K ResNet comparison table";
const MOBILE_SOURCE: &str = "ImageNet-1K mobile-setting comparison table";

const RAW: &[Raw] = &[
    Raw {
        name: "resnet18",
        text: include_str!("../data/catalog/resnet18.toml"),
        expected: Expected {
            params: 11_700_000,
            flops: 1_800_000_000,
            rho: 0.01,
            rho_decimals: 2,
            rho_tolerance: 0.01,
            params_tolerance: 0.02,
            flops_tolerance: 0.03,
            source: RESNET_SOURCE,
        },
    },
    Raw {
        name: "resnet34",
        text: include_str!("../data/catalog/resnet34.toml"),
        expected: Expected {
            params: 21_800_000,
            flops: 3_600_000_000,
            rho: 0.02,
            rho_decimals: 2,
            rho_tolerance: 0.01,
            params_tolerance: 0.02,
            flops_tolerance: 0.03,
            source: RESNET_SOURCE,
        },
    },
    Raw {
        name: "resnet50",
        text: include_str!("../data/catalog/resnet50.toml"),
        expected: Expected {
            params: 25_600_000,
            flops: 4_100_000_000,
            rho: 0.09,
            rho_decimals: 2,
            rho_tolerance: 0.01,
            params_tolerance: 0.02,
            flops_tolerance: 0.03,
            source: RESNET_SOURCE,
        },
    },
    Raw {
        name: "mobilenetv2",
        text: include_str!("../data/catalog/mobilenetv2.toml"),
        expected: Expected {
            params: 3_500_000,
            flops: 320_000_000,
            rho: 0.9,
            rho_decimals: 1,
            rho_tolerance: 0.1,
            params_tolerance: 0.02,
            flops_tolerance: 0.03,
            source: MOBILE_SOURCE,
        },
    },
    Raw {
        name: "efficientnet-b0",
        text: include_str!("../data/catalog/efficientnet-b0.toml"),
        expected: Expected {
            params: 5_300_000,
            flops: 390_000_000,
            rho: 0.6,
            rho_decimals: 1,
            rho_tolerance: 0.1,
            params_tolerance: 0.02,
            flops_tolerance: 0.03,
            source: MOBILE_SOURCE,
        },
    },
];

pub const NAMES: &[&str] = &["resnet18", "resnet34", "resnet50", "mobilenetv2", "efficientnet-b0"];

fn normalize(name: &str) -> String {
    name.to_ascii_lowercase().replace(['_', ' '], "-").replace("resnet-", "resnet")
}

/// Raw architecture file of a catalog entry.
pub fn source_text(name: &str) -> Result<&'static str, CatalogError> {
    let key = normalize(name);
    RAW.iter()
        .find(|r| r.name == key)
        .map(|r| r.text)
        .ok_or_else(|| CatalogError::Unknown(name.to_string()))
}

pub fn reference(name: &str) -> Result<CatalogEntry, CatalogError> {
    let key = normalize(name);
    let raw = RAW
        .iter()
        .find(|r| r.name == key)
        .ok_or_else(|| CatalogError::Unknown(name.to_string()))?;
    let spec = format::parse_network(raw.text, false).map_err(|source| CatalogError::Malformed {
        name: raw.name.to_string(),
        source,
    })?;
    Ok(CatalogEntry {
        name: raw.name,
        spec,
        expected: raw.expected,
    })
}

pub fn all() -> Vec<CatalogEntry> {
    NAMES
        .iter()
        .map(|n| reference(n).expect("shipped catalog parses"))
        .collect()
}

fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

/// Measured values of one entry under one convention set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryCheck {
    pub name: &'static str,
    pub rho: f64,
    pub params: u64,
    pub flops: u64,
    /// Within tolerance and equal to the quoted figure at its precision.
    pub rho_ok: bool,
    pub params_ok: bool,
    pub flops_ok: bool,
}

impl EntryCheck {
    pub fn ok(&self) -> bool {
        self.rho_ok && self.params_ok && self.flops_ok
    }
}

fn relative_error(actual: u64, expected: u64) -> f64 {
    (actual as f64 - expected as f64).abs() / expected as f64
}

pub fn check_entry(entry: &CatalogEntry, conv: &Conventions) -> Result<EntryCheck, MetricError> {
    let layers = entry.spec.expand()?;
    let rho = metrics::effectiveness_of_layers(&layers, entry.spec.stages.len(), conv)?;
    let params = metrics::params_of_layers(&layers, conv);
    let flops = metrics::flops_of_layers(&layers, conv);
    let e = &entry.expected;
    let quoted = round_to(rho, e.rho_decimals) == round_to(e.rho, e.rho_decimals);
    Ok(EntryCheck {
        name: entry.name,
        rho,
        params,
        flops,
        rho_ok: quoted && (rho - e.rho).abs() <= e.rho_tolerance + 1e-12,
        params_ok: relative_error(params, e.params) <= e.params_tolerance,
        flops_ok: relative_error(flops, e.flops) <= e.flops_tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConventionRow {
    pub conventions: Conventions,
    pub checks: Vec<EntryCheck>,
}

impl ConventionRow {
    pub fn matches(&self) -> bool {
        self.checks.iter().all(EntryCheck::ok)
    }

    pub fn failures(&self) -> usize {
        self.checks
            .iter()
            .map(|c| (!c.rho_ok) as usize + (!c.params_ok) as usize + (!c.flops_ok) as usize)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub rows: Vec<ConventionRow>,
    /// Every convention set reproducing all reference figures.
    pub matching: Vec<Conventions>,
    /// Flags that take the same value in every matching set.
    pub decisive: Vec<&'static str>,
    /// The matching set retained as default, or the closest one when nothing
    /// matches.
    pub selected: Conventions,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        !self.matching.is_empty()
    }

    /// Markdown summary with the per-entry table for the selected set.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("# Convention calibration\n\n");
        s.push_str(&format!(
            "Swept {} convention sets over {} reference networks; {} reproduce every figure.\n\n",
            self.rows.len(),
            NAMES.len(),
            self.matching.len()
        ));
        s.push_str("Matching sets:\n\n");
        for c in &self.matching {
            s.push_str(&format!("- `{}`\n", c.describe()));
        }
        s.push_str(&format!(
            "\nFlags fixed by the data: {}\n\nSelected: `{}` (fingerprint `{}`)\n\n",
            self.decisive.join(", "),
            self.selected.describe(),
            self.selected.fingerprint()
        ));
        s.push_str("| network | rho | expected | params | expected | flops | expected | ok |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        let row = self
            .rows
            .iter()
            .find(|r| r.conventions == self.selected)
            .expect("selected set is one of the rows");
        for (c, e) in row.checks.iter().zip(all()) {
            s.push_str(&format!(
                "| {} | {:.4} | {} | {} | {} | {} | {} | {} |\n",
                c.name,
                c.rho,
                e.expected.rho,
                c.params,
                e.expected.params,
                c.flops,
                e.expected.flops,
                if c.ok() { "yes" } else { "NO" }
            ));
        }
        s
    }
}

/// Sweeps every convention flag combination over the catalog.
///
/// Among matching sets, flags the data cannot decide keep the conventional
/// choice: batch-norm parameters counted, cumulative stage entropy.
pub fn calibrate() -> CalibrationReport {
    let entries = all();
    let rows: Vec<ConventionRow> = Conventions::all()
        .into_iter()
        .map(|conventions| ConventionRow {
            conventions,
            checks: entries
                .iter()
                .map(|e| check_entry(e, &conventions).expect("catalog entries are valid"))
                .collect(),
        })
        .collect();
    let matching: Vec<Conventions> = rows
        .iter()
        .filter(|r| r.matches())
        .map(|r| r.conventions)
        .collect();

    let flags: [(&'static str, fn(&Conventions) -> bool); 7] = [
        ("shortcut_in_entropy", |c| c.shortcut_in_entropy),
        ("stem_in_entropy", |c| c.stem_in_entropy),
        ("head_in_entropy", |c| c.head_in_entropy),
        ("classifier_in_entropy", |c| c.classifier_in_entropy),
        ("bn_params", |c| c.bn_params),
        ("bn_flops", |c| c.bn_flops),
        ("stagewise_entropy", |c| c.stagewise_entropy),
    ];
    let decisive = if matching.is_empty() {
        Vec::new()
    } else {
        flags
            .iter()
            .filter(|(_, get)| matching.iter().all(|c| get(c) == get(&matching[0])))
            .map(|(name, _)| *name)
            .collect()
    };

    let preference = |c: &Conventions| (!c.bn_params as u8, c.stagewise_entropy as u8);
    let selected = if matching.is_empty() {
        rows.iter()
            .min_by_key(|r| (r.failures(), preference(&r.conventions)))
            .map(|r| r.conventions)
            .expect("non-empty sweep")
    } else {
        *matching.iter().min_by_key(|c| preference(c)).expect("non-empty")
    };
    CalibrationReport {
        rows,
        matching,
        decisive,
        selected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        for n in NAMES {
            let e = reference(n).unwrap();
            assert!(e.spec.validate().is_empty(), "{n}");
            assert!(e.spec.expand().is_ok());
        }
        assert_eq!(reference("ResNet-50").unwrap().name, "resnet50");
        assert_eq!(reference("EfficientNet_B0").unwrap().name, "efficientnet-b0");
        assert!(matches!(reference("vgg16"), Err(CatalogError::Unknown(_))));
    }

    #[test]
    fn expected_values() {
        let r50 = reference("resnet50").unwrap().expected;
        assert_eq!((r50.params, r50.flops, r50.rho), (25_600_000, 4_100_000_000, 0.09));
        let b0 = reference("efficientnet-b0").unwrap().expected;
        assert_eq!((b0.params, b0.flops, b0.rho), (5_300_000, 390_000_000, 0.6));
        let r34 = reference("resnet34").unwrap().expected;
        assert_eq!((r34.params, r34.flops, r34.rho), (21_800_000, 3_600_000_000, 0.02));
    }

    #[test]
    fn catalog_round_trips() {
        for e in all() {
            let text = format::network_to_toml(&e.spec).unwrap();
            assert_eq!(format::parse_network(&text, false).unwrap(), e.spec);
        }
    }
}
