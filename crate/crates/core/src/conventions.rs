//! Counting conventions.
//!
//! Several quantities depend on bookkeeping choices that reference numbers in
//! the literature never spell out: which convolutions belong to the signal
//! path used for entropy and effectiveness, whether batch-norm affine
//! parameters are counted, and how the per-stage entropy is accumulated. The
//! pinned default is the combination selected by [`crate::catalog::calibrate`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::LayerRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conventions {
    /// Projection shortcuts count as entropy-path layers.
    pub shortcut_in_entropy: bool,
    /// The stem convolution opens the entropy path (attributed to stage 1).
    pub stem_in_entropy: bool,
    /// The 1×1 head convolution closes the entropy path (attributed to the last stage).
    pub head_in_entropy: bool,
    /// The classifier closes the entropy path (attributed to the last stage).
    pub classifier_in_entropy: bool,
    /// Batch-norm scale and shift count as parameters (2 per channel).
    pub bn_params: bool,
    /// Batch-norm affine transform counts 2 operations per output element.
    pub bn_flops: bool,
    /// H_i sums only stage i's own layers instead of the whole prefix.
    pub stagewise_entropy: bool,
}

impl Conventions {
    /// Convention set reproducing the reference effectiveness and budget
    /// columns. Checked by `calibrate`.
    pub const CALIBRATED: Conventions = Conventions {
        shortcut_in_entropy: false,
        stem_in_entropy: true,
        head_in_entropy: true,
        classifier_in_entropy: false,
        bn_params: true,
        bn_flops: true,
        stagewise_entropy: false,
    };

    /// Plain multiply-accumulate and weight counting, no normalization layers.
    pub const BARE: Conventions = Conventions {
        bn_params: false,
        bn_flops: false,
        ..Conventions::CALIBRATED
    };

    pub fn in_entropy_path(&self, role: LayerRole) -> bool {
        match role {
            LayerRole::Main => true,
            LayerRole::Stem => self.stem_in_entropy,
            LayerRole::Shortcut => self.shortcut_in_entropy,
            LayerRole::Head => self.head_in_entropy,
            LayerRole::Classifier => self.classifier_in_entropy,
            LayerRole::SqueezeExcite => false,
        }
    }

    /// All 2^7 flag combinations in a fixed order.
    pub fn all() -> Vec<Conventions> {
        (0u32..128)
            .map(|bits| {
                let b = |i: u32| bits & (1 << i) != 0;
                Conventions {
                    shortcut_in_entropy: b(0),
                    stem_in_entropy: b(1),
                    head_in_entropy: b(2),
                    classifier_in_entropy: b(3),
                    bn_params: b(4),
                    bn_flops: b(5),
                    stagewise_entropy: b(6),
                }
            })
            .collect()
    }

    /// Compact flag string, e.g. `shortcut=0 stem=1 ...`.
    pub fn describe(&self) -> String {
        let f = |b: bool| if b { 1 } else { 0 };
        format!(
            "shortcut={} stem={} head={} classifier={} bn_params={} bn_flops={} stagewise={}",
            f(self.shortcut_in_entropy),
            f(self.stem_in_entropy),
            f(self.head_in_entropy),
            f(self.classifier_in_entropy),
            f(self.bn_params),
            f(self.bn_flops),
            f(self.stagewise_entropy)
        )
    }

    /// Short hash identifying the convention set in reports.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions::CALIBRATED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_combinations_are_distinct() {
        let all = Conventions::all();
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), 128);
        assert!(all.contains(&Conventions::CALIBRATED));
    }

    #[test]
    fn fingerprint_is_stable_and_distinguishing() {
        assert_eq!(Conventions::CALIBRATED.fingerprint().len(), 12);
        assert_eq!(
            Conventions::CALIBRATED.fingerprint(),
            Conventions::default().fingerprint()
        );
        assert_ne!(
            Conventions::CALIBRATED.fingerprint(),
            Conventions::BARE.fingerprint()
        );
    }
}
