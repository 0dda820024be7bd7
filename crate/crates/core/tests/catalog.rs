use archmp::catalog::{self, calibrate};
use archmp::metrics::{self, flop_breakdown};
use archmp::{Conventions, LayerRole};

#[test]
fn calibration_selects_pinned_conventions() {
    let report = calibrate();
    println!("{}", report.to_markdown());
    assert!(report.passed());
    assert_eq!(report.selected, Conventions::CALIBRATED);
    // the entropy-path flags are pinned down uniquely by the data
    for flag in [
        "shortcut_in_entropy",
        "stem_in_entropy",
        "head_in_entropy",
        "classifier_in_entropy",
        "bn_flops",
    ] {
        assert!(report.decisive.contains(&flag), "{flag} not decisive");
    }
    let path_sets: std::collections::HashSet<_> = report
        .matching
        .iter()
        .map(|c| {
            (
                c.shortcut_in_entropy,
                c.stem_in_entropy,
                c.head_in_entropy,
                c.classifier_in_entropy,
            )
        })
        .collect();
    assert_eq!(path_sets.len(), 1);
}

#[test]
fn batch_norm_flag_never_moves_rho() {
    for entry in catalog::all() {
        let with = Conventions { bn_params: true, bn_flops: true, ..Conventions::CALIBRATED };
        let without = Conventions { bn_params: false, bn_flops: false, ..Conventions::CALIBRATED };
        assert_eq!(
            metrics::effectiveness(&entry.spec, &with).unwrap(),
            metrics::effectiveness(&entry.spec, &without).unwrap()
        );
    }
}

#[test]
fn resnet50_flops_scale_by_four_at_double_resolution() {
    let spec = catalog::reference("resnet50").unwrap().spec;
    let conv = Conventions::CALIBRATED;
    let lo = flop_breakdown(&spec.expand().unwrap(), &conv);
    let hi = flop_breakdown(&spec.at_resolution(448).expand().unwrap(), &conv);
    assert_eq!(hi.spatial, 4 * lo.spatial);
    assert_eq!(hi.unit, lo.unit);
}

#[test]
fn resnet50_has_54_convolutions() {
    // stem + 16 bottlenecks × 3 + 4 projections + classifier
    let layers = catalog::reference("resnet50").unwrap().spec.expand().unwrap();
    assert_eq!(layers.len(), 54);
    assert_eq!(layers.iter().filter(|l| l.role == LayerRole::Shortcut).count(), 4);
    assert_eq!(layers.iter().filter(|l| l.role == LayerRole::Main).count(), 48);
    let fc = layers.last().unwrap();
    assert_eq!(metrics::layer_params(fc, &Conventions::CALIBRATED), 2_049_000);
}

#[test]
fn downsample_count_matches_strided_main_layers() {
    for entry in catalog::all() {
        let layers = entry.spec.expand().unwrap();
        let strided = layers
            .iter()
            .filter(|l| l.stride == 2 && matches!(l.role, LayerRole::Main | LayerRole::Stem))
            .count();
        assert_eq!(strided, entry.spec.downsample_count(), "{}", entry.name);
    }
}
