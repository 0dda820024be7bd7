use archmp::catalog;
use archmp::format::{network_to_toml, parse_network};
use archmp::metrics::{average_width, depth_uniformity_penalty, flop_breakdown};
use archmp::{BlockKind, Conventions, NetworkSpec, StageSpec, StemSpec};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn width_list() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1e5, 1..200)
}

fn block() -> impl Strategy<Value = BlockKind> {
    prop_oneof![
        Just(BlockKind::PlainConvBnRelu),
        Just(BlockKind::ResNetBasic),
        Just(BlockKind::bottleneck()),
        (1u32..7, prop::option::of(Just(4u32))).prop_map(|(t, se)| BlockKind::mbconv(t, se)),
    ]
}

prop_compose! {
    fn network()(
        block in block(),
        stages in prop::collection::vec((1u32..4, 1u32..9, any::<bool>(), prop::sample::select(vec![3u32, 5])), 1..5),
        head in prop::option::of(Just(64u32)),
        stem_stride in 1u32..3,
    ) -> NetworkSpec {
        NetworkSpec {
            input_resolution: 64,
            input_channels: 3,
            stem: StemSpec { channels: 16, kernel: 3, stride: stem_stride, pool: false },
            stages: stages
                .into_iter()
                .map(|(d, w, ds, k)| StageSpec::new(block, d, 8 * w, ds).with_kernel(k))
                .collect(),
            head_channels: head,
            num_classes: 10,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn log_of_average_width_is_mean_log(w in width_list()) {
        let avg = average_width(&w).unwrap();
        let lhs = w.len() as f64 * avg.ln();
        let rhs: f64 = w.iter().map(|x| x.ln()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn rho_scales_inversely_with_width(w in width_list(), s in 1.0f64..64.0) {
        let rho = |v: &[f64]| v.len() as f64 / average_width(v).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * s).collect();
        prop_assert!(rel(rho(&scaled), rho(&w) / s) <= 1e-12);
    }

    #[test]
    fn q_is_permutation_invariant(d in prop::collection::vec(1u32..30, 1..8), seed in any::<u64>()) {
        let mut shuffled = d.clone();
        // deterministic Fisher-Yates from the seed
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(depth_uniformity_penalty(&d), depth_uniformity_penalty(&shuffled));
        let mut reversed = d.clone();
        reversed.reverse();
        prop_assert_eq!(depth_uniformity_penalty(&d), depth_uniformity_penalty(&reversed));
    }

    #[test]
    fn q_is_one_iff_depths_are_uniform(d in prop::collection::vec(1u32..30, 1..8)) {
        let uniform = d.iter().all(|&x| x == d[0]);
        prop_assert_eq!(depth_uniformity_penalty(&d) == 1.0, uniform);
        prop_assert!(depth_uniformity_penalty(&d) >= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expansion_is_deterministic_and_files_round_trip(net in network()) {
        prop_assume!(net.validate().is_empty());
        prop_assert_eq!(net.expand().unwrap(), net.expand().unwrap());
        let text = network_to_toml(&net).unwrap();
        let back = parse_network(&text, false).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(network_to_toml(&back).unwrap(), text);
    }

    #[test]
    fn doubling_resolution_quadruples_spatial_flops(net in network()) {
        prop_assume!(net.validate().is_empty());
        let conv = Conventions::CALIBRATED;
        let lo = flop_breakdown(&net.expand().unwrap(), &conv);
        let hi = flop_breakdown(&net.at_resolution(128).expand().unwrap(), &conv);
        // Ceil halving commutes with doubling only while every map stays even.
        let halvings = net.downsample_count() as u32;
        prop_assume!(64 >> halvings << halvings == 64 && halvings <= 6);
        prop_assert_eq!(hi.spatial, 4 * lo.spatial);
        prop_assert_eq!(hi.unit, lo.unit);
    }
}

#[test]
fn catalog_specs_round_trip() {
    for entry in catalog::all() {
        let text = network_to_toml(&entry.spec).unwrap();
        assert_eq!(parse_network(&text, false).unwrap(), entry.spec, "{}", entry.name);
    }
}
