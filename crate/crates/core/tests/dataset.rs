mod common;

use common::{brute_force_library_cost, dataset, hand_records, matrix, random_dataset, rec};
use common::{HAND_PENALTY, HAND_SLOWDOWNS};

use portune::dataset::{
    build_slowdown_matrix, generate_synthetic, KernelInput, PenaltyPolicy, PerformanceDataset,
    SyntheticSpec,
};

use proptest::prelude::*;

#[test]
fn hand_computed_matrix_matches_cell_for_cell() {
    let sm = matrix(hand_records());
    assert_eq!(sm.n_environments(), 3);
    assert_eq!(sm.n_variants(), 4);
    assert_eq!(sm.penalty(), HAND_PENALTY);
    for (e, row) in HAND_SLOWDOWNS.iter().enumerate() {
        for (v, want) in row.iter().enumerate() {
            assert!(
                (sm.value(e, v) - want).abs() < 1e-12,
                "cell ({e},{v}): got {}, want {want}",
                sm.value(e, v)
            );
        }
    }
    // The single missing measurement is (B, v2).
    for e in 0..3 {
        for v in 0..4 {
            assert_eq!(sm.is_valid(e, v), !(e == 1 && v == 2));
        }
    }
}

#[test]
fn planted_pair_is_the_unique_optimum_among_all_45_pairs() {
    let spec = SyntheticSpec {
        devices: 2,
        inputs: vec![
            KernelInput { m: 256, n: 256, k: 256 },
            KernelInput { m: 512, n: 256, k: 256 },
            KernelInput { m: 1024, n: 256, k: 256 },
            KernelInput { m: 4096, n: 256, k: 256 },
        ],
        variants: 10,
        specialists: 2,
        gap: 2.0,
        gap_spread: 0.0,
        param_arity: 16,
    };
    let planted = spec.generate(7).unwrap();
    let sm = build_slowdown_matrix(&planted.dataset, PenaltyPolicy::DatasetMax).unwrap();
    let scope = sm.scope_all();
    let specialist_cols: Vec<usize> = planted
        .specialists
        .iter()
        .map(|s| sm.variants().iter().position(|v| v == s).unwrap())
        .collect();

    // Missing either specialist leaves at least one half of the 8
    // environments at slowdown >= gap.
    let bound = spec.gap.powf(4.0 / 8.0);

    let mut planted_cost = None;
    let mut others = Vec::new();
    for a in 0..10 {
        for b in (a + 1)..10 {
            let cost = brute_force_library_cost(&sm, &[a, b], &scope);
            if specialist_cols.contains(&a) && specialist_cols.contains(&b) {
                planted_cost = Some(cost);
            } else {
                others.push(cost);
            }
        }
    }
    assert_eq!(others.len(), 44);
    let planted_cost = planted_cost.expect("specialist pair enumerated");
    assert!((planted_cost - 1.0).abs() < 1e-12);
    for cost in others {
        assert!(cost >= bound - 1e-9, "pair cost {cost} below bound {bound}");
    }
}

#[test]
fn canonical_serialization_round_trips() {
    let ds = random_dataset(41, 3, 4, 6, 0.2);
    let text = ds.to_canonical_string().unwrap();
    let back = PerformanceDataset::read_canonical(text.as_bytes()).unwrap();
    assert_eq!(ds, back);
    assert_eq!(text, back.to_canonical_string().unwrap());
}

#[test]
fn clblast_ingest_preserves_device_metadata_through_round_trip() {
    let db = r#"{"sections": [
        {"kernel_family": "xgemm", "device": "GeForce", "device_vendor": "NVIDIA",
         "device_compute_units": 20, "device_driver": "381.22",
         "arg_m": 1024, "arg_n": 1024, "arg_k": 1024,
         "results": [{"time": 0.5, "parameters": "KWG=32 MWG=64"},
                     {"time": 0.25, "parameters": "KWG=16 MWG=64"}]}
    ]}"#;
    let (ds, _) = portune::dataset::ingest_clblast_db(db.as_bytes()).unwrap();
    let text = ds.to_canonical_string().unwrap();
    let back = PerformanceDataset::read_canonical(text.as_bytes()).unwrap();
    assert_eq!(ds, back);
    let device = &back.devices()[0];
    assert_eq!(device.vendor.as_deref(), Some("NVIDIA"));
    assert_eq!(device.compute_units, Some(20));
}

#[test]
fn record_count_bound_is_tight_exactly_when_mask_is_full() {
    let full = random_dataset(5, 2, 3, 4, 0.0);
    let sm = build_slowdown_matrix(&full, PenaltyPolicy::DatasetMax).unwrap();
    assert_eq!(full.records().len(), sm.n_environments() * sm.n_variants());
    assert_eq!(sm.valid_cells(), sm.n_environments() * sm.n_variants());

    let sparse = random_dataset(5, 2, 3, 4, 0.4);
    let sm = build_slowdown_matrix(&sparse, PenaltyPolicy::DatasetMax).unwrap();
    assert!(sparse.records().len() < sm.n_environments() * sm.n_variants());
    assert_eq!(sparse.records().len(), sm.valid_cells());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_row_minimum_over_valid_cells_is_exactly_one(
        seed in 0u64..1000,
        devices in 1usize..4,
        inputs in 1usize..4,
        variants in 1usize..6,
        missing in 0.0f64..0.5,
    ) {
        let ds = random_dataset(seed, devices, inputs, variants, missing);
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        for e in 0..sm.n_environments() {
            let min_valid = (0..sm.n_variants())
                .filter(|&v| sm.is_valid(e, v))
                .map(|v| sm.value(e, v))
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(min_valid, 1.0);
        }
    }

    #[test]
    fn slowdowns_are_invariant_under_per_environment_runtime_scaling(
        seed in 0u64..1000,
        scale in prop::sample::select(vec![0.001f64, 0.25, 3.0, 1.0e3, 7.5e-2]),
    ) {
        let ds = random_dataset(seed, 2, 2, 4, 0.2);
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();

        // Scale every runtime of the first environment.
        let target = ds.environments()[0].clone();
        let scaled_records = ds
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.env == target {
                    r.runtime_ms *= scale;
                }
                r
            })
            .collect();
        let scaled = PerformanceDataset::new(scaled_records, ds.timing()).unwrap();
        let sm2 = build_slowdown_matrix(&scaled, PenaltyPolicy::DatasetMax).unwrap();

        prop_assert_eq!(sm.n_environments(), sm2.n_environments());
        prop_assert_eq!(sm.n_variants(), sm2.n_variants());
        for e in 0..sm.n_environments() {
            for v in 0..sm.n_variants() {
                let (a, b) = (sm.value(e, v), sm2.value(e, v));
                prop_assert!((a - b).abs() <= 1e-12 * a.max(b));
            }
        }
    }

    #[test]
    fn synthetic_generation_is_reproducible(seed in 0u64..500) {
        let spec = SyntheticSpec {
            devices: 2,
            inputs: vec![
                KernelInput { m: 256, n: 256, k: 256 },
                KernelInput { m: 512, n: 512, k: 512 },
            ],
            variants: 6,
            specialists: 2,
            gap: 2.0,
            gap_spread: 0.3,
            param_arity: 8,
        };
        let a = generate_synthetic(&spec, seed).unwrap();
        let b = generate_synthetic(&spec, seed).unwrap();
        prop_assert_eq!(a.to_canonical_string().unwrap(), b.to_canonical_string().unwrap());
    }
}

#[test]
fn duplicate_and_oracle_tie_handling_is_deterministic() {
    // Two configs tie for the oracle; the lexicographically smaller wins.
    let ds = dataset(vec![
        rec("A", (1, 1, 1), &[5, 0], 2.0),
        rec("A", (1, 1, 1), &[1, 9], 2.0),
        rec("A", (1, 1, 1), &[9, 9], 4.0),
    ]);
    let (best, cfg) = ds.oracle(&ds.environments()[0]).unwrap();
    assert_eq!(best, 2.0);
    assert_eq!(cfg.0, vec![1, 9]);
}
