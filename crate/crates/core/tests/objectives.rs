mod common;

use std::collections::BTreeMap;

use common::{
    brute_force_library_cost, matrix, random_dataset, rec, simulate_fleet_rate,
};

use portune::dataset::{build_slowdown_matrix, KernelInput, PenaltyPolicy};
use portune::objectives::{cost, fleet_rate, library_cost, CandidateSet, FleetSpec, Objective};

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn library_cost_matches_the_brute_force_oracle() {
    for seed in [3u64, 17, 99] {
        let ds = random_dataset(seed, 1, 3, 4, 0.15);
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        let scope = sm.scope_all();
        let set = CandidateSet::new(vec![0, 2], sm.n_variants()).unwrap();
        let got = library_cost(&sm, &set, &scope).unwrap();
        let want = brute_force_library_cost(&sm, &[0, 2], &scope);
        assert!(
            (got - want).abs() <= 1e-12 * want,
            "seed {seed}: {got} vs oracle {want}"
        );
    }
}

#[test]
fn fleet_rate_matches_the_event_simulation_on_a_mixed_instance() {
    // 2 devices x 3 inputs, mixed quantities, one unmeasured cell.
    let records = vec![
        rec("X", (1, 1, 1), &[0], 2.0),
        rec("X", (2, 1, 1), &[0], 4.0),
        rec("X", (3, 1, 1), &[0], 1.0),
        rec("X", (1, 1, 1), &[1], 1.0),
        rec("X", (2, 1, 1), &[1], 9.0),
        rec("Y", (1, 1, 1), &[0], 1.0),
        rec("Y", (2, 1, 1), &[0], 2.0),
        rec("Y", (3, 1, 1), &[0], 5.0),
        rec("Y", (3, 1, 1), &[1], 2.5),
    ];
    let ds = common::dataset(records);
    let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
    let scope = sm.scope_all();

    let device_instances: BTreeMap<String, u32> = [("X".into(), 2), ("Y".into(), 3)].into();
    let input_quantity: BTreeMap<KernelInput, f64> = [
        (KernelInput { m: 1, n: 1, k: 1 }, 1.0),
        (KernelInput { m: 2, n: 1, k: 1 }, 0.5),
        (KernelInput { m: 3, n: 1, k: 1 }, 2.0),
    ]
    .into();
    let fleet = FleetSpec::new(
        device_instances
            .iter()
            .map(|(d, q)| (d.clone(), *q as f64))
            .collect(),
        input_quantity.clone(),
    )
    .unwrap();

    let set = CandidateSet::new(vec![0, 1], sm.n_variants()).unwrap();
    let got = fleet_rate(&sm, &scope, &set, &fleet).unwrap();
    let chosen_configs = vec![sm.variants()[0].clone(), sm.variants()[1].clone()];
    let want = simulate_fleet_rate(
        &ds,
        &chosen_configs,
        &device_instances,
        &input_quantity,
        sm.penalty(),
    );
    assert!(
        (got - want).abs() <= 1e-9 * want,
        "closed form {got} vs simulation {want}"
    );
}

#[test]
fn hand_computed_two_device_rate() {
    // Best-in-set runtimes: X -> (2, 4, 1), Y -> (1, 2, 5).
    // quantity: X = 2, Y = 3; inputs = (1, 0.5, 2).
    // rate = 2 / (2*1 + 4*0.5 + 1*2) + 3 / (1*1 + 2*0.5 + 5*2) = 7/12.
    let records = vec![
        rec("X", (1, 1, 1), &[0], 2.0),
        rec("X", (2, 1, 1), &[0], 4.0),
        rec("X", (3, 1, 1), &[0], 1.0),
        rec("Y", (1, 1, 1), &[0], 1.0),
        rec("Y", (2, 1, 1), &[0], 2.0),
        rec("Y", (3, 1, 1), &[0], 5.0),
    ];
    let sm = matrix(records);
    let fleet = FleetSpec::new(
        [("X".into(), 2.0), ("Y".into(), 3.0)].into(),
        [
            (KernelInput { m: 1, n: 1, k: 1 }, 1.0),
            (KernelInput { m: 2, n: 1, k: 1 }, 0.5),
            (KernelInput { m: 3, n: 1, k: 1 }, 2.0),
        ]
        .into(),
    )
    .unwrap();
    let set = CandidateSet::new(vec![0], 1).unwrap();
    let rate = fleet_rate(&sm, &sm.scope_all(), &set, &fleet).unwrap();
    assert!((rate - 7.0 / 12.0).abs() < 1e-12);
}

fn random_subset_pair(
    rng: &mut ChaCha8Rng,
    n_variants: usize,
) -> (Vec<usize>, Vec<usize>) {
    let small_len = rng.random_range(1..=n_variants.max(2) - 1);
    let sample = rand::seq::index::sample(rng, n_variants, small_len);
    let mut small: Vec<usize> = sample.into_vec();
    small.sort_unstable();
    let mut large = small.clone();
    for v in 0..n_variants {
        if !large.contains(&v) && rng.random::<f64>() < 0.5 {
            large.push(v);
        }
    }
    if large.len() == small.len() {
        if let Some(extra) = (0..n_variants).find(|v| !large.contains(v)) {
            large.push(extra);
        }
    }
    large.sort_unstable();
    (small, large)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn adding_variants_never_hurts_either_objective(seed in 0u64..2000) {
        let ds = random_dataset(seed, 2, 3, 5, 0.2);
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        let scope = sm.scope_all();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let (small, large) = random_subset_pair(&mut rng, sm.n_variants());
        let small = CandidateSet::new(small, sm.n_variants()).unwrap();
        let large = CandidateSet::new(large, sm.n_variants()).unwrap();

        let lib_small = library_cost(&sm, &small, &scope).unwrap();
        let lib_large = library_cost(&sm, &large, &scope).unwrap();
        prop_assert!(lib_large <= lib_small * (1.0 + 1e-12));

        let fleet = FleetSpec::uniform(&sm);
        let rate_small = fleet_rate(&sm, &scope, &small, &fleet).unwrap();
        let rate_large = fleet_rate(&sm, &scope, &large, &fleet).unwrap();
        prop_assert!(rate_large >= rate_small * (1.0 - 1e-12));
    }

    #[test]
    fn permuting_scope_or_set_order_changes_nothing(seed in 0u64..2000) {
        let ds = random_dataset(seed, 2, 2, 4, 0.1);
        let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
        let mut scope = sm.scope_all();
        let set = CandidateSet::new(vec![0, 1, 3], sm.n_variants()).unwrap();
        let base = library_cost(&sm, &set, &scope).unwrap();
        scope.reverse();
        let permuted = library_cost(&sm, &set, &scope).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-12 * base);

        // CandidateSet normalizes member order on construction.
        let reordered = CandidateSet::new(vec![3, 1, 0], sm.n_variants()).unwrap();
        prop_assert_eq!(set.indices(), reordered.indices());
    }
}

#[test]
fn library_cost_is_at_least_one_and_one_only_with_oracle_cover() {
    let ds = random_dataset(8, 2, 3, 4, 0.0);
    let sm = build_slowdown_matrix(&ds, PenaltyPolicy::DatasetMax).unwrap();
    let scope = sm.scope_all();
    let full = CandidateSet::new((0..sm.n_variants()).collect(), sm.n_variants()).unwrap();
    assert!((library_cost(&sm, &full, &scope).unwrap() - 1.0).abs() < 1e-15);
    for v in 0..sm.n_variants() {
        let single = CandidateSet::new(vec![v], sm.n_variants()).unwrap();
        assert!(library_cost(&sm, &single, &scope).unwrap() >= 1.0);
    }
}

#[test]
fn cost_dispatches_by_objective_kind() {
    let sm = matrix(vec![rec("A", (1, 1, 1), &[0], 4.0)]);
    let set = CandidateSet::new(vec![0], 1).unwrap();
    let lib = cost(&Objective::LibraryGeomean, &sm, &set, &[0]).unwrap();
    assert_eq!(lib, library_cost(&sm, &set, &[0]).unwrap());

    let fleet = FleetSpec::uniform(&sm);
    let rate = fleet_rate(&sm, &[0], &set, &fleet).unwrap();
    let c = cost(&Objective::FleetRate { fleet }, &sm, &set, &[0]).unwrap();
    assert!((c - 1.0 / rate).abs() < 1e-15);
}

#[test]
fn element_wise_better_sets_never_cost_more() {
    // Variant 0 dominates variant 1 on every environment.
    let sm = matrix(vec![
        rec("A", (1, 1, 1), &[0], 1.0),
        rec("A", (1, 1, 1), &[1], 3.0),
        rec("B", (1, 1, 1), &[0], 2.0),
        rec("B", (1, 1, 1), &[1], 2.5),
    ]);
    let scope = sm.scope_all();
    let better = CandidateSet::new(vec![0], 2).unwrap();
    let worse = CandidateSet::new(vec![1], 2).unwrap();
    for objective in [
        Objective::LibraryGeomean,
        Objective::FleetRate {
            fleet: FleetSpec::uniform(&sm),
        },
    ] {
        let c_better = cost(&objective, &sm, &better, &scope).unwrap();
        let c_worse = cost(&objective, &sm, &worse, &scope).unwrap();
        assert!(c_better <= c_worse);
    }
}
