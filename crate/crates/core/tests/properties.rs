//! Property tests for the structural invariants.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use lthmm::engine::{f1_binary, hamming_metric};
use lthmm::inference::{count_transitions, marginal_loglik, normalize_transitions};
use lthmm::rng::dirichlet_draw;
use lthmm::similarity::{
    compute_phi, hamming_distances, half_sq_euclidean_distances, BinaryStateMatrix, KernelKind,
    LocationMatrix, StateSpace,
};
use lthmm::RandomStream;

fn eta_strategy(states: usize, dims: usize) -> impl Strategy<Value = Array2<u8>> {
    proptest::collection::vec(0u8..=1, states * dims)
        .prop_map(move |v| Array2::from_shape_vec((states, dims), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_symmetric_unit_diagonal_in_range(
        eta in eta_strategy(5, 4),
        lambda in 0.0f64..4.0,
    ) {
        let space = StateSpace::Binary(BinaryStateMatrix {
            eta,
            mu: Array1::from_elem(4, 0.5),
            a_mu: 1.0,
            b_mu: 1.0,
        });
        let phi = compute_phi(KernelKind::LaplacianHamming, lambda, &space, 5).unwrap();
        for a in 0..5 {
            prop_assert_eq!(phi[(a, a)], 1.0);
            for b in 0..5 {
                prop_assert!(phi[(a, b)] > 0.0 && phi[(a, b)] <= 1.0);
                prop_assert_eq!(phi[(a, b)], phi[(b, a)]);
            }
        }
    }

    #[test]
    fn distances_symmetric_zero_diagonal(
        eta in eta_strategy(4, 3),
        locs in proptest::collection::vec(-3.0f64..3.0, 8),
    ) {
        let d = hamming_distances(&eta);
        let loc = LocationMatrix {
            loc: Array2::from_shape_vec((4, 2), locs).unwrap(),
        };
        let e = half_sq_euclidean_distances(&loc.loc);
        for a in 0..4 {
            prop_assert_eq!(d[(a, a)], 0.0);
            prop_assert_eq!(e[(a, a)], 0.0);
            for b in 0..4 {
                prop_assert_eq!(d[(a, b)], d[(b, a)]);
                prop_assert_eq!(e[(a, b)], e[(b, a)]);
            }
        }
    }

    #[test]
    fn transition_counts_conserve_mass(
        seqs in proptest::collection::vec(
            proptest::collection::vec(0usize..5, 1..20),
            1..4
        ),
    ) {
        let (n, n0) = count_transitions(&seqs, 5).unwrap();
        let total_steps: usize = seqs.iter().map(|s| s.len()).sum();
        let transitions: u64 = n.iter().sum();
        let starts: u64 = n0.iter().sum();
        prop_assert_eq!(starts as usize, seqs.len());
        prop_assert_eq!(transitions as usize + seqs.len(), total_steps);
    }

    #[test]
    fn normalized_rows_are_simplices(
        raw in proptest::collection::vec(0.01f64..10.0, 9),
        init in proptest::collection::vec(0.01f64..10.0, 3),
        lambda in 0.0f64..2.0,
    ) {
        let rates = Array2::from_shape_vec((3, 3), raw).unwrap();
        let init = Array1::from(init);
        let phi = Array2::from_shape_fn((3, 3), |(a, b)| {
            if a == b { 1.0 } else { (-lambda).exp() }
        });
        let nt = normalize_transitions(&rates, &init, &phi).unwrap();
        for a in 0..3 {
            let total: f64 = nt.probs.row(a).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        prop_assert!((nt.init.sum() - 1.0).abs() < 1e-12);
        // row totals respect the rescaling bounds
        for a in 0..3 {
            prop_assert!(nt.row_totals[a] <= rates.row(a).sum() + 1e-12);
            prop_assert!(nt.row_totals[a] >= rates[(a, 0)] * phi[(a, 0)] - 1e-12);
        }
    }

    #[test]
    fn marginal_invariant_to_row_rescaling(
        raw in proptest::collection::vec(0.05f64..5.0, 9),
        scale in 0.1f64..50.0,
        row in 0usize..3,
    ) {
        let mut rng = RandomStream::new(7);
        let rates = Array2::from_shape_vec((3, 3), raw).unwrap();
        let init = Array1::from_elem(3, 1.0);
        let phi = Array2::ones((3, 3));
        let loglik = Array2::from_shape_fn((4, 3), |_| rng.standard_normal());
        let base = marginal_loglik(
            &normalize_transitions(&rates, &init, &phi).unwrap(),
            &loglik,
        )
        .total;
        let mut scaled = rates.clone();
        for b in 0..3 {
            scaled[(row, b)] *= scale;
        }
        let rescaled = marginal_loglik(
            &normalize_transitions(&scaled, &init, &phi).unwrap(),
            &loglik,
        )
        .total;
        prop_assert!((base - rescaled).abs() < 1e-9);
    }

    #[test]
    fn f1_and_hamming_bounds(
        pred in eta_strategy(6, 3),
        truth in eta_strategy(6, 3),
    ) {
        let f1 = f1_binary(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
        let (count, rate) = hamming_metric(&pred, &truth).unwrap();
        prop_assert!(count as usize <= 18);
        prop_assert!((0.0..=1.0).contains(&rate));
        // identical matrices score perfectly
        prop_assert_eq!(f1_binary(&truth, &truth).unwrap(), 1.0);
        prop_assert_eq!(hamming_metric(&truth, &truth).unwrap().0, 0);
    }

    #[test]
    fn dirichlet_draws_are_simplices(
        masses in proptest::collection::vec(0.05f64..20.0, 1..8),
        seed in 0u64..1000,
    ) {
        let mut rng = RandomStream::new(seed);
        let draw = dirichlet_draw(&masses, &mut rng).unwrap();
        prop_assert!((draw.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(draw.iter().all(|&v| v > 0.0));
    }
}
