//! Property tests for the library-wide invariants: metric axioms of the
//! weight distance, nonnegativity of pruning steps, downward closure of
//! index sets, and exactness of the serialization round trips.

use proptest::prelude::*;
use quadprune::basis::{multi_index_set, IndexSetKind};
use quadprune::givens_qr::givens;
use quadprune::io_stream::{write_binary, stream_from_binary, NodeStream};
use quadprune::measure::{tv_distance, DiscreteMeasure, SupportAlignment};
use quadprune::pruning::{csp, prune_step, SigSelectPolicy};

fn measure_1d(weights: Vec<f64>) -> DiscreteMeasure {
    let nodes = (0..weights.len()).map(|i| vec![i as f64]).collect();
    DiscreteMeasure::new(1, nodes, weights).unwrap()
}

proptest! {
    #[test]
    fn tv_distance_is_a_bounded_symmetric_metric(
        wa in proptest::collection::vec(1e-6..1.0f64, 1..12),
        wb in proptest::collection::vec(1e-6..1.0f64, 1..12),
    ) {
        let n = wa.len().min(wb.len());
        let a = measure_1d(wa[..n].to_vec());
        let b = measure_1d(wb[..n].to_vec());
        let d_ab = tv_distance(&a, &b, SupportAlignment::ByIndex).unwrap();
        let d_ba = tv_distance(&b, &a, SupportAlignment::ByIndex).unwrap();
        prop_assert!((0.0..=1.0).contains(&d_ab));
        prop_assert_eq!(d_ab.to_bits(), d_ba.to_bits());
        let d_aa = tv_distance(&a, &a, SupportAlignment::ByIndex).unwrap();
        prop_assert_eq!(d_aa, 0.0);
    }

    #[test]
    fn prune_step_zeroes_one_entry_and_keeps_the_rest_nonnegative(
        w in proptest::collection::vec(1e-6..1.0f64, 2..16),
        n in proptest::collection::vec(-1.0..1.0f64, 2..16),
    ) {
        let len = w.len().min(n.len());
        let (w, n) = (&w[..len], &n[..len]);
        prop_assume!(n.iter().any(|v| *v != 0.0));
        let out = prune_step(w, n, &SigSelectPolicy::MinAbsC).unwrap();
        prop_assert_eq!(out.updated_weights[out.pruned_local], 0.0);
        prop_assert!(out.updated_weights.iter().all(|v| *v >= 0.0));
        // the step is the minimal admissible one: no sign of c flip keeps
        // more mass positive for the chosen entry
        prop_assert!(out.c.is_finite());
    }

    #[test]
    fn csp_preserves_moments_and_positivity(
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (rng.gen_range(4..24usize), 3usize);
        let rows: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mut eta = vec![0.0f64; n];
        for i in 0..m {
            for j in 0..n {
                eta[j] += w[i] * rows[i * n + j];
            }
        }
        let out = csp(&rows, n, &w, &SigSelectPolicy::MinAbsC).unwrap();
        prop_assert!(out.kept_global.len() <= n.max(m.min(n)));
        prop_assert!(out.kept_weights.iter().all(|v| *v > 0.0));
        let mut eta2 = vec![0.0f64; n];
        for (&g, &wk) in out.kept_global.iter().zip(&out.kept_weights) {
            for j in 0..n {
                eta2[j] += wk * rows[(g as usize - 1) * n + j];
            }
        }
        let norm: f64 = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = eta.iter().zip(&eta2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-9 * norm.max(1e-9), "residual {} vs {}", diff, norm);
    }

    #[test]
    fn index_sets_are_downward_closed(
        r in 0.0..12.0f64,
        d in 1usize..4,
        kind in prop_oneof![
            Just(IndexSetKind::Td),
            Just(IndexSetKind::Hc),
            Just(IndexSetKind::PNorm(0.5)),
        ],
    ) {
        let set = multi_index_set(kind, r, d).unwrap();
        let contains = |alpha: &[u32]| set.indices().iter().any(|a| a == alpha);
        for alpha in set.indices() {
            for axis in 0..d {
                if alpha[axis] > 0 {
                    let mut beta = alpha.clone();
                    beta[axis] -= 1;
                    prop_assert!(contains(&beta), "{:?} in set but {:?} missing", alpha, beta);
                }
            }
        }
    }

    #[test]
    fn givens_coefficients_are_orthonormal(
        a in -1e6..1e6f64,
        b in -1e6..1e6f64,
    ) {
        let g = givens(a, b);
        prop_assert!((g.c * g.c + g.s * g.s - 1.0).abs() <= 1e-12);
        // applying the rotation to (a, b) annihilates the second entry
        let r = g.c * a + g.s * b;
        let z = -g.s * a + g.c * b;
        prop_assert!(z.abs() <= 1e-9 * (1.0 + r.abs()));
        prop_assert!(r >= 0.0 || (a == 0.0 && b == 0.0));
    }

    #[test]
    fn binary_round_trip_is_bit_exact(
        records in proptest::collection::vec(
            (proptest::collection::vec(-1e12..1e12f64, 2..3), 1e-12..1e3f64),
            1..40,
        ),
    ) {
        let records: Vec<(Vec<f64>, f64)> =
            records.into_iter().map(|(c, w)| (c[..2].to_vec(), w)).collect();
        let path = std::env::temp_dir().join(format!(
            "qp_prop_{}_{:x}.bin",
            std::process::id(),
            records.len() as u64 ^ records[0].1.to_bits()
        ));
        write_binary(&path, 2, &records).unwrap();
        let mut s = stream_from_binary(&path).unwrap();
        for (i, (coords, w)) in records.iter().enumerate() {
            let node = s.next_node().unwrap().unwrap();
            prop_assert_eq!(&node.coords, coords);
            prop_assert_eq!(node.weight.to_bits(), w.to_bits());
            prop_assert_eq!(node.global_index, i as u64 + 1);
        }
        prop_assert!(s.next_node().unwrap().is_none());
        std::fs::remove_file(&path).ok();
    }
}
