mod common;

use common::{ari, blobs, hard_kmeans};
use dcconf::{blob_embed, kmeanspp_init, soft_kmeans, Error, Init, Matrix, SoftKMeansConfig};
use proptest::prelude::*;

fn cfg(k: usize, seed: u64) -> SoftKMeansConfig {
    SoftKMeansConfig {
        k,
        seed,
        ..Default::default()
    }
}

fn matrix_strategy() -> impl Strategy<Value = (Matrix, usize)> {
    (4usize..60, 1usize..6, 2usize..4).prop_flat_map(|(n, d, k)| {
        (prop::collection::vec(-5.0f64..5.0, n * d), Just((n, d, k)))
            .prop_map(|(v, (n, d, k))| (Matrix::new(n, d, v).unwrap(), k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn posteriors_are_distributions((m, k) in matrix_strategy(), seed in 0u64..1000, beta in 0.1f64..50.0) {
        let c = SoftKMeansConfig { stiffness: beta, ..cfg(k, seed) };
        let r = soft_kmeans(&m, &c).unwrap();
        for row in r.posteriors.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|g| (0.0..=1.0).contains(g)));
        }
        prop_assert_eq!(r.hard_labels.len(), m.rows());
    }

    #[test]
    fn objective_never_increases((m, k) in matrix_strategy(), seed in 0u64..1000, beta in 0.1f64..50.0) {
        let c = SoftKMeansConfig { stiffness: beta, ..cfg(k, seed) };
        let r = soft_kmeans(&m, &c).unwrap();
        prop_assert_eq!(r.objective_trace.len(), r.iterations + 1);
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{:?}", r.objective_trace);
        }
    }

    #[test]
    fn translation_equivariant((m, k) in matrix_strategy(), shift in -20.0f64..20.0, seed in 0u64..100) {
        let shifted = Matrix::new(m.rows(), m.cols(), m.as_slice().iter().map(|v| v + shift).collect()).unwrap();
        let a = soft_kmeans(&m, &cfg(k, seed)).unwrap();
        let b = soft_kmeans(&shifted, &cfg(k, seed)).unwrap();
        for (ra, rb) in a.posteriors.iter_rows().zip(b.posteriors.iter_rows()) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
        for c in 0..k {
            for (x, y) in a.means.row(c).iter().zip(b.means.row(c)) {
                prop_assert!((x + shift - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn permuting_provided_init_permutes_output((m, k) in matrix_strategy(), seed in 0u64..100) {
        let init = kmeanspp_init(&m, k, seed).unwrap();
        let order: Vec<usize> = (0..k).rev().collect();
        let permuted = Matrix::from_rows(&order.iter().map(|&c| init.row(c).to_vec()).collect::<Vec<_>>()).unwrap();
        let a = soft_kmeans(&m, &SoftKMeansConfig { init: Init::Provided(init), ..cfg(k, 0) }).unwrap();
        let b = soft_kmeans(&m, &SoftKMeansConfig { init: Init::Provided(permuted), ..cfg(k, 0) }).unwrap();
        for (ra, rb) in a.posteriors.iter_rows().zip(b.posteriors.iter_rows()) {
            for (c, &o) in order.iter().enumerate() {
                prop_assert!((ra[o] - rb[c]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn recovers_separated_blobs() {
    for seed in 0..20u64 {
        let (field, truth) = blob_embed(40, 25, 20, 2, 10.0, 0.01, seed).unwrap();
        let r = soft_kmeans(&field.to_points(), &cfg(2, seed)).unwrap();
        let score = ari(&r.hard_labels, &truth);
        assert!(score >= 0.99, "seed {seed}: ARI {score}");
        assert!(r.converged);
    }
}

#[test]
fn stiff_limit_matches_hard_kmeans() {
    for seed in 0..10u64 {
        let (pts, _) = blobs(300, 3, 3, 4.0, seed);
        let init = kmeanspp_init(&pts, 3, seed).unwrap();
        let soft = soft_kmeans(
            &pts,
            &SoftKMeansConfig {
                stiffness: 1e6,
                init: Init::Provided(init.clone()),
                tol: 1e-12,
                ..cfg(3, seed)
            },
        )
        .unwrap();
        let hard = hard_kmeans(&pts, &init, 300);
        assert_eq!(soft.hard_labels, hard, "seed {seed}");
    }
}

#[test]
fn same_seed_same_result() {
    let (pts, _) = blobs(500, 4, 3, 3.0, 9);
    let a = soft_kmeans(&pts, &cfg(3, 42)).unwrap();
    let b = soft_kmeans(&pts, &cfg(3, 42)).unwrap();
    assert_eq!(a.posteriors.as_slice(), b.posteriors.as_slice());
    assert_eq!(a.objective_trace, b.objective_trace);
}

#[test]
fn identical_points_trigger_rescue() {
    let pts = Matrix::new(6, 2, vec![1.0; 12]).unwrap();
    let r = soft_kmeans(&pts, &cfg(2, 0)).unwrap();
    for row in r.posteriors.iter_rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(r.means.as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn rejects_bad_input() {
    let pts = Matrix::new(2, 1, vec![0.0, 1.0]).unwrap();
    assert!(matches!(soft_kmeans(&pts, &cfg(3, 0)), Err(Error::TooFewPoints { n: 2, k: 3 })));
    let nan = Matrix::new(2, 1, vec![0.0, f64::NAN]).unwrap();
    assert!(soft_kmeans(&nan, &cfg(2, 0)).is_err());
    let bad_beta = SoftKMeansConfig {
        stiffness: 0.0,
        ..cfg(2, 0)
    };
    assert!(soft_kmeans(&pts, &bad_beta).is_err());
    let wrong_init = SoftKMeansConfig {
        init: Init::Provided(Matrix::zeros(2, 3)),
        ..cfg(2, 0)
    };
    assert!(matches!(soft_kmeans(&pts, &wrong_init), Err(Error::ShapeMismatch(_))));
}
