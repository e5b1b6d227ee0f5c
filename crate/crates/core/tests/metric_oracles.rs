mod common;

use hrf_core::metrics::{vendi_from_features, SimilarityKernel};
use hrf_core::seeds;
use proptest::prelude::*;

#[test]
fn vendi_agrees_with_nalgebra_eigen_entropy() {
    let mut rng = seeds::from_seed(11);
    for n in [2, 3, 5, 10, 25, 50] {
        for dim in [2, 8, 64] {
            let f: Vec<Vec<f64>> = (0..n).map(|_| seeds::normal_vec(&mut rng, dim)).collect();
            let ours = vendi_from_features(&f).unwrap();
            let theirs = common::reference_vendi(&f);
            assert!((ours - theirs).abs() < 1e-9, "n={n} dim={dim}: {ours} vs {theirs}");
        }
    }
}

proptest! {
    #[test]
    fn vendi_is_bounded_and_permutation_invariant(seed in 0u64..1000, n in 2usize..20, dim in 1usize..6) {
        let mut rng = seeds::from_seed(seed);
        let f: Vec<Vec<f64>> = (0..n).map(|_| seeds::normal_vec(&mut rng, dim)).collect();
        let v = vendi_from_features(&f).unwrap();
        prop_assert!(v >= 1.0 - 1e-9 && v <= n as f64 + 1e-9);
        let mut g = f.clone();
        g.reverse();
        prop_assert!((vendi_from_features(&g).unwrap() - v).abs() < 1e-9);
        let k = SimilarityKernel::cosine(&f).unwrap();
        prop_assert!((0..n).all(|i| (k.matrix[i * n + i] - 1.0).abs() < 1e-12));
    }
}
