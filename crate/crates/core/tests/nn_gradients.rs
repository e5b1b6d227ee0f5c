mod common;

use hrf_core::nn::{checkpoint, Activation, ParamSet};
use hrf_core::seeds;

#[test]
fn backprop_matches_central_differences_for_every_shape() {
    for (k, (sizes, acts)) in common::gradient_shapes().into_iter().enumerate() {
        let (err, checked) = common::gradient_check(&sizes, &acts, 100, 10 + k as u64);
        assert!(checked >= 100, "{sizes:?}");
        assert!(err < 1e-4, "{sizes:?}: max relative error {err:e}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let p = ParamSet::random(&[4, 8, 3], &[Activation::Tanh, Activation::Softmax], &mut seeds::from_seed(3)).unwrap();
    let path = dir.path().join("nested/p.bin");
    checkpoint::save(&p, &path).unwrap();
    let q = checkpoint::load(&path).unwrap();
    assert_eq!(p, q);
    let x = [0.1, -0.2, 0.3, 0.4];
    assert_eq!(p.predict(&x).unwrap(), q.predict(&x).unwrap());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(checkpoint::load(&path).unwrap_err().is_config());
}
